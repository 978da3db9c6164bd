#include "evigraph/cli.hpp"

int main(int argc, char** argv) { return evigraph::run_cli(argc, argv); }
