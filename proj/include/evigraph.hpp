#pragma once

#include "evigraph/analytics.hpp"
#include "evigraph/case_store.hpp"
#include "evigraph/csv.hpp"
#include "evigraph/error.hpp"
#include "evigraph/graph.hpp"
#include "evigraph/harmoniser.hpp"
#include "evigraph/ids.hpp"
#include "evigraph/ingest.hpp"
#include "evigraph/normalize.hpp"
#include "evigraph/rules.hpp"
#include "evigraph/types.hpp"
