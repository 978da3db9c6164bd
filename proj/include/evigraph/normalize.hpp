#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "evigraph/error.hpp"
#include "evigraph/types.hpp"

namespace evigraph {

inline constexpr std::string_view kDefaultTimestampFormat = "%d/%m/%Y %H:%M:%S";

enum class SizeUnits { decimal, binary };

// ---------------------------------------------------------------------------
// string helpers

inline std::string_view trim(std::string_view s) {
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' ||
           c == '\v';
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

inline bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

inline bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isdigit(c) != 0;
  });
}

// ---------------------------------------------------------------------------
// timestamps

namespace detail {

struct CalendarFields {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;
};

/// Reads up to `max_digits` decimal digits (at least one).
inline std::optional<int> read_number(std::string_view text, std::size_t& pos,
                                      std::size_t min_digits,
                                      std::size_t max_digits) {
  std::size_t start = pos;
  while (pos < text.size() && pos - start < max_digits &&
         std::isdigit(static_cast<unsigned char>(text[pos])))
    ++pos;
  if (pos - start < min_digits) return std::nullopt;
  int value = 0;
  for (std::size_t i = start; i < pos; ++i) value = value * 10 + (text[i] - '0');
  return value;
}

inline std::int64_t to_epoch(const CalendarFields& f) {
  using namespace std::chrono;
  const year_month_day ymd{year{f.year}, month{f.month}, day{f.day}};
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + f.hour * 3600 +
         f.minute * 60 + f.second;
}

inline CalendarFields from_epoch(std::int64_t epoch) {
  using namespace std::chrono;
  std::int64_t days = epoch / 86400;
  std::int64_t rem = epoch % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  CalendarFields f;
  f.year = static_cast<int>(ymd.year());
  f.month = static_cast<unsigned>(ymd.month());
  f.day = static_cast<unsigned>(ymd.day());
  f.hour = static_cast<int>(rem / 3600);
  f.minute = static_cast<int>((rem % 3600) / 60);
  f.second = static_cast<int>(rem % 60);
  return f;
}

inline void append_padded(std::string& out, long value, int width) {
  std::string digits = std::to_string(value < 0 ? -value : value);
  if (value < 0) out += '-';
  for (int i = static_cast<int>(digits.size()); i < width; ++i) out += '0';
  out += digits;
}

}  // namespace detail

/// Parses `text` against a strptime-style pattern. Supported conversions are
/// %d %m %Y %H %M %S and %%; day, month and hour accept one or two digits.
/// The result is UTC epoch seconds minus `utc_offset_seconds`.
inline std::int64_t normalize_timestamp(
    std::string_view text, std::string_view format = kDefaultTimestampFormat,
    std::int64_t utc_offset_seconds = 0) {
  const std::string_view input = trim(text);
  auto fail = [&](const std::string& why) -> Error {
    return Error(ErrorCode::BadTimestamp,
                 "'" + std::string(input) + "' does not match '" +
                     std::string(format) + "': " + why);
  };
  detail::CalendarFields f;
  bool have_year = false, have_month = false, have_day = false;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < format.size(); ++i) {
    const char c = format[i];
    if (c != '%') {
      if (pos >= input.size() || input[pos] != c) throw fail("literal mismatch");
      ++pos;
      continue;
    }
    if (++i >= format.size()) throw fail("dangling '%' in pattern");
    std::optional<int> v;
    switch (format[i]) {
      case 'd':
        v = detail::read_number(input, pos, 1, 2);
        if (!v) throw fail("expected day");
        f.day = static_cast<unsigned>(*v);
        have_day = true;
        break;
      case 'm':
        v = detail::read_number(input, pos, 1, 2);
        if (!v) throw fail("expected month");
        f.month = static_cast<unsigned>(*v);
        have_month = true;
        break;
      case 'Y':
        v = detail::read_number(input, pos, 4, 4);
        if (!v) throw fail("expected four-digit year");
        f.year = *v;
        have_year = true;
        break;
      case 'H':
        v = detail::read_number(input, pos, 1, 2);
        if (!v || *v > 23) throw fail("bad hour");
        f.hour = *v;
        break;
      case 'M':
        v = detail::read_number(input, pos, 2, 2);
        if (!v || *v > 59) throw fail("bad minute");
        f.minute = *v;
        break;
      case 'S':
        v = detail::read_number(input, pos, 2, 2);
        if (!v || *v > 59) throw fail("bad second");
        f.second = *v;
        break;
      case '%':
        if (pos >= input.size() || input[pos] != '%')
          throw fail("literal mismatch");
        ++pos;
        break;
      default:
        throw fail(std::string("unsupported conversion %") + format[i]);
    }
  }
  if (pos != input.size()) throw fail("trailing characters");
  if (!have_year || !have_month || !have_day)
    throw fail("pattern lacks a full date");
  using namespace std::chrono;
  if (!year_month_day{year{f.year}, month{f.month}, day{f.day}}.ok())
    throw fail("impossible calendar date");
  return detail::to_epoch(f) - utc_offset_seconds;
}

/// Renders epoch seconds with the same conversions normalize_timestamp
/// accepts, always zero-padded.
inline std::string format_timestamp(
    std::int64_t epoch, std::string_view format = kDefaultTimestampFormat) {
  const auto f = detail::from_epoch(epoch);
  std::string out;
  for (std::size_t i = 0; i < format.size(); ++i) {
    if (format[i] != '%' || i + 1 >= format.size()) {
      out += format[i];
      continue;
    }
    switch (format[++i]) {
      case 'd': detail::append_padded(out, f.day, 2); break;
      case 'm': detail::append_padded(out, f.month, 2); break;
      case 'Y': detail::append_padded(out, f.year, 4); break;
      case 'H': detail::append_padded(out, f.hour, 2); break;
      case 'M': detail::append_padded(out, f.minute, 2); break;
      case 'S': detail::append_padded(out, f.second, 2); break;
      default: out += format[i]; break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// sizes

/// "4.2 GB" -> 4200000000. Units B, KB, MB, GB, TB scale by powers of 1000
/// (or 1024 with SizeUnits::binary); KiB..TiB are always binary. Fractional
/// byte counts round half up.
inline std::int64_t normalize_size(std::string_view text,
                                   SizeUnits units = SizeUnits::decimal) {
  const std::string_view input = trim(text);
  auto fail = [&](const char* why) {
    return Error(ErrorCode::BadSize, "'" + std::string(input) + "': " + why);
  };
  std::size_t pos = 0;
  while (pos < input.size() && std::isdigit(static_cast<unsigned char>(input[pos])))
    ++pos;
  const std::string_view whole = input.substr(0, pos);
  std::string_view fraction;
  if (pos < input.size() && input[pos] == '.') {
    const std::size_t start = ++pos;
    while (pos < input.size() &&
           std::isdigit(static_cast<unsigned char>(input[pos])))
      ++pos;
    fraction = input.substr(start, pos - start);
    if (fraction.empty()) throw fail("missing fractional digits");
  }
  if (whole.empty()) throw fail("missing magnitude");
  if (whole.size() + fraction.size() > 30) throw fail("magnitude too large");
  const std::string unit = to_lower(trim(input.substr(pos)));

  const __int128 k = units == SizeUnits::binary ? 1024 : 1000;
  __int128 multiplier = 0;
  if (unit.empty() || unit == "b") multiplier = 1;
  else if (unit == "kb") multiplier = k;
  else if (unit == "mb") multiplier = k * k;
  else if (unit == "gb") multiplier = k * k * k;
  else if (unit == "tb") multiplier = k * k * k * k;
  else if (unit == "kib") multiplier = 1024;
  else if (unit == "mib") multiplier = __int128{1024} * 1024;
  else if (unit == "gib") multiplier = __int128{1024} * 1024 * 1024;
  else if (unit == "tib") multiplier = __int128{1024} * 1024 * 1024 * 1024;
  else throw fail("unknown unit");

  __int128 mantissa = 0;
  for (char c : whole) mantissa = mantissa * 10 + (c - '0');
  __int128 scale = 1;
  for (char c : fraction) {
    mantissa = mantissa * 10 + (c - '0');
    scale *= 10;
  }
  const __int128 bytes = (mantissa * multiplier * 2 + scale) / (scale * 2);
  if (bytes > std::numeric_limits<std::int64_t>::max()) throw fail("overflow");
  return static_cast<std::int64_t>(bytes);
}

// ---------------------------------------------------------------------------
// identities

/// Trimmed, case-folded username.
inline std::string normalize_identity(std::string_view text) {
  const auto t = trim(text);
  if (t.empty()) throw Error(ErrorCode::BadIdentity, "empty identity");
  return to_lower(t);
}

inline bool looks_like_email(std::string_view text) {
  const auto t = trim(text);
  const auto at = t.find('@');
  return at != std::string_view::npos && at > 0 && at + 1 < t.size() &&
         t.find('@', at + 1) == std::string_view::npos &&
         t.find(' ') == std::string_view::npos;
}

inline std::string normalize_email(std::string_view text) {
  if (!looks_like_email(text))
    throw Error(ErrorCode::BadIdentity,
                "'" + std::string(trim(text)) + "' is not an email address");
  return to_lower(trim(text));
}

/// "Alex@AIxz.ai" -> "alex".
inline std::string extract_email_localpart(std::string_view email) {
  const auto t = trim(email);
  const auto at = t.find('@');
  return normalize_identity(at == std::string_view::npos ? t : t.substr(0, at));
}

// ---------------------------------------------------------------------------
// network values

inline std::string normalize_ipv4(std::string_view text) {
  const auto t = trim(text);
  auto fail = [&] {
    return Error(ErrorCode::BadValue,
                 "'" + std::string(t) + "' is not a dotted-quad IPv4 address");
  };
  std::string out;
  std::size_t start = 0;
  for (int octet = 0; octet < 4; ++octet) {
    const auto end = octet < 3 ? t.find('.', start) : t.size();
    if (end == std::string_view::npos) throw fail();
    const auto part = t.substr(start, end - start);
    if (!all_digits(part) || part.size() > 3) throw fail();
    int value = 0;
    std::from_chars(part.data(), part.data() + part.size(), value);
    if (value > 255) throw fail();
    if (octet) out += '.';
    out += std::to_string(value);
    start = end + 1;
  }
  return out;
}

inline std::string normalize_mac(std::string_view text) {
  const auto t = trim(text);
  auto fail = [&] {
    return Error(ErrorCode::BadValue,
                 "'" + std::string(t) + "' is not a MAC address");
  };
  if (t.size() != 17) throw fail();
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const char c = t[i];
    if (i % 3 == 2) {
      if (c != ':' && c != '-') throw fail();
      out += ':';
    } else {
      if (!std::isxdigit(static_cast<unsigned char>(c))) throw fail();
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  return out;
}

/// Well-known service names, as in the IANA registry / /etc/services.
inline std::optional<int> resolve_service(std::string_view name) {
  static constexpr std::array<std::pair<std::string_view, int>, 28> kServices{{
      {"ftp-data", 20}, {"ftp", 21},        {"ssh", 22},
      {"telnet", 23},   {"smtp", 25},       {"domain", 53},
      {"dns", 53},      {"http", 80},       {"www", 80},
      {"pop3", 110},    {"ntp", 123},       {"imap", 143},
      {"snmp", 161},    {"ldap", 389},      {"https", 443},
      {"microsoft-ds", 445}, {"smb", 445},  {"syslog", 514},
      {"ldaps", 636},   {"imaps", 993},     {"pop3s", 995},
      {"ms-sql-s", 1433}, {"mysql", 3306},  {"ms-wbt-server", 3389},
      {"rdp", 3389},    {"postgresql", 5432}, {"vnc", 5900},
      {"http-alt", 8080},
  }};
  const std::string key = to_lower(trim(name));
  for (const auto& [n, port] : kServices)
    if (n == key) return port;
  return std::nullopt;
}

inline int normalize_port(std::string_view text) {
  const auto t = trim(text);
  int value = -1;
  if (all_digits(t) && t.size() <= 5)
    std::from_chars(t.data(), t.data() + t.size(), value);
  if (value < 0 || value > 65535)
    throw Error(ErrorCode::BadValue, "'" + std::string(t) + "' is not a port");
  return value;
}

inline std::string normalize_protocol(std::string_view text) {
  const auto t = trim(text);
  if (t.empty()) throw Error(ErrorCode::BadValue, "empty protocol");
  return to_lower(t);
}

// ---------------------------------------------------------------------------
// dispatch

struct NormalizeOptions {
  std::string timestamp_format{kDefaultTimestampFormat};
  std::int64_t utc_offset_seconds = 0;
  SizeUnits size_units = SizeUnits::decimal;
};

/// Canonicalises one cell. Numeric kinds (timestamps as epoch seconds) get
/// both `number` and its decimal `text`.
inline NormalizedValue normalize_value(AttributeKind kind, Role role,
                                       std::string_view raw,
                                       const NormalizeOptions& options = {}) {
  NormalizedValue v;
  v.kind = kind;
  v.role = role;
  switch (kind) {
    case AttributeKind::timestamp:
      v.number = normalize_timestamp(raw, options.timestamp_format,
                                     options.utc_offset_seconds);
      v.text = std::to_string(v.number);
      break;
    case AttributeKind::ipv4: v.text = normalize_ipv4(raw); break;
    case AttributeKind::mac: v.text = normalize_mac(raw); break;
    case AttributeKind::port:
      v.number = normalize_port(raw);
      v.text = std::to_string(v.number);
      break;
    case AttributeKind::file_size:
      v.number = normalize_size(raw, options.size_units);
      v.text = std::to_string(v.number);
      break;
    case AttributeKind::protocol: v.text = normalize_protocol(raw); break;
    case AttributeKind::username: v.text = normalize_identity(raw); break;
    case AttributeKind::email: v.text = normalize_email(raw); break;
    case AttributeKind::url:
    case AttributeKind::host:
    case AttributeKind::connection_state:
    case AttributeKind::geolocation:
      v.text = to_lower(trim(raw));
      break;
    default: v.text = std::string(trim(raw)); break;
  }
  if (v.text.empty())
    throw Error(ErrorCode::BadValue,
                "empty " + std::string(to_string(kind)) + " value");
  return v;
}

}  // namespace evigraph
