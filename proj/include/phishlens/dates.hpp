#pragma once

#include <array>
#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "phishlens/text.hpp"

namespace phishlens {

using Date = std::chrono::sys_days;
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

inline std::optional<Date> make_date(long long y, long long m, long long d) {
  using namespace std::chrono;
  if (y < 1900 || y > 9999 || m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  const year_month_day ymd{year{static_cast<int>(y)}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd};
}

/// Strict "YYYY-MM-DD".
inline std::optional<Date> parse_iso_date(std::string_view s) {
  s = text::trim(s);
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  auto y = text::parse_int(s.substr(0, 4));
  auto m = text::parse_int(s.substr(5, 2));
  auto d = text::parse_int(s.substr(8, 2));
  if (!y || !m || !d) return std::nullopt;
  return make_date(*y, *m, *d);
}

inline std::string format_date(Date date) {
  const std::chrono::year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

inline long long days_between(Date from, Date to) { return (to - from).count(); }

inline Date today() { return std::chrono::floor<std::chrono::days>(std::chrono::system_clock::now()); }

inline Timestamp now_timestamp() {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

/// "YYYY-MM-DDTHH:MM:SS.mmmZ"
inline std::string format_timestamp(Timestamp ts) {
  using namespace std::chrono;
  const auto day_point = floor<days>(ts);
  const hh_mm_ss tod{ts - day_point};
  char buf[40];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02d.%03dZ", format_date(day_point).c_str(),
                static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                static_cast<int>(tod.seconds().count()), static_cast<int>(tod.subseconds().count()));
  return buf;
}

inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  s = text::trim(s);
  auto date = parse_iso_date(s.substr(0, 10));
  if (!date) return std::nullopt;
  Timestamp ts{*date};
  if (s.size() == 10) return ts;
  if (s.size() < 19 || (s[10] != 'T' && s[10] != ' ')) return std::nullopt;
  auto h = text::parse_int(s.substr(11, 2));
  auto m = text::parse_int(s.substr(14, 2));
  auto sec = text::parse_int(s.substr(17, 2));
  if (!h || !m || !sec) return std::nullopt;
  ts += std::chrono::hours{*h} + std::chrono::minutes{*m} + std::chrono::seconds{*sec};
  if (s.size() >= 23 && s[19] == '.') {
    if (auto ms = text::parse_int(s.substr(20, 3))) ts += std::chrono::milliseconds{*ms};
  }
  return ts;
}

/// Lenient date reader for registry output: "2004-01-01", "2004-01-01T00:00:00Z",
/// "2004.01.01", "2004/01/01", "01-jan-2004", "01.01.2004".
inline std::optional<Date> parse_loose_date(std::string_view s) {
  s = text::trim(s);
  if (s.size() < 8) return std::nullopt;

  auto digits_at = [&](std::size_t pos, std::size_t n) -> std::optional<long long> {
    if (pos + n > s.size()) return std::nullopt;
    return text::parse_int(s.substr(pos, n));
  };
  auto is_sep = [](char c) { return c == '-' || c == '.' || c == '/'; };

  // Y-M-D
  if (s.size() >= 10 && is_sep(s[4]) && is_sep(s[7])) {
    auto y = digits_at(0, 4), m = digits_at(5, 2), d = digits_at(8, 2);
    if (y && m && d) return make_date(*y, *m, *d);
    return std::nullopt;
  }
  // D-Mon-Y or D.M.Y
  if (s.size() >= 10 && is_sep(s[2])) {
    static constexpr std::array<std::string_view, 12> months = {"jan", "feb", "mar", "apr", "may", "jun",
                                                                "jul", "aug", "sep", "oct", "nov", "dec"};
    auto d = digits_at(0, 2);
    if (!d) return std::nullopt;
    if (s.size() >= 11 && is_sep(s[6])) {
      const std::string mon = text::to_lower(s.substr(3, 3));
      for (std::size_t i = 0; i < months.size(); ++i) {
        if (months[i] == mon) {
          auto y = digits_at(7, 4);
          if (y) return make_date(*y, static_cast<long long>(i + 1), *d);
        }
      }
    }
    if (is_sep(s[5])) {
      auto m = digits_at(3, 2), y = digits_at(6, 4);
      if (m && y) return make_date(*y, *m, *d);
    }
  }
  return std::nullopt;
}

}  // namespace phishlens
