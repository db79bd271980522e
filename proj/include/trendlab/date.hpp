#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace trendlab {

/// Calendar day. Comparisons and distances use the proleptic Gregorian serial
/// (days since 1970-01-01, Howard Hinnant's civil-day algorithm).
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  static Date parse(std::string_view iso);  // "YYYY-MM-DD", ParseError otherwise
  static Date from_serial(std::int64_t days);

  std::int64_t serial() const;
  std::string str() const;
  bool is_weekend() const;
  Date next_day() const { return from_serial(serial() + 1); }
  /// Next Monday-Friday day strictly after this one.
  Date next_weekday() const;

  friend auto operator<=>(const Date& a, const Date& b) {
    return a.serial() <=> b.serial();
  }
  friend bool operator==(const Date& a, const Date& b) {
    return a.serial() == b.serial();
  }
};

/// Inclusive date interval.
struct DateRange {
  Date start;
  Date end;

  bool contains(const Date& d) const { return start <= d && d <= end; }
  static DateRange parse(std::string_view text);  // "YYYY-MM-DD:YYYY-MM-DD"
};

}  // namespace trendlab
