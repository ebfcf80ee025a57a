#pragma once

#include <cstdint>
#include <string>

namespace upwell {

// Calendar date stored as days since 1970-01-01 (proleptic Gregorian).
// Thin integer wrapper so date arithmetic stays explicit.
struct Date {
    std::int64_t days = 0;

    friend bool operator==(Date a, Date b) { return a.days == b.days; }
    friend bool operator!=(Date a, Date b) { return a.days != b.days; }
    friend bool operator<(Date a, Date b) { return a.days < b.days; }
    friend bool operator<=(Date a, Date b) { return a.days <= b.days; }
    friend bool operator>(Date a, Date b) { return a.days > b.days; }
    friend bool operator>=(Date a, Date b) { return a.days >= b.days; }

    Date next() const { return Date{days + 1}; }
    Date plus(std::int64_t n) const { return Date{days + n}; }
};

// Builds a Date from calendar components. Throws DataError on invalid input.
Date make_date(int year, int month, int day);

// Parses ISO-8601 YYYY-MM-DD. Throws DataError on malformed input.
Date parse_date(const std::string& iso);

// Formats as ISO-8601 YYYY-MM-DD.
std::string format_date(Date d);

struct YearMonthDay {
    int year;
    int month;
    int day;
};

YearMonthDay civil_from_date(Date d);

// Meteorological season of a date: "DJF", "MAM", "JJA", or "SON".
std::string season_of(Date d);

}  // namespace upwell
