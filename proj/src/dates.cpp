#include "upwell/dates.hpp"

#include <cstdio>

#include "upwell/errors.hpp"

namespace upwell {

namespace {

bool is_leap(int y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

int days_in_month(int y, int m) {
    static const int lengths[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return lengths[m - 1];
}

// Civil-from-days and days-from-civil after Howard Hinnant's public-domain
// chrono algorithms; exact over the full int64 range we care about.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2u) / 5u + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace

Date make_date(int year, int month, int day) {
    if (month < 1 || month > 12) {
        throw DataError("invalid month " + std::to_string(month));
    }
    if (day < 1 || day > days_in_month(year, month)) {
        throw DataError("invalid day " + std::to_string(day) + " for " +
                        std::to_string(year) + "-" + std::to_string(month));
    }
    return Date{days_from_civil(year, month, day)};
}

YearMonthDay civil_from_date(Date date) {
    std::int64_t z = date.days + 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return YearMonthDay{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

Date parse_date(const std::string& iso) {
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
        throw DataError("malformed date '" + iso + "', expected YYYY-MM-DD");
    }
    for (int i : {0, 1, 2, 3, 5, 6, 8, 9}) {
        if (iso[i] < '0' || iso[i] > '9') {
            throw DataError("malformed date '" + iso + "', expected YYYY-MM-DD");
        }
    }
    const int y = std::stoi(iso.substr(0, 4));
    const int m = std::stoi(iso.substr(5, 2));
    const int d = std::stoi(iso.substr(8, 2));
    return make_date(y, m, d);
}

std::string format_date(Date d) {
    const YearMonthDay c = civil_from_date(d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", c.year, c.month, c.day);
    return std::string(buf);
}

std::string season_of(Date d) {
    const int m = civil_from_date(d).month;
    if (m == 12 || m <= 2) return "DJF";
    if (m <= 5) return "MAM";
    if (m <= 8) return "JJA";
    return "SON";
}

}  // namespace upwell
