#include "churn/calendar.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

namespace churn {
namespace {

bool parse_int(std::string_view text, int& out) {
    if (text.empty()) {
        return false;
    }
    for (char ch : text) {
        if (ch < '0' || ch > '9') {
            return false;
        }
    }
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

std::optional<Month> Month::parse(std::string_view text) {
    auto date = Date::parse(text);
    if (!date) {
        return std::nullopt;
    }
    return date->to_month();
}

std::string Month::to_string() const {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", year(), month());
    return buf;
}

std::optional<Date> Date::parse(std::string_view text) {
    if (text.size() != 7 && text.size() != 10) {
        return std::nullopt;
    }
    if (text[4] != '-' || (text.size() == 10 && text[7] != '-')) {
        return std::nullopt;
    }
    Date d;
    if (!parse_int(text.substr(0, 4), d.year) || !parse_int(text.substr(5, 2), d.month)) {
        return std::nullopt;
    }
    if (d.month < 1 || d.month > 12) {
        return std::nullopt;
    }
    if (text.size() == 10) {
        if (!parse_int(text.substr(8, 2), d.day)) {
            return std::nullopt;
        }
        std::chrono::year_month_day ymd{std::chrono::year(d.year), std::chrono::month(d.month),
                                        std::chrono::day(d.day)};
        if (!ymd.ok()) {
            return std::nullopt;
        }
    }
    return d;
}

int Date::weekday() const {
    std::chrono::year_month_day ymd{std::chrono::year(year), std::chrono::month(month),
                                    std::chrono::day(day)};
    std::chrono::weekday wd{std::chrono::sys_days(ymd)};
    return static_cast<int>(wd.iso_encoding()) - 1;
}

std::string Date::to_string() const {
    char buf[40];
    if (has_day()) {
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    } else {
        std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
    }
    return buf;
}

const char* weekday_name(int weekday) {
    static constexpr const char* names[] = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};
    return (weekday >= 0 && weekday < 7) ? names[weekday] : "?";
}

}  // namespace churn
