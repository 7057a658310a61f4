#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace churn {

// A calendar month stored as a linear index (year * 12 + month - 1), so that
// month arithmetic is plain integer arithmetic.
class Month {
public:
    constexpr Month() = default;
    constexpr Month(int year, int month) : index_(year * 12 + (month - 1)) {}

    static constexpr Month from_index(int index) {
        Month m;
        m.index_ = index;
        return m;
    }

    // Accepts "YYYY-MM" or "YYYY-MM-DD" (the day is ignored).
    static std::optional<Month> parse(std::string_view text);

    constexpr int index() const { return index_; }
    constexpr int year() const { return index_ >= 0 ? index_ / 12 : (index_ - 11) / 12; }
    constexpr int month() const { return index_ - year() * 12 + 1; }

    constexpr Month operator+(int months) const { return from_index(index_ + months); }
    constexpr Month operator-(int months) const { return from_index(index_ - months); }
    constexpr int operator-(Month other) const { return index_ - other.index_; }

    constexpr auto operator<=>(const Month&) const = default;

    std::string to_string() const;

private:
    int index_ = 0;
};

// A calendar date; day == 0 marks month precision ("YYYY-MM").
struct Date {
    int year = 0;
    int month = 0;
    int day = 0;

    static std::optional<Date> parse(std::string_view text);

    bool has_day() const { return day != 0; }
    Month to_month() const { return Month(year, month); }
    // 0 = Monday ... 6 = Sunday; only meaningful when has_day().
    int weekday() const;
    std::string to_string() const;

    auto operator<=>(const Date&) const = default;
};

const char* weekday_name(int weekday);

}  // namespace churn
