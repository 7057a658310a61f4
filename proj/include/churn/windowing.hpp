#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "churn/calendar.hpp"
#include "churn/schema.hpp"

namespace churn {

struct Coverage {
    Month first;
    Month last;

    bool contains(Month m) const { return first <= m && m <= last; }
    int months() const { return last - first + 1; }
};

// Observation = [anchor-O+1, anchor], latency = (anchor, anchor+L],
// target = (anchor+L, anchor+L+P].
struct WindowPlan {
    Month anchor;
    int obs_months = 2;
    int latency_months = 0;
    int target_months = 2;

    Month obs_first() const { return anchor - (obs_months - 1); }
    Month obs_last() const { return anchor; }
    Month target_first() const { return anchor + (latency_months + 1); }
    Month target_last() const { return anchor + (latency_months + target_months); }

    bool operator==(const WindowPlan&) const = default;
};

enum class CoverageCheck {
    full,             // observation through target must lie inside the data
    observation_only  // deployment: the target window is in the future
};

WindowPlan make_plan(Month anchor, int obs_months, int latency_months, int target_months);
WindowPlan make_plan(Month anchor, int obs_months, int latency_months, int target_months,
                     const Coverage& coverage, CoverageCheck check = CoverageCheck::full);
WindowPlan shift_plan(const WindowPlan& plan, int months, const Coverage& coverage,
                      CoverageCheck check = CoverageCheck::full);

enum class RuleVariant { postpaid, prepaid };

struct LabelRules {
    std::string presence_table = "presence";  // one row per active customer-month
    std::string bad_debt_field = "bad_debt";  // root flag
    std::string account_field = "account_id";
    RuleVariant variant = RuleVariant::postpaid;
    std::string refill_table = "refill";  // prepaid: one row per refill event
    int refill_gap_months = 2;            // prepaid: no refill for this long = churned
    double account_threshold = 0.25;      // account churn: relative drop in active lines
};

enum class ExclusionReason { not_present_in_obs, left_before_target, bad_debt };
const char* to_string(ExclusionReason reason);

struct LabeledInstance {
    std::string customer_id;
    std::size_t root_row = 0;
    int label = 0;  // 1 = churn, 0 = stay
};

struct Exclusion {
    std::string customer_id;
    std::size_t root_row = 0;
    ExclusionReason reason = ExclusionReason::not_present_in_obs;
};

struct LabeledFrame {
    WindowPlan plan;
    std::vector<LabeledInstance> instances;
    std::vector<Exclusion> exclusions;

    std::size_t positives() const;
};

// Per-customer monthly activity over the data coverage, derived from the
// presence table (postpaid) or from refill events (prepaid).
class ActivityIndex {
public:
    ActivityIndex(const Dataset& dataset, const LabelRules& rules);

    const Coverage& coverage() const { return coverage_; }
    bool active(std::size_t root_row, Month m) const;

private:
    Coverage coverage_;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> active_;
};

Coverage data_coverage(const Dataset& dataset, const LabelRules& rules);

/// Labels every root customer or excludes it with a reason.
/// churn: present through observation and latency, inactive in the last target
/// month; stay: present through observation and latency, active in the last
/// target month (a gap followed by reactivation inside the target is stay).
LabeledFrame label_frame(const Dataset& dataset, const WindowPlan& plan, const LabelRules& rules);

// Customers present through the plan's whole observation window and not
// flagged as bad debt; target truth is not needed.
std::vector<LabeledInstance> deployable_customers(const Dataset& dataset, const WindowPlan& plan,
                                                  const LabelRules& rules);

struct AccountChurn {
    std::string account_id;
    std::size_t previous_lines = 0;
    std::size_t current_lines = 0;
    bool churner = false;
};

// Accounts with zero lines in month-1 are omitted (ratio undefined).
std::vector<AccountChurn> account_churn(const Dataset& dataset, Month month, const LabelRules& rules);

}  // namespace churn
