#include "churn/windowing.hpp"

#include <algorithm>
#include <map>

#include "churn/error.hpp"

namespace churn {
namespace {

[[noreturn]] void config_error(const std::string& message, std::string hint = {}) {
    throw Error(ErrorKind::configuration, "windowing", message, std::move(hint));
}

void check_coverage(const WindowPlan& plan, const Coverage& coverage, CoverageCheck check) {
    Month last = check == CoverageCheck::full ? plan.target_last() : plan.obs_last();
    if (plan.obs_first() < coverage.first || last > coverage.last) {
        config_error("window " + plan.obs_first().to_string() + ".." + last.to_string() +
                         " extends past data coverage " + coverage.first.to_string() + ".." +
                         coverage.last.to_string(),
                     "move the anchor month or shorten the windows");
    }
}

const TableSchema& activity_table(const Dataset& dataset, const LabelRules& rules, std::size_t& index) {
    const std::string& name = rules.variant == RuleVariant::prepaid ? rules.refill_table : rules.presence_table;
    auto idx = dataset.secondary_index(name);
    if (!idx) {
        config_error("presence signal table '" + name + "' not found in dataset",
                     "set labels.presence_table (or labels.refill_table for prepaid rules)");
    }
    const TableSchema& schema = dataset.schema().secondaries[*idx];
    if (schema.date_field.empty()) {
        config_error("presence signal table '" + name + "' has no date_field");
    }
    index = *idx;
    return schema;
}

}  // namespace

const char* to_string(ExclusionReason reason) {
    switch (reason) {
        case ExclusionReason::not_present_in_obs: return "not_present_in_obs";
        case ExclusionReason::left_before_target: return "left_before_target";
        case ExclusionReason::bad_debt: return "bad_debt";
    }
    return "?";
}

WindowPlan make_plan(Month anchor, int obs_months, int latency_months, int target_months) {
    if (obs_months < 1) {
        config_error("observation window must be at least 1 month (got " + std::to_string(obs_months) + ")");
    }
    if (latency_months < 0) {
        config_error("latency window cannot be negative (got " + std::to_string(latency_months) + ")");
    }
    if (target_months < 1) {
        config_error("target window must be at least 1 month (got " + std::to_string(target_months) + ")");
    }
    return WindowPlan{anchor, obs_months, latency_months, target_months};
}

WindowPlan make_plan(Month anchor, int obs_months, int latency_months, int target_months,
                     const Coverage& coverage, CoverageCheck check) {
    WindowPlan plan = make_plan(anchor, obs_months, latency_months, target_months);
    check_coverage(plan, coverage, check);
    return plan;
}

WindowPlan shift_plan(const WindowPlan& plan, int months, const Coverage& coverage, CoverageCheck check) {
    WindowPlan shifted = plan;
    shifted.anchor = plan.anchor + months;
    check_coverage(shifted, coverage, check);
    return shifted;
}

std::size_t LabeledFrame::positives() const {
    return static_cast<std::size_t>(
        std::count_if(instances.begin(), instances.end(), [](const LabeledInstance& i) { return i.label == 1; }));
}

Coverage data_coverage(const Dataset& dataset, const LabelRules& rules) {
    std::size_t index = 0;
    const TableSchema& schema = activity_table(dataset, rules, index);
    const Column& dates = dataset.secondary(index).column(schema.date_field);
    bool any = false;
    Coverage coverage;
    for (std::size_t r = 0; r < dates.size(); ++r) {
        if (dates.is_missing(r)) {
            continue;
        }
        Month m = dates.date(r).to_month();
        if (!any) {
            coverage = {m, m};
            any = true;
        } else {
            coverage.first = std::min(coverage.first, m);
            coverage.last = std::max(coverage.last, m);
        }
    }
    if (!any) {
        throw Error(ErrorKind::data, "windowing", "presence signal table '" + schema.name + "' has no dated rows");
    }
    return coverage;
}

ActivityIndex::ActivityIndex(const Dataset& dataset, const LabelRules& rules)
    : coverage_(data_coverage(dataset, rules)) {
    std::size_t index = 0;
    const TableSchema& schema = activity_table(dataset, rules, index);
    const Column& dates = dataset.secondary(index).column(schema.date_field);
    width_ = static_cast<std::size_t>(coverage_.months());
    const std::size_t n = dataset.customer_count();
    std::vector<std::uint8_t> events(n * width_, 0);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t r : dataset.rows_for(index, c)) {
            if (!dates.is_missing(r)) {
                events[c * width_ + static_cast<std::size_t>(dates.date(r).to_month() - coverage_.first)] = 1;
            }
        }
    }
    if (rules.variant == RuleVariant::postpaid) {
        active_ = std::move(events);
        return;
    }
    // Prepaid: a line is active while its last refill is less than
    // refill_gap_months old.
    const int gap = std::max(1, rules.refill_gap_months);
    active_.assign(n * width_, 0);
    for (std::size_t c = 0; c < n; ++c) {
        int since = gap;  // months since the last refill, saturating
        for (std::size_t m = 0; m < width_; ++m) {
            since = events[c * width_ + m] ? 0 : std::min(gap, since + 1);
            active_[c * width_ + m] = since < gap ? 1 : 0;
        }
    }
}

bool ActivityIndex::active(std::size_t root_row, Month m) const {
    if (!coverage_.contains(m)) {
        return false;
    }
    return active_[root_row * width_ + static_cast<std::size_t>(m - coverage_.first)] != 0;
}

namespace {

std::vector<std::int8_t> bad_debt_flags(const Dataset& dataset, const LabelRules& rules) {
    std::vector<std::int8_t> flags(dataset.customer_count(), 0);
    if (rules.bad_debt_field.empty()) {
        return flags;
    }
    auto idx = dataset.schema().root.field_index(rules.bad_debt_field);
    if (!idx) {
        config_error("bad-debt flag field '" + rules.bad_debt_field + "' not found in root table",
                     "set labels.bad_debt_field, or leave it empty to disable the rule");
    }
    const Column& col = dataset.root().column(*idx);
    if (col.kind() != FieldKind::flag) {
        config_error("bad-debt field '" + rules.bad_debt_field + "' must be a flag");
    }
    for (std::size_t r = 0; r < flags.size(); ++r) {
        flags[r] = col.code(r) == 1 ? 1 : 0;
    }
    return flags;
}

bool present_through(const ActivityIndex& activity, std::size_t row, Month first, Month last) {
    for (Month m = first; m <= last; m = m + 1) {
        if (!activity.active(row, m)) {
            return false;
        }
    }
    return true;
}

}  // namespace

LabeledFrame label_frame(const Dataset& dataset, const WindowPlan& plan, const LabelRules& rules) {
    ActivityIndex activity(dataset, rules);
    check_coverage(plan, activity.coverage(), CoverageCheck::full);
    auto bad_debt = bad_debt_flags(dataset, rules);

    LabeledFrame frame;
    frame.plan = plan;
    for (std::size_t row = 0; row < dataset.customer_count(); ++row) {
        const std::string& id = dataset.customer_id(row);
        if (bad_debt[row]) {
            frame.exclusions.push_back({id, row, ExclusionReason::bad_debt});
        } else if (!present_through(activity, row, plan.obs_first(), plan.obs_last())) {
            frame.exclusions.push_back({id, row, ExclusionReason::not_present_in_obs});
        } else if (!present_through(activity, row, plan.obs_last() + 1, plan.anchor + plan.latency_months)) {
            frame.exclusions.push_back({id, row, ExclusionReason::left_before_target});
        } else {
            int label = activity.active(row, plan.target_last()) ? 0 : 1;
            frame.instances.push_back({id, row, label});
        }
    }
    return frame;
}

std::vector<LabeledInstance> deployable_customers(const Dataset& dataset, const WindowPlan& plan,
                                                  const LabelRules& rules) {
    ActivityIndex activity(dataset, rules);
    check_coverage(plan, activity.coverage(), CoverageCheck::observation_only);
    auto bad_debt = bad_debt_flags(dataset, rules);
    std::vector<LabeledInstance> out;
    for (std::size_t row = 0; row < dataset.customer_count(); ++row) {
        if (!bad_debt[row] && present_through(activity, row, plan.obs_first(), plan.obs_last())) {
            out.push_back({dataset.customer_id(row), row, -1});
        }
    }
    return out;
}

std::vector<AccountChurn> account_churn(const Dataset& dataset, Month month, const LabelRules& rules) {
    ActivityIndex activity(dataset, rules);
    if (!activity.coverage().contains(month) || !activity.coverage().contains(month - 1)) {
        config_error("account churn month " + month.to_string() + " and its predecessor must lie inside coverage " +
                     activity.coverage().first.to_string() + ".." + activity.coverage().last.to_string());
    }
    auto idx = dataset.schema().root.field_index(rules.account_field);
    if (!idx) {
        config_error("account field '" + rules.account_field + "' not found in root table",
                     "set labels.account_field");
    }
    const Column& accounts = dataset.root().column(*idx);
    std::map<std::string, AccountChurn> by_account;
    for (std::size_t row = 0; row < dataset.customer_count(); ++row) {
        if (accounts.is_missing(row)) {
            continue;
        }
        const std::string& account = accounts.label(accounts.code(row));
        AccountChurn& entry = by_account[account];
        entry.account_id = account;
        entry.previous_lines += activity.active(row, month - 1) ? 1 : 0;
        entry.current_lines += activity.active(row, month) ? 1 : 0;
    }
    std::vector<AccountChurn> out;
    const double keep = 1.0 - rules.account_threshold;
    for (auto& [id, entry] : by_account) {
        if (entry.previous_lines == 0) {
            continue;
        }
        entry.churner = static_cast<double>(entry.current_lines) <=
                        keep * static_cast<double>(entry.previous_lines) + 1e-9;
        out.push_back(entry);
    }
    return out;
}

}  // namespace churn
