#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "churn/classifier.hpp"

namespace churn {

struct Contribution {
    std::string feature;
    std::string part;
    double value = 0;  // w * (ln p(part|churn) - ln p(part|stay))
};

struct Lever {
    std::string feature;
    std::string current_part;
    std::string suggested_part;
    double posterior_after = 0;
};

struct Interpretation {
    std::string customer_id;
    double posterior = 0;
    std::vector<Contribution> why;
    std::vector<Lever> how;
};

inline constexpr std::size_t kDefaultLevers = 4;

// Weighted features by descending contribution (ties by name). Prior log-odds
// plus the sum of contributions equals the posterior log-odds.
std::vector<Contribution> why(const SNBModel& model, const RecodedMatrix& recoded, std::size_t row);

/// For the `levers` actionable features with the largest contributions, the
/// non-Missing part that minimizes the posterior with every other feature held
/// fixed. Features already at their best part are omitted.
std::vector<Lever> how(const SNBModel& model, const RecodedMatrix& recoded, std::size_t row,
                       std::span<const std::string> actionable, std::size_t levers = kDefaultLevers);

// Interpretations of the `top` highest-posterior rows (all rows when top = 0).
std::vector<Interpretation> interpret(const SNBModel& model, const FeatureMatrix& matrix,
                                      std::span<const std::string> actionable, std::size_t top = 0,
                                      std::size_t levers = kDefaultLevers);
// Columns: id, score, why_1..why_R (feature=part:contribution),
// how_1..how_R (feature:current->suggested:posterior_after).
void write_interpretations(const std::vector<Interpretation>& rows, std::ostream& out,
                           std::size_t levers = kDefaultLevers, char delimiter = '\t');

enum class Strategy { top_users_by_company_frequency, top_users_by_company_revenue, company_mean_risk };
const char* to_string(Strategy strategy);
Strategy parse_strategy(std::string_view text);  // "A" | "B" | "C" or the full name

struct CampaignRow {
    std::string account_id;
    double statistic = 0;  // member count, revenue or mean posterior
    std::vector<std::string> members;
};

struct CampaignList {
    Strategy strategy = Strategy::top_users_by_company_frequency;
    std::vector<CampaignRow> rows;
};

/// A: top `size` customers grouped by account, ranked by member count.
/// B: accounts of the top `size` customers ranked by revenue.
/// C: every account ranked by the mean posterior of its scored members.
/// Ties go to the smaller account id.
CampaignList campaign(const ScoreVector& scores, const std::map<std::string, std::string>& roster,
                      const std::map<std::string, double>& revenue, Strategy strategy, std::size_t size);
void write_campaign(const CampaignList& list, std::ostream& out, char delimiter = '\t');

}  // namespace churn
