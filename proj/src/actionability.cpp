#include "churn/actionability.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <set>

#include "churn/error.hpp"
#include "churn/io.hpp"

namespace churn {

std::vector<Contribution> why(const SNBModel& model, const RecodedMatrix& recoded, std::size_t row) {
    std::vector<Contribution> out;
    for (std::size_t f = 0; f < model.features.size(); ++f) {
        const ModelFeature& feature = model.features[f];
        if (!(feature.weight > 0)) {
            continue;
        }
        std::uint32_t part = recoded.parts[f][row];
        out.push_back({feature.name(), feature.partition.part_label(part), feature.weight * feature.log_ratio(part)});
    }
    std::stable_sort(out.begin(), out.end(), [](const Contribution& a, const Contribution& b) {
        if (a.value != b.value) {
            return a.value > b.value;
        }
        return a.feature < b.feature;
    });
    return out;
}

std::vector<Lever> how(const SNBModel& model, const RecodedMatrix& recoded, std::size_t row,
                       std::span<const std::string> actionable, std::size_t levers) {
    std::vector<Lever> out;
    if (actionable.empty() || levers == 0) {
        return out;
    }
    const std::set<std::string, std::less<>> allowed(actionable.begin(), actionable.end());
    const double base = log_odds(model, recoded, row);
    std::vector<std::size_t> candidates;
    for (std::size_t f = 0; f < model.features.size(); ++f) {
        if (model.features[f].weight > 0 && allowed.count(model.features[f].name()) > 0) {
            candidates.push_back(f);
        }
    }
    auto contribution = [&](std::size_t f) {
        return model.features[f].weight * model.features[f].log_ratio(recoded.parts[f][row]);
    };
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
        if (contribution(a) != contribution(b)) {
            return contribution(a) > contribution(b);
        }
        return model.features[a].name() < model.features[b].name();
    });
    if (candidates.size() > levers) {
        candidates.resize(levers);
    }
    for (std::size_t f : candidates) {
        const ModelFeature& feature = model.features[f];
        const std::uint32_t current = recoded.parts[f][row];
        std::size_t best = current;
        double best_ratio = feature.log_ratio(current);
        for (std::size_t p = 0; p < feature.partition.part_count(); ++p) {
            if (feature.partition.missing_part && p == *feature.partition.missing_part) {
                continue;
            }
            if (feature.log_ratio(p) < best_ratio) {
                best_ratio = feature.log_ratio(p);
                best = p;
            }
        }
        if (best == current) {
            continue;
        }
        double after = base + feature.weight * (best_ratio - feature.log_ratio(current));
        out.push_back({feature.name(), feature.partition.part_label(current), feature.partition.part_label(best),
                       posterior_from_log_odds(after)});
    }
    return out;
}

std::vector<Interpretation> interpret(const SNBModel& model, const FeatureMatrix& matrix,
                                      std::span<const std::string> actionable, std::size_t top, std::size_t levers) {
    RecodedMatrix recoded = recode(model, matrix);
    std::vector<std::size_t> order(matrix.rows());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> post(matrix.rows());
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        post[r] = posterior_from_log_odds(log_odds(model, recoded, r));
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (post[a] != post[b]) {
            return post[a] > post[b];
        }
        return matrix.ids[a] < matrix.ids[b];
    });
    if (top > 0 && order.size() > top) {
        order.resize(top);
    }
    std::vector<Interpretation> out;
    for (std::size_t r : order) {
        out.push_back({matrix.ids[r], post[r], why(model, recoded, r), how(model, recoded, r, actionable, levers)});
    }
    return out;
}

void write_interpretations(const std::vector<Interpretation>& rows, std::ostream& out, std::size_t levers,
                           char delimiter) {
    std::vector<std::string> record{"id", "score"};
    for (std::size_t i = 1; i <= levers; ++i) {
        record.push_back("why_" + std::to_string(i));
    }
    for (std::size_t i = 1; i <= levers; ++i) {
        record.push_back("how_" + std::to_string(i));
    }
    io::write_record(out, record, delimiter);
    for (const auto& row : rows) {
        record = {row.customer_id, io::format_double(row.posterior)};
        for (std::size_t i = 0; i < levers; ++i) {
            record.push_back(i < row.why.size() ? row.why[i].feature + "=" + row.why[i].part + ":" +
                                                      io::format_double(row.why[i].value)
                                                : "");
        }
        for (std::size_t i = 0; i < levers; ++i) {
            record.push_back(i < row.how.size() ? row.how[i].feature + ":" + row.how[i].current_part + "->" +
                                                      row.how[i].suggested_part + ":" +
                                                      io::format_double(row.how[i].posterior_after)
                                                : "");
        }
        io::write_record(out, record, delimiter);
    }
}

const char* to_string(Strategy strategy) {
    switch (strategy) {
        case Strategy::top_users_by_company_frequency: return "A_top_users_by_company_frequency";
        case Strategy::top_users_by_company_revenue: return "B_top_users_by_company_revenue";
        case Strategy::company_mean_risk: return "C_company_mean_risk";
    }
    return "?";
}

Strategy parse_strategy(std::string_view text) {
    for (Strategy s : {Strategy::top_users_by_company_frequency, Strategy::top_users_by_company_revenue,
                       Strategy::company_mean_risk}) {
        std::string_view name = to_string(s);
        if (text == name || text == name.substr(0, 1)) {
            return s;
        }
    }
    throw Error(ErrorKind::configuration, "actionability", "unknown campaign strategy '" + std::string(text) + "'",
                "use A, B or C");
}

CampaignList campaign(const ScoreVector& scores, const std::map<std::string, std::string>& roster,
                      const std::map<std::string, double>& revenue, Strategy strategy, std::size_t size) {
    ScoreVector ranked = scores;
    sort_descending(ranked);
    if (strategy != Strategy::company_mean_risk && ranked.size() > size) {
        ranked.resize(size);
    }
    std::map<std::string, CampaignRow> accounts;
    std::map<std::string, double> posterior_sum;
    for (const auto& s : ranked) {
        auto it = roster.find(s.customer_id);
        if (it == roster.end()) {
            throw Error(ErrorKind::data, "actionability", "customer '" + s.customer_id + "' has no account");
        }
        CampaignRow& row = accounts[it->second];
        row.account_id = it->second;
        row.members.push_back(s.customer_id);
        posterior_sum[it->second] += s.posterior;
    }
    CampaignList list;
    list.strategy = strategy;
    for (auto& [id, row] : accounts) {
        switch (strategy) {
            case Strategy::top_users_by_company_frequency:
                row.statistic = static_cast<double>(row.members.size());
                break;
            case Strategy::top_users_by_company_revenue: {
                auto r = revenue.find(id);
                if (r == revenue.end()) {
                    throw Error(ErrorKind::data, "actionability", "no revenue for account '" + id + "'",
                                "strategy B needs revenue for every targeted account");
                }
                row.statistic = r->second;
                break;
            }
            case Strategy::company_mean_risk:
                row.statistic = posterior_sum[id] / static_cast<double>(row.members.size());
                break;
        }
        list.rows.push_back(std::move(row));
    }
    std::stable_sort(list.rows.begin(), list.rows.end(), [](const CampaignRow& a, const CampaignRow& b) {
        if (a.statistic != b.statistic) {
            return a.statistic > b.statistic;
        }
        return a.account_id < b.account_id;
    });
    return list;
}

void write_campaign(const CampaignList& list, std::ostream& out, char delimiter) {
    io::write_record(out, {"rank", "account_id", "statistic", "members", "customer_ids"}, delimiter);
    std::size_t rank = 1;
    for (const auto& row : list.rows) {
        std::string members;
        for (const auto& m : row.members) {
            members += (members.empty() ? "" : ",") + m;
        }
        io::write_record(out,
                         {std::to_string(rank++), row.account_id, io::format_double(row.statistic),
                          std::to_string(row.members.size()), members},
                         delimiter);
    }
}

}  // namespace churn
