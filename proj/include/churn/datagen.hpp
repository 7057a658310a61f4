#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "churn/calendar.hpp"
#include "churn/schema.hpp"

namespace churn {

enum class Preset {
    planted,  // A: logistic hazard driven by the planted effects
    noise,    // B: constant hazard
    drift     // C: as A, with every planted effect sign-flipped from drift_month on
};
const char* to_string(Preset preset);
Preset parse_preset(std::string_view text);  // "A" | "B" | "C" or the name

// Hazard inputs, evaluated on the customer's state in the previous month:
//   inactive_last_month  no usage at all
//   ticket_last_month    at least one trouble ticket
//   short_tenure         fewer than 12 months since activation
//   promo_offer          offer == "Promo"
//   large_account        segment == "LA"
struct Driver {
    std::string recipe;
    double effect = 0;  // log-odds shift
};

struct GeneratorConfig {
    std::uint64_t seed = 1;
    std::size_t n_customers = 5000;
    std::size_t n_accounts = 0;  // 0: n_customers / 4
    Month first_month{2014, 1};
    int months = 6;
    double base_hazard = 0.01;
    Preset preset = Preset::planted;
    std::vector<Driver> drivers;  // empty: preset defaults
    std::optional<Month> drift_month;  // default: last month - target_months + 1
    double bad_debt_rate = 0.02;
    double soho_share = 0.6;
    double sme_share = 0.3;  // LA takes the rest
    int obs_months = 2;
    int latency_months = 0;
    int target_months = 2;

    Month last_month() const { return first_month + (months - 1); }
    // Latest anchor whose shifted (back-test) window still fits the coverage.
    Month default_anchor() const { return last_month() - (latency_months + 2 * target_months); }
};

std::vector<Driver> default_drivers(Preset preset);

struct CustomerTruth {
    std::string customer_id;
    std::optional<Month> churn_month;  // first month without presence
    bool bad_debt = false;
    std::vector<double> hazard;        // per coverage month; NaN when not at risk
};

struct GeneratedData {
    GeneratorConfig config;
    Dataset dataset;
    std::vector<CustomerTruth> truth;
    std::map<std::string, double> account_revenue;
};

DatasetSchema generator_schema();
// Column that materializes "no usage in the last observed month".
std::string driver_column();
// Expert formulas shipped with generated data.
std::string expert_formulas();

/// Throws Error(configuration) when coverage is shorter than O + L + P + 1
/// months or a parameter is out of range.
GeneratedData generate(const GeneratorConfig& config);

// schema.json, one TSV per table, truth.tsv, account_revenue.tsv, expert.txt, run.json.
void write_generated(const GeneratedData& data, const std::filesystem::path& dir);
std::vector<CustomerTruth> read_truth(const std::filesystem::path& dir);
std::map<std::string, double> read_account_revenue(const std::filesystem::path& path);

}  // namespace churn
