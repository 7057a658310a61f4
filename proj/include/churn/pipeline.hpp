#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "churn/actionability.hpp"
#include "churn/classifier.hpp"
#include "churn/datagen.hpp"
#include "churn/evaluation.hpp"
#include "churn/featuregen.hpp"
#include "churn/windowing.hpp"

namespace churn {

struct FeatureConfig {
    bool native = true;
    std::vector<std::string> exclude_native;
    std::filesystem::path expert_file;
    std::size_t budget = 100;  // automatic specs; 0 disables construction
    std::uint64_t seed = 7;
    bool lagged = false;
    std::vector<std::string> skip_tables;  // empty: the presence/refill table
    std::size_t max_selector_cardinality = 8;
};

struct CampaignConfig {
    std::string strategy = "C";  // A, B, C or "all"
    std::size_t size_a = 100;
    std::size_t size_b = 100;
    std::filesystem::path revenue_file;
};

/// Everything a run needs. Loaded from JSON; relative paths resolve against
/// the config file's directory.
struct RunConfig {
    std::filesystem::path schema;
    std::filesystem::path output_dir = "out";
    std::filesystem::path model;  // default: output_dir/model.json

    std::optional<Month> anchor;        // default: latest anchor leaving room for a back-test
    std::optional<Month> score_anchor;  // deployment commands; default: latest data month
    int obs_months = 2;
    int latency_months = 0;
    int target_months = 2;
    LabelRules rules;

    FeatureConfig features;
    TrainConfig train;
    double test_fraction = 0.3;
    double epsilon = 0.005;

    std::vector<std::size_t> capture_ks = {100, 250, 500, 1000, 2000};
    std::optional<double> min_auc;
    double robustness_threshold = 0.9;

    std::vector<std::string> actionable;  // names or fnmatch patterns
    std::size_t levers = kDefaultLevers;
    std::size_t interpret_top = 100;

    CampaignConfig campaign;

    GeneratorConfig generator;
    std::filesystem::path generator_dir = "data";

    std::filesystem::path model_path() const { return model.empty() ? output_dir / "model.json" : model; }
};

RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
// The config `gen` writes next to generated data; paths are relative to it.
std::string generated_config_text(const GeneratorConfig& generator);

Dataset load_run_dataset(const RunConfig& config);
WindowPlan training_plan(const Dataset& dataset, const RunConfig& config);
std::vector<FeatureSpec> build_specs(const Dataset& dataset, const RunConfig& config);
ExperimentConfig experiment_config(const Dataset& dataset, const RunConfig& config);
std::vector<std::string> resolve_actionable(const SNBModel& model, const std::vector<std::string>& patterns);

struct RefreshInput {
    Month latest_data;
    Month model_anchor;
    std::optional<Month> scores_anchor;
    std::optional<double> robustness;
    double robustness_threshold = 0.9;
};

/// "retrain advised" (model older than 6 months), "retrain advised (drift)"
/// (robustness below threshold), "re-score advised" (scores older than one
/// month) or "ok", checked in that order.
std::string refresh_advice(const RefreshInput& input);

// Subcommands; each writes its artifacts atomically and returns normally or
// throws churn::Error.
void cmd_gen(const RunConfig& config);
void cmd_train(const RunConfig& config);
void cmd_score(const RunConfig& config);
void cmd_backtest(const RunConfig& config);
void cmd_interpret(const RunConfig& config);
void cmd_campaign(const RunConfig& config);
std::string cmd_refresh_check(const RunConfig& config, std::optional<double> robustness);
void cmd_lift_plot(const std::vector<std::filesystem::path>& tables, const std::filesystem::path& output);

}  // namespace churn
