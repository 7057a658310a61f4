#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "churn/classifier.hpp"
#include "churn/featuregen.hpp"
#include "churn/windowing.hpp"

namespace churn {

// Mann-Whitney pair count over positives x negatives; ties earn 0.5.
double auc(std::span<const double> scores, std::span<const int> labels);

struct LiftPoint {
    double population = 0;  // fraction of instances contacted
    double target = 0;      // fraction of churners captured
};

// Points at population 0%, 1%, ..., 100%; contact the top ceil(q n) of a
// stable descending sort.
std::vector<LiftPoint> lift_curve(std::span<const double> scores, std::span<const int> labels);
double capture_at(std::span<const double> scores, std::span<const int> labels, std::size_t k);

struct CaptureRow {
    std::size_t k = 0;
    double capture = 0;           // churners in top k / all churners
    double bucket_precision = 0;  // churner share in ranks (previous k, k]
};

struct EvalReport {
    double auc = 0;
    std::vector<LiftPoint> lift;
    std::vector<CaptureRow> capture;
    std::size_t n = 0;
    std::size_t positives = 0;
    double base_rate = 0;
    double top_decile_precision = 0;
};

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels,
                    std::span<const std::size_t> capture_ks = {});

void write_report(const EvalReport& report, std::ostream& out, std::optional<double> robustness = std::nullopt);
void write_lift_table(const EvalReport& report, std::ostream& out);
std::string lift_svg(const std::vector<std::pair<std::string, std::vector<LiftPoint>>>& curves);

struct ExperimentConfig {
    LabelRules rules;
    std::vector<FeatureSpec> specs;
    TrainConfig train;
    double test_fraction = 0.3;
    double epsilon = 0.0;
    std::vector<std::size_t> capture_ks = {100, 500, 1000, 2000};
};

struct Step1Result {
    LabeledFrame frame;
    FeaturePlan features;
    SNBModel model;  // after elimination
    std::vector<EliminationStep> elimination;
    EvalReport train_report;
    EvalReport test_report;
};

/// Labels the plan, materializes features, trains on a stratified split and
/// prunes by backward elimination on the test part.
Step1Result train_step1(const Dataset& dataset, const WindowPlan& plan, const ExperimentConfig& config);

struct DeployResult {
    std::vector<LabeledInstance> instances;
    ScoreVector scores;
};

// Scores every deployable customer of `plan` with the model's own columns.
DeployResult deploy(const Dataset& dataset, const SNBModel& model, const WindowPlan& plan, const LabelRules& rules);

struct BacktestResult {
    Step1Result step1;
    std::optional<EvalReport> step3;
    std::optional<double> robustness;  // auc_step3 / auc_step1_test
    std::string step3_note;            // why step 3 was omitted
};

/// Step 1 on `plan`, then scores shift_plan(plan, +target) and evaluates it
/// against the realized labels when the data covers that target window.
BacktestResult backtest(const Dataset& dataset, const WindowPlan& plan, const ExperimentConfig& config);

}  // namespace churn
