#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "churn/featuregen.hpp"
#include "churn/preprocess.hpp"
#include "churn/windowing.hpp"

namespace churn {

inline constexpr const char* kModelVersion = "churn-snb/1";

struct TrainConfig {
    std::size_t passes = 31;
    double holdout_fraction = 0.3;
    std::uint64_t seed = 1;
    double min_gain = 0.003;  // holdout AUC gain needed to accept a feature
};

struct ModelFeature {
    UnivariatePartition partition;
    ValueKind kind = ValueKind::numeric;
    std::vector<std::vector<double>> log_prob;  // [class][part], Laplace-smoothed
    double weight = 0;

    const std::string& name() const { return partition.feature; }
    double level() const { return partition.level; }
    // ln p(part|churn) - ln p(part|stay)
    double log_ratio(std::size_t part) const { return log_prob[1][part] - log_prob[0][part]; }
};

struct TrainingInfo {
    std::optional<WindowPlan> plan;
    std::size_t instances = 0;
    std::size_t positives = 0;
    std::size_t candidate_features = 0;
    std::uint64_t seed = 0;
    std::size_t passes = 0;
};

/// Binary selective naive Bayes. score_c(x) = ln p(c) + sum_v w_v ln p(part_v(x)|c).
struct SNBModel {
    std::vector<double> log_prior;  // [class]
    std::vector<ModelFeature> features;
    TrainingInfo info;

    double prior_log_odds() const { return log_prior[1] - log_prior[0]; }
    // Names of the columns scoring reads (weight > 0).
    std::vector<std::string> required_columns() const;
    const ModelFeature* find(std::string_view name) const;
};

/// Laplace-smoothed conditionals from recoded parts: (n_pc + 1/I) / (n_c + 1).
std::vector<std::vector<double>> fit_log_conditionals(std::span<const std::uint32_t> parts,
                                                      std::span<const int> labels, std::span<const std::size_t> rows,
                                                      std::size_t part_count);
// (n_c + 1/J) / (n + 1)
std::vector<double> fit_log_priors(std::span<const int> labels, std::span<const std::size_t> rows);

SNBModel train(const FeatureMatrix& matrix, const TrainConfig& config = {});

struct ScoreEntry {
    std::string customer_id;
    double posterior = 0;
};
using ScoreVector = std::vector<ScoreEntry>;

// Part index of every weighted feature for every row: parts[feature][row].
// Features with weight 0 are left empty.
struct RecodedMatrix {
    std::vector<std::vector<std::uint32_t>> parts;
    std::size_t rows = 0;
};
RecodedMatrix recode(const SNBModel& model, const FeatureMatrix& matrix);

double log_odds(const SNBModel& model, const RecodedMatrix& recoded, std::size_t row);
double posterior_from_log_odds(double log_odds);

ScoreVector score(const SNBModel& model, const FeatureMatrix& matrix);
void sort_descending(ScoreVector& scores);

struct EliminationStep {
    std::string feature;
    double weight = 0;
    double level = 0;
    double auc_before = 0;
    double auc_after = 0;
    bool accepted = false;
};

struct EliminationResult {
    SNBModel model;
    std::vector<EliminationStep> trace;
};

/// Drops weighted features in ascending (weight, level, name) order while the
/// holdout AUC stays within epsilon of the best AUC seen so far; stops at the
/// first rejected drop.
EliminationResult backward_eliminate(SNBModel model, const FeatureMatrix& holdout, double epsilon);

std::string to_json(const SNBModel& model);
SNBModel model_from_json(std::string_view text);
void save_model(const SNBModel& model, const std::filesystem::path& path);
SNBModel load_model(const std::filesystem::path& path);

}  // namespace churn
