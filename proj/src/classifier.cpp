#include "churn/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include <json.hpp>

#include "churn/error.hpp"
#include "churn/evaluation.hpp"
#include "churn/io.hpp"
#include "churn/random.hpp"

namespace churn {
namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void modeling_error(const std::string& message, std::string hint = {}) {
    throw Error(ErrorKind::modeling, "classifier", message, std::move(hint));
}

void check_binary(std::span<const int> labels) {
    std::size_t pos = 0, neg = 0;
    for (int l : labels) {
        if (l == 1) {
            ++pos;
        } else if (l == 0) {
            ++neg;
        } else {
            modeling_error("training labels must be 0 or 1");
        }
    }
    if (pos == 0 || neg == 0) {
        modeling_error("degenerate target: training data holds a single class (" + std::to_string(pos) +
                           " churners, " + std::to_string(neg) + " stayers)",
                       "widen the windows or move the anchor so both outcomes occur");
    }
}

bool both_classes(std::span<const int> labels) {
    bool pos = false, neg = false;
    for (int l : labels) {
        (l == 1 ? pos : neg) = true;
    }
    return pos && neg;
}

}  // namespace

std::vector<std::string> SNBModel::required_columns() const {
    std::vector<std::string> names;
    for (const auto& f : features) {
        if (f.weight > 0) {
            names.push_back(f.name());
        }
    }
    return names;
}

const ModelFeature* SNBModel::find(std::string_view name) const {
    for (const auto& f : features) {
        if (f.name() == name) {
            return &f;
        }
    }
    return nullptr;
}

std::vector<std::vector<double>> fit_log_conditionals(std::span<const std::uint32_t> parts,
                                                      std::span<const int> labels, std::span<const std::size_t> rows,
                                                      std::size_t part_count) {
    std::vector<std::vector<double>> counts(2, std::vector<double>(part_count, 0.0));
    double class_total[2] = {0, 0};
    for (std::size_t r : rows) {
        counts[static_cast<std::size_t>(labels[r])][parts[r]] += 1;
        class_total[labels[r]] += 1;
    }
    const double pseudo = 1.0 / static_cast<double>(part_count);
    for (std::size_t c = 0; c < 2; ++c) {
        for (auto& v : counts[c]) {
            v = std::log((v + pseudo) / (class_total[c] + 1.0));
        }
    }
    return counts;
}

std::vector<double> fit_log_priors(std::span<const int> labels, std::span<const std::size_t> rows) {
    double counts[2] = {0, 0};
    for (std::size_t r : rows) {
        counts[labels[r]] += 1;
    }
    const double n = static_cast<double>(rows.size());
    return {std::log((counts[0] + 0.5) / (n + 1.0)), std::log((counts[1] + 0.5) / (n + 1.0))};
}

SNBModel train(const FeatureMatrix& matrix, const TrainConfig& config) {
    if (matrix.rows() == 0) {
        modeling_error("empty training matrix");
    }
    if (config.passes == 0) {
        modeling_error("selection passes must be at least 1");
    }
    const std::span<const int> labels(matrix.labels);
    check_binary(labels);
    const std::size_t n = matrix.rows();

    SNBModel model;
    std::vector<std::vector<std::uint32_t>> parts;
    for (const auto& column : matrix.columns) {
        UnivariatePartition partition = preprocess_column(column, labels);
        if (!(partition.level > 0)) {
            continue;
        }
        parts.push_back(recode(partition, column));
        ModelFeature feature;
        feature.kind = column.kind;
        feature.partition = std::move(partition);
        model.features.push_back(std::move(feature));
    }

    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    const std::size_t F = model.features.size();
    std::vector<std::size_t> selected(F, 0);

    std::vector<double> current, candidate;
    std::vector<int> holdout_labels;
    for (std::size_t pass = 0; pass < config.passes && F > 0; ++pass) {
        auto rng = make_stream(config.seed, pass);
        Split split = stratified_split(labels, config.holdout_fraction, rng);
        holdout_labels.clear();
        for (std::size_t r : split.test) {
            holdout_labels.push_back(labels[r]);
        }
        std::vector<std::size_t> order(F);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        if (!both_classes(holdout_labels) || split.train.empty()) {
            continue;
        }
        std::vector<double> prior = fit_log_priors(labels, split.train);
        current.assign(split.test.size(), prior[1] - prior[0]);
        double current_auc = 0.5;
        for (std::size_t f : order) {
            auto lp = fit_log_conditionals(parts[f], labels, split.train, model.features[f].partition.part_count());
            candidate = current;
            for (std::size_t h = 0; h < split.test.size(); ++h) {
                std::uint32_t p = parts[f][split.test[h]];
                candidate[h] += lp[1][p] - lp[0][p];
            }
            double a = auc(candidate, holdout_labels);
            if (a > current_auc + config.min_gain) {
                current_auc = a;
                current.swap(candidate);
                ++selected[f];
            }
        }
    }

    model.log_prior = fit_log_priors(labels, all);
    for (std::size_t f = 0; f < F; ++f) {
        auto& feature = model.features[f];
        feature.log_prob = fit_log_conditionals(parts[f], labels, all, feature.partition.part_count());
        feature.weight = static_cast<double>(selected[f]) / static_cast<double>(config.passes);
    }
    model.info.instances = n;
    model.info.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    model.info.candidate_features = matrix.columns.size();
    model.info.seed = config.seed;
    model.info.passes = config.passes;
    return model;
}

RecodedMatrix recode(const SNBModel& model, const FeatureMatrix& matrix) {
    RecodedMatrix out;
    out.rows = matrix.rows();
    out.parts.resize(model.features.size());
    std::vector<std::string> absent;
    for (std::size_t f = 0; f < model.features.size(); ++f) {
        const ModelFeature& feature = model.features[f];
        if (!(feature.weight > 0)) {
            continue;
        }
        auto idx = matrix.column_index(feature.name());
        if (!idx) {
            absent.push_back(feature.name());
            continue;
        }
        const FeatureColumn& column = matrix.columns[*idx];
        if (column.kind != feature.kind) {
            throw Error(ErrorKind::deployment, "classifier", "column '" + feature.name() + "' changed type");
        }
        out.parts[f] = churn::recode(feature.partition, column);
    }
    if (!absent.empty()) {
        std::string list;
        for (const auto& a : absent) {
            list += (list.empty() ? "" : ", ") + a;
        }
        throw Error(ErrorKind::deployment, "classifier", "matrix lacks model features: " + list,
                    "materialize the features listed in the model file");
    }
    return out;
}

double log_odds(const SNBModel& model, const RecodedMatrix& recoded, std::size_t row) {
    double lo = model.prior_log_odds();
    for (std::size_t f = 0; f < model.features.size(); ++f) {
        const ModelFeature& feature = model.features[f];
        if (feature.weight > 0) {
            lo += feature.weight * feature.log_ratio(recoded.parts[f][row]);
        }
    }
    return lo;
}

double posterior_from_log_odds(double lo) {
    if (lo >= 0) {
        return 1.0 / (1.0 + std::exp(-lo));
    }
    double e = std::exp(lo);
    return e / (1.0 + e);
}

ScoreVector score(const SNBModel& model, const FeatureMatrix& matrix) {
    RecodedMatrix recoded = recode(model, matrix);
    ScoreVector out;
    out.reserve(matrix.rows());
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        out.push_back({matrix.ids[r], posterior_from_log_odds(log_odds(model, recoded, r))});
    }
    return out;
}

void sort_descending(ScoreVector& scores) {
    std::sort(scores.begin(), scores.end(), [](const ScoreEntry& a, const ScoreEntry& b) {
        if (a.posterior != b.posterior) {
            return a.posterior > b.posterior;
        }
        return a.customer_id < b.customer_id;
    });
}

EliminationResult backward_eliminate(SNBModel model, const FeatureMatrix& holdout, double epsilon) {
    EliminationResult result;
    if (!both_classes(holdout.labels)) {
        result.model = std::move(model);
        return result;
    }
    auto holdout_auc = [&](const SNBModel& m) {
        ScoreVector s = score(m, holdout);
        std::vector<double> p;
        p.reserve(s.size());
        for (const auto& e : s) {
            p.push_back(e.posterior);
        }
        return auc(p, holdout.labels);
    };
    std::vector<std::size_t> order;
    for (std::size_t f = 0; f < model.features.size(); ++f) {
        if (model.features[f].weight > 0) {
            order.push_back(f);
        }
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& fa = model.features[a];
        const auto& fb = model.features[b];
        return std::tuple(fa.weight, fa.level(), fa.name()) < std::tuple(fb.weight, fb.level(), fb.name());
    });
    // Tolerance is measured against the best AUC reached so far, so small
    // losses cannot accumulate across drops.
    double base = holdout_auc(model);
    double best = base;
    for (std::size_t f : order) {
        EliminationStep step;
        step.feature = model.features[f].name();
        step.weight = model.features[f].weight;
        step.level = model.features[f].level();
        step.auc_before = base;
        const double saved = model.features[f].weight;
        model.features[f].weight = 0;
        step.auc_after = holdout_auc(model);
        step.accepted = best - step.auc_after <= epsilon;
        result.trace.push_back(step);
        if (!step.accepted) {
            model.features[f].weight = saved;
            break;
        }
        base = step.auc_after;
        best = std::max(best, base);
    }
    result.model = std::move(model);
    return result;
}

std::string to_json(const SNBModel& model) {
    Json j;
    j["version"] = kModelVersion;
    j["classes"] = 2;
    j["log_prior"] = model.log_prior;
    Json info;
    if (model.info.plan) {
        info["anchor"] = model.info.plan->anchor.to_string();
        info["obs_months"] = model.info.plan->obs_months;
        info["latency_months"] = model.info.plan->latency_months;
        info["target_months"] = model.info.plan->target_months;
    }
    info["instances"] = model.info.instances;
    info["positives"] = model.info.positives;
    info["candidate_features"] = model.info.candidate_features;
    info["seed"] = model.info.seed;
    info["passes"] = model.info.passes;
    j["training"] = info;
    Json features = Json::array();
    for (const auto& f : model.features) {
        const UnivariatePartition& p = f.partition;
        Json part;
        part["type"] = p.kind == PartitionKind::intervals ? "intervals" : "groups";
        if (p.kind == PartitionKind::intervals) {
            part["cuts"] = std::vector<double>(p.bounds.begin(), p.bounds.end() - 1);
        } else {
            part["groups"] = p.groups;
            part["garbage_group"] = p.garbage_group;
        }
        part["missing_part"] = p.missing_part ? Json(*p.missing_part) : Json(nullptr);
        part["counts"] = p.counts;
        part["cost"] = p.cost;
        part["null_cost"] = p.null_cost;
        Json jf;
        jf["name"] = f.name();
        jf["kind"] = f.kind == ValueKind::numeric ? "numeric" : "categorical";
        jf["weight"] = f.weight;
        jf["level"] = p.level;
        jf["partition"] = part;
        jf["log_prob"] = f.log_prob;
        features.push_back(jf);
    }
    j["features"] = features;
    return j.dump(2) + "\n";
}

SNBModel model_from_json(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::deployment, "classifier", std::string("corrupt model: ") + e.what(),
                    "retrain or restore the model file");
    }
    if (!j.is_object() || !j.contains("version") || !j["version"].is_string()) {
        throw Error(ErrorKind::deployment, "classifier", "corrupt model: no version field");
    }
    const std::string version = j["version"].get<std::string>();
    if (version != kModelVersion) {
        throw Error(ErrorKind::deployment, "classifier",
                    "model version '" + version + "' is not supported (expected '" + kModelVersion + "')",
                    "retrain the model with this build");
    }
    try {
        SNBModel model;
        model.log_prior = j.at("log_prior").get<std::vector<double>>();
        const Json& info = j.at("training");
        if (info.contains("anchor")) {
            auto anchor = Month::parse(info.at("anchor").get<std::string>());
            if (!anchor) {
                throw std::runtime_error("bad anchor month");
            }
            model.info.plan = WindowPlan{*anchor, info.at("obs_months").get<int>(),
                                         info.at("latency_months").get<int>(), info.at("target_months").get<int>()};
        }
        model.info.instances = info.at("instances").get<std::size_t>();
        model.info.positives = info.at("positives").get<std::size_t>();
        model.info.candidate_features = info.at("candidate_features").get<std::size_t>();
        model.info.seed = info.at("seed").get<std::uint64_t>();
        model.info.passes = info.at("passes").get<std::size_t>();
        for (const Json& jf : j.at("features")) {
            ModelFeature f;
            UnivariatePartition& p = f.partition;
            p.feature = jf.at("name").get<std::string>();
            f.kind = jf.at("kind").get<std::string>() == "numeric" ? ValueKind::numeric : ValueKind::categorical;
            f.weight = jf.at("weight").get<double>();
            p.level = jf.at("level").get<double>();
            const Json& part = jf.at("partition");
            if (part.at("type").get<std::string>() == "intervals") {
                p.kind = PartitionKind::intervals;
                p.bounds = part.at("cuts").get<std::vector<double>>();
                p.bounds.push_back(std::numeric_limits<double>::infinity());
            } else {
                p.kind = PartitionKind::groups;
                p.groups = part.at("groups").get<std::vector<std::vector<std::string>>>();
                p.garbage_group = part.at("garbage_group").get<std::size_t>();
                p.index_groups();
            }
            if (!part.at("missing_part").is_null()) {
                p.missing_part = part.at("missing_part").get<std::size_t>();
            }
            p.counts = part.at("counts").get<std::vector<ClassCounts>>();
            p.cost = part.at("cost").get<double>();
            p.null_cost = part.at("null_cost").get<double>();
            f.log_prob = jf.at("log_prob").get<std::vector<std::vector<double>>>();
            const std::size_t value_parts = p.kind == PartitionKind::intervals ? p.bounds.size() : p.groups.size();
            if (f.log_prob.size() != 2 || p.part_count() != value_parts + (p.missing_part ? 1 : 0) ||
                f.log_prob[0].size() != p.part_count() || f.log_prob[1].size() != p.part_count()) {
                throw std::runtime_error("inconsistent part counts for '" + p.feature + "'");
            }
            model.features.push_back(std::move(f));
        }
        if (model.log_prior.size() != 2) {
            throw std::runtime_error("binary priors expected");
        }
        return model;
    } catch (const std::exception& e) {
        throw Error(ErrorKind::deployment, "classifier", std::string("corrupt model: ") + e.what(),
                    "retrain or restore the model file");
    }
}

void save_model(const SNBModel& model, const std::filesystem::path& path) { io::write_atomic(path, to_json(model)); }

SNBModel load_model(const std::filesystem::path& path) {
    std::string text;
    try {
        text = io::read_file(path);
    } catch (const Error& e) {
        throw Error(ErrorKind::deployment, "classifier", e.what(), "check the model path");
    }
    return model_from_json(text);
}

}  // namespace churn
