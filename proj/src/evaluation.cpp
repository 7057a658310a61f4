#include "churn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "churn/error.hpp"
#include "churn/io.hpp"
#include "churn/random.hpp"

namespace churn {
namespace {

void check_scored(std::span<const double> scores, std::span<const int> labels, std::size_t& positives) {
    if (scores.size() != labels.size()) {
        throw Error(ErrorKind::modeling, "evaluation", "scores and labels differ in length");
    }
    positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (positives == 0 || positives == labels.size()) {
        throw Error(ErrorKind::modeling, "evaluation", "evaluation needs at least one churner and one stayer");
    }
}

// Cumulative churner counts along the stable descending ranking; cum[k] is
// the count among the top k.
std::vector<std::size_t> cumulative_hits(std::span<const double> scores, std::span<const int> labels) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::size_t> cum(order.size() + 1, 0);
    for (std::size_t k = 0; k < order.size(); ++k) {
        cum[k + 1] = cum[k] + (labels[order[k]] == 1 ? 1 : 0);
    }
    return cum;
}

std::vector<double> posteriors(const ScoreVector& scores) {
    std::vector<double> out;
    out.reserve(scores.size());
    for (const auto& s : scores) {
        out.push_back(s.posterior);
    }
    return out;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
    std::size_t positives = 0;
    check_scored(scores, labels, positives);
    const std::size_t negatives = labels.size() - positives;
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double wins = 0;
    std::size_t negatives_below = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i, p = 0, q = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] == 1 ? p : q) += 1;
            ++j;
        }
        wins += static_cast<double>(p) * static_cast<double>(negatives_below) +
                0.5 * static_cast<double>(p) * static_cast<double>(q);
        negatives_below += q;
        i = j;
    }
    return wins / (static_cast<double>(positives) * static_cast<double>(negatives));
}

std::vector<LiftPoint> lift_curve(std::span<const double> scores, std::span<const int> labels) {
    std::size_t positives = 0;
    check_scored(scores, labels, positives);
    auto cum = cumulative_hits(scores, labels);
    const std::size_t n = scores.size();
    std::vector<LiftPoint> lift;
    for (std::size_t pct = 0; pct <= 100; ++pct) {
        std::size_t top = (pct * n + 99) / 100;
        lift.push_back({static_cast<double>(pct) / 100.0,
                        static_cast<double>(cum[top]) / static_cast<double>(positives)});
    }
    return lift;
}

double capture_at(std::span<const double> scores, std::span<const int> labels, std::size_t k) {
    std::size_t positives = 0;
    check_scored(scores, labels, positives);
    auto cum = cumulative_hits(scores, labels);
    return static_cast<double>(cum[std::min(k, scores.size())]) / static_cast<double>(positives);
}

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels,
                    std::span<const std::size_t> capture_ks) {
    EvalReport r;
    r.auc = auc(scores, labels);
    r.lift = lift_curve(scores, labels);
    r.n = scores.size();
    r.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    r.base_rate = static_cast<double>(r.positives) / static_cast<double>(r.n);
    auto cum = cumulative_hits(scores, labels);
    std::vector<std::size_t> ks(capture_ks.begin(), capture_ks.end());
    std::sort(ks.begin(), ks.end());
    std::size_t prev = 0;
    for (std::size_t k : ks) {
        if (k == 0 || k > r.n || k == prev) {
            continue;
        }
        r.capture.push_back({k, static_cast<double>(cum[k]) / static_cast<double>(r.positives),
                             static_cast<double>(cum[k] - cum[prev]) / static_cast<double>(k - prev)});
        prev = k;
    }
    const std::size_t decile = std::max<std::size_t>(1, (r.n + 9) / 10);
    r.top_decile_precision = static_cast<double>(cum[decile]) / static_cast<double>(decile);
    return r;
}

void write_report(const EvalReport& report, std::ostream& out, std::optional<double> robustness) {
    nlohmann::ordered_json j;
    j["n"] = report.n;
    j["positives"] = report.positives;
    j["base_rate"] = report.base_rate;
    j["auc"] = report.auc;
    j["top_decile_precision"] = report.top_decile_precision;
    nlohmann::ordered_json capture = nlohmann::ordered_json::array();
    for (const auto& c : report.capture) {
        capture.push_back({{"k", c.k}, {"capture", c.capture}, {"bucket_precision", c.bucket_precision}});
    }
    j["capture"] = capture;
    if (robustness) {
        j["robustness"] = *robustness;
    }
    out << j.dump(2) << "\n";
}

void write_lift_table(const EvalReport& report, std::ostream& out) {
    out << "population\ttarget\n";
    for (const auto& p : report.lift) {
        out << io::format_double(p.population) << '\t' << io::format_double(p.target) << '\n';
    }
}

std::string lift_svg(const std::vector<std::pair<std::string, std::vector<LiftPoint>>>& curves) {
    constexpr double size = 400, margin = 50;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    auto x = [&](double v) { return margin + v * size; };
    auto y = [&](double v) { return margin + (1.0 - v) * size; };
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin + 120 << "\" height=\""
        << size + 2 * margin << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size << "\" height=\"" << size
        << "\" fill=\"none\" stroke=\"#000\"/>\n";
    for (int t = 0; t <= 10; ++t) {
        double v = t / 10.0;
        svg << "<text x=\"" << x(v) << "\" y=\"" << y(0) + 16 << "\" text-anchor=\"middle\">" << t * 10
            << "</text>\n";
        svg << "<text x=\"" << margin - 6 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">" << t * 10
            << "</text>\n";
    }
    svg << "<text x=\"" << x(0.5) << "\" y=\"" << y(0) + 36 << "\" text-anchor=\"middle\">% of population</text>\n";
    svg << "<text transform=\"translate(14," << y(0.5) << ") rotate(-90)\" text-anchor=\"middle\">% of target</text>\n";
    svg << "<line x1=\"" << x(0) << "\" y1=\"" << y(0) << "\" x2=\"" << x(1) << "\" y2=\"" << y(1)
        << "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
    for (std::size_t c = 0; c < curves.size(); ++c) {
        const char* color = colors[c % 5];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& p : curves[c].second) {
            svg << x(p.population) << ',' << y(p.target) << ' ';
        }
        svg << "\"/>\n";
        svg << "<text x=\"" << x(1) + 10 << "\" y=\"" << margin + 16 * (c + 1) << "\" fill=\"" << color << "\">"
            << curves[c].first << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

Step1Result train_step1(const Dataset& dataset, const WindowPlan& plan, const ExperimentConfig& config) {
    Step1Result out;
    out.frame = label_frame(dataset, plan, config.rules);
    if (out.frame.instances.empty()) {
        throw Error(ErrorKind::modeling, "evaluation", "no eligible instances in window anchored at " +
                                                           plan.anchor.to_string());
    }
    out.features = resolve_columns(dataset, plan, config.specs);
    FeatureMatrix matrix = materialize(dataset, plan, out.frame.instances, out.features);
    const std::size_t positives = out.frame.positives();
    if (positives == 0 || positives == out.frame.instances.size()) {
        throw Error(ErrorKind::modeling, "evaluation",
                    "degenerate target: window anchored at " + plan.anchor.to_string() + " holds a single class",
                    "widen the windows or move the anchor so both outcomes occur");
    }
    auto rng = make_stream(config.train.seed, 0x5717);
    Split split = stratified_split(matrix.labels, config.test_fraction, rng);
    FeatureMatrix train_m = matrix.select_rows(split.train);
    FeatureMatrix test_m = matrix.select_rows(split.test);

    SNBModel model = train(train_m, config.train);
    model.info.plan = plan;
    EliminationResult pruned = backward_eliminate(std::move(model), test_m, config.epsilon);
    out.model = std::move(pruned.model);
    out.elimination = std::move(pruned.trace);
    out.train_report = evaluate(posteriors(score(out.model, train_m)), train_m.labels, config.capture_ks);
    out.test_report = evaluate(posteriors(score(out.model, test_m)), test_m.labels, config.capture_ks);
    return out;
}

DeployResult deploy(const Dataset& dataset, const SNBModel& model, const WindowPlan& plan, const LabelRules& rules) {
    DeployResult out;
    out.instances = deployable_customers(dataset, plan, rules);
    auto names = model.required_columns();
    FeaturePlan features = plan_from_names(dataset.schema(), names);
    FeatureMatrix matrix = materialize(dataset, plan, out.instances, features);
    out.scores = score(model, matrix);
    return out;
}

BacktestResult backtest(const Dataset& dataset, const WindowPlan& plan, const ExperimentConfig& config) {
    BacktestResult out;
    out.step1 = train_step1(dataset, plan, config);
    const Coverage coverage = data_coverage(dataset, config.rules);
    WindowPlan shifted = plan;
    shifted.anchor = plan.anchor + plan.target_months;
    if (shifted.target_last() > coverage.last || shifted.obs_first() < coverage.first) {
        out.step3_note = "deployment target window " + shifted.target_first().to_string() + ".." +
                         shifted.target_last().to_string() + " is not covered by data ending " +
                         coverage.last.to_string();
        return out;
    }
    LabeledFrame frame = label_frame(dataset, shifted, config.rules);
    auto names = out.step1.model.required_columns();
    FeaturePlan features = plan_from_names(dataset.schema(), names);
    FeatureMatrix matrix = materialize(dataset, shifted, frame.instances, features);
    const std::size_t positives = frame.positives();
    if (positives == 0 || positives == frame.instances.size()) {
        out.step3_note = "deployment window anchored at " + shifted.anchor.to_string() + " holds a single class";
        return out;
    }
    out.step3 = evaluate(posteriors(score(out.step1.model, matrix)), matrix.labels, config.capture_ks);
    out.robustness = out.step3->auc / out.step1.test_report.auc;
    return out;
}

}  // namespace churn
