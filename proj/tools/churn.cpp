#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "churn/error.hpp"
#include "churn/pipeline.hpp"

namespace {

struct Overrides {
    std::string config;
    std::string schema;
    std::string output;
    std::string model;
    std::string anchor;
    std::optional<int> obs, latency, target;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> passes, budget;
    std::optional<double> epsilon, min_auc, threshold;
    std::optional<bool> lagged;
    std::string expert;

    std::string preset, data_dir;
    std::optional<std::size_t> n, accounts;
    std::optional<int> months;

    std::string strategy;
    std::optional<std::size_t> size_a, size_b, top, levers;
    std::vector<std::string> actionable;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "run configuration (JSON)");
    cmd->add_option("--schema", o.schema, "schema descriptor");
    cmd->add_option("-o,--output", o.output, "output directory");
    cmd->add_option("--model", o.model, "model file (default <output>/model.json)");
    cmd->add_option("--anchor", o.anchor, "anchor month YYYY-MM (training or deployment)");
}

void add_window(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--obs", o.obs, "observation months");
    cmd->add_option("--latency", o.latency, "latency months");
    cmd->add_option("--target", o.target, "target months");
}

void add_training(CLI::App* cmd, Overrides& o) {
    add_window(cmd, o);
    cmd->add_option("--seed", o.seed, "training seed");
    cmd->add_option("--passes", o.passes, "selection passes S");
    cmd->add_option("--epsilon", o.epsilon, "elimination tolerance");
    cmd->add_option("--budget", o.budget, "automatic feature budget");
    cmd->add_option("--expert", o.expert, "expert formula file");
    cmd->add_option("--lagged", o.lagged, "add per-month feature variants");
    cmd->add_option("--min-auc", o.min_auc, "fail unless test AUC reaches this");
}

churn::RunConfig build_config(const Overrides& o) {
    churn::RunConfig c = o.config.empty() ? churn::RunConfig{} : churn::load_run_config(o.config);
    if (!o.schema.empty()) c.schema = o.schema;
    if (!o.output.empty()) c.output_dir = o.output;
    if (!o.model.empty()) c.model = o.model;
    if (!o.anchor.empty()) {
        auto m = churn::Month::parse(o.anchor);
        if (!m) {
            throw churn::Error(churn::ErrorKind::configuration, "cli", "--anchor must be YYYY-MM (got '" + o.anchor + "')");
        }
        c.anchor = *m;
        c.score_anchor = *m;
    }
    if (o.obs) c.obs_months = *o.obs;
    if (o.latency) c.latency_months = *o.latency;
    if (o.target) c.target_months = *o.target;
    if (o.seed) c.train.seed = *o.seed;
    if (o.passes) c.train.passes = *o.passes;
    if (o.epsilon) c.epsilon = *o.epsilon;
    if (o.budget) c.features.budget = *o.budget;
    if (o.lagged) c.features.lagged = *o.lagged;
    if (!o.expert.empty()) c.features.expert_file = o.expert;
    if (o.min_auc) c.min_auc = *o.min_auc;
    if (o.threshold) c.robustness_threshold = *o.threshold;

    if (!o.preset.empty()) c.generator.preset = churn::parse_preset(o.preset);
    if (o.seed) c.generator.seed = *o.seed;
    if (o.n) c.generator.n_customers = *o.n;
    if (o.accounts) c.generator.n_accounts = *o.accounts;
    if (o.months) c.generator.months = *o.months;
    if (!o.data_dir.empty()) c.generator_dir = o.data_dir;
    c.generator.obs_months = c.obs_months;
    c.generator.latency_months = c.latency_months;
    c.generator.target_months = c.target_months;

    if (!o.strategy.empty()) c.campaign.strategy = o.strategy;
    if (o.size_a) c.campaign.size_a = *o.size_a;
    if (o.size_b) c.campaign.size_b = *o.size_b;
    if (o.top) c.interpret_top = *o.top;
    if (o.levers) c.levers = *o.levers;
    if (!o.actionable.empty()) c.actionable = o.actionable;
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Churn scoring pipeline over multi-table customer data"};
    app.require_subcommand(1);
    Overrides o;

    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset with ground truth");
    gen->add_option("--preset", o.preset, "A (planted), B (noise) or C (drift)");
    gen->add_option("--seed", o.seed, "generator seed");
    gen->add_option("--n", o.n, "customers");
    gen->add_option("--accounts", o.accounts, "accounts (default n/4)");
    gen->add_option("--months", o.months, "coverage months");
    gen->add_option("-o,--out", o.data_dir, "dataset directory");
    gen->add_option("-c,--config", o.config, "run configuration (JSON)");
    add_window(gen, o);

    auto* train = app.add_subcommand("train", "train and evaluate a model (step 1)");
    add_common(train, o);
    add_training(train, o);

    auto* score = app.add_subcommand("score", "score deployable customers");
    add_common(score, o);

    auto* backtest = app.add_subcommand("backtest", "train, then evaluate on the shifted window");
    add_common(backtest, o);
    add_training(backtest, o);

    auto* interpret = app.add_subcommand("interpret", "why/how table for the top-ranked customers");
    add_common(interpret, o);
    interpret->add_option("--top", o.top, "rows");
    interpret->add_option("--levers", o.levers, "why/how entries per row");
    interpret->add_option("--actionable", o.actionable, "actionable feature names or glob patterns");

    auto* camp = app.add_subcommand("campaign", "rank accounts for a retention campaign");
    add_common(camp, o);
    camp->add_option("--strategy", o.strategy, "A, B, C or all");
    camp->add_option("--size-a", o.size_a, "top users considered by A and C");
    camp->add_option("--size-b", o.size_b, "top users considered by B");

    auto* refresh = app.add_subcommand("refresh-check", "advise on re-scoring or retraining");
    add_common(refresh, o);
    std::optional<double> robustness;
    refresh->add_option("--robustness", robustness, "back-test robustness (default: <output>/backtest.json)");
    refresh->add_option("--threshold", o.threshold, "robustness threshold");

    auto* lift = app.add_subcommand("lift-plot", "draw lift tables as SVG");
    std::vector<std::string> tables;
    std::string svg = "lift.svg";
    lift->add_option("tables", tables, "lift tables")->required();
    lift->add_option("-o,--output", svg, "SVG file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*lift) {
            churn::cmd_lift_plot(std::vector<std::filesystem::path>(tables.begin(), tables.end()), svg);
            return 0;
        }
        churn::RunConfig config = build_config(o);
        if (*gen) churn::cmd_gen(config);
        else if (*train) churn::cmd_train(config);
        else if (*score) churn::cmd_score(config);
        else if (*backtest) churn::cmd_backtest(config);
        else if (*interpret) churn::cmd_interpret(config);
        else if (*camp) churn::cmd_campaign(config);
        else if (*refresh) std::cout << churn::cmd_refresh_check(config, robustness) << "\n";
        return 0;
    } catch (const churn::Error& e) {
        std::cerr << "error [" << e.module() << ", " << churn::to_string(e.kind()) << "]: " << e.what() << "\n";
        if (!e.hint().empty()) {
            std::cerr << "hint: " << e.hint() << "\n";
        }
        return churn::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
