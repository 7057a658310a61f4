#include "churn/pipeline.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "churn/error.hpp"
#include "churn/io.hpp"

namespace churn {
namespace {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

[[noreturn]] void config_error(const std::string& message, std::string hint = {}) {
    throw Error(ErrorKind::configuration, "cli", message, std::move(hint));
}

void check_keys(const Json& node, const std::string& section, std::initializer_list<const char*> allowed) {
    if (!node.is_object()) {
        config_error("config section '" + section + "' must be an object");
    }
    for (const auto& item : node.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; })) {
            config_error("unknown config key '" + (section.empty() ? "" : section + ".") + item.key() + "'");
        }
    }
}

template <typename T>
void read(const Json& node, const char* key, T& target, const std::string& section) {
    if (!node.contains(key)) {
        return;
    }
    try {
        target = node.at(key).get<T>();
    } catch (const Json::exception&) {
        config_error("config key '" + section + "." + key + "' has the wrong type");
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) {
        return {};
    }
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

Month read_month(const Json& node, const char* key, const std::string& section) {
    std::string text;
    read(node, key, text, section);
    auto m = Month::parse(text);
    if (!m) {
        config_error("config key '" + section + "." + key + "' must be a YYYY-MM month (got '" + text + "')");
    }
    return *m;
}

OrderedJson report_json(const EvalReport& r) {
    OrderedJson j;
    j["n"] = r.n;
    j["positives"] = r.positives;
    j["base_rate"] = r.base_rate;
    j["auc"] = r.auc;
    j["top_decile_precision"] = r.top_decile_precision;
    j["capture"] = OrderedJson::array();
    for (const auto& c : r.capture) {
        j["capture"].push_back({{"k", c.k}, {"capture", c.capture}, {"bucket_precision", c.bucket_precision}});
    }
    return j;
}

OrderedJson plan_json(const WindowPlan& plan) {
    return {{"anchor", plan.anchor.to_string()},
            {"observation", plan.obs_first().to_string() + ".." + plan.obs_last().to_string()},
            {"target", plan.target_first().to_string() + ".." + plan.target_last().to_string()}};
}

std::string lift_text(const EvalReport& r) {
    std::ostringstream out;
    write_lift_table(r, out);
    return out.str();
}

void ensure_output(const RunConfig& config) {
    std::error_code ec;
    std::filesystem::create_directories(config.output_dir, ec);
    if (ec) {
        config_error("cannot create output directory '" + config.output_dir.string() + "': " + ec.message());
    }
}

WindowPlan deployment_plan(const Dataset& dataset, const RunConfig& config, const SNBModel& model) {
    const Coverage coverage = data_coverage(dataset, config.rules);
    const Month anchor = config.score_anchor.value_or(coverage.last);
    int obs = model.info.plan ? model.info.plan->obs_months : config.obs_months;
    int latency = model.info.plan ? model.info.plan->latency_months : config.latency_months;
    int target = model.info.plan ? model.info.plan->target_months : config.target_months;
    return make_plan(anchor, obs, latency, target, coverage, CoverageCheck::observation_only);
}

std::string scores_text(ScoreVector scores) {
    sort_descending(scores);
    std::ostringstream out;
    io::write_record(out, {"rank", "customer_id", "posterior"}, '\t');
    std::size_t rank = 1;
    for (const auto& s : scores) {
        io::write_record(out, {std::to_string(rank++), s.customer_id, io::format_double(s.posterior)}, '\t');
    }
    return out.str();
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir) {
    Json j;
    try {
        j = Json::parse(json_text);
    } catch (const Json::exception& e) {
        config_error(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, "", {"schema", "output_dir", "model", "window", "labels", "features", "training", "evaluation",
                       "interpret", "campaign", "generator"});
    RunConfig c;
    std::string text;
    read(j, "schema", text, "");
    c.schema = resolve(base_dir, text);
    text.clear();
    read(j, "output_dir", text, "");
    c.output_dir = text.empty() ? resolve(base_dir, "out") : resolve(base_dir, text);
    text.clear();
    read(j, "model", text, "");
    c.model = resolve(base_dir, text);

    if (j.contains("window")) {
        const Json& w = j["window"];
        check_keys(w, "window", {"anchor", "score_anchor", "obs_months", "latency_months", "target_months"});
        if (w.contains("anchor") && !w["anchor"].is_null()) {
            c.anchor = read_month(w, "anchor", "window");
        }
        if (w.contains("score_anchor") && !w["score_anchor"].is_null()) {
            c.score_anchor = read_month(w, "score_anchor", "window");
        }
        read(w, "obs_months", c.obs_months, "window");
        read(w, "latency_months", c.latency_months, "window");
        read(w, "target_months", c.target_months, "window");
    }
    if (j.contains("labels")) {
        const Json& l = j["labels"];
        check_keys(l, "labels", {"presence_table", "bad_debt_field", "account_field", "variant", "refill_table",
                                 "refill_gap_months", "account_threshold"});
        read(l, "presence_table", c.rules.presence_table, "labels");
        read(l, "bad_debt_field", c.rules.bad_debt_field, "labels");
        read(l, "account_field", c.rules.account_field, "labels");
        std::string variant = "postpaid";
        read(l, "variant", variant, "labels");
        if (variant == "postpaid") {
            c.rules.variant = RuleVariant::postpaid;
        } else if (variant == "prepaid") {
            c.rules.variant = RuleVariant::prepaid;
        } else {
            config_error("labels.variant must be 'postpaid' or 'prepaid'");
        }
        read(l, "refill_table", c.rules.refill_table, "labels");
        read(l, "refill_gap_months", c.rules.refill_gap_months, "labels");
        read(l, "account_threshold", c.rules.account_threshold, "labels");
    }
    if (j.contains("features")) {
        const Json& f = j["features"];
        check_keys(f, "features", {"native", "exclude_native", "expert_file", "budget", "seed", "lagged",
                                   "skip_tables", "max_selector_cardinality"});
        read(f, "native", c.features.native, "features");
        read(f, "exclude_native", c.features.exclude_native, "features");
        text.clear();
        read(f, "expert_file", text, "features");
        c.features.expert_file = resolve(base_dir, text);
        read(f, "budget", c.features.budget, "features");
        read(f, "seed", c.features.seed, "features");
        read(f, "lagged", c.features.lagged, "features");
        read(f, "skip_tables", c.features.skip_tables, "features");
        read(f, "max_selector_cardinality", c.features.max_selector_cardinality, "features");
    }
    if (j.contains("training")) {
        const Json& t = j["training"];
        check_keys(t, "training", {"seed", "passes", "holdout_fraction", "min_gain", "test_fraction", "epsilon"});
        read(t, "seed", c.train.seed, "training");
        read(t, "passes", c.train.passes, "training");
        read(t, "holdout_fraction", c.train.holdout_fraction, "training");
        read(t, "min_gain", c.train.min_gain, "training");
        read(t, "test_fraction", c.test_fraction, "training");
        read(t, "epsilon", c.epsilon, "training");
    }
    if (j.contains("evaluation")) {
        const Json& e = j["evaluation"];
        check_keys(e, "evaluation", {"capture_k", "min_auc", "robustness_threshold"});
        read(e, "capture_k", c.capture_ks, "evaluation");
        if (e.contains("min_auc") && !e["min_auc"].is_null()) {
            double v = 0;
            read(e, "min_auc", v, "evaluation");
            c.min_auc = v;
        }
        read(e, "robustness_threshold", c.robustness_threshold, "evaluation");
    }
    if (j.contains("interpret")) {
        const Json& i = j["interpret"];
        check_keys(i, "interpret", {"actionable", "levers", "top"});
        read(i, "actionable", c.actionable, "interpret");
        read(i, "levers", c.levers, "interpret");
        read(i, "top", c.interpret_top, "interpret");
    }
    if (j.contains("campaign")) {
        const Json& k = j["campaign"];
        check_keys(k, "campaign", {"strategy", "size_a", "size_b", "revenue_file"});
        read(k, "strategy", c.campaign.strategy, "campaign");
        read(k, "size_a", c.campaign.size_a, "campaign");
        read(k, "size_b", c.campaign.size_b, "campaign");
        text.clear();
        read(k, "revenue_file", text, "campaign");
        c.campaign.revenue_file = resolve(base_dir, text);
    }
    if (j.contains("generator")) {
        const Json& g = j["generator"];
        check_keys(g, "generator", {"seed", "n", "accounts", "preset", "first_month", "months", "base_hazard",
                                    "drift_month", "bad_debt_rate", "drivers", "output_dir"});
        GeneratorConfig& gen = c.generator;
        read(g, "seed", gen.seed, "generator");
        read(g, "n", gen.n_customers, "generator");
        read(g, "accounts", gen.n_accounts, "generator");
        std::string preset = to_string(gen.preset);
        read(g, "preset", preset, "generator");
        gen.preset = parse_preset(preset);
        if (g.contains("first_month")) {
            gen.first_month = read_month(g, "first_month", "generator");
        }
        read(g, "months", gen.months, "generator");
        read(g, "base_hazard", gen.base_hazard, "generator");
        if (g.contains("drift_month")) {
            gen.drift_month = read_month(g, "drift_month", "generator");
        }
        read(g, "bad_debt_rate", gen.bad_debt_rate, "generator");
        if (g.contains("drivers")) {
            for (const auto& d : g["drivers"]) {
                check_keys(d, "generator.drivers", {"recipe", "effect"});
                Driver driver;
                read(d, "recipe", driver.recipe, "generator.drivers");
                read(d, "effect", driver.effect, "generator.drivers");
                gen.drivers.push_back(driver);
            }
        }
        text.clear();
        read(g, "output_dir", text, "generator");
        if (!text.empty()) {
            c.generator_dir = resolve(base_dir, text);
        }
    }
    c.generator.obs_months = c.obs_months;
    c.generator.latency_months = c.latency_months;
    c.generator.target_months = c.target_months;
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        config_error("config file '" + path.string() + "' not found");
    }
    return parse_run_config(io::read_file(path), path.parent_path());
}

std::string generated_config_text(const GeneratorConfig& g) {
    OrderedJson j;
    j["schema"] = "schema.json";
    j["output_dir"] = "out";
    j["window"] = {{"anchor", g.default_anchor().to_string()},
                   {"obs_months", g.obs_months},
                   {"latency_months", g.latency_months},
                   {"target_months", g.target_months}};
    j["features"] = {{"native", true}, {"expert_file", "expert.txt"}, {"budget", 100}, {"seed", 7}};
    j["training"] = {{"seed", 1}, {"passes", 31}, {"min_gain", 0.003}, {"test_fraction", 0.3}, {"epsilon", 0.005}};
    j["interpret"] = {{"actionable", {"offer", "*usage*", "*tickets*"}}, {"levers", 4}, {"top", 100}};
    j["campaign"] = {{"strategy", "all"}, {"size_a", 100}, {"size_b", 100}, {"revenue_file", "account_revenue.tsv"}};
    return j.dump(2) + "\n";
}

Dataset load_run_dataset(const RunConfig& config) {
    if (config.schema.empty()) {
        config_error("no schema descriptor configured", "set \"schema\" in the config or pass --schema");
    }
    DatasetSchema schema = load_schema_file(config.schema);
    LoadReport report;
    Dataset dataset = load_dataset(schema, &report);
    for (const auto& w : report.warnings) {
        std::cerr << "warning: " << w << "\n";
    }
    return dataset;
}

WindowPlan training_plan(const Dataset& dataset, const RunConfig& config) {
    const Coverage coverage = data_coverage(dataset, config.rules);
    const Month anchor =
        config.anchor.value_or(coverage.last - (config.latency_months + 2 * config.target_months));
    return make_plan(anchor, config.obs_months, config.latency_months, config.target_months, coverage);
}

std::vector<FeatureSpec> build_specs(const Dataset& dataset, const RunConfig& config) {
    std::vector<FeatureSpec> specs;
    const DatasetSchema& schema = dataset.schema();
    if (config.features.native) {
        std::vector<std::string> exclude = config.features.exclude_native;
        exclude.push_back(config.rules.bad_debt_field);
        exclude.push_back(config.rules.account_field);
        specs = native_features(schema, exclude);
    }
    if (!config.features.expert_file.empty()) {
        auto expert = parse_expert_file(io::read_file(config.features.expert_file), schema);
        specs.insert(specs.end(), expert.begin(), expert.end());
    }
    if (config.features.budget > 0) {
        AutoOptions options;
        options.skip_tables = config.features.skip_tables;
        if (options.skip_tables.empty()) {
            options.skip_tables.push_back(config.rules.variant == RuleVariant::prepaid ? config.rules.refill_table
                                                                                       : config.rules.presence_table);
        }
        options.max_selector_cardinality = config.features.max_selector_cardinality;
        auto automatic = auto_construct(dataset, config.features.budget, config.features.seed, options);
        specs.insert(specs.end(), automatic.begin(), automatic.end());
    }
    if (config.features.lagged) {
        specs = expand_lagged(std::move(specs), schema);
    }
    return specs;
}

ExperimentConfig experiment_config(const Dataset& dataset, const RunConfig& config) {
    ExperimentConfig e;
    e.rules = config.rules;
    e.specs = build_specs(dataset, config);
    e.train = config.train;
    e.test_fraction = config.test_fraction;
    e.epsilon = config.epsilon;
    e.capture_ks = config.capture_ks;
    return e;
}

std::vector<std::string> resolve_actionable(const SNBModel& model, const std::vector<std::string>& patterns) {
    std::vector<std::string> names;
    for (const auto& f : model.features) {
        if (!(f.weight > 0)) {
            continue;
        }
        for (const auto& p : patterns) {
            if (p == f.name() || fnmatch(p.c_str(), f.name().c_str(), 0) == 0) {
                names.push_back(f.name());
                break;
            }
        }
    }
    return names;
}

std::string refresh_advice(const RefreshInput& input) {
    const int model_age = input.latest_data - input.model_anchor;
    if (model_age > 6) {
        return "retrain advised";
    }
    if (input.robustness && *input.robustness < input.robustness_threshold) {
        return "retrain advised (drift)";
    }
    const int score_age = input.latest_data - input.scores_anchor.value_or(input.model_anchor);
    if (score_age > 1) {
        return "re-score advised";
    }
    return "ok";
}

void cmd_gen(const RunConfig& config) {
    GeneratedData data = generate(config.generator);
    write_generated(data, config.generator_dir);
    io::write_atomic(config.generator_dir / "config.json", generated_config_text(config.generator));
    std::cout << "generated " << data.truth.size() << " customers (preset " << to_string(config.generator.preset)
              << ", seed " << config.generator.seed << ") in " << config.generator_dir.string() << "\n";
}

void cmd_train(const RunConfig& config) {
    Dataset dataset = load_run_dataset(config);
    WindowPlan plan = training_plan(dataset, config);
    ExperimentConfig experiment = experiment_config(dataset, config);
    Step1Result result = train_step1(dataset, plan, experiment);
    ensure_output(config);
    save_model(result.model, config.model_path());

    OrderedJson report;
    report["plan"] = plan_json(plan);
    report["instances"] = result.frame.instances.size();
    report["excluded"] = result.frame.exclusions.size();
    report["feature_columns"] = result.features.columns.size();
    report["informative_features"] = result.model.features.size();
    report["selected_features"] = result.model.required_columns().size();
    report["train"] = report_json(result.train_report);
    report["test"] = report_json(result.test_report);
    if (config.min_auc) {
        report["min_auc"] = *config.min_auc;
        report["deployable"] = result.test_report.auc >= *config.min_auc;
    }
    io::write_atomic(config.output_dir / "report_step1.json", report.dump(2) + "\n");
    io::write_atomic(config.output_dir / "lift_step1.tsv", lift_text(result.test_report));

    std::vector<const ModelFeature*> ranked;
    for (const auto& f : result.model.features) {
        ranked.push_back(&f);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const ModelFeature* a, const ModelFeature* b) {
        if (a->weight != b->weight) {
            return a->weight > b->weight;
        }
        return a->level() > b->level();
    });
    std::ostringstream importance;
    io::write_record(importance, {"feature", "weight", "level", "parts"}, '\t');
    for (const auto* f : ranked) {
        io::write_record(importance,
                         {f->name(), io::format_double(f->weight), io::format_double(f->level()),
                          std::to_string(f->partition.part_count())},
                         '\t');
    }
    io::write_atomic(config.output_dir / "importance.tsv", importance.str());

    std::ostringstream trace;
    io::write_record(trace, {"feature", "weight", "level", "auc_before", "auc_after", "dropped"}, '\t');
    for (const auto& s : result.elimination) {
        io::write_record(trace,
                         {s.feature, io::format_double(s.weight), io::format_double(s.level),
                          io::format_double(s.auc_before), io::format_double(s.auc_after),
                          s.accepted ? "yes" : "no"},
                         '\t');
    }
    io::write_atomic(config.output_dir / "elimination.tsv", trace.str());

    std::cout << "trained on " << result.frame.instances.size() << " instances, " << result.features.columns.size()
              << " feature columns, " << result.model.required_columns().size() << " selected\n"
              << "test AUC " << io::format_double(result.test_report.auc) << "\n"
              << "model written to " << config.model_path().string() << "\n";
    if (config.min_auc) {
        if (result.test_report.auc < *config.min_auc) {
            throw Error(ErrorKind::modeling, "evaluation",
                        "test AUC " + io::format_double(result.test_report.auc) + " is below --min-auc " +
                            io::format_double(*config.min_auc),
                        "the model was written but is not judged deployable");
        }
        std::cout << "deployable: AUC meets --min-auc " << io::format_double(*config.min_auc) << "\n";
    }
}

void cmd_score(const RunConfig& config) {
    SNBModel model = load_model(config.model_path());
    Dataset dataset = load_run_dataset(config);
    WindowPlan plan = deployment_plan(dataset, config, model);
    DeployResult result = deploy(dataset, model, plan, config.rules);
    ensure_output(config);
    io::write_atomic(config.output_dir / "scores.tsv", scores_text(result.scores));
    OrderedJson meta;
    meta["anchor"] = plan.anchor.to_string();
    meta["scored"] = result.scores.size();
    io::write_atomic(config.output_dir / "scores.json", meta.dump(2) + "\n");
    std::cout << "scored " << result.scores.size() << " customers at anchor " << plan.anchor.to_string() << "\n";
}

void cmd_backtest(const RunConfig& config) {
    Dataset dataset = load_run_dataset(config);
    WindowPlan plan = training_plan(dataset, config);
    ExperimentConfig experiment = experiment_config(dataset, config);
    BacktestResult result = backtest(dataset, plan, experiment);
    ensure_output(config);
    OrderedJson report;
    report["step1_plan"] = plan_json(plan);
    report["step1_test"] = report_json(result.step1.test_report);
    WindowPlan shifted = plan;
    shifted.anchor = plan.anchor + plan.target_months;
    report["step3_plan"] = plan_json(shifted);
    if (result.step3) {
        report["step3"] = report_json(*result.step3);
        report["robustness"] = *result.robustness;
    } else {
        report["step3"] = nullptr;
        report["step3_note"] = result.step3_note;
    }
    io::write_atomic(config.output_dir / "backtest.json", report.dump(2) + "\n");
    io::write_atomic(config.output_dir / "lift_step1.tsv", lift_text(result.step1.test_report));
    std::cout << "step-1 test AUC " << io::format_double(result.step1.test_report.auc) << "\n";
    if (result.step3) {
        io::write_atomic(config.output_dir / "lift_step3.tsv", lift_text(*result.step3));
        std::cout << "step-3 back-test AUC " << io::format_double(result.step3->auc) << "\n"
                  << "robustness " << io::format_double(*result.robustness) << "\n";
    } else {
        std::cout << "step-3 report omitted: " << result.step3_note << "\n";
    }
}

void cmd_interpret(const RunConfig& config) {
    SNBModel model = load_model(config.model_path());
    Dataset dataset = load_run_dataset(config);
    WindowPlan plan = deployment_plan(dataset, config, model);
    auto instances = deployable_customers(dataset, plan, config.rules);
    auto names = model.required_columns();
    FeatureMatrix matrix = materialize(dataset, plan, instances, plan_from_names(dataset.schema(), names));
    auto actionable = resolve_actionable(model, config.actionable);
    auto rows = interpret(model, matrix, actionable, config.interpret_top, config.levers);
    ensure_output(config);
    std::ostringstream out;
    write_interpretations(rows, out, config.levers);
    io::write_atomic(config.output_dir / "interpret.tsv", out.str());
    std::ostringstream global;
    io::write_record(global, {"feature", "weight", "level", "actionable"}, '\t');
    for (const auto& f : model.features) {
        if (f.weight > 0) {
            bool act = std::find(actionable.begin(), actionable.end(), f.name()) != actionable.end();
            io::write_record(global,
                             {f.name(), io::format_double(f.weight), io::format_double(f.level()), act ? "yes" : "no"},
                             '\t');
        }
    }
    io::write_atomic(config.output_dir / "global_importance.tsv", global.str());
    std::cout << "interpreted " << rows.size() << " customers (" << actionable.size() << " actionable features)\n";
}

void cmd_campaign(const RunConfig& config) {
    SNBModel model = load_model(config.model_path());
    Dataset dataset = load_run_dataset(config);
    WindowPlan plan = deployment_plan(dataset, config, model);
    DeployResult result = deploy(dataset, model, plan, config.rules);

    std::map<std::string, std::string> roster;
    auto account_field = dataset.schema().root.field_index(config.rules.account_field);
    if (!account_field) {
        config_error("account field '" + config.rules.account_field + "' not in root table",
                     "set labels.account_field");
    }
    const Column& accounts = dataset.root().column(*account_field);
    for (const auto& inst : result.instances) {
        if (!accounts.is_missing(inst.root_row)) {
            roster[inst.customer_id] = accounts.label(accounts.code(inst.root_row));
        }
    }
    std::vector<Strategy> strategies;
    if (config.campaign.strategy == "all") {
        strategies = {Strategy::top_users_by_company_frequency, Strategy::top_users_by_company_revenue,
                      Strategy::company_mean_risk};
    } else {
        strategies = {parse_strategy(config.campaign.strategy)};
    }
    std::map<std::string, double> revenue;
    if (!config.campaign.revenue_file.empty()) {
        revenue = read_account_revenue(config.campaign.revenue_file);
    } else if (std::find(strategies.begin(), strategies.end(), Strategy::top_users_by_company_revenue) !=
               strategies.end()) {
        config_error("strategy B needs account revenue", "set campaign.revenue_file");
    }
    ensure_output(config);
    for (Strategy s : strategies) {
        std::size_t size = s == Strategy::top_users_by_company_revenue ? config.campaign.size_b : config.campaign.size_a;
        CampaignList list = campaign(result.scores, roster, revenue, s, size);
        std::ostringstream out;
        write_campaign(list, out);
        io::write_atomic(config.output_dir / ("campaign_" + std::string(to_string(s)) + ".tsv"), out.str());
        std::cout << to_string(s) << ": " << list.rows.size() << " accounts\n";
    }
}

std::string cmd_refresh_check(const RunConfig& config, std::optional<double> robustness) {
    SNBModel model = load_model(config.model_path());
    if (!model.info.plan) {
        throw Error(ErrorKind::deployment, "cli", "model carries no training window");
    }
    Dataset dataset = load_run_dataset(config);
    RefreshInput input{data_coverage(dataset, config.rules).last, model.info.plan->anchor, std::nullopt, robustness,
                       config.robustness_threshold};
    const auto scores_meta = config.output_dir / "scores.json";
    if (std::filesystem::exists(scores_meta)) {
        auto meta = Json::parse(io::read_file(scores_meta), nullptr, false);
        if (meta.is_object() && meta.contains("anchor")) {
            input.scores_anchor = Month::parse(meta["anchor"].get<std::string>());
        }
    }
    const auto backtest_report = config.output_dir / "backtest.json";
    if (!input.robustness && std::filesystem::exists(backtest_report)) {
        auto report = Json::parse(io::read_file(backtest_report), nullptr, false);
        if (report.is_object() && report.contains("robustness")) {
            input.robustness = report["robustness"].get<double>();
        }
    }
    return refresh_advice(input);
}

void cmd_lift_plot(const std::vector<std::filesystem::path>& tables, const std::filesystem::path& output) {
    if (tables.empty()) {
        config_error("lift-plot needs at least one lift table");
    }
    std::vector<std::pair<std::string, std::vector<LiftPoint>>> curves;
    for (const auto& path : tables) {
        std::istringstream in(io::read_file(path));
        std::string line;
        std::getline(in, line);
        std::vector<LiftPoint> points;
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            auto fields = io::split_record(line, '\t');
            try {
                points.push_back({std::stod(fields.at(0)), std::stod(fields.at(1))});
            } catch (const std::exception&) {
                throw Error(ErrorKind::data, "cli", "malformed lift table row in " + path.string() + ": " + line);
            }
        }
        curves.emplace_back(path.stem().string(), std::move(points));
    }
    io::write_atomic(output, lift_svg(curves));
}

}  // namespace churn
