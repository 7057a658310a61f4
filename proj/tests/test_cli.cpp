#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "churn/error.hpp"
#include "churn/io.hpp"
#include "churn/pipeline.hpp"

using namespace churn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct Run {
    int code = -1;
    std::string output;  // stdout and stderr
};

Run churn_cli(const std::string& args, const fs::path& scratch) {
    const fs::path log = scratch / "cli.log";
    std::string command = std::string(CHURN_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    int status = std::system(command.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = io::read_file(log);
    return r;
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& path) {
    std::istringstream in(io::read_file(path));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        rows.push_back(io::split_record(line, '\t'));
    }
    return rows;
}

}  // namespace

TEST_CASE("config parsing resolves paths and rejects bad keys") {
    auto c = parse_run_config(R"({"schema": "s.json", "window": {"anchor": "2014-03", "obs_months": 3},
                                  "training": {"passes": 5}, "interpret": {"actionable": ["offer"]}})",
                              "/data");
    CHECK(c.schema == fs::path("/data/s.json"));
    CHECK(c.output_dir == fs::path("/data/out"));
    CHECK(c.model_path() == fs::path("/data/out/model.json"));
    REQUIRE(c.anchor);
    CHECK(*c.anchor == Month(2014, 3));
    CHECK(c.obs_months == 3);
    CHECK(c.latency_months == 0);
    CHECK(c.target_months == 2);
    CHECK(c.train.passes == 5);
    CHECK(c.actionable == std::vector<std::string>{"offer"});

    auto kind_of = [](const char* text) {
        try {
            parse_run_config(text);
        } catch (const Error& e) {
            return std::optional<ErrorKind>(e.kind());
        }
        return std::optional<ErrorKind>();
    };
    CHECK(kind_of(R"({"bogus": 1})") == ErrorKind::configuration);
    CHECK(kind_of(R"({"window": {"anchor": "March"}})") == ErrorKind::configuration);
    CHECK(kind_of(R"({"training": {"passes": "many"}})") == ErrorKind::configuration);
    CHECK(kind_of(R"({"labels": {"variant": "hybrid"}})") == ErrorKind::configuration);
    CHECK(kind_of("{not json") == ErrorKind::configuration);
    CHECK_FALSE(kind_of(generated_config_text(GeneratorConfig{}).c_str()));
}

TEST_CASE("refresh advice") {
    RefreshInput in{Month(2014, 8), Month(2014, 1), Month(2014, 8), std::nullopt, 0.9};
    CHECK(refresh_advice(in) == "retrain advised");  // seven months old
    in.model_anchor = Month(2014, 7);
    CHECK(refresh_advice(in) == "ok");
    in.robustness = 0.8;
    CHECK(refresh_advice(in) == "retrain advised (drift)");
    in.robustness = 0.95;
    in.scores_anchor = Month(2014, 6);
    CHECK(refresh_advice(in) == "re-score advised");
    in.scores_anchor = Month(2014, 7);
    CHECK(refresh_advice(in) == "ok");
    in.model_anchor = Month(2014, 2);  // exactly six months: not yet stale
    in.scores_anchor = Month(2014, 8);
    CHECK(refresh_advice(in) == "ok");
}

TEST_CASE("binary: errors map to exit codes and name their cause") {
    TempDir dir("churn_cli_errors");
    auto r = churn_cli("train --schema " + (dir.path / "absent.json").string() + " -o " + dir.path.string(), dir.path);
    CHECK(r.code == 2);
    CHECK(r.output.find("absent.json") != std::string::npos);

    r = churn_cli("train -c " + (dir.path / "nope.json").string(), dir.path);
    CHECK(r.code == 2);
    CHECK(r.output.find("nope.json") != std::string::npos);

    r = churn_cli("train --anchor 14-3", dir.path);
    CHECK(r.code == 2);
    r = churn_cli("frobnicate", dir.path);
    CHECK(r.code == 2);
    r = churn_cli("gen --months 3 -o " + (dir.path / "short").string(), dir.path);
    CHECK(r.code == 2);

    // every line present in every month: no churner in any window
    const fs::path data = dir.path / "flat";
    r = churn_cli("gen --n 200 --seed 2 -o " + data.string(), dir.path);
    REQUIRE(r.code == 0);
    std::ostringstream presence;
    presence << "customer_id\tmonth\n";
    auto customers = read_tsv(data / "customer.tsv");
    for (std::size_t i = 1; i < customers.size(); ++i) {
        for (int m = 1; m <= 6; ++m) {
            presence << customers[i][0] << "\t2014-0" << m << "\n";
        }
    }
    io::write_atomic(data / "presence.tsv", presence.str());
    r = churn_cli("train -c " + (data / "config.json").string(), dir.path);
    CHECK(r.code == 4);
    CHECK(r.output.find("degenerate target") != std::string::npos);
}

TEST_CASE("binary: full pipeline on generated data") {
    TempDir dir("churn_cli_pipeline");
    const fs::path data = dir.path / "data";
    const std::string cfg = " -c " + (data / "config.json").string();
    const fs::path out = data / "out";

    auto r = churn_cli("gen --preset A --seed 3 --n 3000 -o " + data.string(), dir.path);
    REQUIRE(r.code == 0);
    r = churn_cli("train" + cfg, dir.path);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(out / "model.json"));
    CHECK(fs::exists(out / "importance.tsv"));
    auto report = io::read_file(out / "report_step1.json");
    CHECK(report.find("\"test\"") != std::string::npos);

    r = churn_cli("refresh-check" + cfg, dir.path);
    CHECK(r.code == 0);
    CHECK(r.output == "re-score advised\n");

    r = churn_cli("score" + cfg, dir.path);
    REQUIRE(r.code == 0);
    auto scores = read_tsv(out / "scores.tsv");
    REQUIRE(scores.size() > 1);
    CHECK(scores[0] == std::vector<std::string>{"rank", "customer_id", "posterior"});
    for (std::size_t i = 2; i < scores.size(); ++i) {
        CHECK(std::stod(scores[i - 1][2]) >= std::stod(scores[i][2]));
    }
    r = churn_cli("refresh-check" + cfg, dir.path);
    CHECK(r.output == "ok\n");
    r = churn_cli("refresh-check --robustness 0.8 --threshold 0.9" + cfg, dir.path);
    CHECK(r.output == "retrain advised (drift)\n");

    r = churn_cli("interpret --top 100" + cfg, dir.path);
    REQUIRE(r.code == 0);
    auto rows = read_tsv(out / "interpret.tsv");
    REQUIRE(rows.size() == 101);
    CHECK(rows[0].size() == 10);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i].size() <= 10);
    }

    r = churn_cli("campaign --strategy C" + cfg, dir.path);
    REQUIRE(r.code == 0);
    auto camp = read_tsv(out / "campaign_C_company_mean_risk.tsv");
    REQUIRE(camp.size() > 1);
    std::set<std::string> accounts;
    for (std::size_t i = 1; i < camp.size(); ++i) {
        CHECK(accounts.insert(camp[i][1]).second);
    }
    // every account with a scored member appears once
    std::set<std::string> scored_ids;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        scored_ids.insert(scores[i][1]);
    }
    auto customers = read_tsv(data / "customer.tsv");
    std::set<std::string> expected_accounts;
    for (std::size_t i = 1; i < customers.size(); ++i) {
        if (scored_ids.count(customers[i][0])) {
            expected_accounts.insert(customers[i][1]);
        }
    }
    CHECK(accounts == expected_accounts);

    r = churn_cli("campaign --strategy B --size-b 50" + cfg, dir.path);
    CHECK(r.code == 0);

    r = churn_cli("backtest" + cfg, dir.path);
    REQUIRE(r.code == 0);
    auto bt = io::read_file(out / "backtest.json");
    CHECK(bt.find("\"robustness\"") != std::string::npos);
    CHECK(fs::exists(out / "lift_step3.tsv"));

    r = churn_cli("lift-plot " + (out / "lift_step1.tsv").string() + " " + (out / "lift_step3.tsv").string() +
                      " -o " + (out / "lift.svg").string(),
                  dir.path);
    CHECK(r.code == 0);
    CHECK(io::read_file(out / "lift.svg").find("<svg") != std::string::npos);

    r = churn_cli("train --min-auc 0.999 -o " + (dir.path / "strict").string() + cfg, dir.path);
    CHECK(r.code == 4);
    CHECK(fs::exists(dir.path / "strict" / "model.json"));

    // a second identical run gives byte-identical artifacts
    const fs::path again = dir.path / "again";
    r = churn_cli("train -o " + again.string() + cfg, dir.path);
    REQUIRE(r.code == 0);
    r = churn_cli("score -o " + again.string() + cfg, dir.path);
    REQUIRE(r.code == 0);
    CHECK(io::read_file(out / "model.json") == io::read_file(again / "model.json"));
    CHECK(io::read_file(out / "scores.tsv") == io::read_file(again / "scores.tsv"));

    // a model from another version is refused at deployment
    auto model = io::read_file(out / "model.json");
    auto at = model.find("churn-snb/1");
    REQUIRE(at != std::string::npos);
    model.replace(at, 11, "churn-snb/0");
    io::write_atomic(again / "model.json", model);
    r = churn_cli("score -o " + again.string() + cfg, dir.path);
    CHECK(r.code == 5);
    CHECK(r.output.find("churn-snb/0") != std::string::npos);
}
