#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "churn/actionability.hpp"
#include "churn/datagen.hpp"
#include "churn/error.hpp"
#include "churn/evaluation.hpp"

using namespace churn;

namespace {

FeatureMatrix with_ids(FeatureMatrix m) {
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        m.ids.push_back("c" + std::to_string(i));
    }
    return m;
}

// Random featured matrix plus a model trained on it with unit weights
// scaled by random factors.
struct Random {
    FeatureMatrix m;
    SNBModel model;
    explicit Random(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0, 1);
        const std::size_t n = 1500;
        std::vector<std::optional<double>> a, b;
        std::vector<std::optional<std::string>> c;
        for (std::size_t i = 0; i < n; ++i) {
            double x = std::floor(u(rng) * 8), y = std::floor(u(rng) * 6);
            const char* cats[] = {"p", "q", "r", "s"};
            std::string z = cats[static_cast<std::size_t>(u(rng) * 4)];
            double logit = -2 + 0.4 * x - 0.3 * y + (z == "p" ? 1.0 : 0.0);
            m.labels.push_back(u(rng) < 1 / (1 + std::exp(-logit)) ? 1 : 0);
            a.push_back(u(rng) < 0.05 ? std::nullopt : std::optional<double>(x));
            b.emplace_back(y);
            c.emplace_back(z);
        }
        m.columns = {{"a", ValueKind::numeric, a, {}}, {"b", ValueKind::numeric, b, {}},
                     {"c", ValueKind::categorical, {}, c}};
        m = with_ids(std::move(m));
        std::vector<std::size_t> rows(n);
        for (std::size_t i = 0; i < n; ++i) {
            rows[i] = i;
        }
        model.log_prior = fit_log_priors(m.labels, rows);
        for (const auto& col : m.columns) {
            ModelFeature f;
            f.kind = col.kind;
            f.partition = preprocess_column(col, m.labels);
            auto parts = recode(f.partition, col);
            f.log_prob = fit_log_conditionals(parts, m.labels, rows, f.partition.part_count());
            f.weight = 0.2 + 0.8 * u(rng);
            model.features.push_back(std::move(f));
        }
    }
};

double logit(double p) { return std::log(p / (1 - p)); }

}  // namespace

TEST_CASE("single feature at posterior 0.8 contributes ln 4") {
    SNBModel model;
    model.log_prior = {std::log(0.5), std::log(0.5)};
    ModelFeature f;
    f.kind = ValueKind::categorical;
    f.partition.feature = "f";
    f.partition.kind = PartitionKind::groups;
    f.partition.groups = {{"a"}, {"b"}};
    f.partition.counts = {{5, 5}, {5, 5}};
    f.partition.index_groups();
    f.log_prob = {{std::log(0.8), std::log(0.2)}, {std::log(0.2), std::log(0.8)}};
    f.weight = 1;
    model.features.push_back(f);
    FeatureMatrix m = with_ids({{}, {0}, {{"f", ValueKind::categorical, {}, {"b"}}}});
    auto rec = recode(model, m);
    auto w = why(model, rec, 0);
    REQUIRE(w.size() == 1);
    CHECK(w[0].value == doctest::Approx(std::log(4.0)).epsilon(1e-14));

    // two-part lever in closed form: moving to part a gives 0.2 / (0.2 + 0.8)
    std::vector<std::string> act{"f"};
    auto h = how(model, rec, 0, act);
    REQUIRE(h.size() == 1);
    CHECK(h[0].suggested_part == model.features[0].partition.part_label(0));
    CHECK(h[0].posterior_after == doctest::Approx(0.2).epsilon(1e-14));

    // already at the best part: no lever
    FeatureMatrix best = with_ids({{}, {0}, {{"f", ValueKind::categorical, {}, {"a"}}}});
    auto rb = recode(model, best);
    CHECK(how(model, rb, 0, act).empty());
    CHECK(how(model, rec, 0, {}).empty());

    model.features[0].weight = 0;
    model.features.push_back(f);
    model.features.back().partition.feature = "g";
    FeatureMatrix two = with_ids({{}, {0}, {{"f", ValueKind::categorical, {}, {"b"}},
                                            {"g", ValueKind::categorical, {}, {"b"}}}});
    auto r2 = recode(model, two);
    auto w2 = why(model, r2, 0);
    REQUIRE(w2.size() == 1);  // weight-0 features contribute nothing
    CHECK(w2[0].feature == "g");
}

TEST_CASE("why decomposes the posterior log-odds exactly") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        Random r(seed);
        auto rec = recode(r.model, r.m);
        auto scores = score(r.model, r.m);
        for (std::size_t row = 0; row < r.m.rows(); ++row) {
            double sum = r.model.prior_log_odds();
            auto w = why(r.model, rec, row);
            for (std::size_t i = 0; i < w.size(); ++i) {
                sum += w[i].value;
                if (i > 0) {
                    CHECK(w[i - 1].value >= w[i].value);
                }
            }
            CHECK(std::abs(sum - log_odds(r.model, rec, row)) <= 1e-12);
            CHECK(std::abs(sum - logit(scores[row].posterior)) <= 1e-9);
        }
    }
}

TEST_CASE("levers never raise the posterior and are idempotent") {
    Random r(4);
    auto rec = recode(r.model, r.m);
    std::vector<std::string> act{"a", "c"};
    std::size_t with_levers = 0;
    for (std::size_t row = 0; row < r.m.rows(); ++row) {
        const double post = posterior_from_log_odds(log_odds(r.model, rec, row));
        auto levers = how(r.model, rec, row, act, 4);
        CHECK(levers.size() <= 2);
        with_levers += levers.empty() ? 0 : 1;
        for (const auto& lever : levers) {
            CHECK(lever.feature != "b");
            CHECK(lever.posterior_after < post);
            CHECK(lever.posterior_after >= 0);
            // apply the lever and ask again: that feature is now optimal
            RecodedMatrix applied = rec;
            std::size_t f = 0;
            while (r.model.features[f].name() != lever.feature) {
                ++f;
            }
            const auto& part = r.model.features[f].partition;
            for (std::size_t p = 0; p < part.part_count(); ++p) {
                if (part.part_label(p) == lever.suggested_part) {
                    applied.parts[f][row] = static_cast<std::uint32_t>(p);
                }
            }
            CHECK(posterior_from_log_odds(log_odds(r.model, applied, row)) ==
                  doctest::Approx(lever.posterior_after).epsilon(1e-12));
            for (const auto& again : how(r.model, applied, row, act, 4)) {
                CHECK(again.feature != lever.feature);
            }
        }
    }
    CHECK(with_levers > 0);
    // R bounds the candidate count
    for (std::size_t row = 0; row < 50; ++row) {
        CHECK(how(r.model, rec, row, act, 1).size() <= 1);
    }
}

TEST_CASE("interpret ranks rows and writes the table shape") {
    Random r(5);
    std::vector<std::string> act{"a", "b", "c"};
    auto rows = interpret(r.model, r.m, act, 10);
    REQUIRE(rows.size() == 10);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i - 1].posterior >= rows[i].posterior);
    }
    std::ostringstream out;
    write_interpretations(rows, out);
    const std::string text = out.str();
    CHECK(text.substr(0, text.find('\n')) == "id\tscore\twhy_1\twhy_2\twhy_3\twhy_4\thow_1\thow_2\thow_3\thow_4");
    CHECK(std::count(text.begin(), text.end(), '\n') == 11);
}

TEST_CASE("campaign strategies and tie rules") {
    std::map<std::string, std::string> roster{{"u1", "X"}, {"u2", "X"}, {"u3", "X"}, {"u4", "Y"}, {"u5", "Z"}};
    ScoreVector s{{"u1", 0.9}, {"u2", 0.8}, {"u3", 0.7}, {"u4", 0.95}, {"u5", 0.1}};
    std::map<std::string, double> revenue{{"X", 100}, {"Y", 900}, {"Z", 5}};

    auto a = campaign(s, roster, revenue, Strategy::top_users_by_company_frequency, 4);
    REQUIRE(a.rows.size() == 2);
    CHECK(a.rows[0].account_id == "X");
    CHECK(a.rows[0].statistic == 3);
    CHECK(a.rows[0].members == std::vector<std::string>{"u1", "u2", "u3"});

    auto b = campaign(s, roster, revenue, Strategy::top_users_by_company_revenue, 2);
    REQUIRE(b.rows.size() == 2);
    CHECK(b.rows[0].account_id == "Y");
    CHECK(b.rows[1].account_id == "X");
    CHECK_THROWS_AS(campaign(s, roster, {}, Strategy::top_users_by_company_revenue, 2), Error);

    auto c = campaign(s, roster, revenue, Strategy::company_mean_risk, 1);
    REQUIRE(c.rows.size() == 3);  // every account
    CHECK(c.rows[0].account_id == "Y");
    CHECK(c.rows[1].statistic == doctest::Approx(0.8));

    ScoreVector flat{{"u1", 0.3}, {"u4", 0.3}, {"u5", 0.3}};
    auto tied = campaign(flat, roster, revenue, Strategy::company_mean_risk, 0);
    REQUIRE(tied.rows.size() == 3);
    CHECK(tied.rows[0].account_id == "X");
    CHECK(tied.rows[1].account_id == "Y");
    CHECK(tied.rows[2].account_id == "Z");

    ScoreVector stranger{{"nobody", 0.5}};
    CHECK_THROWS_AS(campaign(stranger, roster, revenue, Strategy::company_mean_risk, 1), Error);
    CHECK(parse_strategy("B") == Strategy::top_users_by_company_revenue);
    CHECK(parse_strategy("C_company_mean_risk") == Strategy::company_mean_risk);
    CHECK_THROWS_AS(parse_strategy("D"), Error);
}

TEST_CASE("campaigns are invariant to input order") {
    std::mt19937 rng(6);
    std::map<std::string, std::string> roster;
    std::map<std::string, double> revenue;
    ScoreVector s;
    for (int i = 0; i < 200; ++i) {
        std::string id = "u" + std::to_string(i), acc = "acc" + std::to_string(rng() % 30);
        roster[id] = acc;
        revenue[acc] = static_cast<double>(rng() % 5);  // many revenue ties
        s.push_back({id, static_cast<double>(rng() % 10) / 10});  // many score ties
    }
    for (Strategy st : {Strategy::top_users_by_company_frequency, Strategy::top_users_by_company_revenue,
                        Strategy::company_mean_risk}) {
        std::ostringstream ref;
        write_campaign(campaign(s, roster, revenue, st, 40), ref);
        for (int k = 0; k < 5; ++k) {
            ScoreVector shuffled = s;
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            std::ostringstream out;
            write_campaign(campaign(shuffled, roster, revenue, st, 40), out);
            CHECK(out.str() == ref.str());
        }
        // each customer appears under exactly one account
        auto list = campaign(s, roster, revenue, st, 40);
        std::set<std::string> seen;
        for (const auto& row : list.rows) {
            for (const auto& m : row.members) {
                CHECK(seen.insert(m).second);
                CHECK(roster.at(m) == row.account_id);
            }
        }
    }
}

TEST_CASE("planted driver lever lowers the posterior for the top decile") {
    GeneratorConfig g;
    g.n_customers = 5000;
    g.seed = 2;
    g.drivers = {{"inactive_last_month", 2.0}};  // the single planted driver
    auto data = generate(g);
    ExperimentConfig cfg;
    cfg.specs = parse_expert_file(expert_formulas(), data.dataset.schema());
    auto step1 = train_step1(data.dataset, WindowPlan{g.default_anchor(), 2, 0, 2}, cfg);
    const ModelFeature* driver = step1.model.find(driver_column());
    REQUIRE(driver != nullptr);
    REQUIRE(driver->weight > 0);
    auto deployed = deploy(data.dataset, step1.model, WindowPlan{g.default_anchor(), 2, 0, 2}, cfg.rules);
    // interpret over the same deployable population, top decile
    std::vector<std::string> act{driver_column()};
    auto matrix = materialize(data.dataset, WindowPlan{g.default_anchor(), 2, 0, 2}, deployed.instances,
                              plan_from_names(data.dataset.schema(), step1.model.required_columns()));
    auto rows = interpret(step1.model, matrix, act, matrix.rows() / 10);
    std::size_t reduced = 0;
    for (const auto& row : rows) {
        if (!row.how.empty() && row.how[0].feature == driver_column() && row.how[0].posterior_after < row.posterior) {
            ++reduced;
        }
    }
    MESSAGE("driver lever reduces posterior for " << reduced << " of " << rows.size());
    CHECK(static_cast<double>(reduced) >= 0.9 * static_cast<double>(rows.size()));
}
