#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "churn/error.hpp"
#include "churn/featuregen.hpp"
#include "churn/preprocess.hpp"
#include "oracles.hpp"

using namespace churn;

namespace {

using Values = std::vector<std::optional<double>>;
using Labels = std::vector<int>;

std::vector<ClassCounts> as_counts(const std::vector<oracle::Counts>& c) { return {c.begin(), c.end()}; }

}  // namespace

TEST_CASE("cost formula agrees with the oracle") {
    std::mt19937 rng(1);
    for (int trial = 0; trial < 300; ++trial) {
        std::size_t parts = 1 + rng() % 6;
        std::vector<oracle::Counts> c(parts, oracle::Counts(2, 0));
        std::size_t total = 0;
        for (auto& p : c) {
            p[0] = rng() % 40;
            p[1] = rng() % 40;
            total += p[0] + p[1];
        }
        if (total == 0) {
            continue;
        }
        auto counts = as_counts(c);
        CHECK(partition_cost(counts) == doctest::Approx(oracle::mdl_cost(c)).epsilon(1e-12));
    }
    // worked value: one part of (3, 1): ln 4 + 0 + ln C(5,1) + ln(4!/(3!1!))
    CHECK(null_partition_cost({3, 1}) == doctest::Approx(std::log(4.0) + std::log(5.0) + std::log(4.0)));
}

TEST_CASE("level is zero for the null partition and clamped") {
    CHECK(level_of(10, 10) == 0);
    CHECK(level_of(12, 10) == 0);
    CHECK(level_of(5, 10) == doctest::Approx(0.5));
}

TEST_CASE("identical labels give a single interval") {
    Values v{1, 2, 3, 4, 5};
    Labels l{1, 1, 1, 1, 1};
    auto same = discretize("x", v, l);
    CHECK(same.part_count() == 1);
    CHECK(same.level == 0);
    Values v2{1, 2, 3, 4, 5, 6};
    Labels l2{0, 1, 0, 1, 0, 1};
    auto p = discretize("x", v2, l2);
    CHECK(p.part_count() == 1);
    CHECK(p.level == 0);
}

TEST_CASE("a clean threshold is found between 5 and 6") {
    Values v;
    Labels l;
    for (int x = 1; x <= 10; ++x) {
        for (int r = 0; r < 10; ++r) {
            v.emplace_back(x);
            l.push_back(x >= 6 ? 1 : 0);
        }
    }
    auto p = discretize("x", v, l);
    REQUIRE(p.part_count() == 2);
    CHECK(p.bounds[0] > 5);
    CHECK(p.bounds[0] <= 6);
    CHECK(p.level > 0);
    CHECK(p.cost == doctest::Approx(oracle::best_interval_cost(v, l)).epsilon(1e-12));
    CHECK(p.apply(std::optional<double>(4.9)) == 0);
    CHECK(p.apply(std::optional<double>(6.0)) == 1);
    CHECK(p.apply(std::optional<double>(-1e9)) == 0);
    CHECK(p.apply(std::optional<double>(1e9)) == 1);
}

TEST_CASE("interval convention: a value equal to a bound goes to the next part") {
    UnivariatePartition p;
    p.kind = PartitionKind::intervals;
    p.bounds = {5.0, std::numeric_limits<double>::infinity()};
    p.counts = {{1, 1}, {1, 1}};
    CHECK(p.apply(std::optional<double>(4.9)) == 0);
    CHECK(p.apply(std::optional<double>(5.0)) == 1);
    p.missing_part = 2;
    p.counts.push_back({1, 0});
    CHECK(p.apply(std::optional<double>()) == 2);
    CHECK(p.apply(std::optional<double>(std::numeric_limits<double>::quiet_NaN())) == 2);
}

TEST_CASE("pure noise rarely splits and has median level 0") {
    int single = 0;
    std::vector<double> levels;
    for (int seed = 0; seed < 100; ++seed) {
        std::mt19937 rng(static_cast<unsigned>(seed));
        Values v;
        Labels l;
        for (int i = 0; i < 200; ++i) {
            v.emplace_back(static_cast<double>(rng() % 1000));
            l.push_back(static_cast<int>(rng() % 2));
        }
        auto p = discretize("noise", v, l);
        single += p.part_count() == 1 ? 1 : 0;
        levels.push_back(p.level);
    }
    CHECK(single >= 95);
    std::nth_element(levels.begin(), levels.begin() + 50, levels.end());
    CHECK(levels[50] == 0);
}

TEST_CASE("level grows with n for a separating partition") {
    auto level_at = [](int n) {
        Values v;
        Labels l;
        for (int i = 0; i < n; ++i) {
            v.emplace_back(i);
            l.push_back(i < n / 2 ? 0 : 1);
        }
        return discretize("x", v, l).level;
    };
    double l100 = level_at(100), l1000 = level_at(1000);
    CHECK(l100 > 0);
    CHECK(l1000 > l100);
    // cost-formula oracle for the same two-part partition
    auto oracle_level = [](std::size_t n) {
        double part = oracle::mdl_cost({{n / 2, 0}, {0, n / 2}});
        double null = oracle::mdl_cost({{n / 2, n / 2}});
        return 1 - part / null;
    };
    CHECK(l100 == doctest::Approx(oracle_level(100)).epsilon(1e-12));
    CHECK(l1000 == doctest::Approx(oracle_level(1000)).epsilon(1e-12));
}

TEST_CASE("monotone transforms and input order leave the partition unchanged") {
    std::mt19937 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        Values v, t;
        Labels l;
        for (int i = 0; i < 120; ++i) {
            double x = static_cast<double>(rng() % 30);
            v.emplace_back(x);
            t.emplace_back(std::exp(x / 5) - 3);
            l.push_back((x > 12 ? 0.8 : 0.2) > (rng() % 1000) / 1000.0 ? 1 : 0);
        }
        auto a = discretize("x", v, l);
        auto b = discretize("x", t, l);
        CHECK(a.counts == b.counts);
        CHECK(a.level == b.level);
        std::vector<std::size_t> perm(v.size());
        for (std::size_t i = 0; i < perm.size(); ++i) {
            perm[i] = i;
        }
        std::shuffle(perm.begin(), perm.end(), rng);
        Values pv;
        Labels pl;
        for (auto i : perm) {
            pv.push_back(v[i]);
            pl.push_back(l[i]);
        }
        auto c = discretize("x", pv, pl);
        CHECK(c.counts == a.counts);
        CHECK(c.bounds == a.bounds);
    }
}

TEST_CASE("discretization with Missing matches brute force and keeps Missing apart") {
    std::mt19937 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        Values v;
        Labels l;
        std::size_t n = 10 + rng() % 50;
        for (std::size_t i = 0; i < n; ++i) {
            if (rng() % 6 == 0) {
                v.emplace_back();
                l.push_back(rng() % 4 == 0 ? 0 : 1);
            } else {
                int x = static_cast<int>(rng() % 8);
                v.emplace_back(x);
                l.push_back(static_cast<int>(rng() % 10) < x ? 1 : 0);
            }
        }
        if (std::count(l.begin(), l.end(), 1) == 0 || std::count(l.begin(), l.end(), 0) == 0) {
            continue;
        }
        auto p = discretize("x", v, l);
        CHECK(p.cost == doctest::Approx(oracle::best_interval_cost(v, l)).epsilon(1e-11));
        CHECK(p.total() == n);
        if (p.part_count() > 1 && std::any_of(v.begin(), v.end(), [](auto& x) { return !x; })) {
            REQUIRE(p.missing_part);
            CHECK(*p.missing_part == p.part_count() - 1);
        }
        for (std::size_t i = 1; i + 1 < p.bounds.size(); ++i) {
            CHECK(p.bounds[i - 1] < p.bounds[i]);
        }
    }
}

TEST_CASE("grouping merges identical distributions") {
    std::vector<std::optional<std::string>> v;
    Labels l;
    for (int i = 0; i < 40; ++i) {
        v.emplace_back(i % 2 ? "A" : "B");
        l.push_back((i / 2) % 2);
    }
    auto p = group("g", v, l);
    CHECK(p.part_count() == 1);
    CHECK(p.level == 0);
}

TEST_CASE("two pure-churn values group against a pure-stay value") {
    std::vector<std::optional<std::string>> v;
    Labels l;
    for (const char* name : {"A", "B", "C"}) {
        for (int i = 0; i < 30; ++i) {
            v.emplace_back(name);
            l.push_back(std::string(name) == "C" ? 0 : 1);
        }
    }
    auto p = group("g", v, l);
    REQUIRE(p.part_count() == 2);
    CHECK(p.groups[0] == std::vector<std::string>{"A", "B"});
    CHECK(p.groups[1] == std::vector<std::string>{"C"});
    CHECK(p.cost == doctest::Approx(oracle::best_group_cost(v, l)).epsilon(1e-12));
    CHECK(p.apply(std::optional<std::string_view>("A")) == p.apply(std::optional<std::string_view>("B")));
    CHECK(p.apply(std::optional<std::string_view>("unseen")) == p.garbage_group);
    CHECK(p.part_label(0).find('A') != std::string::npos);
}

TEST_CASE("grouping above the exhaustive limit stays within the greedy bound") {
    std::mt19937 rng(8);
    std::vector<std::optional<std::string>> v;
    Labels l;
    for (int i = 0; i < 600; ++i) {
        int k = static_cast<int>(rng() % 12);
        v.emplace_back("v" + std::to_string(k));
        l.push_back(static_cast<int>(rng() % 12) < k ? 1 : 0);
    }
    auto p = group("g", v, l);
    CHECK(p.total() == 600);
    CHECK(p.part_count() >= 2);
    CHECK(p.cost < p.null_cost);
    CHECK(p.level > 0);
    CHECK(p.level <= 1);
}

TEST_CASE("preprocess_column dispatches on kind and recode is total") {
    FeatureColumn num{"n", ValueKind::numeric, {1.0, 2.0, std::nullopt, 4.0, 5.0, 6.0}, {}};
    Labels l{0, 0, 1, 0, 1, 1};
    auto p = preprocess_column(num, l);
    CHECK(p.kind == PartitionKind::intervals);
    auto parts = recode(p, num);
    CHECK(parts.size() == 6);
    for (auto part : parts) {
        CHECK(part < p.part_count());
    }
    FeatureColumn cat{"c", ValueKind::categorical, {}, {"a", "b", std::nullopt, "a", "b", "b"}};
    auto q = preprocess_column(cat, l);
    CHECK(q.kind == PartitionKind::groups);
    for (auto part : recode(q, cat)) {
        CHECK(part < q.part_count());
    }
    Values empty;
    Labels none;
    CHECK_THROWS_AS(discretize("e", empty, none), Error);
}
