#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "churn/error.hpp"
#include "churn/featuregen.hpp"
#include "support.hpp"

using namespace churn;

namespace {

const std::string kRoot =
    "id\taccount_id\tsegment\tactivation_date\tbad_debt\n"
    "c1\ta1\tSoHo\t2012-01-15\tfalse\n"
    "c2\ta1\tSME\t2014-02-01\ttrue\n"
    "c3\ta2\t\t\t\n";
const std::string kPresence = "id\tmonth\n" + testing::presence_rows("c1", 1, 6) + testing::presence_rows("c2", 1, 6) +
                              testing::presence_rows("c3", 1, 6);
// c1: five rows inside 2014-03..2014-04 and three outside; c3: one row.
const std::string kUsageInside =
    "c1\t2014-03-03\tvoice\t1\n"
    "c1\t2014-03-04\tvoice\t2\n"
    "c1\t2014-04-07\tsms\t3\n"
    "c1\t2014-04-10\tvoice\t4\n"
    "c1\t2014-04-30\tdata\t10\n"
    "c3\t2014-03-15\tsms\t5\n";
const std::string kUsageOutside =
    "c1\t2014-02-28\tvoice\t100\n"
    "c1\t2014-05-01\tvoice\t100\n"
    "c1\t2014-01-06\tdata\t100\n";
const std::string kUsageHeader = "id\tdate\tservice\tcharge\n";

Dataset make(const std::string& usage_rows) {
    return testing::make_dataset(testing::kSmallDescriptor,
                                 {{"customer", kRoot}, {"presence", kPresence}, {"usage", kUsageHeader + usage_rows}});
}

const WindowPlan kPlan{Month(2014, 4), 2, 0, 2};

std::vector<LabeledInstance> instances(const Dataset& ds) {
    std::vector<LabeledInstance> out;
    for (std::size_t r = 0; r < ds.customer_count(); ++r) {
        out.push_back({ds.customer_id(r), r, -1});
    }
    return out;
}

FeatureMatrix build(const Dataset& ds, const std::vector<std::string>& formulas) {
    std::vector<FeatureSpec> specs;
    for (const auto& f : formulas) {
        specs.push_back(parse_expert(f, ds.schema()));
    }
    return materialize(ds, kPlan, instances(ds), resolve_columns(ds, kPlan, specs));
}

const FeatureColumn& col(const FeatureMatrix& m, const std::string& name) {
    auto i = m.column_index(name);
    REQUIRE_MESSAGE(i, name);
    return m.columns[*i];
}

}  // namespace

TEST_CASE("native specs skip identifiers and recode dates") {
    auto ds = make(kUsageInside);
    auto specs = native_features(ds.schema());
    REQUIRE(specs.size() == 3);  // segment, activation_date, bad_debt
    CHECK(specs[0].name == "segment");
    CHECK(specs[0].kind == ValueKind::categorical);
    CHECK(specs[1].name == "activation_date");
    CHECK(specs[1].kind == ValueKind::numeric);
    CHECK(specs[2].kind == ValueKind::categorical);
    std::vector<std::string> excl{"bad_debt"};
    CHECK(native_features(ds.schema(), excl).size() == 2);

    auto m = materialize(ds, kPlan, instances(ds), resolve_columns(ds, kPlan, specs));
    CHECK(*col(m, "activation_date").numbers[0] == 27);  // 2012-01 to 2014-04
    CHECK(*col(m, "activation_date").numbers[1] == 2);
    CHECK_FALSE(col(m, "activation_date").numbers[2]);
    CHECK(*col(m, "bad_debt").labels[0] == "false");
    CHECK(*col(m, "bad_debt").labels[1] == "true");
    CHECK_FALSE(col(m, "bad_debt").labels[2]);

    auto key_only = load_schema(R"({"tables": [{"name": "c", "role": "root", "key": "id",
        "fields": [{"name": "id", "kind": "identifier"}]}]})");
    CHECK(native_features(key_only).empty());
}

TEST_CASE("expert formulas parse, validate and print canonically") {
    auto ds = make(kUsageInside);
    auto s = parse_expert("sum(USAGE, Charge)", ds.schema());
    REQUIRE(s.formula);
    CHECK(s.formula->aggregator == Aggregator::sum);
    CHECK(s.name == "Sum(usage, charge)");
    CHECK(s.kind == ValueKind::numeric);
    CHECK(to_text(*s.formula) == "Sum(usage, charge)");

    auto grid = parse_expert("Count(Usage by WeekDay(Date), Label(service))", ds.schema());
    CHECK(grid.formula->partition.size() == 2);
    auto plan = resolve_columns(ds, kPlan, {grid});
    CHECK(plan.columns.size() == 7 * 3);  // voice, sms, data

    CHECK(parse_expert("Mode(usage, service)", ds.schema()).kind == ValueKind::categorical);
    auto where = parse_expert("Count(usage where service = \"voice\")", ds.schema());
    REQUIRE(where.formula->selector);
    CHECK(where.formula->selector->value == "voice");
    CHECK(parse_expert(where.name, ds.schema()).name == where.name);

    for (const char* bad : {"Sum(usage, service)", "Foo(usage)", "Count(nope)", "Sum(usage, nope)",
                            "Count(usage by WeekDay(service))", "Count(usage where charge = 1)", "Mean(usage)",
                            "Count(usage", "Count(usage) extra"}) {
        CHECK_THROWS_AS(parse_expert(bad, ds.schema()), Error);
    }
    auto file = parse_expert_file("# comment\nCount(usage)\n\n  Max(usage, charge) # trailing\n", ds.schema());
    CHECK(file.size() == 2);
}

TEST_CASE("aggregates read only in-window rows") {
    auto ds = make(kUsageInside + kUsageOutside);
    auto m = build(ds, {"Count(usage)", "Sum(usage, charge)", "Mean(usage, charge)", "Min(usage, charge)",
                        "Max(usage, charge)", "CountDistinct(usage, service)", "Mode(usage, service)",
                        "Count(usage where service = voice)", "Count(usage by WeekDay(date))"});
    CHECK(*col(m, "Count(usage)").numbers[0] == 5);
    CHECK(*col(m, "Sum(usage, charge)").numbers[0] == 20);
    CHECK(*col(m, "Mean(usage, charge)").numbers[0] == 4);
    CHECK(*col(m, "Min(usage, charge)").numbers[0] == 1);
    CHECK(*col(m, "Max(usage, charge)").numbers[0] == 10);
    CHECK(*col(m, "CountDistinct(usage, service)").numbers[0] == 3);
    CHECK(*col(m, "Mode(usage, service)").labels[0] == "voice");
    CHECK(*col(m, "Count(usage where service=voice)").numbers[0] == 3);
    // 2014-03-03 and 2014-04-07 are Mondays
    CHECK(*col(m, "Count(usage by WeekDay(date)=Mon)").numbers[0] == 2);
    CHECK(*col(m, "Count(usage by WeekDay(date)=Tue)").numbers[0] == 1);

    // c2 has no rows: counts and sums are 0, the rest Missing
    CHECK(*col(m, "Count(usage)").numbers[1] == 0);
    CHECK(*col(m, "Sum(usage, charge)").numbers[1] == 0);
    CHECK(*col(m, "CountDistinct(usage, service)").numbers[1] == 0);
    CHECK_FALSE(col(m, "Mean(usage, charge)").numbers[1]);
    CHECK_FALSE(col(m, "Min(usage, charge)").numbers[1]);
    CHECK_FALSE(col(m, "Mode(usage, service)").labels[1]);
}

TEST_CASE("window locality and additivity") {
    const std::vector<std::string> formulas{"Count(usage)", "Sum(usage, charge)", "Mean(usage, charge)",
                                            "Count(usage by Label(service))", "Max(usage, charge)"};
    auto inside = build(make(kUsageInside), formulas);
    auto both = build(make(kUsageOutside + kUsageInside), formulas);
    std::ostringstream a, b;
    write_matrix(inside, a);
    write_matrix(both, b);
    CHECK(a.str() == b.str());

    // concatenating two halves in either order yields the same matrix
    std::string first = kUsageInside.substr(0, kUsageInside.find("c1\t2014-04-10"));
    std::string second = kUsageInside.substr(first.size());
    auto swapped = build(make(second + first), formulas);
    std::ostringstream c;
    write_matrix(swapped, c);
    CHECK(a.str() == c.str());
}

TEST_CASE("Label buckets keep the top values plus an other bucket") {
    std::string usage;
    // 25 services; svc_k occurs k+1 times for customer c1 inside the window
    for (int k = 0; k < 25; ++k) {
        for (int r = 0; r <= k; ++r) {
            usage += "c1\t2014-03-10\tsvc_" + std::string(k < 10 ? "0" : "") + std::to_string(k) + "\t1\n";
        }
    }
    auto ds = make(usage);
    auto spec = parse_expert("Count(usage by Label(service))", ds.schema());
    auto plan = resolve_columns(ds, kPlan, {spec});
    REQUIRE(plan.columns.size() == kMaxLabelBuckets + 1);
    auto m = materialize(ds, kPlan, instances(ds), plan);
    CHECK(*col(m, "Count(usage by Label(service)=svc_24)").numbers[0] == 25);
    CHECK(!m.column_index("Count(usage by Label(service)=svc_04)"));
    // svc_00..svc_04 fall into "*": 1+2+3+4+5
    CHECK(*col(m, "Count(usage by Label(service)=*)").numbers[0] == 15);

    std::vector<std::string> names;
    for (const auto& c : plan.columns) {
        names.push_back(c.name);
    }
    auto rebuilt = plan_from_names(ds.schema(), names);
    auto again = materialize(ds, kPlan, instances(ds), rebuilt);
    std::ostringstream x, y;
    write_matrix(m, x);
    write_matrix(again, y);
    CHECK(x.str() == y.str());
    std::vector<std::string> unknown{"Count(nope)"};
    CHECK_THROWS_AS(plan_from_names(ds.schema(), unknown), Error);
}

TEST_CASE("automatic construction is seeded, distinct and budgeted") {
    auto ds = make(kUsageInside);
    AutoOptions opts;
    opts.skip_tables = {"presence"};
    auto ten = auto_construct(ds, 10, 3, opts);
    CHECK(ten.size() == 10);
    std::set<std::string> names;
    for (const auto& s : ten) {
        CHECK(names.insert(s.name).second);
        REQUIRE(s.formula);
        CHECK(s.formula->table == "usage");
        CHECK(s.origin == Origin::automatic);
        CHECK(s.formula->partition.size() <= 2);
    }
    auto again = auto_construct(ds, 10, 3, opts);
    for (std::size_t i = 0; i < ten.size(); ++i) {
        CHECK(again[i].name == ten[i].name);
    }
    auto other = auto_construct(ds, 10, 4, opts);
    bool differs = false;
    for (std::size_t i = 0; i < ten.size(); ++i) {
        differs = differs || other[i].name != ten[i].name;
    }
    CHECK(differs);

    const std::size_t space = rule_space_size(ds, opts);
    auto all = auto_construct(ds, space + 50, 3, opts);
    CHECK(all.size() == space);
    std::set<std::string> all_names;
    for (const auto& s : all) {
        all_names.insert(s.name);
        CHECK_NOTHROW(parse_expert(s.name, ds.schema()));
    }
    CHECK(all_names.size() == space);
    CHECK_THROWS_AS(auto_construct(ds, 0, 3, opts), Error);
}

TEST_CASE("sampler favours shallow formulas") {
    auto ds = make(kUsageInside);
    AutoOptions opts;
    opts.skip_tables = {"presence"};
    const std::size_t space = rule_space_size(ds, opts);
    auto all = auto_construct(ds, space, 1, opts);
    std::vector<std::size_t> available(8, 0);
    for (const auto& s : all) {
        ++available[static_cast<std::size_t>(s.formula->depth())];
    }
    // Over many seeds, the share of depth-1 picks among small samples must
    // exceed its share of the rule space.
    std::size_t shallow = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        for (const auto& s : auto_construct(ds, 5, seed, opts)) {
            shallow += s.formula->depth() == 1 ? 1 : 0;
            ++total;
        }
    }
    const double space_share = static_cast<double>(available[1]) / static_cast<double>(space);
    CHECK(static_cast<double>(shallow) / static_cast<double>(total) > space_share);
}

TEST_CASE("lagged expansion adds per-month variants") {
    auto ds = make(kUsageInside + kUsageOutside);
    auto base = parse_expert("Count(usage)", ds.schema());
    auto specs = expand_lagged({base}, ds.schema());
    REQUIRE(specs.size() == 2);
    auto plan = resolve_columns(ds, kPlan, specs);
    auto m = materialize(ds, kPlan, instances(ds), plan);
    CHECK(m.columns.size() == 3);
    CHECK(*col(m, "Count(usage by Month(date)=lag0)").numbers[0] == 3);  // April
    CHECK(*col(m, "Count(usage by Month(date)=lag1)").numbers[0] == 2);  // March
}

TEST_CASE("all-zero features are kept") {
    auto ds = make(kUsageInside);
    auto m = build(ds, {"Count(usage where service = fax)"});
    CHECK(m.columns.size() == 0 + 1);
    for (auto v : m.columns[0].numbers) {
        CHECK(*v == 0);
    }
}
