#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "churn/error.hpp"
#include "churn/io.hpp"
#include "churn/schema.hpp"
#include "support.hpp"

using namespace churn;

namespace {

std::string error_message(const std::string& descriptor) {
    try {
        load_schema(descriptor);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::configuration);
        return e.what();
    }
    return "";
}

const char* kMinimal = R"({"tables": [
  {"name": "customer", "role": "root", "key": "id", "fields": [{"name": "id", "kind": "identifier"}]},
  {"name": "usage", "role": "secondary", "foreign_key": "id",
   "fields": [{"name": "id", "kind": "identifier"}, {"name": "charge", "kind": "numeric"}]}]})";

}  // namespace

TEST_CASE("minimal descriptor has one root and one secondary") {
    auto s = load_schema(kMinimal);
    CHECK(s.root.name == "customer");
    CHECK(s.root.key_field == "id");
    REQUIRE(s.secondaries.size() == 1);
    CHECK(s.secondaries[0].foreign_key == "id");
    CHECK(s.delimiter == '\t');
}

TEST_CASE("descriptor with the six telecom classes") {
    const char* d = R"({"tables": [
      {"name": "active_mobile", "role": "root", "key": "msisdn",
       "fields": [{"name": "msisdn", "kind": "identifier"}, {"name": "segment", "kind": "categorical"},
                  {"name": "section", "kind": "categorical"}, {"name": "activation_type", "kind": "categorical"}]},
      {"name": "trouble_tickets", "role": "secondary", "foreign_key": "msisdn", "date_field": "date",
       "fields": [{"name": "msisdn", "kind": "identifier"}, {"name": "ticket_id", "kind": "identifier"},
                  {"name": "section", "kind": "categorical"}, {"name": "date", "kind": "date"}]},
      {"name": "usage", "role": "secondary", "foreign_key": "msisdn", "date_field": "date",
       "fields": [{"name": "msisdn", "kind": "identifier"}, {"name": "destination", "kind": "categorical"},
                  {"name": "service", "kind": "categorical"}, {"name": "charge", "kind": "numeric"},
                  {"name": "date", "kind": "date"}]},
      {"name": "yearly_revenue", "role": "secondary", "foreign_key": "msisdn",
       "fields": [{"name": "msisdn", "kind": "identifier"}, {"name": "amount", "kind": "numeric"}]},
      {"name": "mobile_characteristics", "role": "secondary", "foreign_key": "msisdn",
       "fields": [{"name": "msisdn", "kind": "identifier"}, {"name": "brand", "kind": "categorical"}]},
      {"name": "total_bill", "role": "secondary", "foreign_key": "msisdn", "date_field": "month",
       "fields": [{"name": "msisdn", "kind": "identifier"}, {"name": "month", "kind": "date"},
                  {"name": "total", "kind": "numeric"}]}]})";
    auto s = load_schema(d);
    CHECK(s.secondaries.size() == 5);
    CHECK(s.find_secondary("usage") != nullptr);
    CHECK(s.find_secondary("nope") == nullptr);
}

TEST_CASE("descriptor invariants are enforced") {
    CHECK(error_message(R"({"tables": [
      {"name": "a", "role": "root", "key": "id", "fields": [{"name": "id", "kind": "identifier"}]},
      {"name": "b", "role": "root", "key": "id", "fields": [{"name": "id", "kind": "identifier"}]}]})")
              .find("multiple root tables") != std::string::npos);
    CHECK(error_message(R"({"tables": [
      {"name": "a", "role": "root", "key": "id", "fields": [{"name": "id", "kind": "identifier"}]},
      {"name": "a", "role": "secondary", "foreign_key": "id", "fields": [{"name": "id", "kind": "identifier"}]}]})")
              .find("duplicate table name 'a'") != std::string::npos);
    CHECK(error_message(R"({"tables": [
      {"name": "a", "role": "root", "key": "id",
       "fields": [{"name": "id", "kind": "identifier"}, {"name": "id", "kind": "numeric"}]}]})")
              .find("duplicate field name 'id'") != std::string::npos);
    CHECK(error_message(R"({"tables": [
      {"name": "a", "role": "root", "key": "id", "fields": [{"name": "id", "kind": "identifier"}]},
      {"name": "u", "role": "secondary", "fields": [{"name": "id", "kind": "identifier"}]}]})")
              .find("missing foreign_key") != std::string::npos);
    CHECK(error_message(R"({"tables": [
      {"name": "a", "role": "root", "key": "id",
       "fields": [{"name": "id", "kind": "identifier"}, {"name": "x", "kind": "complex"}]}]})")
              .find("unknown kind 'complex'") != std::string::npos);
    CHECK(error_message(R"({"tables": [
      {"name": "u", "role": "secondary", "foreign_key": "id", "fields": [{"name": "id", "kind": "identifier"}]}]})")
              .find("no root table") != std::string::npos);
    CHECK(error_message("not json").find("not valid JSON") != std::string::npos);
}

TEST_CASE("descriptor round-trips through to_descriptor") {
    auto s = load_schema(testing::kSmallDescriptor);
    auto again = load_schema(to_descriptor(s));
    CHECK(to_descriptor(again) == to_descriptor(s));
    CHECK(again.secondaries.size() == 2);
}

TEST_CASE("load_table coerces bad cells to Missing and counts them") {
    auto s = load_schema(kMinimal);
    std::istringstream in("charge\tid\n1.5\tc1\nabc\tc1\n\tc2\n");
    LoadReport report;
    auto t = load_table(s.secondaries[0], in, '\t', &report);
    CHECK(t.row_count() == 3);
    CHECK(report.coerced_cells == 1);
    CHECK(t.column("charge").number(0) == 1.5);
    CHECK(t.column("charge").is_missing(1));
    CHECK(t.column("charge").is_missing(2));
    CHECK(std::holds_alternative<Missing>(t.cell(2, 1)));
}

TEST_CASE("three-row root file loads three rows") {
    auto s = load_schema(kMinimal);
    std::istringstream in("id\nc1\nc2\nc3\n");
    CHECK(load_table(s.root, in).row_count() == 3);
}

TEST_CASE("missing header column is a data error") {
    auto s = load_schema(kMinimal);
    std::istringstream in("id\nc1\n");
    CHECK_THROWS_AS(load_table(s.secondaries[0], in), Error);
}

TEST_CASE("duplicate root keys are rejected") {
    try {
        testing::make_dataset(kMinimal, {{"customer", "id\nc1\nc1\n"}, {"usage", "id\tcharge\n"}});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("root key not unique") != std::string::npos);
        CHECK(e.kind() == ErrorKind::data);
    }
}

TEST_CASE("append_row enforces arity and kinds") {
    auto s = load_schema(kMinimal);
    TableData t(s.secondaries[0]);
    std::vector<Cell> ok{std::string("c1"), 2.0};
    t.append_row(ok);
    std::vector<Cell> missing{std::string("c1"), Missing{}};
    t.append_row(missing);
    CHECK(t.row_count() == 2);
    std::vector<Cell> short_row{std::string("c1")};
    CHECK_THROWS_AS(t.append_row(short_row), Error);
    std::vector<Cell> wrong{std::string("c1"), std::string("x")};
    CHECK_THROWS_AS(t.append_row(wrong), Error);
}

TEST_CASE("rows_for indexes the 1-N relation and counts orphans") {
    auto ds = testing::make_dataset(kMinimal, {{"customer", "id\nc1\nc2\n"},
                                               {"usage", "id\tcharge\nc1\t1\nc2\t2\nc1\t3\nzz\t4\n"}});
    auto rows = ds.rows_for(0, *ds.root_row("c1"));
    REQUIRE(rows.size() == 2);
    CHECK(ds.secondary(0).column("charge").number(rows[0]) == 1);
    CHECK(ds.secondary(0).column("charge").number(rows[1]) == 3);
    CHECK(ds.orphan_count(0) == 1);
    CHECK(ds.secondary(0).row_count() == 4);  // orphans retained
    CHECK_FALSE(ds.root_row("zz"));
}

TEST_CASE("serialized tables reload cell-identical") {
    auto ds = testing::make_dataset(
        testing::kSmallDescriptor,
        {{"customer", "id\taccount_id\tsegment\tactivation_date\tbad_debt\n"
                      "c1\ta1\tSoHo\t2012-03-04\tfalse\n"
                      "c2\ta1\t\"has\ttab\"\t2013-07\ttrue\n"
                      "c3\t\t\t\t\n"},
         {"presence", "id\tmonth\nc1\t2014-01\nc2\t2014-02\n"},
         {"usage", "id\tdate\tservice\tcharge\nc1\t2014-01-03\tvoice\t0.1\nc2\t2014-01-09\t\t1e-7\n"}});
    auto dir = std::filesystem::temp_directory_path() / "churn_schema_roundtrip";
    std::filesystem::remove_all(dir);
    write_dataset(ds, dir);
    auto again = load_dataset(load_schema_file(dir / "schema.json"));
    REQUIRE(again.customer_count() == ds.customer_count());
    auto same = [](const TableData& a, const TableData& b) {
        REQUIRE(a.row_count() == b.row_count());
        for (std::size_t r = 0; r < a.row_count(); ++r) {
            for (std::size_t f = 0; f < a.field_count(); ++f) {
                CHECK(format_cell(a.cell(r, f)) == format_cell(b.cell(r, f)));
                CHECK(a.cell(r, f).index() == b.cell(r, f).index());
            }
        }
    };
    same(ds.root(), again.root());
    for (std::size_t t = 0; t < ds.secondary_count(); ++t) {
        same(ds.secondary(t), again.secondary(t));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("absent descriptor names the path") {
    try {
        load_schema_file("/nonexistent/schema.json");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("/nonexistent/schema.json") != std::string::npos);
    }
}
