#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "churn/schema.hpp"

namespace testing {

// Builds an in-memory dataset from a descriptor and one TSV text per table.
inline churn::Dataset make_dataset(const std::string& descriptor, const std::map<std::string, std::string>& tables) {
    churn::DatasetSchema schema = churn::load_schema(descriptor);
    auto load = [&](const churn::TableSchema& t) {
        std::istringstream in(tables.at(t.name));
        return churn::load_table(t, in, schema.delimiter);
    };
    churn::TableData root = load(schema.root);
    std::vector<churn::TableData> secondaries;
    for (const auto& t : schema.secondaries) {
        secondaries.push_back(load(t));
    }
    return churn::Dataset(schema, std::move(root), std::move(secondaries));
}

// Root customer(id, account_id, segment, activation_date, bad_debt), a
// presence table and a dated usage table.
inline const char* kSmallDescriptor = R"({
  "tables": [
    {"name": "customer", "role": "root", "key": "id",
     "fields": [{"name": "id", "kind": "identifier"},
                {"name": "account_id", "kind": "identifier"},
                {"name": "segment", "kind": "categorical"},
                {"name": "activation_date", "kind": "date"},
                {"name": "bad_debt", "kind": "flag"}]},
    {"name": "presence", "role": "secondary", "foreign_key": "id", "date_field": "month",
     "fields": [{"name": "id", "kind": "identifier"}, {"name": "month", "kind": "date"}]},
    {"name": "usage", "role": "secondary", "foreign_key": "id", "date_field": "date",
     "fields": [{"name": "id", "kind": "identifier"}, {"name": "date", "kind": "date"},
                {"name": "service", "kind": "categorical"}, {"name": "charge", "kind": "numeric"}]}
  ]
})";

// Presence rows for `id` over months [first, last] of 2014.
inline std::string presence_rows(const std::string& id, int first, int last) {
    std::string out;
    for (int m = first; m <= last; ++m) {
        out += id + "\t2014-" + (m < 10 ? "0" : "") + std::to_string(m) + "\n";
    }
    return out;
}

}  // namespace testing
