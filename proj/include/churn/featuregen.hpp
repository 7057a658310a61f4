#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "churn/schema.hpp"
#include "churn/windowing.hpp"

namespace churn {

enum class Origin { native, expert, automatic };
enum class Aggregator { count, count_distinct, sum, mean, min, max, mode };
enum class ValueKind { numeric, categorical };

const char* to_string(Origin origin);
const char* to_string(Aggregator aggregator);

struct Operand {
    enum class Kind { identity, week_day, month, label };
    Kind kind = Kind::identity;
    std::string field;

    bool operator==(const Operand&) const = default;
};

struct Selector {
    std::string field;
    std::string value;

    bool operator==(const Selector&) const = default;
};

// Agg(table [, value] [by op, ...] [where field = const])
struct Formula {
    Aggregator aggregator = Aggregator::count;
    std::string table;
    std::optional<Operand> value;
    std::vector<Operand> partition;
    std::optional<Selector> selector;

    int depth() const;
    bool operator==(const Formula&) const = default;
};

struct FeatureSpec {
    std::string name;
    Origin origin = Origin::native;
    ValueKind kind = ValueKind::numeric;
    std::string native_field;        // native specs
    std::optional<Formula> formula;  // expert and automatic specs
};

std::string to_text(const Formula& formula);

/// One spec per non-identifier root field (dates become months before anchor;
/// flags become categorical). `exclude` lists further root fields to skip.
std::vector<FeatureSpec> native_features(const DatasetSchema& schema,
                                         std::span<const std::string> exclude = {});

/// Parses an expert formula. Table and field names match case-insensitively
/// and are canonicalized to the schema spelling.
///
///   formula  := AGG "(" TABLE [ "," operand ] [ "by" operand { "," operand } ]
///               [ "where" FIELD "=" value ] ")"
///   operand  := FIELD | ( "WeekDay" | "Month" | "Label" ) "(" FIELD ")"
///   AGG      := Count | CountDistinct | Sum | Mean | Min | Max | Mode
///   value    := bare word | double-quoted string
FeatureSpec parse_expert(std::string_view formula_text, const DatasetSchema& schema,
                         Origin origin = Origin::expert);
// One formula per line; blank lines and '#' comments are skipped.
std::vector<FeatureSpec> parse_expert_file(std::string_view text, const DatasetSchema& schema);

struct AutoOptions {
    std::vector<std::string> skip_tables;
    std::size_t max_selector_cardinality = 8;
};

/// Seeded sample of at most `budget` distinct specs from the construction
/// rule space, weighted 2^-(depth-1). Needs data to find selector constants.
std::vector<FeatureSpec> auto_construct(const Dataset& dataset, std::size_t budget, std::uint64_t seed,
                                        const AutoOptions& options = {});
std::size_t rule_space_size(const Dataset& dataset, const AutoOptions& options = {});

// Adds per-month variants (partition by Month(window date)) of every dated spec.
std::vector<FeatureSpec> expand_lagged(std::vector<FeatureSpec> specs, const DatasetSchema& schema);

// Partition operands expand into at most this many label values plus "*".
inline constexpr std::size_t kMaxLabelBuckets = 20;
inline constexpr std::string_view kOtherBucket = "*";

struct ColumnDef {
    std::string name;  // canonical, parseable back into the definition
    std::size_t spec = 0;
    std::vector<std::string> buckets;  // one per partition operand
    ValueKind kind = ValueKind::numeric;
};

struct FeaturePlan {
    std::vector<FeatureSpec> specs;
    std::vector<ColumnDef> columns;
};

FeaturePlan resolve_columns(const Dataset& dataset, const WindowPlan& plan, std::vector<FeatureSpec> specs);
// Rebuilds the plan for previously materialized column names (e.g. a model's
// features). Unknown names throw Error(deployment).
FeaturePlan plan_from_names(const DatasetSchema& schema, std::span<const std::string> names);

struct FeatureColumn {
    std::string name;
    ValueKind kind = ValueKind::numeric;
    std::vector<std::optional<double>> numbers;
    std::vector<std::optional<std::string>> labels;
};

struct FeatureMatrix {
    std::vector<std::string> ids;
    std::vector<int> labels;  // 1 churn, 0 stay, -1 unknown
    std::vector<FeatureColumn> columns;

    std::size_t rows() const { return ids.size(); }
    std::optional<std::size_t> column_index(std::string_view name) const;
    FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
};

/// Aggregates each instance's secondary rows dated inside the observation
/// window (timeless tables contribute all rows). Count/CountDistinct/Sum over
/// no rows are 0; Mean/Min/Max/Mode over no rows are Missing.
FeatureMatrix materialize(const Dataset& dataset, const WindowPlan& plan,
                          std::span<const LabeledInstance> instances, const FeaturePlan& features);
FeatureMatrix materialize(const Dataset& dataset, const LabeledFrame& frame, std::vector<FeatureSpec> specs);

void write_matrix(const FeatureMatrix& matrix, std::ostream& out, char delimiter = '\t');

}  // namespace churn
