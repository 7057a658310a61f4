#include "churn/featuregen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "churn/error.hpp"
#include "churn/io.hpp"

namespace churn {
namespace {

[[noreturn]] void feature_error(const std::string& message) {
    throw Error(ErrorKind::configuration, "featuregen", message, "check the feature formula against the schema");
}

std::string lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool iequals(std::string_view a, std::string_view b) { return lower(a) == lower(b); }

constexpr Aggregator kAggregators[] = {Aggregator::count, Aggregator::count_distinct, Aggregator::sum,
                                       Aggregator::mean,  Aggregator::min,            Aggregator::max,
                                       Aggregator::mode};

const char* operand_function(Operand::Kind kind) {
    switch (kind) {
        case Operand::Kind::week_day: return "WeekDay";
        case Operand::Kind::month: return "Month";
        case Operand::Kind::label: return "Label";
        case Operand::Kind::identity: return "";
    }
    return "";
}

bool is_bare(std::string_view value) {
    if (value.empty() || value == kOtherBucket || iequals(value, "by") || iequals(value, "where")) {
        return false;
    }
    return std::all_of(value.begin(), value.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_' || c == '.' || c == ':' || c == '+' || c == '-' || c == '/';
    });
}

std::string format_value(std::string_view value) {
    if (is_bare(value)) {
        return std::string(value);
    }
    std::string out = "\"";
    for (char c : value) {
        if (c == '"' || c == '\\') {
            out.push_back('\\');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string format_operand(const Operand& op) {
    if (op.kind == Operand::Kind::identity) {
        return op.field;
    }
    return std::string(operand_function(op.kind)) + "(" + op.field + ")";
}

std::string format_formula(const Formula& f, const std::vector<std::string>* buckets) {
    std::string out = std::string(to_string(f.aggregator)) + "(" + f.table;
    if (f.value) {
        out += ", " + format_operand(*f.value);
    }
    if (!f.partition.empty()) {
        out += " by ";
        for (std::size_t i = 0; i < f.partition.size(); ++i) {
            if (i > 0) {
                out += ", ";
            }
            out += format_operand(f.partition[i]);
            if (buckets != nullptr) {
                const std::string& b = (*buckets)[i];
                out += "=" + (b == kOtherBucket ? std::string(kOtherBucket) : format_value(b));
            }
        }
    }
    if (f.selector) {
        out += " where " + f.selector->field + "=" + format_value(f.selector->value);
    }
    out += ")";
    return out;
}

// ---------------------------------------------------------------------------
// Formula lexer/parser

struct Token {
    enum class Type { word, string, lparen, rparen, comma, equals, end };
    Type type = Type::end;
    std::string text;
};

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '(') {
            tokens.push_back({Token::Type::lparen, "("});
            ++i;
        } else if (c == ')') {
            tokens.push_back({Token::Type::rparen, ")"});
            ++i;
        } else if (c == ',') {
            tokens.push_back({Token::Type::comma, ","});
            ++i;
        } else if (c == '=') {
            tokens.push_back({Token::Type::equals, "="});
            ++i;
        } else if (c == '"') {
            std::string value;
            ++i;
            bool closed = false;
            while (i < text.size()) {
                if (text[i] == '\\' && i + 1 < text.size()) {
                    value.push_back(text[i + 1]);
                    i += 2;
                } else if (text[i] == '"') {
                    closed = true;
                    ++i;
                    break;
                } else {
                    value.push_back(text[i++]);
                }
            }
            if (!closed) {
                feature_error("unterminated string in formula '" + std::string(text) + "'");
            }
            tokens.push_back({Token::Type::string, std::move(value)});
        } else {
            std::size_t start = i;
            while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) &&
                   std::string_view("(),=\"").find(text[i]) == std::string_view::npos) {
                ++i;
            }
            tokens.push_back({Token::Type::word, std::string(text.substr(start, i - start))});
        }
    }
    tokens.push_back({Token::Type::end, ""});
    return tokens;
}

struct ParsedFormula {
    Formula formula;
    std::vector<std::optional<std::string>> buckets;  // per partition operand
};

class FormulaParser {
public:
    FormulaParser(std::string_view text, const DatasetSchema& schema, bool allow_buckets)
        : text_(text), tokens_(tokenize(text)), schema_(schema), allow_buckets_(allow_buckets) {}

    ParsedFormula parse() {
        ParsedFormula out;
        Formula& f = out.formula;
        std::string agg = expect_word("aggregator");
        bool found = false;
        for (Aggregator a : kAggregators) {
            if (iequals(agg, to_string(a))) {
                f.aggregator = a;
                found = true;
            }
        }
        if (!found) {
            fail("unknown aggregator '" + agg + "'");
        }
        expect(Token::Type::lparen);
        const TableSchema& table = resolve_table(expect_word("table"));
        f.table = table.name;
        if (peek().type == Token::Type::comma) {
            next();
            f.value = parse_operand(table);
        }
        if (peek_keyword("by")) {
            next();
            do {
                Operand op = parse_operand(table);
                std::optional<std::string> bucket;
                if (peek().type == Token::Type::equals) {
                    if (!allow_buckets_) {
                        fail("partition buckets are not allowed in expert formulas");
                    }
                    next();
                    bucket = parse_value(true);
                }
                f.partition.push_back(op);
                out.buckets.push_back(std::move(bucket));
            } while (peek().type == Token::Type::comma && (next(), true));
        }
        if (peek_keyword("where")) {
            next();
            Selector sel;
            sel.field = resolve_field(table, expect_word("selector field"));
            expect(Token::Type::equals);
            sel.value = parse_value(false);
            f.selector = std::move(sel);
        }
        expect(Token::Type::rparen);
        if (peek().type != Token::Type::end) {
            fail("unexpected trailing text");
        }
        return out;
    }

    [[noreturn]] void fail(const std::string& why) const {
        feature_error("formula '" + std::string(text_) + "': " + why);
    }

private:
    const Token& peek() const { return tokens_[pos_]; }
    const Token& next() { return tokens_[pos_++]; }
    bool peek_keyword(std::string_view kw) const {
        return peek().type == Token::Type::word && iequals(peek().text, kw);
    }

    void expect(Token::Type type) {
        if (peek().type != type) {
            fail("unexpected '" + peek().text + "'");
        }
        next();
    }

    std::string expect_word(const char* what) {
        if (peek().type != Token::Type::word) {
            fail(std::string("expected ") + what);
        }
        return next().text;
    }

    std::string parse_value(bool bucket) {
        if (peek().type == Token::Type::string) {
            return next().text;
        }
        if (peek().type == Token::Type::word) {
            std::string v = next().text;
            if (v == kOtherBucket && !bucket) {
                fail("'*' is only valid as a partition bucket");
            }
            return v;
        }
        fail("expected a value");
    }

    const TableSchema& resolve_table(const std::string& name) const {
        for (const auto& t : schema_.secondaries) {
            if (iequals(t.name, name)) {
                return t;
            }
        }
        fail("unknown table '" + name + "'");
    }

    std::string resolve_field(const TableSchema& table, const std::string& name) const {
        for (const auto& field : table.fields) {
            if (iequals(field.name, name)) {
                return field.name;
            }
        }
        fail("unknown field '" + name + "' in table '" + table.name + "'");
    }

    Operand parse_operand(const TableSchema& table) {
        std::string word = expect_word("operand");
        Operand op;
        if (peek().type == Token::Type::lparen) {
            if (iequals(word, "WeekDay")) {
                op.kind = Operand::Kind::week_day;
            } else if (iequals(word, "Month")) {
                op.kind = Operand::Kind::month;
            } else if (iequals(word, "Label")) {
                op.kind = Operand::Kind::label;
            } else {
                fail("unknown operand function '" + word + "'");
            }
            next();
            op.field = resolve_field(table, expect_word("field"));
            expect(Token::Type::rparen);
        } else {
            op.field = resolve_field(table, word);
        }
        return op;
    }

    std::string_view text_;
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    const DatasetSchema& schema_;
    bool allow_buckets_;
};

void validate_formula(const Formula& f, const TableSchema& table, const std::string& text) {
    auto kind_of = [&](const std::string& field) { return table.find_field(field)->kind; };
    auto fail = [&](const std::string& why) { feature_error("formula '" + text + "': " + why); };
    auto check_operand = [&](const Operand& op) {
        FieldKind k = kind_of(op.field);
        switch (op.kind) {
            case Operand::Kind::week_day:
            case Operand::Kind::month:
                if (k != FieldKind::date) {
                    fail(std::string(operand_function(op.kind)) + "() needs a date field, '" + op.field + "' is " +
                         to_string(k));
                }
                break;
            case Operand::Kind::label:
                if (k == FieldKind::numeric || k == FieldKind::date) {
                    fail("Label() needs a categorical field, '" + op.field + "' is " + to_string(k));
                }
                break;
            case Operand::Kind::identity: break;
        }
    };
    for (const auto& op : f.partition) {
        if (op.kind == Operand::Kind::identity) {
            fail("partition operands must be WeekDay(), Month() or Label()");
        }
        check_operand(op);
    }
    if (f.value) {
        check_operand(*f.value);
    }
    switch (f.aggregator) {
        case Aggregator::sum:
        case Aggregator::mean:
        case Aggregator::min:
        case Aggregator::max:
            if (!f.value || f.value->kind != Operand::Kind::identity || kind_of(f.value->field) != FieldKind::numeric) {
                fail(std::string(to_string(f.aggregator)) + " needs a numeric value operand");
            }
            break;
        case Aggregator::count:
            break;
        case Aggregator::count_distinct:
        case Aggregator::mode:
            if (!f.value) {
                fail(std::string(to_string(f.aggregator)) + " needs a value operand");
            }
            if (f.value->kind == Operand::Kind::identity &&
                (kind_of(f.value->field) == FieldKind::numeric || kind_of(f.value->field) == FieldKind::date)) {
                fail(std::string(to_string(f.aggregator)) + " needs a categorical or derived value operand");
            }
            break;
    }
    if (f.selector) {
        FieldKind k = kind_of(f.selector->field);
        if (k == FieldKind::numeric || k == FieldKind::date) {
            fail("selector field '" + f.selector->field + "' must be categorical");
        }
    }
}

FeatureSpec spec_from_formula(Formula f, Origin origin) {
    FeatureSpec spec;
    spec.origin = origin;
    spec.kind = f.aggregator == Aggregator::mode ? ValueKind::categorical : ValueKind::numeric;
    spec.name = to_text(f);
    spec.formula = std::move(f);
    return spec;
}

FeatureSpec native_spec(const FieldSchema& field) {
    FeatureSpec spec;
    spec.name = field.name;
    spec.origin = Origin::native;
    spec.native_field = field.name;
    spec.kind = (field.kind == FieldKind::numeric || field.kind == FieldKind::date) ? ValueKind::numeric
                                                                                    : ValueKind::categorical;
    return spec;
}

// ---------------------------------------------------------------------------
// Rule space

struct Candidate {
    Formula formula;
};

std::vector<Formula> enumerate_rules(const Dataset& dataset, const AutoOptions& options) {
    std::vector<Formula> out;
    const DatasetSchema& schema = dataset.schema();
    for (std::size_t t = 0; t < schema.secondaries.size(); ++t) {
        const TableSchema& table = schema.secondaries[t];
        if (std::find(options.skip_tables.begin(), options.skip_tables.end(), table.name) !=
            options.skip_tables.end()) {
            continue;
        }
        std::vector<std::string> numeric, categorical, identifiers, dates;
        for (const auto& f : table.fields) {
            if (f.name == table.foreign_key || f.name == table.key_field) {
                continue;
            }
            switch (f.kind) {
                case FieldKind::numeric: numeric.push_back(f.name); break;
                case FieldKind::categorical:
                case FieldKind::flag: categorical.push_back(f.name); break;
                case FieldKind::identifier: identifiers.push_back(f.name); break;
                case FieldKind::date: dates.push_back(f.name); break;
            }
        }
        std::vector<Operand> partition_ops;
        for (const auto& d : dates) {
            partition_ops.push_back({Operand::Kind::week_day, d});
        }
        if (!table.date_field.empty()) {
            partition_ops.push_back({Operand::Kind::month, table.date_field});
        }
        for (const auto& c : categorical) {
            partition_ops.push_back({Operand::Kind::label, c});
        }
        std::vector<std::vector<Operand>> subsets{{}};
        for (std::size_t i = 0; i < partition_ops.size(); ++i) {
            subsets.push_back({partition_ops[i]});
        }
        for (std::size_t i = 0; i < partition_ops.size(); ++i) {
            for (std::size_t j = i + 1; j < partition_ops.size(); ++j) {
                subsets.push_back({partition_ops[i], partition_ops[j]});
            }
        }
        std::vector<std::optional<Selector>> selectors{std::nullopt};
        const TableData& data = dataset.secondary(t);
        for (const auto& c : categorical) {
            const Column& col = data.column(c);
            std::vector<std::string> values = col.dictionary();
            if (values.size() < 2 || values.size() > options.max_selector_cardinality) {
                continue;
            }
            std::sort(values.begin(), values.end());
            for (const auto& v : values) {
                selectors.push_back(Selector{c, v});
            }
        }
        std::vector<std::pair<Aggregator, std::optional<Operand>>> values;
        values.emplace_back(Aggregator::count, std::nullopt);
        for (const auto& c : categorical) {
            values.emplace_back(Aggregator::count_distinct, Operand{Operand::Kind::identity, c});
        }
        for (const auto& c : identifiers) {
            values.emplace_back(Aggregator::count_distinct, Operand{Operand::Kind::identity, c});
        }
        for (const auto& d : dates) {
            values.emplace_back(Aggregator::count_distinct, Operand{Operand::Kind::week_day, d});
        }
        if (!table.date_field.empty()) {
            values.emplace_back(Aggregator::count_distinct, Operand{Operand::Kind::month, table.date_field});
        }
        for (Aggregator a : {Aggregator::sum, Aggregator::mean, Aggregator::min, Aggregator::max}) {
            for (const auto& n : numeric) {
                values.emplace_back(a, Operand{Operand::Kind::identity, n});
            }
        }
        for (const auto& c : categorical) {
            values.emplace_back(Aggregator::mode, Operand{Operand::Kind::identity, c});
        }
        for (const auto& d : dates) {
            values.emplace_back(Aggregator::mode, Operand{Operand::Kind::week_day, d});
        }

        for (const auto& [agg, value] : values) {
            for (const auto& subset : subsets) {
                if (value && std::any_of(subset.begin(), subset.end(),
                                         [&](const Operand& op) { return op.field == value->field; })) {
                    continue;
                }
                for (const auto& sel : selectors) {
                    if (sel && ((value && value->field == sel->field) ||
                                std::any_of(subset.begin(), subset.end(),
                                            [&](const Operand& op) { return op.field == sel->field; }))) {
                        continue;
                    }
                    Formula f;
                    f.aggregator = agg;
                    f.table = table.name;
                    f.value = value;
                    f.partition = subset;
                    f.selector = sel;
                    out.push_back(std::move(f));
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Materialization

// Bucket frequencies come from in-window rows only, so rows outside the
// observation window cannot change the column set.
std::vector<std::string> label_buckets(const Column& col, const Column* dates, const WindowPlan& plan) {
    std::vector<std::size_t> counts(col.dictionary().size(), 0);
    for (std::size_t r = 0; r < col.size(); ++r) {
        if (dates != nullptr) {
            if (dates->is_missing(r)) {
                continue;
            }
            Month m = dates->date(r).to_month();
            if (m < plan.obs_first() || m > plan.obs_last()) {
                continue;
            }
        }
        if (!col.is_missing(r)) {
            ++counts[static_cast<std::size_t>(col.code(r))];
        }
    }
    std::vector<std::size_t> order;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] > 0) {
            order.push_back(c);
        }
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (counts[a] != counts[b]) {
            return counts[a] > counts[b];
        }
        return col.dictionary()[a] < col.dictionary()[b];
    });
    std::vector<std::string> buckets;
    for (std::size_t i = 0; i < order.size() && i < kMaxLabelBuckets; ++i) {
        buckets.push_back(col.dictionary()[order[i]]);
    }
    if (order.size() > kMaxLabelBuckets) {
        buckets.emplace_back(kOtherBucket);
    }
    return buckets;
}

std::string lag_label(int lag) { return "lag" + std::to_string(lag); }

struct Accumulator {
    double count = 0;
    double sum = 0;
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();
    std::vector<std::int64_t> keys;

    void reset() {
        count = 0;
        sum = 0;
        min = std::numeric_limits<double>::infinity();
        max = -std::numeric_limits<double>::infinity();
        keys.clear();
    }
};

enum class ValueSource { none, number, code, weekday, lag };

struct Dimension {
    Operand::Kind kind = Operand::Kind::label;
    std::size_t field = 0;
    std::vector<std::string> buckets;
    std::vector<int> code_to_bucket;  // label dims
    int weekday_to_bucket[7] = {-1, -1, -1, -1, -1, -1, -1};
    std::vector<int> lag_to_bucket;
};

struct CompiledSpec {
    bool native = false;
    std::size_t native_field = 0;
    FieldKind native_kind = FieldKind::numeric;

    std::size_t table = 0;
    Aggregator aggregator = Aggregator::count;
    ValueSource value_source = ValueSource::none;
    std::size_t value_field = 0;
    std::vector<Dimension> dims;
    std::optional<std::size_t> selector_field;
    std::int32_t selector_code = -1;  // -1: constant absent from data, nothing matches
    std::vector<int> combo_to_local;  // mixed-radix bucket combination -> local column
    std::vector<std::size_t> outputs; // local column -> matrix column
};

int lag_of(const Date& d, const WindowPlan& plan) { return plan.anchor - d.to_month(); }

std::string key_label(const CompiledSpec& spec, const TableData& table, std::int64_t key) {
    switch (spec.value_source) {
        case ValueSource::code: return table.column(spec.value_field).label(static_cast<std::int32_t>(key));
        case ValueSource::weekday: return weekday_name(static_cast<int>(key));
        case ValueSource::lag: return lag_label(static_cast<int>(key));
        default: return {};
    }
}

std::vector<CompiledSpec> compile(const Dataset& dataset, const WindowPlan& plan, const FeaturePlan& features) {
    const DatasetSchema& schema = dataset.schema();
    std::vector<std::vector<std::size_t>> columns_of(features.specs.size());
    for (std::size_t c = 0; c < features.columns.size(); ++c) {
        columns_of[features.columns[c].spec].push_back(c);
    }
    std::vector<CompiledSpec> out;
    for (std::size_t s = 0; s < features.specs.size(); ++s) {
        const FeatureSpec& spec = features.specs[s];
        if (columns_of[s].empty()) {
            continue;
        }
        CompiledSpec cs;
        cs.outputs = columns_of[s];
        if (!spec.formula) {
            cs.native = true;
            auto idx = schema.root.field_index(spec.native_field);
            if (!idx) {
                throw Error(ErrorKind::deployment, "featuregen", "root field '" + spec.native_field + "' not found");
            }
            cs.native_field = *idx;
            cs.native_kind = schema.root.fields[*idx].kind;
            out.push_back(std::move(cs));
            continue;
        }
        const Formula& f = *spec.formula;
        auto t = dataset.secondary_index(f.table);
        if (!t) {
            throw Error(ErrorKind::deployment, "featuregen", "table '" + f.table + "' not found");
        }
        cs.table = *t;
        const TableSchema& ts = schema.secondaries[*t];
        const TableData& data = dataset.secondary(*t);
        auto field_idx = [&](const std::string& name) {
            auto idx = ts.field_index(name);
            if (!idx) {
                throw Error(ErrorKind::deployment, "featuregen",
                            "field '" + name + "' not found in table '" + ts.name + "'");
            }
            return *idx;
        };
        cs.aggregator = f.aggregator;
        if (f.value) {
            cs.value_field = field_idx(f.value->field);
            FieldKind k = ts.fields[cs.value_field].kind;
            switch (f.value->kind) {
                case Operand::Kind::identity:
                case Operand::Kind::label:
                    cs.value_source = k == FieldKind::numeric ? ValueSource::number : ValueSource::code;
                    break;
                case Operand::Kind::week_day: cs.value_source = ValueSource::weekday; break;
                case Operand::Kind::month: cs.value_source = ValueSource::lag; break;
            }
        }
        if (f.selector) {
            cs.selector_field = field_idx(f.selector->field);
            auto code = data.column(*cs.selector_field).find_code(f.selector->value);
            cs.selector_code = code ? *code : -1;
        }
        for (std::size_t d = 0; d < f.partition.size(); ++d) {
            Dimension dim;
            dim.kind = f.partition[d].kind;
            dim.field = field_idx(f.partition[d].field);
            for (std::size_t c : cs.outputs) {
                const std::string& b = features.columns[c].buckets[d];
                if (std::find(dim.buckets.begin(), dim.buckets.end(), b) == dim.buckets.end()) {
                    dim.buckets.push_back(b);
                }
            }
            auto bucket_index = [&](const std::string& label) {
                auto it = std::find(dim.buckets.begin(), dim.buckets.end(), label);
                return it == dim.buckets.end() ? -1 : static_cast<int>(it - dim.buckets.begin());
            };
            const int other = bucket_index(std::string(kOtherBucket));
            switch (dim.kind) {
                case Operand::Kind::label: {
                    const Column& col = data.column(dim.field);
                    // "*" holds values outside the window's top labels, even
                    // when only some of the named buckets are requested.
                    std::set<std::string> top;
                    if (other >= 0) {
                        const Column* dates = ts.date_field.empty() ? nullptr : &data.column(ts.date_field);
                        for (auto& b : label_buckets(col, dates, plan)) {
                            top.insert(std::move(b));
                        }
                    }
                    dim.code_to_bucket.resize(col.dictionary().size());
                    for (std::size_t code = 0; code < col.dictionary().size(); ++code) {
                        const std::string& label = col.dictionary()[code];
                        int b = bucket_index(label);
                        dim.code_to_bucket[code] = b >= 0 ? b : (top.count(label) > 0 ? -1 : other);
                    }
                    break;
                }
                case Operand::Kind::week_day:
                    for (int w = 0; w < 7; ++w) {
                        dim.weekday_to_bucket[w] = bucket_index(weekday_name(w));
                    }
                    break;
                case Operand::Kind::month:
                    for (int lag = 0; lag < plan.obs_months; ++lag) {
                        dim.lag_to_bucket.push_back(bucket_index(lag_label(lag)));
                    }
                    break;
                case Operand::Kind::identity: break;
            }
            cs.dims.push_back(std::move(dim));
        }
        std::size_t combos = 1;
        for (const auto& dim : cs.dims) {
            combos *= dim.buckets.size();
        }
        cs.combo_to_local.assign(combos, -1);
        for (std::size_t local = 0; local < cs.outputs.size(); ++local) {
            const ColumnDef& def = features.columns[cs.outputs[local]];
            std::size_t combo = 0;
            for (std::size_t d = 0; d < cs.dims.size(); ++d) {
                auto it = std::find(cs.dims[d].buckets.begin(), cs.dims[d].buckets.end(), def.buckets[d]);
                combo = combo * cs.dims[d].buckets.size() + static_cast<std::size_t>(it - cs.dims[d].buckets.begin());
            }
            cs.combo_to_local[combo] = static_cast<int>(local);
        }
        out.push_back(std::move(cs));
    }
    return out;
}

// Bucket combination of a row, or -1 if the row falls outside every bucket.
long row_combo(const CompiledSpec& cs, const TableData& data, std::size_t row, const WindowPlan& plan) {
    long combo = 0;
    for (const auto& dim : cs.dims) {
        const Column& col = data.column(dim.field);
        int b = -1;
        if (!col.is_missing(row)) {
            switch (dim.kind) {
                case Operand::Kind::label: b = dim.code_to_bucket[static_cast<std::size_t>(col.code(row))]; break;
                case Operand::Kind::week_day:
                    if (col.date(row).has_day()) {
                        b = dim.weekday_to_bucket[col.date(row).weekday()];
                    }
                    break;
                case Operand::Kind::month: {
                    int lag = lag_of(col.date(row), plan);
                    if (lag >= 0 && lag < static_cast<int>(dim.lag_to_bucket.size())) {
                        b = dim.lag_to_bucket[static_cast<std::size_t>(lag)];
                    }
                    break;
                }
                case Operand::Kind::identity: break;
            }
        }
        if (b < 0) {
            return -1;
        }
        combo = combo * static_cast<long>(dim.buckets.size()) + b;
    }
    return combo;
}

void accumulate(const CompiledSpec& cs, const TableData& data, std::size_t row, const WindowPlan& plan,
                Accumulator& acc) {
    switch (cs.value_source) {
        case ValueSource::none: acc.count += 1; return;
        case ValueSource::number: {
            double v = data.column(cs.value_field).number(row);
            if (std::isnan(v)) {
                return;
            }
            acc.count += 1;
            acc.sum += v;
            acc.min = std::min(acc.min, v);
            acc.max = std::max(acc.max, v);
            return;
        }
        default: break;
    }
    const Column& col = data.column(cs.value_field);
    if (col.is_missing(row)) {
        return;
    }
    std::int64_t key = 0;
    if (cs.value_source == ValueSource::code) {
        key = col.code(row);
    } else if (cs.value_source == ValueSource::weekday) {
        if (!col.date(row).has_day()) {
            return;
        }
        key = col.date(row).weekday();
    } else {
        key = lag_of(col.date(row), plan);
    }
    acc.count += 1;
    acc.keys.push_back(key);
}

void emit(const CompiledSpec& cs, const TableData& data, Accumulator& acc, FeatureColumn& column) {
    switch (cs.aggregator) {
        case Aggregator::count: column.numbers.emplace_back(acc.count); return;
        case Aggregator::sum: column.numbers.emplace_back(acc.sum); return;
        case Aggregator::mean:
            column.numbers.push_back(acc.count > 0 ? std::optional<double>(acc.sum / acc.count) : std::nullopt);
            return;
        case Aggregator::min:
            column.numbers.push_back(acc.count > 0 ? std::optional<double>(acc.min) : std::nullopt);
            return;
        case Aggregator::max:
            column.numbers.push_back(acc.count > 0 ? std::optional<double>(acc.max) : std::nullopt);
            return;
        case Aggregator::count_distinct: {
            std::sort(acc.keys.begin(), acc.keys.end());
            auto last = std::unique(acc.keys.begin(), acc.keys.end());
            column.numbers.emplace_back(static_cast<double>(last - acc.keys.begin()));
            return;
        }
        case Aggregator::mode: {
            if (acc.keys.empty()) {
                column.labels.emplace_back(std::nullopt);
                return;
            }
            std::sort(acc.keys.begin(), acc.keys.end());
            std::size_t best_count = 0;
            std::string best;
            for (std::size_t i = 0; i < acc.keys.size();) {
                std::size_t j = i;
                while (j < acc.keys.size() && acc.keys[j] == acc.keys[i]) {
                    ++j;
                }
                std::string label = key_label(cs, data, acc.keys[i]);
                if (j - i > best_count || (j - i == best_count && label < best)) {
                    best_count = j - i;
                    best = std::move(label);
                }
                i = j;
            }
            column.labels.emplace_back(std::move(best));
            return;
        }
    }
}

}  // namespace

const char* to_string(Origin origin) {
    switch (origin) {
        case Origin::native: return "native";
        case Origin::expert: return "expert";
        case Origin::automatic: return "auto";
    }
    return "?";
}

const char* to_string(Aggregator aggregator) {
    switch (aggregator) {
        case Aggregator::count: return "Count";
        case Aggregator::count_distinct: return "CountDistinct";
        case Aggregator::sum: return "Sum";
        case Aggregator::mean: return "Mean";
        case Aggregator::min: return "Min";
        case Aggregator::max: return "Max";
        case Aggregator::mode: return "Mode";
    }
    return "?";
}

int Formula::depth() const {
    int d = 1 + static_cast<int>(partition.size());
    if (selector) {
        ++d;
    }
    if (value && value->kind != Operand::Kind::identity) {
        ++d;
    }
    return d;
}

std::string to_text(const Formula& formula) { return format_formula(formula, nullptr); }

std::vector<FeatureSpec> native_features(const DatasetSchema& schema, std::span<const std::string> exclude) {
    std::vector<FeatureSpec> specs;
    for (const auto& field : schema.root.fields) {
        if (field.name == schema.root.key_field || field.kind == FieldKind::identifier) {
            continue;
        }
        if (std::find(exclude.begin(), exclude.end(), field.name) != exclude.end()) {
            continue;
        }
        specs.push_back(native_spec(field));
    }
    return specs;
}

FeatureSpec parse_expert(std::string_view formula_text, const DatasetSchema& schema, Origin origin) {
    FormulaParser parser(formula_text, schema, false);
    ParsedFormula parsed = parser.parse();
    validate_formula(parsed.formula, *schema.find_secondary(parsed.formula.table), std::string(formula_text));
    return spec_from_formula(std::move(parsed.formula), origin);
}

std::vector<FeatureSpec> parse_expert_file(std::string_view text, const DatasetSchema& schema) {
    std::vector<FeatureSpec> specs;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
            continue;
        }
        specs.push_back(parse_expert(line, schema));
    }
    return specs;
}

std::size_t rule_space_size(const Dataset& dataset, const AutoOptions& options) {
    return enumerate_rules(dataset, options).size();
}

std::vector<FeatureSpec> auto_construct(const Dataset& dataset, std::size_t budget, std::uint64_t seed,
                                        const AutoOptions& options) {
    if (budget == 0) {
        feature_error("automatic construction budget must be at least 1");
    }
    std::vector<Formula> rules = enumerate_rules(dataset, options);
    std::vector<std::size_t> chosen(rules.size());
    for (std::size_t i = 0; i < rules.size(); ++i) {
        chosen[i] = i;
    }
    if (budget < rules.size()) {
        // Weighted sampling without replacement: keep the largest ln(u)/w.
        std::mt19937_64 rng(seed);
        std::vector<double> keys(rules.size());
        for (std::size_t i = 0; i < rules.size(); ++i) {
            double u = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
            double weight = std::ldexp(1.0, -(rules[i].depth() - 1));
            keys[i] = std::log(u) / weight;
        }
        std::stable_sort(chosen.begin(), chosen.end(), [&](std::size_t a, std::size_t b) { return keys[a] > keys[b]; });
        chosen.resize(budget);
    }
    std::vector<FeatureSpec> specs;
    specs.reserve(chosen.size());
    for (std::size_t i : chosen) {
        specs.push_back(spec_from_formula(rules[i], Origin::automatic));
    }
    return specs;
}

std::vector<FeatureSpec> expand_lagged(std::vector<FeatureSpec> specs, const DatasetSchema& schema) {
    std::set<std::string> names;
    for (const auto& s : specs) {
        names.insert(s.name);
    }
    const std::size_t original = specs.size();
    for (std::size_t i = 0; i < original; ++i) {
        if (!specs[i].formula) {
            continue;
        }
        Formula f = *specs[i].formula;
        const TableSchema* table = schema.find_secondary(f.table);
        if (table == nullptr || table->date_field.empty()) {
            continue;
        }
        bool has_month = std::any_of(f.partition.begin(), f.partition.end(),
                                     [](const Operand& op) { return op.kind == Operand::Kind::month; });
        bool month_value = f.value && f.value->kind == Operand::Kind::month;
        if (has_month || month_value) {
            continue;
        }
        f.partition.push_back({Operand::Kind::month, table->date_field});
        FeatureSpec lagged = spec_from_formula(std::move(f), specs[i].origin);
        if (names.insert(lagged.name).second) {
            specs.push_back(std::move(lagged));
        }
    }
    return specs;
}

FeaturePlan resolve_columns(const Dataset& dataset, const WindowPlan& plan, std::vector<FeatureSpec> specs) {
    FeaturePlan out;
    std::set<std::string> names;
    for (auto& spec : specs) {
        const std::size_t index = out.specs.size();
        if (!spec.formula) {
            if (names.insert(spec.name).second) {
                out.columns.push_back({spec.name, index, {}, spec.kind});
                out.specs.push_back(std::move(spec));
            }
            continue;
        }
        const Formula& f = *spec.formula;
        auto t = dataset.secondary_index(f.table);
        if (!t) {
            feature_error("unknown table '" + f.table + "'");
        }
        std::vector<std::vector<std::string>> per_dim;
        for (const auto& op : f.partition) {
            std::vector<std::string> buckets;
            switch (op.kind) {
                case Operand::Kind::week_day:
                    for (int w = 0; w < 7; ++w) {
                        buckets.emplace_back(weekday_name(w));
                    }
                    break;
                case Operand::Kind::month:
                    for (int lag = 0; lag < plan.obs_months; ++lag) {
                        buckets.push_back(lag_label(lag));
                    }
                    break;
                default: {
                    const TableData& table = dataset.secondary(*t);
                    const std::string& date_field = table.schema().date_field;
                    const Column* dates = date_field.empty() ? nullptr : &table.column(date_field);
                    buckets = label_buckets(table.column(op.field), dates, plan);
                    break;
                }
            }
            per_dim.push_back(std::move(buckets));
        }
        std::vector<std::vector<std::string>> combos{{}};
        for (const auto& buckets : per_dim) {
            std::vector<std::vector<std::string>> next;
            for (const auto& prefix : combos) {
                for (const auto& b : buckets) {
                    auto c = prefix;
                    c.push_back(b);
                    next.push_back(std::move(c));
                }
            }
            combos = std::move(next);
        }
        bool added = false;
        for (auto& combo : combos) {
            std::string name = f.partition.empty() ? spec.name : format_formula(f, &combo);
            if (names.insert(name).second) {
                out.columns.push_back({std::move(name), index, std::move(combo), spec.kind});
                added = true;
            }
        }
        if (added) {
            out.specs.push_back(std::move(spec));
        }
    }
    return out;
}

FeaturePlan plan_from_names(const DatasetSchema& schema, std::span<const std::string> names) {
    FeaturePlan out;
    std::map<std::string, std::size_t> spec_index;
    for (const auto& name : names) {
        if (name.find('(') == std::string::npos) {
            const FieldSchema* field = schema.root.find_field(name);
            if (field == nullptr) {
                throw Error(ErrorKind::deployment, "featuregen", "model feature '" + name + "' not in root table",
                            "score with the schema the model was trained on");
            }
            out.columns.push_back({name, out.specs.size(), {}, native_spec(*field).kind});
            out.specs.push_back(native_spec(*field));
            continue;
        }
        ParsedFormula parsed;
        try {
            parsed = FormulaParser(name, schema, true).parse();
            validate_formula(parsed.formula, *schema.find_secondary(parsed.formula.table), name);
        } catch (const Error& e) {
            throw Error(ErrorKind::deployment, "featuregen", std::string("model feature cannot be rebuilt: ") + e.what(),
                        "score with the schema the model was trained on");
        }
        std::vector<std::string> buckets;
        for (const auto& b : parsed.buckets) {
            if (!b) {
                throw Error(ErrorKind::deployment, "featuregen", "model feature '" + name + "' lacks bucket values");
            }
            buckets.push_back(*b);
        }
        FeatureSpec spec = spec_from_formula(std::move(parsed.formula), Origin::automatic);
        auto [it, inserted] = spec_index.try_emplace(spec.name, out.specs.size());
        if (inserted) {
            out.specs.push_back(spec);
        }
        out.columns.push_back({name, it->second, std::move(buckets), spec.kind});
    }
    return out;
}

std::optional<std::size_t> FeatureMatrix::column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
    FeatureMatrix out;
    for (std::size_t r : rows) {
        out.ids.push_back(ids[r]);
        out.labels.push_back(labels.empty() ? -1 : labels[r]);
    }
    for (const auto& col : columns) {
        FeatureColumn c;
        c.name = col.name;
        c.kind = col.kind;
        for (std::size_t r : rows) {
            if (col.kind == ValueKind::numeric) {
                c.numbers.push_back(col.numbers[r]);
            } else {
                c.labels.push_back(col.labels[r]);
            }
        }
        out.columns.push_back(std::move(c));
    }
    return out;
}

FeatureMatrix materialize(const Dataset& dataset, const WindowPlan& plan, std::span<const LabeledInstance> instances,
                          const FeaturePlan& features) {
    std::vector<CompiledSpec> compiled = compile(dataset, plan, features);
    FeatureMatrix matrix;
    for (const auto& inst : instances) {
        matrix.ids.push_back(inst.customer_id);
        matrix.labels.push_back(inst.label);
    }
    for (const auto& def : features.columns) {
        FeatureColumn col;
        col.name = def.name;
        col.kind = def.kind;
        if (def.kind == ValueKind::numeric) {
            col.numbers.reserve(instances.size());
        } else {
            col.labels.reserve(instances.size());
        }
        matrix.columns.push_back(std::move(col));
    }

    const DatasetSchema& schema = dataset.schema();
    std::vector<std::vector<std::size_t>> specs_by_table(dataset.secondary_count());
    for (std::size_t s = 0; s < compiled.size(); ++s) {
        if (!compiled[s].native) {
            specs_by_table[compiled[s].table].push_back(s);
        }
    }
    std::vector<std::optional<std::size_t>> date_field(dataset.secondary_count());
    for (std::size_t t = 0; t < dataset.secondary_count(); ++t) {
        if (!schema.secondaries[t].date_field.empty()) {
            date_field[t] = schema.secondaries[t].field_index(schema.secondaries[t].date_field);
        }
    }
    std::vector<std::vector<Accumulator>> accs(compiled.size());
    for (std::size_t s = 0; s < compiled.size(); ++s) {
        accs[s].resize(compiled[s].outputs.size());
    }
    std::vector<std::size_t> window_rows;

    for (const auto& inst : instances) {
        for (std::size_t s = 0; s < compiled.size(); ++s) {
            const CompiledSpec& cs = compiled[s];
            if (!cs.native) {
                continue;
            }
            FeatureColumn& col = matrix.columns[cs.outputs.front()];
            const Column& src = dataset.root().column(cs.native_field);
            if (src.is_missing(inst.root_row)) {
                if (col.kind == ValueKind::numeric) {
                    col.numbers.emplace_back(std::nullopt);
                } else {
                    col.labels.emplace_back(std::nullopt);
                }
            } else if (cs.native_kind == FieldKind::numeric) {
                col.numbers.emplace_back(src.number(inst.root_row));
            } else if (cs.native_kind == FieldKind::date) {
                col.numbers.emplace_back(static_cast<double>(plan.anchor - src.date(inst.root_row).to_month()));
            } else {
                col.labels.emplace_back(src.label(src.code(inst.root_row)));
            }
        }
        for (std::size_t t = 0; t < dataset.secondary_count(); ++t) {
            if (specs_by_table[t].empty()) {
                continue;
            }
            const TableData& data = dataset.secondary(t);
            window_rows.clear();
            for (std::size_t r : dataset.rows_for(t, inst.root_row)) {
                if (date_field[t]) {
                    const Column& dates = data.column(*date_field[t]);
                    if (dates.is_missing(r)) {
                        continue;
                    }
                    Month m = dates.date(r).to_month();
                    if (m < plan.obs_first() || m > plan.obs_last()) {
                        continue;
                    }
                }
                window_rows.push_back(r);
            }
            for (std::size_t s : specs_by_table[t]) {
                const CompiledSpec& cs = compiled[s];
                for (auto& acc : accs[s]) {
                    acc.reset();
                }
                for (std::size_t r : window_rows) {
                    if (cs.selector_field) {
                        std::int32_t code = data.column(*cs.selector_field).code(r);
                        if (cs.selector_code < 0 || code != cs.selector_code) {
                            continue;
                        }
                    }
                    long combo = row_combo(cs, data, r, plan);
                    if (combo < 0) {
                        continue;
                    }
                    int local = cs.combo_to_local[static_cast<std::size_t>(combo)];
                    if (local < 0) {
                        continue;
                    }
                    accumulate(cs, data, r, plan, accs[s][static_cast<std::size_t>(local)]);
                }
                for (std::size_t local = 0; local < cs.outputs.size(); ++local) {
                    emit(cs, data, accs[s][local], matrix.columns[cs.outputs[local]]);
                }
            }
        }
    }
    return matrix;
}

FeatureMatrix materialize(const Dataset& dataset, const LabeledFrame& frame, std::vector<FeatureSpec> specs) {
    FeaturePlan plan = resolve_columns(dataset, frame.plan, std::move(specs));
    return materialize(dataset, frame.plan, frame.instances, plan);
}

void write_matrix(const FeatureMatrix& matrix, std::ostream& out, char delimiter) {
    std::vector<std::string> record{"id", "label"};
    for (const auto& c : matrix.columns) {
        record.push_back(c.name);
    }
    io::write_record(out, record, delimiter);
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        record.clear();
        record.push_back(matrix.ids[r]);
        record.push_back(matrix.labels.empty() || matrix.labels[r] < 0 ? "" : std::to_string(matrix.labels[r]));
        for (const auto& c : matrix.columns) {
            if (c.kind == ValueKind::numeric) {
                record.push_back(c.numbers[r] ? io::format_double(*c.numbers[r]) : "");
            } else {
                record.push_back(c.labels[r] ? *c.labels[r] : "");
            }
        }
        io::write_record(out, record, delimiter);
    }
}

}  // namespace churn
