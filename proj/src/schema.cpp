#include "churn/schema.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <set>
#include <sstream>

#include "churn/error.hpp"
#include "churn/io.hpp"
#include "json.hpp"

namespace churn {
namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& message) {
    throw Error(ErrorKind::configuration, "schema", message, "fix the schema descriptor");
}

[[noreturn]] void data_error(const std::string& message, std::string hint = {}) {
    throw Error(ErrorKind::data, "schema", message, std::move(hint));
}

std::string trim(std::string_view text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) {
        ++begin;
    }
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) {
        --end;
    }
    return std::string(text.substr(begin, end - begin));
}

std::string lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string get_string(const json& object, const char* key, const std::string& where) {
    auto it = object.find(key);
    if (it == object.end()) {
        return {};
    }
    if (!it->is_string()) {
        schema_error(where + ": '" + key + "' must be a string");
    }
    return it->get<std::string>();
}

TableSchema parse_table(const json& node) {
    if (!node.is_object()) {
        schema_error("every table entry must be an object");
    }
    TableSchema table;
    table.name = get_string(node, "name", "table");
    if (table.name.empty()) {
        schema_error("table without a name");
    }
    const std::string where = "table '" + table.name + "'";
    std::string role = get_string(node, "role", where);
    if (role == "root") {
        table.role = TableRole::root;
    } else if (role == "secondary" || role.empty()) {
        table.role = TableRole::secondary;
    } else {
        schema_error(where + ": unknown role '" + role + "'");
    }
    table.key_field = get_string(node, "key", where);
    table.foreign_key = get_string(node, "foreign_key", where);
    table.date_field = get_string(node, "date_field", where);
    table.file = get_string(node, "file", where);

    auto fields = node.find("fields");
    if (fields == node.end() || !fields->is_array()) {
        schema_error(where + ": 'fields' must be an array");
    }
    std::set<std::string> seen;
    for (const auto& f : *fields) {
        if (!f.is_object()) {
            schema_error(where + ": field entries must be objects");
        }
        FieldSchema field;
        field.name = get_string(f, "name", where);
        if (field.name.empty()) {
            schema_error(where + ": field without a name");
        }
        std::string kind = get_string(f, "kind", where + " field '" + field.name + "'");
        auto parsed = parse_field_kind(kind);
        if (!parsed) {
            schema_error(where + ": unknown kind '" + kind + "' for field '" + field.name + "'");
        }
        field.kind = *parsed;
        if (!seen.insert(field.name).second) {
            schema_error(where + ": duplicate field name '" + field.name + "'");
        }
        table.fields.push_back(std::move(field));
    }
    return table;
}

void validate(const DatasetSchema& schema, const std::vector<std::string>& references) {
    const TableSchema& root = schema.root;
    if (root.key_field.empty()) {
        schema_error("root table '" + root.name + "' has no key");
    }
    const FieldSchema* key = root.find_field(root.key_field);
    if (key == nullptr) {
        schema_error("root table '" + root.name + "': key field '" + root.key_field + "' is not declared");
    }
    if (key->kind != FieldKind::identifier) {
        schema_error("root table '" + root.name + "': key field '" + root.key_field + "' must be an identifier");
    }
    for (std::size_t i = 0; i < schema.secondaries.size(); ++i) {
        const TableSchema& t = schema.secondaries[i];
        const std::string where = "table '" + t.name + "'";
        if (t.foreign_key.empty()) {
            schema_error(where + ": missing foreign_key");
        }
        const FieldSchema* fk = t.find_field(t.foreign_key);
        if (fk == nullptr) {
            schema_error(where + ": foreign_key field '" + t.foreign_key + "' is not declared");
        }
        if (fk->kind != FieldKind::identifier && fk->kind != FieldKind::categorical) {
            schema_error(where + ": foreign_key field '" + t.foreign_key + "' must be an identifier");
        }
        if (!references[i].empty() && references[i] != root.key_field) {
            schema_error(where + ": foreign_key references '" + references[i] + "', but the root key is '" +
                         root.key_field + "'");
        }
        if (!t.key_field.empty() && t.find_field(t.key_field) == nullptr) {
            schema_error(where + ": key field '" + t.key_field + "' is not declared");
        }
        if (!t.date_field.empty()) {
            const FieldSchema* d = t.find_field(t.date_field);
            if (d == nullptr || d->kind != FieldKind::date) {
                schema_error(where + ": date_field '" + t.date_field + "' must be a declared date field");
            }
        }
    }
}

std::optional<bool> parse_flag(std::string_view text) {
    std::string t = lower(text);
    if (t == "true" || t == "1" || t == "yes" || t == "t" || t == "y") {
        return true;
    }
    if (t == "false" || t == "0" || t == "no" || t == "f" || t == "n") {
        return false;
    }
    return std::nullopt;
}

std::optional<double> parse_number(std::string_view text) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = text.data() + text.size();
    if (begin != end && *begin == '+') {
        ++begin;
    }
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || std::isnan(value)) {
        return std::nullopt;
    }
    return value;
}

}  // namespace

const char* to_string(FieldKind kind) {
    switch (kind) {
        case FieldKind::numeric: return "numeric";
        case FieldKind::categorical: return "categorical";
        case FieldKind::date: return "date";
        case FieldKind::identifier: return "identifier";
        case FieldKind::flag: return "flag";
    }
    return "?";
}

std::optional<FieldKind> parse_field_kind(std::string_view text) {
    for (FieldKind k : {FieldKind::numeric, FieldKind::categorical, FieldKind::date, FieldKind::identifier,
                        FieldKind::flag}) {
        if (text == to_string(k)) {
            return k;
        }
    }
    return std::nullopt;
}

std::optional<std::size_t> TableSchema::field_index(std::string_view field) const {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (fields[i].name == field) {
            return i;
        }
    }
    return std::nullopt;
}

const FieldSchema* TableSchema::find_field(std::string_view field) const {
    auto idx = field_index(field);
    return idx ? &fields[*idx] : nullptr;
}

const TableSchema* DatasetSchema::find_secondary(std::string_view table) const {
    for (const auto& t : secondaries) {
        if (t.name == table) {
            return &t;
        }
    }
    return nullptr;
}

DatasetSchema load_schema(std::string_view descriptor_text, std::filesystem::path base_dir) {
    json doc;
    try {
        doc = json::parse(descriptor_text);
    } catch (const json::parse_error& e) {
        schema_error(std::string("descriptor is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) {
        schema_error("descriptor must be a JSON object");
    }
    DatasetSchema schema;
    schema.base_dir = std::move(base_dir);
    std::string delimiter = get_string(doc, "delimiter", "descriptor");
    if (delimiter == "\\t") {
        delimiter = "\t";
    }
    if (!delimiter.empty()) {
        if (delimiter.size() != 1) {
            schema_error("delimiter must be a single character");
        }
        schema.delimiter = delimiter[0];
    }
    auto tables = doc.find("tables");
    if (tables == doc.end() || !tables->is_array()) {
        schema_error("descriptor needs a 'tables' array");
    }
    std::set<std::string> names;
    std::vector<std::string> references;
    bool have_root = false;
    for (const auto& node : *tables) {
        TableSchema table = parse_table(node);
        if (!names.insert(table.name).second) {
            schema_error("duplicate table name '" + table.name + "'");
        }
        if (table.role == TableRole::root) {
            if (have_root) {
                schema_error("multiple root tables ('" + schema.root.name + "' and '" + table.name + "')");
            }
            have_root = true;
            schema.root = std::move(table);
        } else {
            references.push_back(get_string(node, "references", "table '" + table.name + "'"));
            schema.secondaries.push_back(std::move(table));
        }
    }
    if (!have_root) {
        schema_error("no root table declared");
    }
    validate(schema, references);
    return schema;
}

DatasetSchema load_schema_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorKind::configuration, "schema", "schema descriptor not found: '" + path.string() + "'",
                    "pass an existing descriptor path");
    }
    return load_schema(io::read_file(path), path.parent_path());
}

std::string to_descriptor(const DatasetSchema& schema) {
    auto table_json = [](const TableSchema& t) {
        nlohmann::ordered_json node;
        node["name"] = t.name;
        node["role"] = t.role == TableRole::root ? "root" : "secondary";
        if (!t.key_field.empty()) {
            node["key"] = t.key_field;
        }
        if (!t.foreign_key.empty()) {
            node["foreign_key"] = t.foreign_key;
        }
        if (!t.date_field.empty()) {
            node["date_field"] = t.date_field;
        }
        if (!t.file.empty()) {
            node["file"] = t.file;
        }
        auto fields = nlohmann::ordered_json::array();
        for (const auto& f : t.fields) {
            fields.push_back({{"name", f.name}, {"kind", to_string(f.kind)}});
        }
        node["fields"] = std::move(fields);
        return node;
    };
    nlohmann::ordered_json doc;
    doc["delimiter"] = std::string(1, schema.delimiter);
    doc["tables"] = nlohmann::ordered_json::array();
    doc["tables"].push_back(table_json(schema.root));
    for (const auto& t : schema.secondaries) {
        doc["tables"].push_back(table_json(t));
    }
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Column

Column::Column(FieldKind kind) : kind_(kind) {
    if (kind_ == FieldKind::flag) {
        dictionary_ = {"false", "true"};
        lookup_ = {{"false", 0}, {"true", 1}};
    }
}

std::size_t Column::size() const {
    switch (kind_) {
        case FieldKind::numeric: return numbers_.size();
        case FieldKind::date: return dates_.size();
        default: return codes_.size();
    }
}

std::int32_t Column::intern(const std::string& label) {
    auto [it, inserted] = lookup_.try_emplace(label, static_cast<std::int32_t>(dictionary_.size()));
    if (inserted) {
        dictionary_.push_back(label);
    }
    return it->second;
}

void Column::push(const Cell& cell) {
    const bool missing = std::holds_alternative<Missing>(cell);
    switch (kind_) {
        case FieldKind::numeric:
            numbers_.push_back(missing ? std::numeric_limits<double>::quiet_NaN() : std::get<double>(cell));
            break;
        case FieldKind::date:
            dates_.push_back(missing ? Date{} : std::get<Date>(cell));
            break;
        case FieldKind::flag:
            codes_.push_back(missing ? -1 : (std::get<bool>(cell) ? 1 : 0));
            break;
        case FieldKind::categorical:
        case FieldKind::identifier:
            codes_.push_back(missing ? -1 : intern(std::get<std::string>(cell)));
            break;
    }
}

bool Column::is_missing(std::size_t row) const {
    switch (kind_) {
        case FieldKind::numeric: return std::isnan(numbers_[row]);
        case FieldKind::date: return dates_[row].year == 0;
        default: return codes_[row] < 0;
    }
}

Cell Column::cell(std::size_t row) const {
    if (is_missing(row)) {
        return Missing{};
    }
    switch (kind_) {
        case FieldKind::numeric: return numbers_[row];
        case FieldKind::date: return dates_[row];
        case FieldKind::flag: return codes_[row] == 1;
        default: return dictionary_[static_cast<std::size_t>(codes_[row])];
    }
}

std::optional<std::int32_t> Column::find_code(std::string_view label) const {
    auto it = lookup_.find(std::string(label));
    if (it == lookup_.end()) {
        return std::nullopt;
    }
    return it->second;
}

// ---------------------------------------------------------------------------
// TableData

TableData::TableData(TableSchema schema) : schema_(std::move(schema)) {
    columns_.reserve(schema_.fields.size());
    for (const auto& f : schema_.fields) {
        columns_.emplace_back(f.kind);
    }
}

const Column& TableData::column(std::string_view field) const {
    auto idx = schema_.field_index(field);
    if (!idx) {
        throw Error(ErrorKind::configuration, "schema",
                    "table '" + schema_.name + "' has no field '" + std::string(field) + "'");
    }
    return columns_[*idx];
}

void TableData::append_row(std::span<const Cell> cells) {
    if (cells.size() != columns_.size()) {
        data_error("table '" + schema_.name + "': row arity " + std::to_string(cells.size()) + " != " +
                   std::to_string(columns_.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const Cell& c = cells[i];
        bool ok = std::holds_alternative<Missing>(c);
        switch (columns_[i].kind()) {
            case FieldKind::numeric: ok = ok || std::holds_alternative<double>(c); break;
            case FieldKind::date: ok = ok || std::holds_alternative<Date>(c); break;
            case FieldKind::flag: ok = ok || std::holds_alternative<bool>(c); break;
            default: ok = ok || std::holds_alternative<std::string>(c); break;
        }
        if (!ok) {
            data_error("table '" + schema_.name + "': cell type does not match field '" +
                       schema_.fields[i].name + "'");
        }
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        columns_[i].push(cells[i]);
    }
    ++rows_;
}

std::string format_cell(const Cell& cell) {
    struct Visitor {
        std::string operator()(Missing) const { return {}; }
        std::string operator()(double v) const { return io::format_double(v); }
        std::string operator()(const std::string& s) const { return s; }
        std::string operator()(const Date& d) const { return d.to_string(); }
        std::string operator()(bool b) const { return b ? "true" : "false"; }
    };
    return std::visit(Visitor{}, cell);
}

TableData load_table(const TableSchema& schema, std::istream& in, char delimiter, LoadReport* report) {
    TableData table(schema);
    std::string line;
    if (!std::getline(in, line)) {
        data_error("table '" + schema.name + "': file is empty (no header row)");
    }
    auto header = io::split_record(line, delimiter);
    std::vector<std::size_t> source(schema.fields.size());
    for (std::size_t f = 0; f < schema.fields.size(); ++f) {
        auto it = std::find_if(header.begin(), header.end(),
                               [&](const std::string& h) { return trim(h) == schema.fields[f].name; });
        if (it == header.end()) {
            data_error("table '" + schema.name + "': missing header column '" + schema.fields[f].name + "'",
                       "the data file header must list every declared field");
        }
        source[f] = static_cast<std::size_t>(it - header.begin());
    }

    const bool is_root = schema.role == TableRole::root;
    const auto key_index = is_root ? schema.field_index(schema.key_field) : std::nullopt;
    std::set<std::string> keys;
    std::size_t line_no = 1;
    std::vector<Cell> cells(schema.fields.size());
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        auto raw = io::split_record(line, delimiter);
        if (raw.size() < header.size()) {
            data_error("table '" + schema.name + "' line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, found " + std::to_string(raw.size()));
        }
        for (std::size_t f = 0; f < schema.fields.size(); ++f) {
            std::string text = trim(raw[source[f]]);
            if (text.empty()) {
                cells[f] = Missing{};
                continue;
            }
            bool coerced = false;
            switch (schema.fields[f].kind) {
                case FieldKind::numeric: {
                    auto v = parse_number(text);
                    coerced = !v;
                    cells[f] = v ? Cell{*v} : Cell{Missing{}};
                    break;
                }
                case FieldKind::date: {
                    auto d = Date::parse(text);
                    coerced = !d;
                    cells[f] = d ? Cell{*d} : Cell{Missing{}};
                    break;
                }
                case FieldKind::flag: {
                    auto b = parse_flag(text);
                    coerced = !b;
                    cells[f] = b ? Cell{*b} : Cell{Missing{}};
                    break;
                }
                default:
                    cells[f] = std::move(text);
                    break;
            }
            if (coerced && report != nullptr) {
                ++report->coerced_cells;
                if (report->warnings.size() < 100) {
                    report->warnings.push_back("table '" + schema.name + "' line " + std::to_string(line_no) +
                                               ": unparseable " + to_string(schema.fields[f].kind) +
                                               " value in '" + schema.fields[f].name + "' treated as Missing");
                }
            }
        }
        if (key_index) {
            const Cell& key = cells[*key_index];
            if (std::holds_alternative<Missing>(key)) {
                data_error("table '" + schema.name + "' line " + std::to_string(line_no) + ": missing root key");
            }
            if (!keys.insert(std::get<std::string>(key)).second) {
                data_error("table '" + schema.name + "': root key not unique ('" + std::get<std::string>(key) +
                               "')",
                           "each customer must appear once in the root table");
            }
        }
        table.append_row(cells);
    }
    return table;
}

TableData load_table_file(const TableSchema& schema, const std::filesystem::path& path, char delimiter,
                          LoadReport* report) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::data, "schema", "cannot open data file '" + path.string() + "'",
                    "check the 'file' entry of table '" + schema.name + "'");
    }
    return load_table(schema, in, delimiter, report);
}

void write_table(const TableData& table, std::ostream& out, char delimiter) {
    std::vector<std::string> record;
    for (const auto& f : table.schema().fields) {
        record.push_back(f.name);
    }
    io::write_record(out, record, delimiter);
    for (std::size_t r = 0; r < table.row_count(); ++r) {
        for (std::size_t f = 0; f < table.field_count(); ++f) {
            record[f] = format_cell(table.cell(r, f));
        }
        io::write_record(out, record, delimiter);
    }
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(DatasetSchema schema, TableData root, std::vector<TableData> secondaries)
    : schema_(std::move(schema)), root_(std::move(root)), secondaries_(std::move(secondaries)) {
    if (secondaries_.size() != schema_.secondaries.size()) {
        throw Error(ErrorKind::data, "schema", "dataset has " + std::to_string(secondaries_.size()) +
                                                   " secondary tables, schema declares " +
                                                   std::to_string(schema_.secondaries.size()));
    }
    key_field_ = *schema_.root.field_index(schema_.root.key_field);
    const Column& keys = root_.column(key_field_);
    for (std::size_t r = 0; r < root_.row_count(); ++r) {
        if (keys.is_missing(r)) {
            throw Error(ErrorKind::data, "schema", "root row " + std::to_string(r) + " has no key");
        }
        if (!root_lookup_.emplace(keys.label(keys.code(r)), r).second) {
            throw Error(ErrorKind::data, "schema", "root key not unique ('" + keys.label(keys.code(r)) + "')");
        }
    }
    const std::size_t n = root_.row_count();
    links_.resize(secondaries_.size());
    for (std::size_t s = 0; s < secondaries_.size(); ++s) {
        const TableData& table = secondaries_[s];
        const Column& fk = table.column(table.schema().foreign_key);
        // Map each distinct foreign key code to its root row once.
        std::vector<std::ptrdiff_t> code_to_root(fk.dictionary().size(), -1);
        for (std::size_t c = 0; c < fk.dictionary().size(); ++c) {
            auto it = root_lookup_.find(fk.dictionary()[c]);
            if (it != root_lookup_.end()) {
                code_to_root[c] = static_cast<std::ptrdiff_t>(it->second);
            }
        }
        Links& links = links_[s];
        links.offsets.assign(n + 1, 0);
        std::vector<std::ptrdiff_t> owner(table.row_count(), -1);
        for (std::size_t r = 0; r < table.row_count(); ++r) {
            std::int32_t code = fk.code(r);
            if (code >= 0 && code_to_root[static_cast<std::size_t>(code)] >= 0) {
                owner[r] = code_to_root[static_cast<std::size_t>(code)];
                ++links.offsets[static_cast<std::size_t>(owner[r]) + 1];
            } else {
                ++links.orphans;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            links.offsets[i + 1] += links.offsets[i];
        }
        links.rows.resize(links.offsets[n]);
        std::vector<std::size_t> cursor(links.offsets.begin(), links.offsets.end() - 1);
        for (std::size_t r = 0; r < table.row_count(); ++r) {
            if (owner[r] >= 0) {
                links.rows[cursor[static_cast<std::size_t>(owner[r])]++] = r;
            }
        }
    }
}

const std::string& Dataset::customer_id(std::size_t root_row) const {
    const Column& keys = root_.column(key_field_);
    return keys.label(keys.code(root_row));
}

std::optional<std::size_t> Dataset::root_row(std::string_view key) const {
    auto it = root_lookup_.find(std::string(key));
    if (it == root_lookup_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<std::size_t> Dataset::secondary_index(std::string_view table) const {
    for (std::size_t i = 0; i < schema_.secondaries.size(); ++i) {
        if (schema_.secondaries[i].name == table) {
            return i;
        }
    }
    return std::nullopt;
}

std::span<const std::size_t> Dataset::rows_for(std::size_t table, std::size_t root_row) const {
    const Links& links = links_[table];
    return std::span<const std::size_t>(links.rows).subspan(links.offsets[root_row],
                                                            links.offsets[root_row + 1] - links.offsets[root_row]);
}

Dataset load_dataset(const DatasetSchema& schema, LoadReport* report) {
    auto path_of = [&](const TableSchema& t) {
        std::filesystem::path file = t.file.empty() ? std::filesystem::path(t.name + ".tsv") : std::filesystem::path(t.file);
        return file.is_absolute() ? file : schema.base_dir / file;
    };
    TableData root = load_table_file(schema.root, path_of(schema.root), schema.delimiter, report);
    std::vector<TableData> secondaries;
    for (const auto& t : schema.secondaries) {
        secondaries.push_back(load_table_file(t, path_of(t), schema.delimiter, report));
    }
    Dataset dataset(schema, std::move(root), std::move(secondaries));
    if (report != nullptr) {
        for (std::size_t s = 0; s < dataset.secondary_count(); ++s) {
            if (dataset.orphan_count(s) > 0) {
                report->warnings.push_back("table '" + schema.secondaries[s].name + "': " +
                                           std::to_string(dataset.orphan_count(s)) +
                                           " orphan rows excluded from aggregation");
            }
        }
    }
    return dataset;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    DatasetSchema schema = dataset.schema();
    auto file_of = [](TableSchema& t) {
        if (t.file.empty()) {
            t.file = t.name + ".tsv";
        }
        return t.file;
    };
    auto write_one = [&](const TableData& table, const std::string& file) {
        std::ostringstream out;
        write_table(table, out, schema.delimiter);
        io::write_atomic(dir / file, out.str());
    };
    write_one(dataset.root(), file_of(schema.root));
    for (std::size_t s = 0; s < dataset.secondary_count(); ++s) {
        write_one(dataset.secondary(s), file_of(schema.secondaries[s]));
    }
    io::write_atomic(dir / "schema.json", to_descriptor(schema));
}

}  // namespace churn
