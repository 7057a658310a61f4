#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "churn/calendar.hpp"

namespace churn {

enum class FieldKind { numeric, categorical, date, identifier, flag };

const char* to_string(FieldKind kind);
std::optional<FieldKind> parse_field_kind(std::string_view text);

struct FieldSchema {
    std::string name;
    FieldKind kind = FieldKind::categorical;
};

enum class TableRole { root, secondary };

struct TableSchema {
    std::string name;
    TableRole role = TableRole::secondary;
    std::string key_field;    // required for the root, optional for secondaries
    std::string foreign_key;  // secondaries: field holding the root key
    std::string date_field;   // secondaries: rows are windowed on this date; empty = timeless
    std::string file;         // data file, relative to the descriptor directory
    std::vector<FieldSchema> fields;

    std::optional<std::size_t> field_index(std::string_view field) const;
    const FieldSchema* find_field(std::string_view field) const;
};

struct DatasetSchema {
    TableSchema root;
    std::vector<TableSchema> secondaries;
    char delimiter = '\t';
    std::filesystem::path base_dir;

    const TableSchema* find_secondary(std::string_view table) const;
};

/// Parses and validates a JSON schema descriptor.
///
/// Grammar:
///   { "delimiter": "\t",
///     "tables": [ { "name": str, "role": "root" | "secondary",
///                   "key": str, "foreign_key": str, "references": str,
///                   "date_field": str, "file": str,
///                   "fields": [ { "name": str, "kind": kind }, ... ] }, ... ] }
///   kind := "numeric" | "categorical" | "date" | "identifier" | "flag"
///
/// Throws Error(configuration) naming the offending table or field.
DatasetSchema load_schema(std::string_view descriptor_text, std::filesystem::path base_dir = {});
DatasetSchema load_schema_file(const std::filesystem::path& path);
std::string to_descriptor(const DatasetSchema& schema);

using Missing = std::monostate;
using Cell = std::variant<Missing, double, std::string, Date, bool>;

// Typed column storage. Categorical, identifier and flag cells are dictionary
// coded; code -1 is Missing. Numeric Missing is NaN; date Missing is Date{}.
class Column {
public:
    explicit Column(FieldKind kind);

    FieldKind kind() const { return kind_; }
    std::size_t size() const;

    void push(const Cell& cell);
    Cell cell(std::size_t row) const;
    bool is_missing(std::size_t row) const;

    double number(std::size_t row) const { return numbers_[row]; }
    const Date& date(std::size_t row) const { return dates_[row]; }
    std::int32_t code(std::size_t row) const { return codes_[row]; }
    const std::string& label(std::int32_t code) const { return dictionary_[static_cast<std::size_t>(code)]; }
    const std::vector<std::string>& dictionary() const { return dictionary_; }
    std::optional<std::int32_t> find_code(std::string_view label) const;

private:
    std::int32_t intern(const std::string& label);

    FieldKind kind_;
    std::vector<double> numbers_;
    std::vector<Date> dates_;
    std::vector<std::int32_t> codes_;
    std::vector<std::string> dictionary_;
    std::unordered_map<std::string, std::int32_t> lookup_;
};

struct LoadReport {
    std::size_t coerced_cells = 0;  // unparseable numeric/date/flag cells turned Missing
    std::vector<std::string> warnings;
};

class TableData {
public:
    explicit TableData(TableSchema schema);

    const TableSchema& schema() const { return schema_; }
    std::size_t row_count() const { return rows_; }
    std::size_t field_count() const { return columns_.size(); }

    const Column& column(std::size_t field) const { return columns_[field]; }
    const Column& column(std::string_view field) const;

    // Row arity must equal schema arity and every cell must match its field
    // kind (or be Missing); otherwise throws Error(data).
    void append_row(std::span<const Cell> cells);
    Cell cell(std::size_t row, std::size_t field) const { return columns_[field].cell(row); }

private:
    TableSchema schema_;
    std::vector<Column> columns_;
    std::size_t rows_ = 0;
};

/// Reads a delimited file with a header row. Header order is free; every
/// declared field must appear. Empty cells are Missing; unparseable typed
/// cells become Missing and are counted in the report.
TableData load_table(const TableSchema& schema, std::istream& in, char delimiter = '\t',
                     LoadReport* report = nullptr);
TableData load_table_file(const TableSchema& schema, const std::filesystem::path& path,
                          char delimiter = '\t', LoadReport* report = nullptr);
void write_table(const TableData& table, std::ostream& out, char delimiter = '\t');
std::string format_cell(const Cell& cell);

/// Root table plus secondaries, with the 1-N index from each root row to its
/// secondary rows. Immutable once built.
class Dataset {
public:
    Dataset(DatasetSchema schema, TableData root, std::vector<TableData> secondaries);

    const DatasetSchema& schema() const { return schema_; }
    const TableData& root() const { return root_; }
    std::size_t customer_count() const { return root_.row_count(); }
    const std::string& customer_id(std::size_t root_row) const;
    std::optional<std::size_t> root_row(std::string_view key) const;

    std::size_t secondary_count() const { return secondaries_.size(); }
    const TableData& secondary(std::size_t index) const { return secondaries_[index]; }
    std::optional<std::size_t> secondary_index(std::string_view table) const;

    // Rows of secondary `table` whose foreign key equals the given root row.
    std::span<const std::size_t> rows_for(std::size_t table, std::size_t root_row) const;
    std::size_t orphan_count(std::size_t table) const { return links_[table].orphans; }

private:
    struct Links {
        std::vector<std::size_t> offsets;  // CSR over root rows
        std::vector<std::size_t> rows;
        std::size_t orphans = 0;
    };

    DatasetSchema schema_;
    TableData root_;
    std::vector<TableData> secondaries_;
    std::size_t key_field_ = 0;
    std::unordered_map<std::string, std::size_t> root_lookup_;
    std::vector<Links> links_;
};

Dataset load_dataset(const DatasetSchema& schema, LoadReport* report = nullptr);
// Writes schema.json plus one file per table into `dir`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace churn
