#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace churn::io {

// Splits one delimited record. Fields may be double-quoted ("" escapes a quote).
std::vector<std::string> split_record(std::string_view line, char delimiter);
// Quotes a field only when it contains the delimiter, a quote or a line break.
std::string quote_field(std::string_view field, char delimiter);
void write_record(std::ostream& out, const std::vector<std::string>& fields, char delimiter);

// Shortest round-trip decimal form.
std::string format_double(double value);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace churn::io
