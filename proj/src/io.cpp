#include "churn/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "churn/error.hpp"

namespace churn::io {

std::vector<std::string> split_record(std::string_view line, char delimiter) {
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    bool at_field_start = true;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(ch);
            }
            continue;
        }
        if (ch == delimiter) {
            fields.push_back(std::move(current));
            current.clear();
            at_field_start = true;
            continue;
        }
        if (ch == '"' && at_field_start) {
            quoted = true;
            at_field_start = false;
            continue;
        }
        current.push_back(ch);
        at_field_start = false;
    }
    fields.push_back(std::move(current));
    return fields;
}

std::string quote_field(std::string_view field, char delimiter) {
    bool needs = field.find(delimiter) != std::string_view::npos ||
                 field.find('"') != std::string_view::npos ||
                 field.find('\n') != std::string_view::npos ||
                 field.find('\r') != std::string_view::npos;
    if (!needs) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') {
            out.push_back('"');
        }
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

void write_record(std::ostream& out, const std::vector<std::string>& fields, char delimiter) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) {
            out.put(delimiter);
        }
        out << quote_field(fields[i], delimiter);
    }
    out.put('\n');
}

std::string format_double(double value) {
    if (std::isnan(value)) {
        return "nan";
    }
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::configuration, "io", "cannot open file '" + path.string() + "'",
                    "check the path exists and is readable");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorKind::configuration, "io", "cannot write '" + tmp.string() + "'",
                        "check the output directory is writable");
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw Error(ErrorKind::configuration, "io", "write failed for '" + tmp.string() + "'");
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace churn::io
