#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace xmf::csv {

/// A parsed comma-separated file with a header row. Fields are trimmed;
/// quoting is not supported (none of the engine's formats need it).
struct Table {
    std::filesystem::path source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    /// 1-based line number of each row in the source file, for error messages.
    std::vector<std::size_t> line_numbers;

    /// Column position by name; throws when absent.
    std::size_t column(std::string_view name) const;
    bool has_column(std::string_view name) const;
};

Table read(const std::filesystem::path& path);
Table parse(std::string_view text, const std::filesystem::path& label = "<memory>");

std::vector<std::string> split_line(std::string_view line);

double to_double(std::string_view field, const Table& t, std::size_t row);
bool to_bool(std::string_view field);

/// Writes `contents` to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace xmf::csv
