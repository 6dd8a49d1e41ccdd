#include "xmf/csv.hpp"

#include "xmf/common.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/core.h>

namespace xmf::csv {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

}  // namespace

std::vector<std::string> split_line(std::string_view line)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

std::size_t Table::column(std::string_view name) const
{
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
        throw Error(fmt::format("{}: missing column '{}'", source.string(), name));
    return static_cast<std::size_t>(it - header.begin());
}

bool Table::has_column(std::string_view name) const
{
    return std::find(header.begin(), header.end(), name) != header.end();
}

Table parse(std::string_view text, const std::filesystem::path& label)
{
    Table t;
    t.source = label;
    std::size_t line_no = 0;
    std::size_t start = 0;
    // Strip a UTF-8 byte-order mark if present.
    if (text.substr(0, 3) == "\xEF\xBB\xBF")
        start = 3;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos)
            end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        ++line_no;
        start = end + 1;
        if (trim(line).empty()) {
            if (end == text.size())
                break;
            continue;
        }
        auto fields = split_line(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
        } else {
            if (fields.size() != t.header.size())
                throw Error(fmt::format("{}:{}: expected {} fields, found {}", label.string(), line_no,
                                        t.header.size(), fields.size()));
            t.rows.push_back(std::move(fields));
            t.line_numbers.push_back(line_no);
        }
        if (end == text.size())
            break;
    }
    if (t.header.empty())
        throw Error(fmt::format("{}: empty file (no header row)", label.string()));
    return t;
}

Table read(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(fmt::format("cannot open '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

double to_double(std::string_view field, const Table& t, std::size_t row)
{
    if (field.empty() || field == "NA" || field == "nan" || field == "NaN")
        return kMissing;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw Error(fmt::format("{}:{}: not a number: '{}'", t.source.string(), t.line_numbers.at(row), field));
    return value;
}

bool to_bool(std::string_view field)
{
    std::string lower(field);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "1" || lower == "true" || lower == "yes" || lower == "y")
        return true;
    if (lower == "0" || lower == "false" || lower == "no" || lower == "n")
        return false;
    throw Error(fmt::format("not a boolean: '{}'", field));
}

void write_atomic(const std::filesystem::path& path, std::string_view contents)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(fmt::format("cannot write '{}'", tmp.string()));
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out)
            throw Error(fmt::format("write failed for '{}'", tmp.string()));
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace xmf::csv
