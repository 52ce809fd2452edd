#ifndef PHOTON_ATOM_CSV_HPP
#define PHOTON_ATOM_CSV_HPP

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <photon_atom/errors.hpp>

namespace photon_atom {

inline constexpr std::string_view version = "0.1.0";

/// 64-bit FNV-1a; used to stamp output files with the hash of their inputs.
inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 0xcbf29ce484222325ULL)
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// First line of every file written by the tools.
inline std::string provenance_line(std::uint64_t input_hash)
{
    return "# photon-atom " + std::string(version) + " input=" + hex64(input_hash);
}

/// Shortest round-trippable decimal representation of a double.
inline std::string fmt_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // trim to the shortest representation that parses back identically
    for (int prec = 6; prec < 17; ++prec) {
        char trial[32];
        std::snprintf(trial, sizeof trial, "%.*g", prec, v);
        if (std::strtod(trial, nullptr) == v)
            return trial;
    }
    return buf;
}

/// Numeric CSV table: one header line of column names, then rows.
/// Lines starting with '#' and blank lines are skipped.
struct CsvTable
{
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::size_t column(std::string_view name) const
    {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name)
                return i;
        throw DataFormatError("CSV is missing column '" + std::string(name) + "'");
    }

    std::vector<double> values(std::string_view name) const
    {
        const auto c = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows)
            out.push_back(r[c]);
        return out;
    }
};

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line)
{
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{}
                                             : field.substr(b, e - b + 1));
    }
    return out;
}

} // namespace detail

inline CsvTable read_csv(std::istream& in)
{
    CsvTable table;
    std::string line;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#' ||
            line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        auto fields = detail::split_fields(line);
        if (!have_header) {
            table.columns = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.columns.size())
            throw DataFormatError("CSV line " + std::to_string(line_no) +
                                  ": expected " +
                                  std::to_string(table.columns.size()) +
                                  " fields");
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) {
            char* end = nullptr;
            const double v = std::strtod(f.c_str(), &end);
            if (f.empty() || end != f.c_str() + f.size())
                throw DataFormatError("CSV line " + std::to_string(line_no) +
                                      ": not a number: '" + f + "'");
            row.push_back(v);
        }
        table.rows.push_back(std::move(row));
    }
    if (!have_header)
        throw DataFormatError("CSV has no header line");
    return table;
}

inline CsvTable read_csv_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataFormatError("cannot open '" + path + "'");
    return read_csv(in);
}

inline std::string read_text_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataFormatError("cannot write '" + path + "'");
    out << text;
}

} // namespace photon_atom

#endif
