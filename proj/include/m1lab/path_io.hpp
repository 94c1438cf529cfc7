#pragma once

#include "m1lab/path.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace m1lab {

// Path CSV: header "t,value" (scalar) or "t,v1,...,vM" (vector), one row per
// knot, first row t = 0, last row t = T, values are right limits. Numbers are
// written in shortest round-trip form, so write -> read is bit-exact.

inline std::string format_double(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double x = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw std::invalid_argument("not a number: '" + std::string(s) + "'");
    }
    return x;
}

inline std::vector<std::string_view> split_csv_row(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

struct PathTable {
    std::vector<std::string> columns;  // excluding "t"
    std::vector<double> times;
    std::vector<double> values;        // row-major, columns.size() per row
};

inline PathTable read_path_table(std::istream& in) {
    PathTable table;
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("path CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_row(line);
    if (header.size() < 2 || header[0] != "t") throw std::invalid_argument("path CSV header must start with 't,'");
    for (std::size_t j = 1; j < header.size(); ++j) table.columns.emplace_back(header[j]);
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_row(line);
        if (cells.size() != header.size()) {
            throw std::invalid_argument("path CSV row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                                        " cells, expected " + std::to_string(header.size()));
        }
        table.times.push_back(parse_double(cells[0]));
        for (std::size_t j = 1; j < cells.size(); ++j) table.values.push_back(parse_double(cells[j]));
    }
    return table;
}

inline CadlagPath read_path_csv(std::istream& in) {
    auto table = read_path_table(in);
    if (table.columns.size() != 1) throw std::invalid_argument("scalar path CSV must have exactly one value column");
    return CadlagPath(std::move(table.times), std::move(table.values));
}

inline VectorPath read_vector_path_csv(std::istream& in, std::vector<double> weights = {}) {
    auto table = read_path_table(in);
    const std::size_t dim = table.columns.size();
    return VectorPath(std::move(table.times), std::move(table.values), dim, std::move(weights));
}

inline void write_path_csv(std::ostream& out, const CadlagPath& x) {
    out << "t,value\n";
    for (std::size_t i = 0; i < x.size(); ++i) {
        out << format_double(x.times()[i]) << ',' << format_double(x.values()[i]) << '\n';
    }
}

inline void write_path_csv(std::ostream& out, const VectorPath& x) {
    out << 't';
    for (std::size_t j = 1; j <= x.dim(); ++j) out << ",v" << j;
    out << '\n';
    for (std::size_t i = 0; i < x.size(); ++i) {
        out << format_double(x.times()[i]);
        for (double v : x.value(i)) out << ',' << format_double(v);
        out << '\n';
    }
}

namespace detail {

inline std::ifstream open_for_read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return in;
}

inline std::ofstream open_for_write(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

}  // namespace detail

inline CadlagPath load_path(const std::string& file) {
    auto in = detail::open_for_read(file);
    return read_path_csv(in);
}

inline VectorPath load_vector_path(const std::string& file, std::vector<double> weights = {}) {
    auto in = detail::open_for_read(file);
    return read_vector_path_csv(in, std::move(weights));
}

template <typename Path>
void save_path(const std::string& file, const Path& x) {
    auto out = detail::open_for_write(file);
    write_path_csv(out, x);
}

}  // namespace m1lab
