#include "mhf/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mhf {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_number(const std::string& text, double& out) {
    const std::string t = trim(text);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    // underflow to a subnormal is fine, overflow is not
    return *end == '\0' && std::isfinite(out);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

const std::vector<double>& Table::column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == name) return columns.at(c);
    throw std::runtime_error("missing column '" + name + "'");
}

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_csv(const std::string& path, const Table& table) {
    if (table.header.size() != table.columns.size()) throw std::runtime_error("csv header/column count mismatch");
    for (const auto& c : table.columns)
        if (c.size() != table.rows()) throw std::runtime_error("csv columns differ in length");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (std::size_t c = 0; c < table.header.size(); ++c) out << (c ? "," : "") << table.header[c];
    out << '\n';
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t c = 0; c < table.columns.size(); ++c) out << (c ? "," : "") << format_number(table.columns[c][r]);
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

Table read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    t.header = split(line);
    t.columns.resize(t.header.size());
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto fields = split(line);
        if (fields.size() != t.header.size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": wrong number of fields");
        for (std::size_t c = 0; c < fields.size(); ++c) {
            double v;
            if (!parse_number(fields[c], v))
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": not a number '" + fields[c] + "'");
            t.columns[c].push_back(v);
        }
    }
    return t;
}

std::vector<double> read_single_column(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<double> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        double v;
        if (parse_number(line, v)) {
            out.push_back(v);
        } else if (!(lineno == 1 && out.empty())) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": not a number");
        }
    }
    return out;
}

}  // namespace mhf
