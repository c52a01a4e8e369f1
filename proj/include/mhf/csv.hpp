#pragma once

#include <string>
#include <vector>

namespace mhf {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;  // columns[c][row]

    [[nodiscard]] std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
    // index of a named column, or throws std::runtime_error
    [[nodiscard]] const std::vector<double>& column(const std::string& name) const;
};

// 17 significant digits, '\n' line endings, header first.
void write_csv(const std::string& path, const Table& table);

[[nodiscard]] std::string format_number(double v);

// Header line required; every field must parse as a number.
[[nodiscard]] Table read_csv(const std::string& path);

// One number per line; an optional non-numeric first line is treated as a header.
[[nodiscard]] std::vector<double> read_single_column(const std::string& path);

}  // namespace mhf
