#pragma once

#include "ife/panel.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace ife {

/// A panel read from long-format CSV, with the unit and time labels in the
/// order used for the rows and columns of the matrices.
struct LoadedPanel {
    PanelDataset data;
    std::vector<std::string> units;
    std::vector<std::string> times;
};

/// Long format with header `unit,time,y,<regressors...>`. Every (unit, time)
/// pair must appear exactly once. Labels are ordered numerically when they all
/// parse as numbers, lexicographically otherwise.
LoadedPanel parse_panel_csv(std::istream& in);
LoadedPanel read_panel_csv(const std::string& path);

void write_panel_csv(std::ostream& out, const PanelDataset& d, const std::vector<std::string>& units = {},
                     const std::vector<std::string>& times = {});
void write_panel_csv(const std::string& path, const PanelDataset& d);

/// Shortest decimal text that reads back to the same double ("nan", "inf", "-inf" for non-finite).
std::string format_double(double v);
/// Inverse of format_double; throws ValidationError on malformed text.
double parse_double(const std::string& s);

/// Splits one CSV line on commas; surrounding whitespace is trimmed, no quoting.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace ife
