#include "ife/io.hpp"

#include "ife/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace ife {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    if (s == "nan" || s == "NaN" || s == "NA" || s.empty()) {
        if (s.empty()) throw ValidationError("empty numeric field");
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto res = std::from_chars(first, s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ValidationError("not a number: '" + s + "'");
    }
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

namespace {

bool all_numeric(const std::vector<std::string>& labels) {
    for (const auto& l : labels) {
        double v;
        const auto res = std::from_chars(l.data(), l.data() + l.size(), v);
        if (res.ec != std::errc() || res.ptr != l.data() + l.size()) return false;
    }
    return true;
}

std::vector<std::string> ordered_labels(std::vector<std::string> labels) {
    if (all_numeric(labels)) {
        std::stable_sort(labels.begin(), labels.end(),
                         [](const std::string& a, const std::string& b) { return std::stod(a) < std::stod(b); });
    } else {
        std::sort(labels.begin(), labels.end());
    }
    return labels;
}

}  // namespace

LoadedPanel parse_panel_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("input CSV is empty; a header row is required");
    const std::vector<std::string> header = split_csv_line(line);
    auto find_col = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ValidationError("missing column '" + name + "' in CSV header");
        return static_cast<size_t>(it - header.begin());
    };
    const size_t cu = find_col("unit");
    const size_t ct = find_col("time");
    const size_t cy = find_col("y");
    std::vector<size_t> xcols;
    std::vector<std::string> xnames;
    for (size_t c = 0; c < header.size(); ++c) {
        if (c == cu || c == ct || c == cy) continue;
        if (header[c].empty()) throw ValidationError("empty column name in CSV header");
        xcols.push_back(c);
        xnames.push_back(header[c]);
    }

    struct Row {
        std::string unit, time;
        std::vector<double> values;  // y then regressors
    };
    std::vector<Row> rows;
    std::map<std::string, int> unit_seen, time_seen;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != header.size()) {
            throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                  " fields, found " + std::to_string(f.size()));
        }
        Row r;
        r.unit = f[cu];
        r.time = f[ct];
        try {
            r.values.push_back(parse_double(f[cy]));
            for (size_t c : xcols) r.values.push_back(parse_double(f[c]));
        } catch (const ValidationError& ex) {
            throw ValidationError("line " + std::to_string(line_no) + ": " + ex.what());
        }
        unit_seen.emplace(r.unit, 0);
        time_seen.emplace(r.time, 0);
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw ValidationError("input CSV has no data rows");

    LoadedPanel out;
    std::vector<std::string> units, times;
    for (const auto& [k, v] : unit_seen) units.push_back(k);
    for (const auto& [k, v] : time_seen) times.push_back(k);
    out.units = ordered_labels(units);
    out.times = ordered_labels(times);
    std::map<std::string, Index> ui, ti;
    for (size_t i = 0; i < out.units.size(); ++i) ui[out.units[i]] = static_cast<Index>(i);
    for (size_t i = 0; i < out.times.size(); ++i) ti[out.times[i]] = static_cast<Index>(i);
    const Index n = static_cast<Index>(out.units.size());
    const Index t = static_cast<Index>(out.times.size());
    if (static_cast<Index>(rows.size()) != n * t) {
        std::ostringstream os;
        os << "unbalanced panel: " << rows.size() << " rows for " << n << " units x " << t
           << " periods; every (unit, time) pair must appear exactly once";
        throw ValidationError(os.str());
    }
    Matrix y(n, t);
    std::vector<Matrix> x(xcols.size(), Matrix(n, t));
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> filled = Eigen::MatrixXi::Zero(n, t);
    for (const Row& r : rows) {
        const Index i = ui[r.unit];
        const Index s = ti[r.time];
        if (filled(i, s)++) {
            throw ValidationError("duplicate row for unit '" + r.unit + "', time '" + r.time + "'");
        }
        y(i, s) = r.values[0];
        for (size_t k = 0; k < xcols.size(); ++k) x[k](i, s) = r.values[k + 1];
    }
    out.data = PanelDataset(y, x);
    out.data.regressor_names = xnames;
    return out;
}

LoadedPanel read_panel_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open input file '" + path + "'");
    return parse_panel_csv(in);
}

void write_panel_csv(std::ostream& out, const PanelDataset& d, const std::vector<std::string>& units,
                     const std::vector<std::string>& times) {
    out << "unit,time,y";
    for (const auto& name : d.regressor_names) out << ',' << name;
    out << '\n';
    for (Index i = 0; i < d.n(); ++i) {
        for (Index s = 0; s < d.t(); ++s) {
            out << (units.empty() ? std::to_string(i + 1) : units[i]) << ','
                << (times.empty() ? std::to_string(s + 1) : times[s]) << ',' << format_double(d.y(i, s));
            for (const Matrix& x : d.x) out << ',' << format_double(x(i, s));
            out << '\n';
        }
    }
}

void write_panel_csv(const std::string& path, const PanelDataset& d) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    write_panel_csv(out, d);
}

}  // namespace ife
