#include "ife/report.hpp"

#include "ife/errors.hpp"
#include "ife/io.hpp"
#include "ife/rng.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace ife {

std::string to_string(CellKind k) {
    switch (k) {
        case CellKind::Estimators: return "estimators";
        case CellKind::Tests: return "tests";
        case CellKind::Fraction: return "fraction";
    }
    return "?";
}

CellKind parse_cell_kind(const std::string& s) {
    for (CellKind k : {CellKind::Estimators, CellKind::Tests, CellKind::Fraction})
        if (to_string(k) == s) return k;
    throw ValidationError("unknown cell kind '" + s + "'");
}

namespace {

const std::vector<TestVariant> kAllTests{TestVariant::WD,     TestVariant::LR,     TestVariant::LM,
                                         TestVariant::WDStar, TestVariant::LRStar, TestVariant::LMStar};

std::string fmt_label(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

void add_cell(StudyPreset& p, TableCell cell) {
    const std::uint64_t idx = p.cells.size();
    cell.config.dgp.seed = derive_seed(p.seed, idx);
    p.cells.push_back(std::move(cell));
}

void estimator_table(StudyPreset& p, int reps, Index r_true, Index r_fit, bool with_cce) {
    for (double rho : {0.3, 0.9}) {
        for (Index t : {5, 10, 20, 40, 80}) {
            TableCell c;
            c.kind = CellKind::Estimators;
            c.config.dgp.n = 100;
            c.config.dgp.t = t;
            c.config.dgp.rho0 = rho;
            c.config.dgp.r_true = r_true;
            c.config.r_fit = r_fit;
            c.config.reps = reps;
            c.config.bandwidth = auto_bandwidth(t);
            c.config.estimators = {EstimatorKind::OLS, EstimatorKind::FLS, EstimatorKind::BCFLS};
            if (with_cce) c.config.estimators.push_back(EstimatorKind::CCE);
            c.label = "rho0=" + fmt_label(rho) + " T=" + std::to_string(t) + " M=" + std::to_string(*c.config.bandwidth);
            add_cell(p, std::move(c));
        }
    }
}

void test_table(StudyPreset& p, int reps, bool alternatives) {
    struct Design {
        Index n, t;
        int m;
    };
    for (double rho : {0.0, 0.6}) {
        for (Design d : {Design{100, 20, 4}, Design{400, 80, 6}, Design{400, 20, 4}, Design{1600, 80, 6}}) {
            TableCell c;
            c.kind = CellKind::Tests;
            c.config.dgp.n = d.n;
            c.config.dgp.t = d.t;
            c.config.dgp.rho0 = rho;
            c.config.reps = reps;
            c.config.bandwidth = d.m;
            c.config.tests = kAllTests;
            c.config.alternatives = alternatives;
            c.label = "rho0=" + fmt_label(rho) + " N=" + std::to_string(d.n) + " T=" + std::to_string(d.t) +
                      " M=" + std::to_string(d.m);
            add_cell(p, std::move(c));
        }
    }
}

}  // namespace

StudyPreset table_preset(const std::string& table, double scale, std::uint64_t seed) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("scale must be a positive number");
    StudyPreset p;
    p.table = table;
    p.seed = seed;
    p.scale = scale;
    const int reps = static_cast<int>(std::lround(p.paper_reps * scale));
    if (reps < 1) throw ValidationError("scale gives zero replications");
    if (table == "1") {
        estimator_table(p, reps, 1, 1, false);
    } else if (table == "2") {
        estimator_table(p, reps, 1, 2, false);
    } else if (table == "3") {
        for (double rho : {0.0, 0.3, 0.6, 0.9}) {
            TableCell c;
            c.kind = CellKind::Fraction;
            c.config.dgp.n = 100;
            c.config.dgp.t = 20;
            c.config.dgp.rho0 = rho;
            c.config.reps = reps;
            c.bandwidths = {1, 2, 3, 4, 5, 6, 7, 8};
            c.label = "rho0=" + fmt_label(rho);
            add_cell(p, std::move(c));
        }
    } else if (table == "6") {
        test_table(p, reps, false);
    } else if (table == "7" || table == "8") {
        test_table(p, reps, true);
    } else if (table == "S1") {
        estimator_table(p, reps, 1, 1, true);
    } else if (table == "S2") {
        estimator_table(p, reps, 1, 2, true);
    } else if (table == "S3") {
        estimator_table(p, reps, 2, 2, true);
    } else {
        throw ValidationError("unknown table '" + table + "' (expected 1, 2, 3, 6, 7, 8, S1, S2 or S3)");
    }
    return p;
}

StudyResult run_study(const StudyPreset& preset, int threads) {
    StudyResult out;
    out.table = preset.table;
    out.seed = preset.seed;
    out.scale = preset.scale;
    for (const TableCell& cell : preset.cells) {
        CellResult cr;
        cr.cell = cell;
        McConfig cfg = cell.config;
        cfg.threads = threads;
        switch (cell.kind) {
            case CellKind::Estimators: cr.summary = mc_estimators(cfg); break;
            case CellKind::Tests: cr.summary = mc_tests(cfg); break;
            case CellKind::Fraction:
                cr.fractions = bias_fraction(cfg, cell.bandwidths);
                cr.summary.reps = cfg.reps;
                break;
        }
        out.cells.push_back(std::move(cr));
    }
    return out;
}

// ---- CSV ------------------------------------------------------------------

namespace {

const std::vector<std::string> kCsvHeader{
    "table", "master_seed", "scale", "cell", "kind", "n", "t", "rho0", "r_true", "r_fit", "rho_f", "sigma_f",
    "burn_in", "error_dist", "bandwidth", "reps", "rep_failures", "seed", "alternatives", "name", "mean", "bias",
    "std", "rmse", "size", "power_left", "power_right", "sc_power_left", "sc_power_right", "critical_value",
    "fraction", "scaled_bias", "scaled_bias_se", "mean_correction"};

std::string bandwidth_text(const std::optional<int>& m) { return m ? std::to_string(*m) : "auto"; }

std::optional<int> parse_bandwidth(const std::string& s) {
    if (s == "auto") return std::nullopt;
    return std::stoi(s);
}

}  // namespace

std::string study_to_csv(const StudyResult& r) {
    std::ostringstream os;
    for (size_t i = 0; i < kCsvHeader.size(); ++i) os << (i ? "," : "") << kCsvHeader[i];
    os << '\n';
    for (const CellResult& c : r.cells) {
        const McConfig& cfg = c.cell.config;
        auto prefix = [&](const std::string& bandwidth, const std::string& name) {
            os << r.table << ',' << r.seed << ',' << format_double(r.scale) << ',' << c.cell.label << ','
               << to_string(c.cell.kind) << ',' << cfg.dgp.n << ',' << cfg.dgp.t << ',' << format_double(cfg.dgp.rho0)
               << ',' << cfg.dgp.r_true << ',' << cfg.r_fit << ',' << format_double(cfg.dgp.rho_f) << ','
               << format_double(cfg.dgp.sigma_f) << ',' << cfg.dgp.burn_in << ',' << to_string(cfg.dgp.error_dist)
               << ',' << bandwidth << ',' << c.summary.reps << ',' << c.summary.rep_failures << ','
               << cfg.dgp.seed << ',' << (cfg.alternatives ? 1 : 0) << ',' << name;
        };
        const std::string nan = format_double(std::numeric_limits<double>::quiet_NaN());
        for (const EstimatorSummary& e : c.summary.estimators) {
            prefix(bandwidth_text(cfg.bandwidth), to_string(e.kind));
            os << ',' << format_double(e.mean) << ',' << format_double(e.bias) << ',' << format_double(e.std) << ','
               << format_double(e.rmse);
            for (int k = 0; k < 10; ++k) os << ',' << nan;
            os << '\n';
        }
        for (const TestSummary& t : c.summary.tests) {
            prefix(bandwidth_text(cfg.bandwidth), to_string(t.variant));
            for (int k = 0; k < 4; ++k) os << ',' << nan;
            os << ',' << format_double(t.size) << ',' << format_double(t.power_left) << ','
               << format_double(t.power_right) << ',' << format_double(t.sc_power_left) << ','
               << format_double(t.sc_power_right) << ',' << format_double(t.critical_value);
            for (int k = 0; k < 4; ++k) os << ',' << nan;
            os << '\n';
        }
        for (const FractionRow& f : c.fractions) {
            prefix(std::to_string(f.bandwidth), "fraction");
            for (int k = 0; k < 10; ++k) os << ',' << nan;
            os << ',' << format_double(f.fraction) << ',' << format_double(f.scaled_bias) << ','
               << format_double(f.scaled_bias_se) << ',' << format_double(f.mean_correction) << '\n';
        }
    }
    return os.str();
}

StudyResult study_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != kCsvHeader) {
        throw ValidationError("not a study CSV: header mismatch");
    }
    StudyResult r;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != kCsvHeader.size()) throw ValidationError("study CSV: wrong field count");
        std::map<std::string, std::string> row;
        for (size_t i = 0; i < f.size(); ++i) row[kCsvHeader[i]] = f[i];
        if (first) {
            r.table = row["table"];
            r.seed = std::stoull(row["master_seed"]);
            r.scale = parse_double(row["scale"]);
            first = false;
        }
        if (r.cells.empty() || r.cells.back().cell.label != row["cell"]) {
            CellResult c;
            c.cell.label = row["cell"];
            c.cell.kind = parse_cell_kind(row["kind"]);
            McConfig& cfg = c.cell.config;
            cfg.dgp.n = std::stol(row["n"]);
            cfg.dgp.t = std::stol(row["t"]);
            cfg.dgp.rho0 = parse_double(row["rho0"]);
            cfg.dgp.r_true = std::stol(row["r_true"]);
            cfg.r_fit = std::stol(row["r_fit"]);
            cfg.dgp.rho_f = parse_double(row["rho_f"]);
            cfg.dgp.sigma_f = parse_double(row["sigma_f"]);
            cfg.dgp.burn_in = std::stol(row["burn_in"]);
            cfg.dgp.error_dist = row["error_dist"] == "normal" ? ErrorDist::Normal : ErrorDist::StudentT5;
            cfg.dgp.seed = std::stoull(row["seed"]);
            cfg.alternatives = row["alternatives"] == "1";
            cfg.reps = std::stoi(row["reps"]);
            if (c.cell.kind != CellKind::Fraction) cfg.bandwidth = parse_bandwidth(row["bandwidth"]);
            cfg.estimators.clear();
            c.summary.reps = cfg.reps;
            c.summary.rep_failures = std::stoi(row["rep_failures"]);
            r.cells.push_back(std::move(c));
        }
        CellResult& c = r.cells.back();
        switch (c.cell.kind) {
            case CellKind::Estimators: {
                EstimatorSummary e;
                e.kind = parse_estimator(row["name"]);
                e.mean = parse_double(row["mean"]);
                e.bias = parse_double(row["bias"]);
                e.std = parse_double(row["std"]);
                e.rmse = parse_double(row["rmse"]);
                c.summary.estimators.push_back(e);
                c.cell.config.estimators.push_back(e.kind);
                break;
            }
            case CellKind::Tests: {
                TestSummary t;
                t.variant = parse_test_variant(row["name"]);
                t.size = parse_double(row["size"]);
                t.power_left = parse_double(row["power_left"]);
                t.power_right = parse_double(row["power_right"]);
                t.sc_power_left = parse_double(row["sc_power_left"]);
                t.sc_power_right = parse_double(row["sc_power_right"]);
                t.critical_value = parse_double(row["critical_value"]);
                c.summary.tests.push_back(t);
                c.cell.config.tests.push_back(t.variant);
                break;
            }
            case CellKind::Fraction: {
                FractionRow fr;
                fr.bandwidth = std::stoi(row["bandwidth"]);
                fr.fraction = parse_double(row["fraction"]);
                fr.scaled_bias = parse_double(row["scaled_bias"]);
                fr.scaled_bias_se = parse_double(row["scaled_bias_se"]);
                fr.mean_correction = parse_double(row["mean_correction"]);
                c.fractions.push_back(fr);
                c.cell.bandwidths.push_back(fr.bandwidth);
                break;
            }
        }
    }
    return r;
}

// ---- JSON -----------------------------------------------------------------

namespace {

using Json = nlohmann::ordered_json;

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double from_num(const Json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

nlohmann::ordered_json study_to_json(const StudyResult& r) {
    Json j;
    j["table"] = r.table;
    j["seed"] = r.seed;
    j["scale"] = r.scale;
    Json cells = Json::array();
    for (const CellResult& c : r.cells) {
        const McConfig& cfg = c.cell.config;
        Json jc;
        jc["label"] = c.cell.label;
        jc["kind"] = to_string(c.cell.kind);
        jc["config"] = {{"n", cfg.dgp.n},
                        {"t", cfg.dgp.t},
                        {"rho0", cfg.dgp.rho0},
                        {"r_true", cfg.dgp.r_true},
                        {"r_fit", cfg.r_fit},
                        {"rho_f", cfg.dgp.rho_f},
                        {"sigma_f", cfg.dgp.sigma_f},
                        {"burn_in", cfg.dgp.burn_in},
                        {"error_dist", to_string(cfg.dgp.error_dist)},
                        {"bandwidth", cfg.bandwidth ? Json(*cfg.bandwidth) : Json("auto")},
                        {"reps", cfg.reps},
                        {"seed", cfg.dgp.seed},
                        {"alternatives", cfg.alternatives}};
        jc["rep_failures"] = c.summary.rep_failures;
        Json est = Json::array();
        for (const EstimatorSummary& e : c.summary.estimators) {
            est.push_back({{"name", to_string(e.kind)},
                           {"mean", num(e.mean)},
                           {"bias", num(e.bias)},
                           {"std", num(e.std)},
                           {"rmse", num(e.rmse)}});
        }
        jc["estimators"] = est;
        Json tests = Json::array();
        for (const TestSummary& t : c.summary.tests) {
            tests.push_back({{"name", to_string(t.variant)},
                             {"size", num(t.size)},
                             {"power_left", num(t.power_left)},
                             {"power_right", num(t.power_right)},
                             {"sc_power_left", num(t.sc_power_left)},
                             {"sc_power_right", num(t.sc_power_right)},
                             {"critical_value", num(t.critical_value)}});
        }
        jc["tests"] = tests;
        Json fr = Json::array();
        for (const FractionRow& f : c.fractions) {
            fr.push_back({{"M", f.bandwidth},
                          {"fraction", num(f.fraction)},
                          {"scaled_bias", num(f.scaled_bias)},
                          {"scaled_bias_se", num(f.scaled_bias_se)},
                          {"mean_correction", num(f.mean_correction)}});
        }
        jc["fractions"] = fr;
        cells.push_back(jc);
    }
    j["cells"] = cells;
    return j;
}

StudyResult study_from_json(const nlohmann::ordered_json& j) {
    StudyResult r;
    try {
        r.table = j.at("table").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.scale = j.at("scale").get<double>();
        for (const Json& jc : j.at("cells")) {
            CellResult c;
            c.cell.label = jc.at("label").get<std::string>();
            c.cell.kind = parse_cell_kind(jc.at("kind").get<std::string>());
            const Json& k = jc.at("config");
            McConfig& cfg = c.cell.config;
            cfg.dgp.n = k.at("n").get<Index>();
            cfg.dgp.t = k.at("t").get<Index>();
            cfg.dgp.rho0 = k.at("rho0").get<double>();
            cfg.dgp.r_true = k.at("r_true").get<Index>();
            cfg.r_fit = k.at("r_fit").get<Index>();
            cfg.dgp.rho_f = k.at("rho_f").get<double>();
            cfg.dgp.sigma_f = k.at("sigma_f").get<double>();
            cfg.dgp.burn_in = k.at("burn_in").get<Index>();
            cfg.dgp.error_dist = k.at("error_dist") == "normal" ? ErrorDist::Normal : ErrorDist::StudentT5;
            if (c.cell.kind != CellKind::Fraction) {
                const Json& bw = k.at("bandwidth");
                cfg.bandwidth = bw.is_string() ? std::nullopt : std::optional<int>(bw.get<int>());
            }
            cfg.reps = k.at("reps").get<int>();
            cfg.dgp.seed = k.at("seed").get<std::uint64_t>();
            cfg.alternatives = k.at("alternatives").get<bool>();
            cfg.estimators.clear();
            c.summary.reps = cfg.reps;
            c.summary.rep_failures = jc.at("rep_failures").get<int>();
            for (const Json& e : jc.at("estimators")) {
                EstimatorSummary s;
                s.kind = parse_estimator(e.at("name").get<std::string>());
                s.mean = from_num(e.at("mean"));
                s.bias = from_num(e.at("bias"));
                s.std = from_num(e.at("std"));
                s.rmse = from_num(e.at("rmse"));
                c.summary.estimators.push_back(s);
                cfg.estimators.push_back(s.kind);
            }
            for (const Json& t : jc.at("tests")) {
                TestSummary s;
                s.variant = parse_test_variant(t.at("name").get<std::string>());
                s.size = from_num(t.at("size"));
                s.power_left = from_num(t.at("power_left"));
                s.power_right = from_num(t.at("power_right"));
                s.sc_power_left = from_num(t.at("sc_power_left"));
                s.sc_power_right = from_num(t.at("sc_power_right"));
                s.critical_value = from_num(t.at("critical_value"));
                c.summary.tests.push_back(s);
                cfg.tests.push_back(s.variant);
            }
            for (const Json& f : jc.at("fractions")) {
                FractionRow fr;
                fr.bandwidth = f.at("M").get<int>();
                fr.fraction = from_num(f.at("fraction"));
                fr.scaled_bias = from_num(f.at("scaled_bias"));
                fr.scaled_bias_se = from_num(f.at("scaled_bias_se"));
                fr.mean_correction = from_num(f.at("mean_correction"));
                c.fractions.push_back(fr);
                c.cell.bandwidths.push_back(fr.bandwidth);
            }
            r.cells.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw ValidationError(std::string("malformed study record: ") + ex.what());
    }
    return r;
}

// ---- text -----------------------------------------------------------------

std::string study_to_text(const StudyResult& r) {
    std::ostringstream os;
    os << "Table " << r.table << "  (seed " << r.seed << ", scale " << r.scale << ")\n";
    auto cellfmt = [](double v) {
        std::ostringstream s;
        if (std::isnan(v)) {
            s << std::setw(9) << "-";
        } else {
            s << std::setw(9) << std::fixed << std::setprecision(4) << v;
        }
        return s.str();
    };
    for (const CellResult& c : r.cells) {
        os << "\n" << c.cell.label << "  (N=" << c.cell.config.dgp.n << ", T=" << c.cell.config.dgp.t << ", reps=" << c.summary.reps;
        if (c.summary.rep_failures) os << ", failed=" << c.summary.rep_failures;
        os << ")\n";
        if (!c.summary.estimators.empty()) {
            os << std::setw(8) << "";
            for (const auto& e : c.summary.estimators) os << std::setw(9) << to_string(e.kind);
            os << '\n';
            for (const char* row : {"bias", "std", "rmse"}) {
                os << std::setw(8) << row;
                for (const auto& e : c.summary.estimators) {
                    const std::string rs = row;
                    os << cellfmt(rs == "bias" ? e.bias : rs == "std" ? e.std : e.rmse);
                }
                os << '\n';
            }
        }
        if (!c.summary.tests.empty()) {
            os << std::setw(10) << "";
            for (const auto& t : c.summary.tests) os << std::setw(9) << to_string(t.variant);
            os << '\n';
            const bool alt = c.cell.config.alternatives;
            std::vector<std::pair<std::string, int>> rows{{"size", 0}};
            if (alt) {
                rows.insert(rows.end(), {{"pow left", 1}, {"pow right", 2}, {"sc left", 3}, {"sc right", 4}});
            }
            for (const auto& [name, which] : rows) {
                os << std::setw(10) << name;
                for (const auto& t : c.summary.tests) {
                    const double v = which == 0   ? t.size
                                     : which == 1 ? t.power_left
                                     : which == 2 ? t.power_right
                                     : which == 3 ? t.sc_power_left
                                                  : t.sc_power_right;
                    os << cellfmt(v);
                }
                os << '\n';
            }
        }
        if (!c.fractions.empty()) {
            os << std::setw(10) << "M";
            for (const auto& f : c.fractions) os << std::setw(9) << f.bandwidth;
            os << '\n' << std::setw(10) << "fraction";
            for (const auto& f : c.fractions) os << cellfmt(f.fraction);
            os << '\n';
        }
    }
    return os.str();
}

}  // namespace ife
