#include "ife/cli.hpp"

#include "ife/diagnostics.hpp"
#include "ife/errors.hpp"
#include "ife/estimator.hpp"
#include "ife/extensions.hpp"
#include "ife/inference.hpp"
#include "ife/io.hpp"
#include "ife/parallel.hpp"
#include "ife/report.hpp"
#include "ife/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace ife {

namespace {

using Json = nlohmann::ordered_json;

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vec_json(const Vector& v) {
    Json a = Json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
    return a;
}

Json mat_json(const Matrix& m) {
    Json a = Json::array();
    for (Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
    return a;
}

struct ModelOptions {
    std::string input;
    int factors = 1;
    std::string bandwidth = "auto";
    std::vector<std::string> low_rank;
    std::vector<double> lower;
    std::vector<double> upper;
    int starts = 5;
    std::string optimizer = "quasi-newton";
    std::string out;
    std::string format = "json";
};

void add_model_options(CLI::App* cmd, ModelOptions& o) {
    cmd->add_option("--input", o.input, "long-format panel CSV (unit,time,y,regressors...)")->required();
    cmd->add_option("--factors", o.factors, "number of factors R");
    cmd->add_option("--bandwidth", o.bandwidth, "kernel bandwidth M or 'auto'");
    cmd->add_option("--low-rank", o.low_rank, "regressors declared low-rank")->delimiter(',');
    cmd->add_option("--lower", o.lower, "parameter box lower bounds, one per regressor")->delimiter(',');
    cmd->add_option("--upper", o.upper, "parameter box upper bounds, one per regressor")->delimiter(',');
    cmd->add_option("--starts", o.starts, "number of optimizer starts");
    cmd->add_option("--optimizer", o.optimizer, "quasi-newton or simplex")
        ->check(CLI::IsMember({"quasi-newton", "simplex"}));
    cmd->add_option("--out", o.out, "output file (default: standard output)");
    cmd->add_option("--format", o.format, "csv, json or table")->check(CLI::IsMember({"csv", "json", "table"}));
}

ModelSpec build_spec(const ModelOptions& o) {
    ModelSpec spec;
    spec.r = o.factors;
    if (o.bandwidth != "auto") {
        try {
            size_t pos = 0;
            spec.bandwidth = std::stoi(o.bandwidth, &pos);
            if (pos != o.bandwidth.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ValidationError("--bandwidth must be 'auto' or a positive integer");
        }
    }
    spec.optimizer.n_starts = o.starts;
    spec.optimizer.method = o.optimizer == "simplex" ? OptimizerMethod::Simplex : OptimizerMethod::QuasiNewton;
    spec.lower = o.lower;
    spec.upper = o.upper;
    return spec;
}

// Moves the declared low-rank regressors to the front (the estimator expects them first).
PanelDataset arrange_low_rank(PanelDataset d, std::vector<std::string> low_rank, ModelSpec* spec) {
    std::erase(low_rank, std::string());
    for (const auto& name : low_rank) {
        if (std::find(d.regressor_names.begin(), d.regressor_names.end(), name) == d.regressor_names.end()) {
            throw ValidationError("--low-rank names unknown regressor '" + name + "'");
        }
    }
    std::vector<size_t> order;
    for (size_t j = 0; j < d.x.size(); ++j)
        if (std::count(low_rank.begin(), low_rank.end(), d.regressor_names[j])) order.push_back(j);
    for (size_t j = 0; j < d.x.size(); ++j)
        if (!std::count(low_rank.begin(), low_rank.end(), d.regressor_names[j])) order.push_back(j);
    PanelDataset out;
    out.y = d.y;
    for (size_t j : order) {
        out.x.push_back(d.x[j]);
        out.regressor_names.push_back(d.regressor_names[j]);
        out.low_rank.push_back(j < d.x.size() && std::count(low_rank.begin(), low_rank.end(), d.regressor_names[j]));
    }
    if (spec && !spec->lower.empty()) {
        if (spec->lower.size() != d.x.size() || spec->upper.size() != d.x.size()) {
            throw ValidationError("--lower/--upper need one bound per regressor");
        }
        std::vector<double> lo, hi;
        for (size_t j : order) {
            lo.push_back(spec->lower[j]);
            hi.push_back(spec->upper[j]);
        }
        spec->lower = lo;
        spec->upper = hi;
    }
    return out;
}

struct Emitter {
    std::ostream& fallback;
    std::string path;

    void write(const std::string& text) const {
        if (path.empty()) {
            fallback << text;
            return;
        }
        std::ofstream f(path);
        if (!f) throw ValidationError("cannot write output file '" + path + "'");
        f << text;
    }
};

Json warnings_json(const std::vector<std::string>& w) {
    Json a = Json::array();
    for (const auto& s : w) a.push_back(s);
    return a;
}

Json fit_json(const FitResult& fit) {
    Json j;
    j["r"] = fit.r;
    j["objective"] = num(fit.objective);
    j["gradient"] = vec_json(fit.gradient);
    j["converged"] = fit.converged;
    j["n_restarts_agreeing"] = fit.n_restarts_agreeing;
    j["degenerate_gap"] = fit.degenerate_gap;
    j["on_boundary"] = fit.on_boundary;
    Json starts = Json::array();
    for (const StartRecord& s : fit.starts) {
        starts.push_back({{"start", vec_json(s.start)},
                          {"beta", vec_json(s.beta)},
                          {"objective", num(s.objective)},
                          {"grad_norm", num(s.grad_norm)},
                          {"iterations", s.iterations},
                          {"converged", s.converged},
                          {"simplex", s.used_simplex}});
    }
    j["starts"] = starts;
    j["warnings"] = warnings_json(fit.warnings);
    return j;
}

Json diagnostics_json(const DiagnosticsReport& r) {
    return {{"highrank_stat", num(r.highrank_stat)},
            {"lowrank_loading_eig", num(r.lowrank_loading_eig)},
            {"lowrank_factor_eig", num(r.lowrank_factor_eig)},
            {"pooled_noncollinearity_eig", num(r.pooled_noncollinearity_eig)},
            {"warnings", warnings_json(r.warnings)}};
}

Json test_json(const TestResult& t) {
    Json j{{"variant", to_string(t.variant)},
           {"statistic", num(t.statistic)},
           {"df", t.df},
           {"p_value", num(t.p_value)}};
    if (!std::isnan(t.c_hat)) j["c_hat"] = num(t.c_hat);
    return j;
}

std::string csv_line(const std::vector<std::string>& f) {
    std::string s;
    for (size_t i = 0; i < f.size(); ++i) s += (i ? "," : "") + f[i];
    return s + "\n";
}

// ---- estimate -------------------------------------------------------------

struct EstimateOptions : ModelOptions {
    bool jackknife = false;
};

int run_estimate(const EstimateOptions& o, std::ostream& out) {
    ModelSpec spec = build_spec(o);
    const LoadedPanel lp = read_panel_csv(o.input);
    const PanelDataset d = arrange_low_rank(lp.data, o.low_rank, &spec);
    const ValidationReport vr = validate_dataset(d);
    const FitResult fit = minimize_profile(d, spec);
    const int m = resolve_bandwidth(spec, d.t());
    const InferenceResult inf = bias_corrected(fit, d, KernelConfig{m});
    std::optional<JackknifeResult> jk;
    if (o.jackknife) jk = jackknife(d, spec);
    const DiagnosticsReport diag = diagnose(d, fit);

    std::vector<std::string> warnings = vr.warnings;
    warnings.insert(warnings.end(), fit.warnings.begin(), fit.warnings.end());
    warnings.insert(warnings.end(), inf.warnings.begin(), inf.warnings.end());
    if (jk) warnings.insert(warnings.end(), jk->warnings.begin(), jk->warnings.end());

    Json meta;
    meta["n"] = d.n();
    meta["t"] = d.t();
    meta["k"] = d.k();
    meta["bandwidth_used"] = m;
    meta["kappa"] = num(inf.kappa);
    meta["fit"] = fit_json(fit);
    meta["w_hat"] = mat_json(inf.w_hat);
    meta["omega_hat"] = mat_json(inf.omega_hat);
    meta["cov_star"] = mat_json(inf.cov_star);
    meta["b1_hat"] = vec_json(inf.b1_hat);
    meta["b2_hat"] = vec_json(inf.b2_hat);
    meta["b3_hat"] = vec_json(inf.b3_hat);
    meta["diagnostics"] = diagnostics_json(diag);
    meta["warnings"] = warnings_json(warnings);

    const Emitter em{out, o.out};
    if (o.format == "csv") {
        std::string s = csv_line(jk ? std::vector<std::string>{"name", "beta_hat", "beta_star", "std_err", "beta_jackknife"}
                                    : std::vector<std::string>{"name", "beta_hat", "beta_star", "std_err"});
        for (Index k = 0; k < d.k(); ++k) {
            std::vector<std::string> f{d.regressor_names[k], format_double(fit.beta_hat(k)),
                                       format_double(inf.beta_star(k)), format_double(inf.std_err(k))};
            if (jk) f.push_back(format_double(jk->beta_jk(k)));
            s += csv_line(f);
        }
        em.write(s);
        if (!o.out.empty()) {
            std::ofstream mf(o.out + ".meta.json");
            mf << meta.dump(2) << '\n';
        }
    } else if (o.format == "json") {
        Json j;
        Json coefs = Json::array();
        for (Index k = 0; k < d.k(); ++k) {
            Json c{{"name", d.regressor_names[k]},
                   {"low_rank", static_cast<bool>(d.low_rank[k])},
                   {"beta_hat", num(fit.beta_hat(k))},
                   {"beta_star", num(inf.beta_star(k))},
                   {"std_err", num(inf.std_err(k))}};
            if (jk) c["beta_jackknife"] = num(jk->beta_jk(k));
            coefs.push_back(c);
        }
        j["coefficients"] = coefs;
        for (auto it = meta.begin(); it != meta.end(); ++it) j[it.key()] = it.value();
        em.write(j.dump(2) + "\n");
    } else {
        std::ostringstream os;
        os << "Interactive fixed effects fit: N=" << d.n() << " T=" << d.t() << " R=" << fit.r
           << " M=" << m << "\n\n";
        os << std::left << std::setw(14) << "regressor" << std::right << std::setw(14) << "beta_hat"
           << std::setw(14) << "beta_star" << std::setw(14) << "std_err";
        if (jk) os << std::setw(14) << "jackknife";
        os << '\n';
        for (Index k = 0; k < d.k(); ++k) {
            os << std::left << std::setw(14) << d.regressor_names[k] << std::right << std::fixed
               << std::setprecision(6) << std::setw(14) << fit.beta_hat(k) << std::setw(14) << inf.beta_star(k)
               << std::setw(14) << inf.std_err(k);
            if (jk) os << std::setw(14) << jk->beta_jk(k);
            os << '\n';
        }
        os << "\nobjective " << std::setprecision(8) << fit.objective << ", converged " << (fit.converged ? "yes" : "no")
           << ", starts agreeing " << fit.n_restarts_agreeing << "/" << fit.starts.size() << '\n';
        for (const auto& w : warnings) os << "warning: " << w << '\n';
        em.write(os.str());
    }
    return 0;
}

// ---- test -----------------------------------------------------------------

struct TestOptionsCli : ModelOptions {
    std::vector<std::string> restrictions;
    std::string lr_shift = "unrestricted";
};

RestrictionSpec parse_restrictions(const std::vector<std::string>& texts, const PanelDataset& d,
                                   const std::vector<std::string>& original_names) {
    if (texts.empty()) throw ValidationError("at least one --restriction is required");
    const Index k = d.k();
    RestrictionSpec rest{Matrix::Zero(static_cast<Index>(texts.size()), k),
                         Vector::Zero(static_cast<Index>(texts.size()))};
    for (size_t row = 0; row < texts.size(); ++row) {
        const std::string& t = texts[row];
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ValidationError("restriction '" + t + "' must look like c1,...,cK=h");
        const std::vector<std::string> coefs = split_csv_line(t.substr(0, eq));
        if (static_cast<Index>(coefs.size()) != k) {
            throw ValidationError("restriction '" + t + "' needs " + std::to_string(k) + " coefficients");
        }
        rest.h_vector(static_cast<Index>(row)) = parse_double(t.substr(eq + 1));
        // coefficients follow the CSV column order; map them onto the arranged regressors
        for (size_t j = 0; j < coefs.size(); ++j) {
            const auto it = std::find(d.regressor_names.begin(), d.regressor_names.end(), original_names[j]);
            rest.h_matrix(static_cast<Index>(row), static_cast<Index>(it - d.regressor_names.begin())) =
                parse_double(coefs[j]);
        }
    }
    return rest;
}

int run_test(const TestOptionsCli& o, std::ostream& out) {
    ModelSpec spec = build_spec(o);
    const LoadedPanel lp = read_panel_csv(o.input);
    const PanelDataset d = arrange_low_rank(lp.data, o.low_rank, &spec);
    validate_dataset(d);
    const RestrictionSpec rest = parse_restrictions(o.restrictions, d, lp.data.regressor_names);
    TestOptions topts;
    topts.lr_shift = o.lr_shift == "restricted" ? LrShiftSource::Restricted : LrShiftSource::Unrestricted;
    const TestSuite s = run_tests(d, spec, rest, topts);
    const std::vector<const TestResult*> all{&s.wd, &s.lr, &s.lm, &s.wd_star, &s.lr_star, &s.lm_star};

    const Emitter em{out, o.out};
    if (o.format == "csv") {
        std::string text = csv_line({"variant", "statistic", "df", "p_value"});
        for (const TestResult* t : all) {
            text += csv_line({to_string(t->variant), format_double(t->statistic), std::to_string(t->df),
                              format_double(t->p_value)});
        }
        em.write(text);
    } else if (o.format == "json") {
        Json j;
        Json tests = Json::array();
        for (const TestResult* t : all) tests.push_back(test_json(*t));
        j["tests"] = tests;
        j["beta_hat"] = vec_json(s.unrestricted.beta_hat);
        j["beta_star"] = vec_json(s.inference.beta_star);
        j["beta_restricted"] = vec_json(s.restricted.beta_hat);
        j["regressors"] = d.regressor_names;
        j["lr_shift"] = o.lr_shift;
        j["unrestricted_fit"] = fit_json(s.unrestricted);
        j["restricted_fit"] = fit_json(s.restricted);
        em.write(j.dump(2) + "\n");
    } else {
        std::ostringstream os;
        os << std::left << std::setw(8) << "test" << std::right << std::setw(14) << "statistic" << std::setw(6)
           << "df" << std::setw(12) << "p-value" << '\n';
        for (const TestResult* t : all) {
            os << std::left << std::setw(8) << to_string(t->variant) << std::right << std::fixed
               << std::setprecision(6) << std::setw(14) << t->statistic << std::setw(6) << t->df << std::setw(12)
               << t->p_value << '\n';
        }
        em.write(os.str());
    }
    return 0;
}

// ---- lsmd -----------------------------------------------------------------

struct LsmdOptions : ModelOptions {
    std::vector<std::string> endog;
    std::vector<std::string> instruments;
    std::string weight = "identity";
};

Matrix parse_weight(const std::string& text, Index l) {
    if (text == "identity") return Matrix();
    std::vector<std::vector<double>> rows;
    std::stringstream ss(text);
    std::string row;
    while (std::getline(ss, row, ';')) {
        std::vector<double> r;
        for (const auto& f : split_csv_line(row)) r.push_back(parse_double(f));
        rows.push_back(r);
    }
    if (static_cast<Index>(rows.size()) != l) throw ValidationError("--weight must be L x L (rows separated by ';')");
    Matrix w(l, l);
    for (Index i = 0; i < l; ++i) {
        if (static_cast<Index>(rows[i].size()) != l) throw ValidationError("--weight must be L x L");
        for (Index j = 0; j < l; ++j) w(i, j) = rows[i][j];
    }
    return w;
}

int run_lsmd(const LsmdOptions& o, std::ostream& out) {
    ModelSpec spec = build_spec(o);
    const LoadedPanel lp = read_panel_csv(o.input);
    // instrument columns leave the regressor set
    PanelDataset base;
    base.y = lp.data.y;
    EndogenousSpec es;
    for (const auto& name : o.instruments) {
        const auto it = std::find(lp.data.regressor_names.begin(), lp.data.regressor_names.end(), name);
        if (it == lp.data.regressor_names.end()) throw ValidationError("unknown instrument column '" + name + "'");
        es.instruments.push_back(lp.data.x[static_cast<size_t>(it - lp.data.regressor_names.begin())]);
    }
    for (size_t j = 0; j < lp.data.x.size(); ++j) {
        if (std::count(o.instruments.begin(), o.instruments.end(), lp.data.regressor_names[j])) continue;
        base.x.push_back(lp.data.x[j]);
        base.regressor_names.push_back(lp.data.regressor_names[j]);
        base.low_rank.push_back(false);
    }
    if (!spec.lower.empty()) throw ValidationError("lsmd does not take a parameter box");
    const PanelDataset d = arrange_low_rank(base, o.low_rank, nullptr);
    validate_dataset(d);
    for (const auto& name : o.endog) {
        const auto it = std::find(d.regressor_names.begin(), d.regressor_names.end(), name);
        if (it == d.regressor_names.end()) throw ValidationError("unknown endogenous regressor '" + name + "'");
        es.endog_idx.push_back(static_cast<Index>(it - d.regressor_names.begin()));
    }
    es.weight = parse_weight(o.weight, static_cast<Index>(es.instruments.size()));
    const LsmdResult res = lsmd_estimate(d, spec, es);
    const LsmdStep1 at_solution = lsmd_step1(res.beta_end, d, spec, es);

    const Emitter em{out, o.out};
    if (o.format == "csv") {
        std::string text = csv_line({"name", "beta", "role"});
        for (Index k = 0; k < d.k(); ++k) {
            const bool endo = std::count(es.endog_idx.begin(), es.endog_idx.end(), k) > 0;
            text += csv_line({d.regressor_names[k], format_double(res.beta(k)), endo ? "endogenous" : "exogenous"});
        }
        em.write(text);
    } else if (o.format == "json") {
        Json j;
        Json coefs = Json::array();
        for (Index k = 0; k < d.k(); ++k) {
            const bool endo = std::count(es.endog_idx.begin(), es.endog_idx.end(), k) > 0;
            coefs.push_back({{"name", d.regressor_names[k]},
                             {"beta", num(res.beta(k))},
                             {"role", endo ? "endogenous" : "exogenous"}});
        }
        j["coefficients"] = coefs;
        j["gamma_at_solution"] = vec_json(at_solution.gamma);
        j["gamma_evaluations"] = res.gamma_path.size();
        j["final_fit"] = fit_json(res.final_fit);
        j["warnings"] = warnings_json(res.warnings);
        em.write(j.dump(2) + "\n");
    } else {
        std::ostringstream os;
        os << "LS-MD estimate (N=" << d.n() << ", T=" << d.t() << ", R=" << spec.r << ")\n";
        for (Index k = 0; k < d.k(); ++k) {
            os << std::left << std::setw(14) << d.regressor_names[k] << std::right << std::fixed
               << std::setprecision(6) << std::setw(14) << res.beta(k) << '\n';
        }
        em.write(os.str());
    }
    return 0;
}

// ---- diagnose -------------------------------------------------------------

int run_diagnose(const ModelOptions& o, std::ostream& out) {
    ModelSpec spec = build_spec(o);
    const LoadedPanel lp = read_panel_csv(o.input);
    const PanelDataset d = arrange_low_rank(lp.data, o.low_rank, &spec);
    const ValidationReport vr = validate_dataset(d);
    const FitResult fit = minimize_profile(d, spec);
    DiagnosticsReport rep = diagnose(d, fit);
    rep.warnings.insert(rep.warnings.begin(), vr.warnings.begin(), vr.warnings.end());

    const Emitter em{out, o.out};
    if (o.format == "csv") {
        std::string text = csv_line({"statistic", "value"});
        text += csv_line({"highrank_stat", format_double(rep.highrank_stat)});
        text += csv_line({"lowrank_loading_eig", format_double(rep.lowrank_loading_eig)});
        text += csv_line({"lowrank_factor_eig", format_double(rep.lowrank_factor_eig)});
        text += csv_line({"pooled_noncollinearity_eig", format_double(rep.pooled_noncollinearity_eig)});
        em.write(text);
    } else if (o.format == "json") {
        Json j = diagnostics_json(rep);
        Json ranks = Json::array();
        for (Index r : vr.numeric_rank) ranks.push_back(r);
        j["numeric_rank"] = ranks;
        j["regressors"] = d.regressor_names;
        em.write(j.dump(2) + "\n");
    } else {
        std::ostringstream os;
        os << std::setprecision(8);
        os << "high-rank statistic          " << rep.highrank_stat << '\n';
        os << "low-rank loading eigenvalue  " << rep.lowrank_loading_eig << '\n';
        os << "low-rank factor eigenvalue   " << rep.lowrank_factor_eig << '\n';
        os << "pooled non-collinearity      " << rep.pooled_noncollinearity_eig << '\n';
        for (const auto& w : rep.warnings) os << "warning: " << w << '\n';
        em.write(os.str());
    }
    return 0;
}

// ---- simulate -------------------------------------------------------------

struct SimulateOptions {
    std::string table;
    double scale = 1.0;
    std::uint64_t seed = 1;
    int threads = 0;
    std::string out;
    std::string format = "csv";
    // custom design
    std::string kind = "estimators";
    Index n = 100;
    Index t = 20;
    double rho0 = 0.3;
    Index r_true = 1;
    Index r_fit = 1;
    double rho_f = 0.5;
    double sigma_f = 0.5;
    Index burn_in = 1000;
    int reps = 1000;
    std::string bandwidth = "auto";
    std::vector<std::string> estimators{"OLS", "FLS", "BC-FLS"};
    std::vector<std::string> tests{"WD", "LR", "LM", "WD*", "LR*", "LM*"};
    std::vector<int> bandwidths{1, 2, 3, 4, 5, 6, 7, 8};
    bool alternatives = false;
    std::string panel_out;
    std::string design = "ar1";
};

StudyPreset custom_preset(const SimulateOptions& o) {
    StudyPreset p;
    p.table = "custom";
    p.seed = o.seed;
    p.scale = 1.0;
    TableCell c;
    c.kind = parse_cell_kind(o.kind);
    c.label = "custom";
    McConfig& cfg = c.config;
    cfg.dgp.n = o.n;
    cfg.dgp.t = o.t;
    cfg.dgp.rho0 = o.rho0;
    cfg.dgp.r_true = o.r_true;
    cfg.dgp.rho_f = o.rho_f;
    cfg.dgp.sigma_f = o.sigma_f;
    cfg.dgp.burn_in = o.burn_in;
    cfg.dgp.seed = derive_seed(o.seed, 0);
    cfg.r_fit = o.r_fit;
    cfg.reps = o.reps;
    if (o.bandwidth != "auto") cfg.bandwidth = std::stoi(o.bandwidth);
    cfg.estimators.clear();
    for (const auto& e : o.estimators) cfg.estimators.push_back(parse_estimator(e));
    for (const auto& t : o.tests) cfg.tests.push_back(parse_test_variant(t));
    cfg.alternatives = o.alternatives;
    c.bandwidths = o.bandwidths;
    p.cells.push_back(c);
    return p;
}

// Writes one simulated panel instead of running a study.
int write_simulated_panel(const SimulateOptions& o) {
    PanelDataset d;
    if (o.design == "endogenous") {
        EndogDgpConfig cfg;
        cfg.n = o.n;
        cfg.t = o.t;
        cfg.seed = o.seed;
        const EndogenousPanel p = simulate_endogenous(cfg);
        d = p.data;
        d.x.push_back(p.instrument);
        d.regressor_names.push_back("z");
        d.low_rank.push_back(false);
    } else {
        DgpConfig cfg;
        cfg.n = o.n;
        cfg.t = o.t;
        cfg.rho0 = o.rho0;
        cfg.r_true = o.r_true;
        cfg.rho_f = o.rho_f;
        cfg.sigma_f = o.sigma_f;
        cfg.burn_in = o.burn_in;
        cfg.seed = o.seed;
        d = simulate_ar1(cfg).data;
    }
    write_panel_csv(o.panel_out, d);
    return 0;
}

int run_simulate(const SimulateOptions& o, std::ostream& out) {
    if (!o.panel_out.empty()) return write_simulated_panel(o);
    if (o.reps < 1) throw ValidationError("reps must be >= 1");
    const StudyPreset preset = o.table.empty() ? custom_preset(o) : table_preset(o.table, o.scale, o.seed);
    const StudyResult res = run_study(preset, resolve_threads(o.threads));
    const std::string csv = study_to_csv(res);
    const std::string json = study_to_json(res).dump(2) + "\n";
    const std::string text = study_to_text(res);
    if (!o.out.empty()) {
        std::ofstream fc(o.out + ".csv");
        std::ofstream fj(o.out + ".json");
        if (!fc || !fj) throw ValidationError("cannot write output files with prefix '" + o.out + "'");
        fc << csv;
        fj << json;
    }
    if (o.out.empty() || o.format == "table") {
        out << (o.format == "csv" ? csv : o.format == "json" ? json : text);
    }
    return 0;
}

void error_record(std::ostream& err, const std::string& kind, const std::string& message, int code) {
    Json j{{"error", kind}, {"message", message}, {"exit_code", code}};
    err << j.dump() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Interactive fixed effects panel estimation, inference and simulation"};
    app.set_config("--config", "", "INI file with one section per command");
    app.require_subcommand(1);

    EstimateOptions est;
    CLI::App* c_est = app.add_subcommand("estimate", "fit the model, bias-corrected estimates and standard errors");
    add_model_options(c_est, est);
    c_est->add_flag("--jackknife", est.jackknife, "also compute the split-panel jackknife estimate");

    TestOptionsCli tst;
    CLI::App* c_test = app.add_subcommand("test", "WD, LR, LM and their bias-corrected versions");
    add_model_options(c_test, tst);
    c_test->add_option("--restriction", tst.restrictions, "linear restriction c1,...,cK=h (repeatable)")
        ->delimiter(';');
    c_test->add_option("--lr-shift", tst.lr_shift, "estimates used for the LR* shift")
        ->check(CLI::IsMember({"unrestricted", "restricted"}));

    LsmdOptions ls;
    CLI::App* c_ls = app.add_subcommand("lsmd", "least squares minimum distance for endogenous regressors");
    add_model_options(c_ls, ls);
    c_ls->add_option("--endog", ls.endog, "endogenous regressor columns")->delimiter(',')->required();
    c_ls->add_option("--instruments", ls.instruments, "instrument columns")->delimiter(',')->required();
    c_ls->add_option("--weight", ls.weight, "L x L weight 'a,b;c,d' or 'identity'");

    ModelOptions dg;
    CLI::App* c_dg = app.add_subcommand("diagnose", "identification diagnostics for the regressor set");
    add_model_options(c_dg, dg);

    SimulateOptions sim;
    CLI::App* c_sim = app.add_subcommand("simulate", "Monte Carlo study (table preset or custom design)");
    c_sim->add_option("--table", sim.table, "preset: 1, 2, 3, 6, 7, 8, S1, S2, S3");
    c_sim->add_option("--scale", sim.scale, "factor on the 10000 replications of a preset");
    c_sim->add_option("--seed", sim.seed, "master seed");
    c_sim->add_option("--threads", sim.threads, "worker cap (default: IFE_THREADS or all cores)");
    c_sim->add_option("--out", sim.out, "output prefix; writes <prefix>.csv and <prefix>.json");
    c_sim->add_option("--format", sim.format, "csv, json or table")->check(CLI::IsMember({"csv", "json", "table"}));
    c_sim->add_option("--kind", sim.kind, "custom design: estimators, tests or fraction")
        ->check(CLI::IsMember({"estimators", "tests", "fraction"}));
    c_sim->add_option("--n", sim.n, "custom design: units");
    c_sim->add_option("--t", sim.t, "custom design: periods");
    c_sim->add_option("--rho0", sim.rho0, "custom design: AR coefficient");
    c_sim->add_option("--r-true", sim.r_true, "custom design: factors in the DGP");
    c_sim->add_option("--r-fit", sim.r_fit, "custom design: factors used in estimation");
    c_sim->add_option("--rho-f", sim.rho_f, "custom design: factor persistence");
    c_sim->add_option("--sigma-f", sim.sigma_f, "custom design: factor standard deviation");
    c_sim->add_option("--burn-in", sim.burn_in, "custom design: discarded initial periods");
    c_sim->add_option("--reps", sim.reps, "custom design: replications");
    c_sim->add_option("--bandwidth", sim.bandwidth, "custom design: M or auto");
    c_sim->add_option("--estimators", sim.estimators, "custom design: OLS,FLS,BC-FLS,JK-FLS,CCE")->delimiter(',');
    c_sim->add_option("--tests", sim.tests, "custom design: WD,LR,LM,WD*,LR*,LM*")->delimiter(',');
    c_sim->add_option("--bandwidths", sim.bandwidths, "custom fraction design: bandwidth grid")->delimiter(',');
    c_sim->add_flag("--alternatives", sim.alternatives, "custom test design: also rho0 -+ (NT)^-1/2");
    c_sim->add_option("--panel-out", sim.panel_out, "write one simulated panel CSV (custom design) and exit");
    c_sim->add_option("--design", sim.design, "panel design for --panel-out: ar1 or endogenous (adds instrument z)")
        ->check(CLI::IsMember({"ar1", "endogenous"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& ex) {
        error_record(err, "validation", ex.what(), 2);
        return 2;
    }

    try {
        if (c_est->parsed()) return run_estimate(est, out);
        if (c_test->parsed()) return run_test(tst, out);
        if (c_ls->parsed()) return run_lsmd(ls, out);
        if (c_dg->parsed()) return run_diagnose(dg, out);
        if (c_sim->parsed()) return run_simulate(sim, out);
    } catch (const ValidationError& ex) {
        error_record(err, "validation", ex.what(), 2);
        return 2;
    } catch (const NumericalError& ex) {
        error_record(err, "numerical", ex.what(), 3);
        return 3;
    } catch (const std::invalid_argument& ex) {
        error_record(err, "validation", ex.what(), 2);
        return 2;
    } catch (const std::exception& ex) {
        error_record(err, "numerical", ex.what(), 3);
        return 3;
    }
    return 2;
}

}  // namespace ife
