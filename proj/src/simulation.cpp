#include "ife/simulation.hpp"

#include "ife/errors.hpp"
#include "ife/extensions.hpp"
#include "ife/parallel.hpp"
#include "ife/rng.hpp"

#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace ife {

std::string to_string(ErrorDist e) { return e == ErrorDist::StudentT5 ? "student_t5" : "normal"; }

std::vector<std::string> check_dgp(const DgpConfig& cfg) {
    if (cfg.n < 1 || cfg.t < 1) throw ValidationError("simulation needs N >= 1 and T >= 1");
    if (!(std::abs(cfg.rho0) < 1.0)) throw ValidationError("|rho0| must be < 1 for a stationary AR(1)");
    if (!(std::abs(cfg.rho_f) < 1.0)) throw ValidationError("|rho_f| must be < 1");
    if (!(cfg.sigma_f >= 0.0)) throw ValidationError("sigma_f must be >= 0");
    if (!(cfg.error_scale >= 0.0)) throw ValidationError("error scale must be >= 0");
    if (cfg.r_true < 0) throw ValidationError("number of true factors must be >= 0");
    if (cfg.burn_in < 0) throw ValidationError("burn-in must be >= 0");
    std::vector<std::string> warnings;
    if (cfg.burn_in < 200) {
        warnings.push_back("burn-in below 200 periods; the panel may not start from the stationary distribution");
    }
    return warnings;
}

SimulatedPanel simulate_ar1(const DgpConfig& cfg) {
    SimulatedPanel out;
    out.warnings = check_dgp(cfg);
    const Index n = cfg.n;
    const Index t = cfg.t;
    const Index r = cfg.r_true;
    const Index total = cfg.burn_in + t;
    std::mt19937_64 gen(cfg.seed);
    boost::random::normal_distribution<double> normal(0.0, 1.0);

    Matrix lambda(n, r);
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < r; ++k) lambda(i, k) = 1.0 + normal(gen);

    // factor path, index 0 is the stationary start
    Matrix fpath(total + 1, r);
    const double innov_sd = std::sqrt(1.0 - cfg.rho_f * cfg.rho_f) * cfg.sigma_f;
    for (Index k = 0; k < r; ++k) fpath(0, k) = cfg.sigma_f * normal(gen);
    for (Index s = 1; s <= total; ++s)
        for (Index k = 0; k < r; ++k) fpath(s, k) = cfg.rho_f * fpath(s - 1, k) + innov_sd * normal(gen);

    auto draw_error = [&]() {
        if (cfg.error_dist == ErrorDist::Normal) return cfg.error_scale * normal(gen);
        const double z = normal(gen);
        double chi2 = 0.0;
        for (int j = 0; j < 5; ++j) {
            const double u = normal(gen);
            chi2 += u * u;
        }
        return cfg.error_scale * z / std::sqrt(chi2 / 5.0);
    };

    Matrix y(n, t);
    Matrix ylag(n, t);
    Matrix e(n, t);
    Vector prev = Vector::Zero(n);
    for (Index s = 1; s <= total; ++s) {
        const Vector common = r > 0 ? Vector(lambda * fpath.row(s).transpose()) : Vector(Vector::Zero(n));
        Vector cur(n);
        for (Index i = 0; i < n; ++i) {
            const double err = draw_error();
            cur(i) = cfg.rho0 * prev(i) + common(i) + err;
            if (s > cfg.burn_in) e(i, s - cfg.burn_in - 1) = err;
        }
        if (s > cfg.burn_in) {
            const Index c = s - cfg.burn_in - 1;
            y.col(c) = cur;
            ylag.col(c) = prev;
        }
        prev = cur;
    }

    out.data = PanelDataset(y, {ylag});
    out.data.regressor_names = {"y_lag"};
    out.truth.lambda = lambda;
    out.truth.f = fpath.bottomRows(t);
    out.truth.e = e;
    out.truth.beta = Vector::Constant(1, cfg.rho0);
    return out;
}

EndogenousPanel simulate_endogenous(const EndogDgpConfig& cfg) {
    if (cfg.n < 2 || cfg.t < 2) throw ValidationError("endogenous design needs N, T >= 2");
    if (!(std::abs(cfg.endog_corr) < 1.0)) throw ValidationError("|endog_corr| must be < 1");
    const Index n = cfg.n;
    const Index t = cfg.t;
    std::mt19937_64 gen(cfg.seed);
    boost::random::normal_distribution<double> normal(0.0, 1.0);
    Matrix lambda(n, 1);
    for (Index i = 0; i < n; ++i) lambda(i, 0) = 1.0 + normal(gen);
    Matrix f(t, 1);
    for (Index s = 0; s < t; ++s) f(s, 0) = normal(gen);
    Matrix z(n, t);
    Matrix v(n, t);
    Matrix e(n, t);
    const double c = cfg.endog_corr;
    const double s2 = std::sqrt(1.0 - c * c);
    for (Index s = 0; s < t; ++s) {
        for (Index i = 0; i < n; ++i) {
            z(i, s) = normal(gen);
            v(i, s) = normal(gen);
            e(i, s) = c * v(i, s) + s2 * normal(gen);
        }
    }
    const Matrix common = lambda * f.transpose();
    const Matrix x = z + common + v;
    const Matrix y = cfg.beta0 * x + common + e;
    EndogenousPanel out;
    out.data = PanelDataset(y, {x});
    out.instrument = z;
    out.truth.lambda = lambda;
    out.truth.f = f;
    out.truth.e = e;
    out.truth.beta = Vector::Constant(1, cfg.beta0);
    return out;
}

std::string to_string(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::OLS: return "OLS";
        case EstimatorKind::FLS: return "FLS";
        case EstimatorKind::BCFLS: return "BC-FLS";
        case EstimatorKind::JKFLS: return "JK-FLS";
        case EstimatorKind::CCE: return "CCE";
    }
    return "?";
}

EstimatorKind parse_estimator(const std::string& s) {
    for (EstimatorKind k : {EstimatorKind::OLS, EstimatorKind::FLS, EstimatorKind::BCFLS, EstimatorKind::JKFLS,
                            EstimatorKind::CCE}) {
        if (to_string(k) == s) return k;
    }
    throw ValidationError("unknown estimator '" + s + "'");
}

TestVariant parse_test_variant(const std::string& s) {
    for (TestVariant v : {TestVariant::WD, TestVariant::LR, TestVariant::LM, TestVariant::WDStar,
                          TestVariant::LRStar, TestVariant::LMStar}) {
        if (to_string(v) == s) return v;
    }
    throw ValidationError("unknown test '" + s + "'");
}

EstimatorSummary summarize_estimates(EstimatorKind kind, const std::vector<double>& draws, double truth) {
    EstimatorSummary s;
    s.kind = kind;
    if (draws.empty()) {
        s.mean = s.bias = s.std = s.rmse = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    const double n = static_cast<double>(draws.size());
    double mean = 0.0;
    for (double v : draws) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : draws) var += (v - mean) * (v - mean);
    var /= n;
    s.mean = mean;
    s.bias = mean - truth;
    s.std = std::sqrt(var);
    s.rmse = std::sqrt(s.bias * s.bias + var);
    return s;
}

double empirical_quantile(std::vector<double> v, double p) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double pos = std::ceil(p * static_cast<double>(v.size()));
    const size_t idx = static_cast<size_t>(std::clamp(pos, 1.0, static_cast<double>(v.size()))) - 1;
    return v[idx];
}

namespace {

double rejection_rate(const std::vector<double>& stats, double crit) {
    if (stats.empty()) return std::numeric_limits<double>::quiet_NaN();
    size_t hits = 0;
    for (double s : stats) hits += s > crit ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(stats.size());
}

ModelSpec fit_spec(const McConfig& cfg) {
    ModelSpec spec;
    spec.r = cfg.r_fit;
    spec.bandwidth = cfg.bandwidth;
    spec.optimizer = cfg.optimizer;
    return spec;
}

void check_mc(const McConfig& cfg, int min_reps) {
    if (cfg.reps < min_reps) {
        throw ValidationError("Monte Carlo needs reps >= " + std::to_string(min_reps) + " (got " +
                              std::to_string(cfg.reps) + ")");
    }
    check_dgp(cfg.dgp);
    if (cfg.r_fit < 0 || cfg.r_fit > std::min(cfg.dgp.n, cfg.dgp.t) - 1) {
        std::ostringstream os;
        os << "number of factors R=" << cfg.r_fit << " violates 0 <= R <= min(N,T)-1";
        throw ValidationError(os.str());
    }
    if (cfg.bandwidth && *cfg.bandwidth < 1) throw ValidationError("bandwidth must be >= 1");
    check_optimizer_config(cfg.optimizer);
}

DgpConfig rep_dgp(const McConfig& cfg, int rep) {
    DgpConfig d = cfg.dgp;
    d.seed = derive_seed(cfg.dgp.seed, static_cast<std::uint64_t>(rep));
    return d;
}

// Runs `body` for every replication, catching numerical failures; returns the per-rep
// failure flags and raises when more than 5% failed.
template <typename Body>
std::vector<char> run_reps(const McConfig& cfg, McSummary& summary, Body&& body) {
    std::vector<char> failed(static_cast<size_t>(cfg.reps), 0);
    std::vector<std::string> messages(static_cast<size_t>(cfg.reps));
    parallel_for(static_cast<size_t>(cfg.reps), cfg.threads, [&](size_t rep) {
        try {
            body(static_cast<int>(rep));
        } catch (const NumericalError& ex) {
            failed[rep] = 1;
            messages[rep] = ex.what();
        } catch (const ValidationError& ex) {
            failed[rep] = 1;
            messages[rep] = ex.what();
        }
    });
    summary.reps = cfg.reps;
    summary.rep_failures = static_cast<int>(std::count(failed.begin(), failed.end(), 1));
    if (summary.rep_failures > 0) {
        const size_t first = static_cast<size_t>(std::find(failed.begin(), failed.end(), 1) - failed.begin());
        std::ostringstream os;
        os << summary.rep_failures << " of " << cfg.reps << " replications failed; first (rep " << first
           << "): " << messages[first];
        if (20 * summary.rep_failures > cfg.reps) {
            throw NumericalError(os.str() + "; check the model specification");
        }
        summary.warnings.push_back(os.str());
    }
    return failed;
}

}  // namespace

TestSummary summarize_test(TestVariant variant, const std::vector<double>& null_stats,
                           const std::vector<double>& left_stats, const std::vector<double>& right_stats, int df) {
    TestSummary s;
    s.variant = variant;
    const double crit = chi2_quantile(0.95, df);
    s.size = rejection_rate(null_stats, crit);
    s.critical_value = empirical_quantile(null_stats, 0.95);
    if (!left_stats.empty()) {
        s.power_left = rejection_rate(left_stats, crit);
        s.sc_power_left = rejection_rate(left_stats, s.critical_value);
    }
    if (!right_stats.empty()) {
        s.power_right = rejection_rate(right_stats, crit);
        s.sc_power_right = rejection_rate(right_stats, s.critical_value);
    }
    return s;
}

McSummary mc_estimators(const McConfig& cfg) {
    check_mc(cfg, 2);
    if (cfg.estimators.empty()) throw ValidationError("no estimators requested");
    const size_t ne = cfg.estimators.size();
    const ModelSpec spec = fit_spec(cfg);
    std::vector<std::vector<double>> est(ne, std::vector<double>(static_cast<size_t>(cfg.reps), 0.0));
    McSummary summary;
    const std::vector<char> failed = run_reps(cfg, summary, [&](int rep) {
        const SimulatedPanel sim = simulate_ar1(rep_dgp(cfg, rep));
        std::optional<FitResult> fit;
        auto get_fit = [&]() -> const FitResult& {
            if (!fit) fit = minimize_profile(sim.data, spec);
            return *fit;
        };
        for (size_t j = 0; j < ne; ++j) {
            double v = 0.0;
            switch (cfg.estimators[j]) {
                case EstimatorKind::OLS: v = pooled_ols(sim.data)(0); break;
                case EstimatorKind::FLS: v = get_fit().beta_hat(0); break;
                case EstimatorKind::BCFLS:
                    v = bias_corrected(get_fit(), sim.data, KernelConfig{resolve_bandwidth(spec, sim.data.t())})
                            .beta_star(0);
                    break;
                case EstimatorKind::JKFLS: v = jackknife(sim.data, spec).beta_jk(0); break;
                case EstimatorKind::CCE: v = cce_pooled_ar1(sim.data); break;
            }
            est[j][static_cast<size_t>(rep)] = v;
        }
    });
    for (size_t j = 0; j < ne; ++j) {
        std::vector<double> kept;
        for (int rep = 0; rep < cfg.reps; ++rep)
            if (!failed[static_cast<size_t>(rep)]) kept.push_back(est[j][static_cast<size_t>(rep)]);
        summary.estimators.push_back(summarize_estimates(cfg.estimators[j], kept, cfg.dgp.rho0));
    }
    return summary;
}

McSummary mc_tests(const McConfig& cfg) {
    check_mc(cfg, 100);
    if (cfg.tests.empty()) throw ValidationError("no tests requested");
    const ModelSpec spec = fit_spec(cfg);
    const double delta = 1.0 / std::sqrt(static_cast<double>(cfg.dgp.n * cfg.dgp.t));
    const std::vector<double> hyps = cfg.alternatives
                                         ? std::vector<double>{cfg.dgp.rho0, cfg.dgp.rho0 - delta, cfg.dgp.rho0 + delta}
                                         : std::vector<double>{cfg.dgp.rho0};
    const size_t nt = cfg.tests.size();
    // stats[h][test][rep]
    std::vector<std::vector<std::vector<double>>> stats(
        hyps.size(), std::vector<std::vector<double>>(nt, std::vector<double>(static_cast<size_t>(cfg.reps), 0.0)));
    McSummary summary;
    const std::vector<char> failed = run_reps(cfg, summary, [&](int rep) {
        const SimulatedPanel sim = simulate_ar1(rep_dgp(cfg, rep));
        const FitResult fit = minimize_profile(sim.data, spec);
        for (size_t h = 0; h < hyps.size(); ++h) {
            RestrictionSpec rest{Matrix::Ones(1, 1), Vector::Constant(1, hyps[h])};
            const TestSuite suite = run_tests(sim.data, spec, rest, fit);
            for (size_t j = 0; j < nt; ++j) {
                const TestResult* r = nullptr;
                switch (cfg.tests[j]) {
                    case TestVariant::WD: r = &suite.wd; break;
                    case TestVariant::LR: r = &suite.lr; break;
                    case TestVariant::LM: r = &suite.lm; break;
                    case TestVariant::WDStar: r = &suite.wd_star; break;
                    case TestVariant::LRStar: r = &suite.lr_star; break;
                    case TestVariant::LMStar: r = &suite.lm_star; break;
                }
                stats[h][j][static_cast<size_t>(rep)] = r->statistic;
            }
        }
    });
    auto kept = [&](size_t h, size_t j) {
        std::vector<double> v;
        if (h >= hyps.size()) return v;
        for (int rep = 0; rep < cfg.reps; ++rep)
            if (!failed[static_cast<size_t>(rep)]) v.push_back(stats[h][j][static_cast<size_t>(rep)]);
        return v;
    };
    for (size_t j = 0; j < nt; ++j) {
        summary.tests.push_back(summarize_test(cfg.tests[j], kept(0, j), kept(1, j), kept(2, j), 1));
    }
    return summary;
}

TestSummary chi2_selftest(int reps, std::uint64_t seed, int threads) {
    if (reps < 1) throw ValidationError("reps must be >= 1");
    std::vector<double> stats(static_cast<size_t>(reps));
    parallel_for(stats.size(), threads, [&](size_t rep) {
        std::mt19937_64 gen(derive_seed(seed, rep));
        boost::random::normal_distribution<double> normal(0.0, 1.0);
        const double z = normal(gen);
        stats[rep] = z * z;
    });
    return summarize_test(TestVariant::WD, stats, {}, {}, 1);
}

std::vector<FractionRow> bias_fraction(const McConfig& cfg, const std::vector<int>& bandwidths) {
    check_mc(cfg, 500);
    if (bandwidths.empty()) throw ValidationError("no bandwidths given");
    for (int m : bandwidths)
        if (m < 1) throw ValidationError("bandwidth must be >= 1");
    const ModelSpec spec = fit_spec(cfg);
    const double sqrt_nt = std::sqrt(static_cast<double>(cfg.dgp.n * cfg.dgp.t));
    const size_t reps = static_cast<size_t>(cfg.reps);
    std::vector<double> dev(reps, 0.0);
    std::vector<std::vector<double>> corr(bandwidths.size(), std::vector<double>(reps, 0.0));
    McSummary summary;
    const std::vector<char> failed = run_reps(cfg, summary, [&](int rep) {
        const SimulatedPanel sim = simulate_ar1(rep_dgp(cfg, rep));
        const FitResult fit = minimize_profile(sim.data, spec);
        dev[static_cast<size_t>(rep)] = sqrt_nt * (fit.beta_hat(0) - cfg.dgp.rho0);
        for (size_t m = 0; m < bandwidths.size(); ++m) {
            const InferenceResult inf = bias_corrected(fit, sim.data, KernelConfig{bandwidths[m]});
            corr[m][static_cast<size_t>(rep)] = (inf.w_inv * inf.b_hat)(0);
        }
    });
    double n = 0.0, mean_dev = 0.0;
    for (size_t r = 0; r < reps; ++r)
        if (!failed[r]) {
            n += 1.0;
            mean_dev += dev[r];
        }
    mean_dev /= n;
    double var = 0.0;
    for (size_t r = 0; r < reps; ++r)
        if (!failed[r]) var += (dev[r] - mean_dev) * (dev[r] - mean_dev);
    const double se = n > 1 ? std::sqrt(var / (n - 1.0) / n) : std::numeric_limits<double>::infinity();

    std::vector<FractionRow> rows;
    for (size_t m = 0; m < bandwidths.size(); ++m) {
        FractionRow row;
        row.bandwidth = bandwidths[m];
        double mc = 0.0;
        for (size_t r = 0; r < reps; ++r)
            if (!failed[r]) mc += corr[m][r];
        row.mean_correction = mc / n;
        row.scaled_bias = mean_dev;
        row.scaled_bias_se = se;
        // the bias itself must be distinguishable from zero for a ratio to mean anything
        if (std::abs(mean_dev) > 2.0 * se) row.fraction = row.mean_correction / mean_dev;
        rows.push_back(row);
    }
    return rows;
}

ExpansionDiagnostic expansion_terms(const Truth& truth, const PanelDataset& d) {
    check_shapes(d);
    const Index n = d.n();
    const Index t = d.t();
    const Index k = d.k();
    if (truth.e.rows() != n || truth.e.cols() != t || truth.lambda.rows() != n || truth.f.rows() != t) {
        throw ValidationError("truth record does not match the dataset");
    }
    const double nt = static_cast<double>(n * t);
    const double root = std::sqrt(nt);
    const Matrix& lam = truth.lambda;
    const Matrix& f = truth.f;
    const Matrix& e = truth.e;
    const ProjectorPair pl = projectors(lam);
    const ProjectorPair pf = projectors(f);
    const Matrix ll_inv = pinv_symmetric(lam.transpose() * lam);
    const Matrix ff_inv = pinv_symmetric(f.transpose() * f);
    // f (f'f)^-1 (l'l)^-1 l'  (T x N) and l (l'l)^-1 (f'f)^-1 f'  (N x T)
    const Matrix s_f = f * ff_inv * ll_inv * lam.transpose();
    const Matrix s_l = lam * ll_inv * ff_inv * f.transpose();
    const Matrix mle = pl.m * e;            // M_l e
    const Matrix emf = e * pf.m;            // e M_f
    const Matrix emfe = emf * e.transpose();      // e M_f e'   (N x N)
    const Matrix emle = e.transpose() * mle;      // e' M_l e   (T x T)

    ExpansionDiagnostic out;
    out.w_nt.resize(k, k);
    std::vector<Matrix> xa(static_cast<size_t>(k));
    for (Index j = 0; j < k; ++j) xa[j] = pl.m * d.x[j] * pf.m;
    for (Index a = 0; a < k; ++a)
        for (Index b = a; b < k; ++b) {
            out.w_nt(a, b) = frob_dot(xa[a], d.x[b]) / nt;
            out.w_nt(b, a) = out.w_nt(a, b);
        }
    out.c1.resize(k);
    out.c2.resize(k);
    out.c2_traces.assign(3, Vector(k));
    for (Index j = 0; j < k; ++j) {
        const Matrix& x = d.x[j];
        // Tr(M_f e' M_l X) = <M_l e M_f, X>
        out.c1(j) = frob_dot(mle * pf.m, x) / root;
        const double t1 = (emfe * pl.m * x * s_f).trace();
        const double t2 = (emle * pf.m * x.transpose() * s_l).trace();
        const double t3 = (mle.transpose() * x * pf.m * e.transpose() * s_l).trace();
        out.c2_traces[0](j) = t1;
        out.c2_traces[1](j) = t2;
        out.c2_traces[2](j) = t3;
        out.c2(j) = -(t1 + t2 + t3) / root;
    }
    const Matrix w_inv = spd_inverse(out.w_nt, "W_NT");
    out.predicted_dev = w_inv * (out.c1 + out.c2) / root;
    return out;
}

ExpansionDiagnostic expansion_diagnostic(const Truth& truth, const PanelDataset& d, const ModelSpec& spec) {
    ExpansionDiagnostic out = expansion_terms(truth, d);
    if (truth.beta.size() != d.k()) throw ValidationError("truth beta has the wrong length");
    const FitResult fit = minimize_profile(d, spec);
    out.actual_dev = fit.beta_hat - truth.beta;
    out.gap = (out.actual_dev - out.predicted_dev).norm();
    return out;
}

}  // namespace ife
