#pragma once

#include "ife/estimator.hpp"
#include "ife/inference.hpp"
#include "ife/linalg.hpp"
#include "ife/panel.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ife {

enum class ErrorDist { StudentT5, Normal };

std::string to_string(ErrorDist e);

/// AR(1) panel with R AR(1) factors:
/// Y_it = rho0 Y_i,t-1 + lambda_i' f_t + e_it, lambda_ir ~ N(1,1),
/// f_tr = rho_f f_t-1,r + u_tr with u ~ N(0, (1 - rho_f^2) sigma_f^2).
struct DgpConfig {
    Index n = 100;
    Index t = 20;
    double rho0 = 0.3;
    Index r_true = 1;
    double rho_f = 0.5;
    double sigma_f = 0.5;
    Index burn_in = 1000;
    ErrorDist error_dist = ErrorDist::StudentT5;
    /// Multiplies the error draw; 0 gives a noise-free panel.
    double error_scale = 1.0;
    std::uint64_t seed = 1;
};

/// Throws ValidationError on an invalid config; returns warnings (short burn-in).
std::vector<std::string> check_dgp(const DgpConfig& cfg);

struct Truth {
    Matrix lambda;  // N x R
    Matrix f;       // T x R
    Matrix e;       // N x T
    Vector beta;
};

struct SimulatedPanel {
    PanelDataset data;
    Truth truth;
    std::vector<std::string> warnings;
};

/// Draw order: loadings, factor path (stationary start, then burn-in + T steps),
/// errors period by period. Y_0 = 0 before the burn-in. X_1 = lagged Y.
SimulatedPanel simulate_ar1(const DgpConfig& cfg);

/// Endogenous design for LS-MD: Y = beta0 X + lambda f' + e, X = Z + lambda f' + v,
/// corr(e, v) = endog_corr, Z an iid N(0,1) instrument, f_t ~ N(0,1), lambda_i ~ N(1,1).
struct EndogDgpConfig {
    Index n = 300;
    Index t = 30;
    double beta0 = 1.0;
    double endog_corr = 0.5;
    std::uint64_t seed = 1;
};

struct EndogenousPanel {
    PanelDataset data;
    Matrix instrument;
    Truth truth;
};

EndogenousPanel simulate_endogenous(const EndogDgpConfig& cfg);

enum class EstimatorKind { OLS, FLS, BCFLS, JKFLS, CCE };

std::string to_string(EstimatorKind k);
EstimatorKind parse_estimator(const std::string& s);
TestVariant parse_test_variant(const std::string& s);

struct McConfig {
    DgpConfig dgp;
    int reps = 100;
    std::vector<EstimatorKind> estimators{EstimatorKind::OLS, EstimatorKind::FLS, EstimatorKind::BCFLS};
    Index r_fit = 1;
    /// nullopt = auto, M = max(1, floor(log2 T)).
    std::optional<int> bandwidth;
    std::vector<TestVariant> tests;
    /// Also test the shifted hypotheses rho = rho0 -+ (NT)^-1/2 on the same data.
    bool alternatives = false;
    int threads = 0;
    OptimizerConfig optimizer;
};

struct EstimatorSummary {
    EstimatorKind kind = EstimatorKind::FLS;
    double mean = 0.0;
    double bias = 0.0;
    double std = 0.0;
    double rmse = 0.0;
};

struct TestSummary {
    TestVariant variant = TestVariant::WD;
    double size = 0.0;
    double power_left = std::numeric_limits<double>::quiet_NaN();
    double power_right = std::numeric_limits<double>::quiet_NaN();
    double sc_power_left = std::numeric_limits<double>::quiet_NaN();
    double sc_power_right = std::numeric_limits<double>::quiet_NaN();
    /// Empirical 95th percentile of the statistic under the null.
    double critical_value = 0.0;
};

struct McSummary {
    int reps = 0;
    int rep_failures = 0;
    std::vector<EstimatorSummary> estimators;
    std::vector<TestSummary> tests;
    double bias_fraction = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> warnings;
};

/// Moments of the draws around `truth`; std uses divisor n so that
/// rmse^2 = bias^2 + std^2 holds exactly.
EstimatorSummary summarize_estimates(EstimatorKind kind, const std::vector<double>& draws, double truth);

/// Rejection rates at the chi2_df 5% critical value; size-corrected powers use the
/// empirical 95th percentile of `null_stats`. Empty alternative vectors give NaN powers.
TestSummary summarize_test(TestVariant variant, const std::vector<double>& null_stats,
                           const std::vector<double>& left_stats, const std::vector<double>& right_stats, int df);

/// Empirical quantile, order statistic ceil(p n).
double empirical_quantile(std::vector<double> v, double p);

McSummary mc_estimators(const McConfig& cfg);
McSummary mc_tests(const McConfig& cfg);

/// Harness self-check: the "statistic" of each replication is an exact chi2_1 draw.
TestSummary chi2_selftest(int reps, std::uint64_t seed, int threads);

struct FractionRow {
    int bandwidth = 1;
    /// Share of the LS bias removed: E(W^-1 B) / (sqrt(NT) E(beta_hat - beta0)).
    double fraction = std::numeric_limits<double>::quiet_NaN();
    double scaled_bias = 0.0;       // sqrt(NT) E(beta_hat - beta0)
    double scaled_bias_se = 0.0;    // its Monte Carlo standard error
    double mean_correction = 0.0;   // E(W^-1 B)
};

std::vector<FractionRow> bias_fraction(const McConfig& cfg, const std::vector<int>& bandwidths);

struct ExpansionDiagnostic {
    Matrix w_nt;
    Vector c1;
    Vector c2;
    /// The three traces inside C2, before the -(NT)^-1/2 factor.
    std::vector<Vector> c2_traces;
    Vector predicted_dev;
    Vector actual_dev;
    double gap = 0.0;
};

/// W_NT, C1, C2 at the true (lambda0, f0, e) and the implied first-order deviation.
ExpansionDiagnostic expansion_terms(const Truth& truth, const PanelDataset& d);

/// expansion_terms plus the realized deviation beta_hat - beta0 from a fit with `spec`.
ExpansionDiagnostic expansion_diagnostic(const Truth& truth, const PanelDataset& d, const ModelSpec& spec);

}  // namespace ife
