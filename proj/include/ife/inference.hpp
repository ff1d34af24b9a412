#pragma once

#include "ife/estimator.hpp"
#include "ife/linalg.hpp"
#include "ife/panel.hpp"

#include <limits>
#include <string>
#include <vector>

namespace ife {

struct BiasTerms {
    Vector b1;  // kernel-truncated, from predetermined regressors
    Vector b2;  // cross-sectional heteroscedasticity
    Vector b3;  // time-series heteroscedasticity
};

/// M_lambda X_k M_f for every regressor, using the fit's factors.
std::vector<Matrix> annihilated_regressors(const FitResult& fit, const PanelDataset& d);

/// (NT)^-1 sum_it Xa_it Xa_it'. Not inverted here; singularity is caught where Ŵ is inverted.
Matrix w_hat(const FitResult& fit, const PanelDataset& d);

/// (NT)^-1 sum_it e_it^2 Xa_it Xa_it'.
Matrix omega_hat(const FitResult& fit, const PanelDataset& d);

/// The three bias estimators. Appends a warning when M >= T.
BiasTerms bias_hats(const FitResult& fit, const PanelDataset& d, KernelConfig cfg,
                    std::vector<std::string>* warnings = nullptr);

struct InferenceResult {
    Vector beta_hat;
    Matrix w_hat;
    Matrix omega_hat;
    Vector b1_hat;
    Vector b2_hat;
    Vector b3_hat;
    double kappa = 0.0;
    /// B = -kappa B1 - B2/kappa - kappa B3
    Vector b_hat;
    Matrix w_inv;
    Vector beta_star;
    Matrix cov_star;
    Vector std_err;
    int bandwidth_used = 0;
    std::vector<std::string> warnings;
};

/// beta* = beta_hat + W^-1 (B1/T + B2/N + B3/T) with sandwich covariance W^-1 Omega W^-1 / NT.
InferenceResult bias_corrected(const FitResult& fit, const PanelDataset& d, KernelConfig cfg);

struct JackknifeResult {
    Vector beta_jk;
    Vector beta_full;
    Vector beta_time_halves;  // average over the two time halves
    Vector beta_unit_halves;  // average over the two unit halves
    std::vector<std::string> warnings;
};

/// Split-panel jackknife 3 b_NT - b_{N,T/2} - b_{N/2,T}. Odd N or T drops the last index.
JackknifeResult jackknife(const PanelDataset& d, const ModelSpec& spec);

enum class TestVariant { WD, LR, LM, WDStar, LRStar, LMStar };

std::string to_string(TestVariant v);

struct TestResult {
    double statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
    TestVariant variant = TestVariant::WD;
    double c_hat = std::numeric_limits<double>::quiet_NaN();
};

/// Upper tail P(chi2_df > x).
double chi2_upper_tail(double x, int df);

/// 1 - alpha quantile of chi2_df.
double chi2_quantile(double p, int df);

TestResult make_test_result(double statistic, int df, TestVariant v);

/// Wald statistic on beta* (bias-corrected) or beta_hat (uncorrected).
TestResult wald_star(const FitResult& fit, const InferenceResult& inf, const RestrictionSpec& rest);
TestResult wald(const FitResult& fit, const InferenceResult& inf, const RestrictionSpec& rest);

/// Which estimates feed the LR* argument shift W^-1 B / sqrt(NT).
enum class LrShiftSource { Unrestricted, Restricted };

struct TestOptions {
    LrShiftSource lr_shift = LrShiftSource::Unrestricted;
};

TestResult lr_star(const PanelDataset& d, const ModelSpec& spec, const RestrictionSpec& rest,
                   TestOptions opts = {});

TestResult lm_star(const PanelDataset& d, const ModelSpec& spec, const RestrictionSpec& rest,
                   KernelConfig cfg);

struct UncorrectedTests {
    TestResult wd;
    TestResult lr;
    TestResult lm;
};

/// WD, LR and LM from precomputed unrestricted/restricted fits and their inference.
UncorrectedTests uncorrected_tests(const FitResult& fit, const InferenceResult& inf,
                                   const FitResult& restricted, const InferenceResult& restricted_inf,
                                   const RestrictionSpec& rest);

/// All six statistics sharing one unrestricted and one restricted fit.
struct TestSuite {
    FitResult unrestricted;
    FitResult restricted;
    InferenceResult inference;
    InferenceResult restricted_inference;
    TestResult wd, lr, lm, wd_star, lr_star, lm_star;
};

TestSuite run_tests(const PanelDataset& d, const ModelSpec& spec, const RestrictionSpec& rest,
                    TestOptions opts = {});

/// Variant of run_tests that reuses an unrestricted fit already at hand.
TestSuite run_tests(const PanelDataset& d, const ModelSpec& spec, const RestrictionSpec& rest,
                    const FitResult& unrestricted, TestOptions opts = {});

}  // namespace ife
