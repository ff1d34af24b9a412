#include "helpers.hpp"

#include "ife/errors.hpp"
#include "ife/estimator.hpp"
#include "ife/inference.hpp"
#include "ife/simulation.hpp"

#include <doctest.h>

using namespace ife;
using namespace testutil;

namespace {

Matrix dense_inverse(const Matrix& a) { return a.inverse(); }

// Bias terms written out with dense N x N and T x T matrices.
BiasTerms dense_bias(const FitResult& fit, const PanelDataset& d, int m) {
    const Index n = d.n(), t = d.t();
    const Matrix& lam = fit.lambda_hat;
    const Matrix& f = fit.f_hat;
    const Matrix& e = fit.residuals;
    const Matrix pf = f * dense_inverse(f.transpose() * f) * f.transpose();
    const Matrix ml = Matrix::Identity(n, n) - lam * dense_inverse(lam.transpose() * lam) * lam.transpose();
    const Matrix mf = Matrix::Identity(t, t) - pf;
    BiasTerms out{Vector::Zero(d.k()), Vector::Zero(d.k()), Vector::Zero(d.k())};
    for (Index k = 0; k < d.k(); ++k) {
        const Matrix& x = d.x[k];
        double b1 = 0.0;
        for (Index i = 0; i < n; ++i)
            for (Index tt = 0; tt < t - 1; ++tt)
                for (Index s = tt + 1; s < t; ++s)
                    if (s - tt <= m) b1 += pf(tt, s) * e(i, tt) * x(i, s);
        out.b1(k) = b1 / n;
        const Matrix a2 = ml * x * f * dense_inverse(f.transpose() * f) * dense_inverse(lam.transpose() * lam) *
                          lam.transpose();
        const Matrix a3 = mf * x.transpose() * lam * dense_inverse(lam.transpose() * lam) *
                          dense_inverse(f.transpose() * f) * f.transpose();
        double b2 = 0.0, b3 = 0.0;
        for (Index i = 0; i < n; ++i)
            for (Index tt = 0; tt < t; ++tt) {
                b2 += e(i, tt) * e(i, tt) * a2(i, i);
                b3 += e(i, tt) * e(i, tt) * a3(tt, tt);
            }
        out.b2(k) = b2 / t;
        out.b3(k) = b3 / n;
    }
    return out;
}

FitResult noisy_fit(std::mt19937_64& rng, Index n = 12, Index t = 9, Index k = 2, Index r = 1, PanelDataset* out = nullptr) {
    Generated g = linear_panel(n, t, Vector::Constant(k, 0.4), r, 0.8, rng);
    ModelSpec spec;
    spec.r = r;
    FitResult fit = minimize_profile(g.data, spec);
    if (out) *out = g.data;
    return fit;
}

}  // namespace

TEST_CASE("W hat") {
    std::mt19937_64 rng(21);
    SUBCASE("no factors gives the least squares Gram") {
        PanelDataset d(randn(6, 5, rng), {randn(6, 5, rng), randn(6, 5, rng)});
        const FitResult fit = fit_at(Vector::Zero(2), d, 0);
        const Matrix w = w_hat(fit, d);
        for (Index a = 0; a < 2; ++a)
            for (Index b = 0; b < 2; ++b) CHECK(w(a, b) == doctest::Approx(frob_dot(d.x[a], d.x[b]) / 30.0));
    }
    SUBCASE("regressor in the loading space is annihilated") {
        PanelDataset d(randn(8, 6, rng), {randn(8, 6, rng)});
        const FitResult fit0 = fit_at(Vector::Zero(1), d, 1);
        d.x[0] = fit0.lambda_hat * randn(1, 6, rng);
        const FitResult fit = fit_at(Vector::Zero(1), d, 1);
        CHECK(std::abs(w_hat(fit, d)(0, 0)) < 1e-10);
    }
    SUBCASE("trace form") {
        PanelDataset d;
        const FitResult fit = noisy_fit(rng, 12, 9, 2, 2, &d);
        const Matrix w = w_hat(fit, d);
        const Matrix mf = projectors(fit.f_hat).m;
        const Matrix ml = projectors(fit.lambda_hat).m;
        for (Index a = 0; a < 2; ++a)
            for (Index b = 0; b < 2; ++b) {
                const double oracle = (mf * d.x[a].transpose() * ml * d.x[b]).trace() / 108.0;
                CHECK(std::abs(w(a, b) - oracle) < 1e-10);
            }
        CHECK((w - w.transpose()).norm() == 0.0);
    }
}

TEST_CASE("Omega hat") {
    std::mt19937_64 rng(22);
    PanelDataset d;
    FitResult fit = noisy_fit(rng, 10, 8, 2, 1, &d);
    SUBCASE("double loop") {
        const Matrix om = omega_hat(fit, d);
        const Matrix ml = projectors(fit.lambda_hat).m;
        const Matrix mf = projectors(fit.f_hat).m;
        const Matrix x0 = ml * d.x[0] * mf, x1 = ml * d.x[1] * mf;
        double o00 = 0, o01 = 0, o11 = 0;
        for (Index i = 0; i < 10; ++i)
            for (Index t = 0; t < 8; ++t) {
                const double e2 = fit.residuals(i, t) * fit.residuals(i, t);
                o00 += e2 * x0(i, t) * x0(i, t);
                o01 += e2 * x0(i, t) * x1(i, t);
                o11 += e2 * x1(i, t) * x1(i, t);
            }
        CHECK(std::abs(om(0, 0) - o00 / 80) < 1e-12);
        CHECK(std::abs(om(0, 1) - o01 / 80) < 1e-12);
        CHECK(std::abs(om(1, 0) - o01 / 80) < 1e-12);
        CHECK(std::abs(om(1, 1) - o11 / 80) < 1e-12);
    }
    SUBCASE("zero residuals") {
        fit.residuals.setZero();
        CHECK(omega_hat(fit, d).norm() == 0.0);
    }
    SUBCASE("constant residuals factorize") {
        fit.residuals.setConstant(1.7);
        CHECK((omega_hat(fit, d) - 1.7 * 1.7 * w_hat(fit, d)).norm() < 1e-12);
    }
}

TEST_CASE("bias estimates match dense formulas") {
    std::mt19937_64 rng(23);
    for (Index r : {1, 2}) {
        PanelDataset d;
        const FitResult fit = noisy_fit(rng, 11, 9, 2, r, &d);
        for (int m : {1, 3, 8}) {
            const BiasTerms b = bias_hats(fit, d, KernelConfig{m});
            const BiasTerms o = dense_bias(fit, d, m);
            CHECK((b.b1 - o.b1).norm() < 1e-12);
            CHECK((b.b2 - o.b2).norm() < 1e-12);
            CHECK((b.b3 - o.b3).norm() < 1e-12);
        }
    }
}

TEST_CASE("bias estimates vanish with zero residuals and warn on saturated bandwidth") {
    std::mt19937_64 rng(24);
    PanelDataset d;
    FitResult fit = noisy_fit(rng, 10, 6, 1, 1, &d);
    fit.residuals.setZero();
    const BiasTerms b = bias_hats(fit, d, KernelConfig{2});
    CHECK(b.b1.norm() == 0.0);
    CHECK(b.b2.norm() == 0.0);
    CHECK(b.b3.norm() == 0.0);
    std::vector<std::string> warnings;
    bias_hats(fit, d, KernelConfig{6}, &warnings);
    CHECK(warnings.size() == 1);
    CHECK_THROWS_AS(bias_hats(fit, d, KernelConfig{0}), ValidationError);
}

TEST_CASE("B1 is centered at zero for strictly exogenous regressors") {
    std::mt19937_64 rng(25);
    std::vector<double> draws;
    for (int rep = 0; rep < 500; ++rep) {
        Generated g = linear_panel(20, 10, Vector::Constant(1, 0.5), 1, 1.0, rng);
        const FitResult fit = minimize_profile(g.data, ModelSpec{});
        draws.push_back(bias_hats(fit, g.data, KernelConfig{3}).b1(0));
    }
    double mean = 0.0, sq = 0.0;
    for (double v : draws) mean += v;
    mean /= draws.size();
    for (double v : draws) sq += (v - mean) * (v - mean);
    const double se = std::sqrt(sq / (draws.size() - 1) / draws.size());
    CHECK(std::abs(mean) < 3.0 * se);
}

TEST_CASE("bias-corrected estimator") {
    std::mt19937_64 rng(26);
    PanelDataset d;
    const FitResult fit = noisy_fit(rng, 14, 10, 2, 1, &d);
    const InferenceResult inf = bias_corrected(fit, d, KernelConfig{2});
    const double n = 14, t = 10;
    CHECK(inf.kappa == doctest::Approx(std::sqrt(n / t)));
    const Vector alt = fit.beta_hat - inf.w_inv * inf.b_hat / std::sqrt(n * t);
    CHECK((alt - inf.beta_star).norm() < 1e-12);
    const Vector direct =
        fit.beta_hat + w_hat(fit, d).inverse() * (inf.b1_hat / t + inf.b2_hat / n + inf.b3_hat / t);
    CHECK((direct - inf.beta_star).norm() < 1e-12);
    const Matrix cov = inf.w_inv * inf.omega_hat * inf.w_inv / (n * t);
    CHECK((cov - inf.cov_star).norm() < 1e-14);
    CHECK(inf.std_err(0) == doctest::Approx(std::sqrt(cov(0, 0))));

    // K = 1, W = 2, B1 = 0.4, T = 20: the correction is W^-1 B1 / T = 0.01
    const double w = 2.0, b1 = 0.4;
    CHECK(b1 / (w * 20.0) == doctest::Approx(0.01));

    // without factors every bias term is zero and nothing is corrected
    const FitResult fit0 = fit_at(fit.beta_hat, d, 0);
    const InferenceResult inf0 = bias_corrected(fit0, d, KernelConfig{2});
    CHECK(inf0.beta_star == fit0.beta_hat);
}

TEST_CASE("jackknife") {
    std::mt19937_64 rng(27);
    SUBCASE("noise-free data: every subpanel recovers the truth") {
        Generated g = linear_panel(20, 16, Vector::Constant(1, 0.6), 1, 0.0, rng);
        const JackknifeResult jk = jackknife(g.data, ModelSpec{});
        CHECK(std::abs(jk.beta_jk(0) - jk.beta_full(0)) < 1e-6);
        CHECK(std::abs(jk.beta_jk(0) - 0.6) < 1e-6);
    }
    SUBCASE("odd N drops a unit with a warning") {
        Generated g = linear_panel(5, 8, Vector::Constant(1, 0.6), 1, 0.3, rng);
        const JackknifeResult jk = jackknife(g.data, ModelSpec{});
        REQUIRE(jk.warnings.size() == 1);
        CHECK(jk.warnings[0].find("N = 4") != std::string::npos);
    }
    SUBCASE("combination formula") {
        Generated g = linear_panel(12, 10, Vector::Constant(1, 0.6), 1, 0.5, rng);
        const JackknifeResult jk = jackknife(g.data, ModelSpec{});
        CHECK((jk.beta_jk - (3.0 * jk.beta_full - jk.beta_time_halves - jk.beta_unit_halves)).norm() < 1e-14);
        const double full = minimize_profile(g.data, ModelSpec{}).beta_hat(0);
        const double t1 = minimize_profile(g.data.periods(0, 5), ModelSpec{}).beta_hat(0);
        const double t2 = minimize_profile(g.data.periods(5, 5), ModelSpec{}).beta_hat(0);
        const double n1 = minimize_profile(g.data.units(0, 6), ModelSpec{}).beta_hat(0);
        const double n2 = minimize_profile(g.data.units(6, 6), ModelSpec{}).beta_hat(0);
        CHECK(jk.beta_jk(0) == doctest::Approx(3 * full - (t1 + t2) / 2 - (n1 + n2) / 2).epsilon(1e-12));
    }
}

TEST_CASE("chi-square helpers") {
    CHECK(chi2_upper_tail(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(chi2_quantile(0.95, 1) == doctest::Approx(3.841458820694124).epsilon(1e-12));
    CHECK(chi2_quantile(0.95, 2) == doctest::Approx(5.991464547107979).epsilon(1e-12));
    CHECK(chi2_upper_tail(0.0, 3) == 1.0);
    CHECK(chi2_upper_tail(2.0, 2) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK_THROWS_AS(chi2_upper_tail(1.0, 0), ValidationError);
}

TEST_CASE("Wald statistics") {
    std::mt19937_64 rng(28);
    PanelDataset d;
    const FitResult fit = noisy_fit(rng, 14, 10, 2, 1, &d);
    const InferenceResult inf = bias_corrected(fit, d, KernelConfig{2});
    const double nt = 140.0;

    SUBCASE("restriction holding at the corrected estimate") {
        Matrix h(1, 2);
        h << 1, -2;
        const RestrictionSpec rest{h, h * inf.beta_star};
        const TestResult r = wald_star(fit, inf, rest);
        CHECK(r.statistic < 1e-20);
        CHECK(r.p_value == doctest::Approx(1.0));
        const TestResult u = wald(fit, inf, RestrictionSpec{h, h * fit.beta_hat});
        CHECK(u.statistic < 1e-20);
    }
    SUBCASE("single coefficient at the 95% quantile") {
        Matrix h(1, 2);
        h << 1, 0;
        const double v = inf.cov_star(0, 0) * nt;
        const double hv = inf.beta_star(0) - std::sqrt(3.841458820694124 * v / nt);
        const TestResult r = wald_star(fit, inf, RestrictionSpec{h, Vector::Constant(1, hv)});
        CHECK(r.statistic == doctest::Approx(3.841458820694124).epsilon(1e-10));
        CHECK(r.p_value == doctest::Approx(0.05).epsilon(1e-8));
    }
    SUBCASE("quadratic form") {
        const Matrix h = Matrix::Identity(2, 2);
        const Vector hv = Vector::Constant(2, 0.1);
        const Vector dev = inf.beta_star - hv;
        const Matrix v = w_hat(fit, d).inverse() * omega_hat(fit, d) * w_hat(fit, d).inverse();
        const double oracle = nt * dev.dot(v.inverse() * dev);
        const TestResult r = wald_star(fit, inf, RestrictionSpec{h, hv});
        CHECK(std::abs(r.statistic - oracle) < 1e-12 * std::max(1.0, oracle));
        CHECK(r.df == 2);
    }
}

TEST_CASE("LR and LM statistics") {
    std::mt19937_64 rng(29);
    SUBCASE("LR* is zero without bias and a true restriction") {
        Generated g = linear_panel(10, 8, Vector::Constant(2, 0.3), 1, 0.5, rng);
        ModelSpec spec;
        spec.r = 0;
        const FitResult fit = minimize_profile(g.data, spec);
        Matrix h(1, 2);
        h << 1, 1;
        const RestrictionSpec rest{h, h * fit.beta_hat};
        const TestSuite s = run_tests(g.data, spec, rest);
        CHECK(s.lr_star.statistic < 1e-8);
        CHECK(s.lr.statistic < 1e-8);
        CHECK(s.lr_star.c_hat == doctest::Approx(fit.objective));
    }
    SUBCASE("LM variants vanish on an exact fit satisfying the restriction") {
        Generated g = linear_panel(15, 12, Vector::Constant(2, 0.3), 1, 0.0, rng);
        Matrix h(1, 2);
        h << 1, -1;
        const FitResult restricted = restricted_minimize(g.data, ModelSpec{}, RestrictionSpec{h, Vector::Zero(1)});
        const InferenceResult rinf = bias_corrected(restricted, g.data, KernelConfig{3});
        const TestResult lm = lm_star(g.data, ModelSpec{}, RestrictionSpec{h, Vector::Zero(1)}, KernelConfig{3});
        CHECK(lm.statistic == 0.0);
        CHECK(rinf.beta_star.size() == 2);
    }
    SUBCASE("scalar LM formula") {
        Generated g = linear_panel(12, 10, Vector::Constant(1, 0.3), 1, 0.7, rng);
        const RestrictionSpec rest{Matrix::Identity(1, 1), Vector::Constant(1, 0.35)};
        const TestSuite s = run_tests(g.data, ModelSpec{}, rest);
        const FitResult& rf = s.restricted;
        const double nt = 120.0;
        const double om = omega_hat(rf, g.data)(0, 0);
        const double grad = profile_gradient(rf.beta_hat, g.data, 1).gradient(0);
        CHECK(s.lm.statistic == doctest::Approx(nt * grad * grad / (4.0 * om)).epsilon(1e-9));
        const double bt = s.restricted_inference.b_hat(0);
        const double a = std::sqrt(nt) * grad + 2.0 * bt;
        CHECK(s.lm_star.statistic == doctest::Approx(a * a / (4.0 * om)).epsilon(1e-9));
    }
    SUBCASE("LR from the two minima") {
        Generated g = linear_panel(12, 10, Vector::Constant(1, 0.3), 1, 0.7, rng);
        const RestrictionSpec rest{Matrix::Identity(1, 1), Vector::Constant(1, 0.35)};
        const TestSuite s = run_tests(g.data, ModelSpec{}, rest);
        const double nt = 120.0;
        const double lr = nt * (profile_objective(Vector::Constant(1, 0.35), g.data, 1) - s.unrestricted.objective) /
                          s.unrestricted.objective;
        CHECK(s.lr.statistic == doctest::Approx(lr).epsilon(1e-9));
        // with a single pinned coefficient the shifted restricted minimum is L at h + s
        const double shift = s.inference.w_inv(0, 0) * s.inference.b_hat(0) / std::sqrt(nt);
        const double lrs =
            nt * (profile_objective(Vector::Constant(1, 0.35 + shift), g.data, 1) - s.unrestricted.objective) /
            s.unrestricted.objective;
        CHECK(s.lr_star.statistic == doctest::Approx(lrs).epsilon(1e-9));
    }
}

TEST_CASE("test variant names") {
    CHECK(to_string(TestVariant::WD) == "WD");
    CHECK(to_string(TestVariant::LMStar) == "LM*");
    CHECK(parse_test_variant("LR*") == TestVariant::LRStar);
    CHECK_THROWS_AS(parse_test_variant("XX"), ValidationError);
}
