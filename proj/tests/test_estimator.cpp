#include "helpers.hpp"

#include "ife/errors.hpp"
#include "ife/estimator.hpp"
#include "ife/extensions.hpp"

#include <doctest.h>

using namespace ife;
using namespace testutil;

namespace {

// Alternating least squares for min over (lambda, f) of |Z - lambda f'|^2, an
// algorithm unrelated to the eigen route used by the library.
double als_min(const Matrix& z, Index r, std::mt19937_64& rng) {
    if (r == 0) return z.squaredNorm();
    Matrix f = randn(z.cols(), r, rng);
    Matrix lam;
    for (int it = 0; it < 20000; ++it) {
        lam = z * f * (f.transpose() * f).inverse();
        const Matrix f_new = z.transpose() * lam * (lam.transpose() * lam).inverse();
        const double change = (f_new * lam.transpose() - f * lam.transpose()).norm();
        f = f_new;
        if (change < 1e-14 * z.norm()) break;
    }
    return (z - lam * f.transpose()).squaredNorm();
}

}  // namespace

TEST_CASE("dataset validation") {
    std::mt19937_64 rng(1);
    PanelDataset ok(randn(10, 8, rng), {randn(10, 8, rng), randn(10, 8, rng), randn(10, 8, rng)});
    CHECK_NOTHROW(validate_dataset(ok));

    PanelDataset bad(randn(10, 8, rng), {randn(10, 8, rng), randn(10, 7, rng)});
    CHECK_THROWS_AS(validate_dataset(bad), ValidationError);

    // a "low-rank" regressor whose second singular value is 0.4 of the first
    const Matrix u = orthonormal_basis(randn(10, 2, rng));
    const Matrix v = orthonormal_basis(randn(8, 2, rng));
    Matrix x = u.col(0) * v.col(0).transpose() + 0.4 * u.col(1) * v.col(1).transpose();
    PanelDataset lr(randn(10, 8, rng), {x});
    lr.low_rank = {true};
    const ValidationReport rep = validate_dataset(lr);
    CHECK_FALSE(rep.warnings.empty());
}

TEST_CASE("automatic bandwidth schedule") {
    CHECK(auto_bandwidth(5) == 2);
    CHECK(auto_bandwidth(10) == 3);
    CHECK(auto_bandwidth(20) == 4);
    CHECK(auto_bandwidth(40) == 5);
    CHECK(auto_bandwidth(80) == 6);
    CHECK(auto_bandwidth(1) == 1);
}

TEST_CASE("model spec bounds") {
    std::mt19937_64 rng(2);
    PanelDataset d(randn(10, 20, rng), {randn(10, 20, rng)});
    ModelSpec spec;
    spec.r = 50;
    CHECK_THROWS_AS(check_spec(d, spec), ValidationError);
    spec.r = 9;
    CHECK_NOTHROW(check_spec(d, spec));
    spec.r = -1;
    CHECK_THROWS_AS(check_spec(d, spec), ValidationError);
}

TEST_CASE("profile objective special cases") {
    std::mt19937_64 rng(3);
    SUBCASE("exact factor structure") {
        const Matrix lam = randn(7, 2, rng);
        const Matrix f = randn(5, 2, rng);
        PanelDataset d(lam * f.transpose(), {randn(7, 5, rng)});
        CHECK(std::abs(profile_objective(Vector::Zero(1), d, 2)) < 1e-12);
    }
    SUBCASE("no factors, single cell") {
        PanelDataset d(Matrix::Constant(1, 1, 2.0), {Matrix::Constant(1, 1, 1.0)});
        CHECK(profile_objective(Vector::Constant(1, 1.0), d, 0) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("matches the minimum over factors") {
        PanelDataset d(randn(5, 4, rng), {randn(5, 4, rng)});
        const Vector beta = Vector::Constant(1, 0.3);
        const Matrix z = d.residual_base(beta);
        const double oracle = als_min(z, 1, rng) / 20.0;
        CHECK(rel_err(profile_objective(beta, d, 1), oracle) < 1e-9);
    }
}

TEST_CASE("profile objective equivalences over random instances") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> dim(3, 10);
    for (int rep = 0; rep < 200; ++rep) {
        const Index n = dim(rng), t = dim(rng), r = rep % 3;
        PanelDataset d(randn(n, t, rng), {randn(n, t, rng), randn(n, t, rng)});
        const Vector beta = randn(2, 1, rng);
        const double eig_form = profile_objective(beta, d, r);
        const double swapped = profile_objective(beta, d.transposed(), r);
        const Matrix z = d.residual_base(beta);
        const FactorEstimates fe = factor_estimates(beta, d, r);
        const Matrix mf = projectors(fe.f).m;
        const double trace_form = (z * mf * z.transpose()).trace() / static_cast<double>(n * t);
        CHECK(rel_err(eig_form, trace_form) < 1e-9);
        CHECK(rel_err(eig_form, swapped) < 1e-9);
    }
}

TEST_CASE("envelope gradient") {
    std::mt19937_64 rng(5);
    SUBCASE("no factors gives the least squares gradient") {
        PanelDataset d(randn(6, 5, rng), {randn(6, 5, rng), randn(6, 5, rng)});
        const Vector beta = randn(2, 1, rng);
        const Matrix e = d.residual_base(beta);
        const ProfileGradient g = profile_gradient(beta, d, 0);
        for (Index k = 0; k < 2; ++k) {
            CHECK(g.gradient(k) == doctest::Approx(-2.0 / 30.0 * frob_dot(d.x[k], e)).epsilon(1e-13));
        }
    }
    SUBCASE("central differences") {
        for (int rep = 0; rep < 20; ++rep) {
            Generated g = linear_panel(8, 7, Vector::Constant(2, 0.5), 1, 0.5, rng);
            const Vector beta = randn(2, 1, rng);
            const ProfileGradient pg = profile_gradient(beta, g.data, 1);
            if (pg.degenerate_gap) continue;
            for (Index k = 0; k < 2; ++k) {
                Vector hi = beta, lo = beta;
                hi(k) += 1e-6;
                lo(k) -= 1e-6;
                const double fd = (profile_objective(hi, g.data, 1) - profile_objective(lo, g.data, 1)) / 2e-6;
                CHECK(rel_err(pg.gradient(k), fd) < 1e-5);
            }
        }
    }
}

TEST_CASE("factor estimates") {
    std::mt19937_64 rng(6);
    SUBCASE("exact product recovery") {
        const Matrix lam = randn(9, 2, rng);
        const Matrix f = randn(6, 2, rng);
        PanelDataset d(lam * f.transpose(), {randn(9, 6, rng)});
        const FactorEstimates fe = factor_estimates(Vector::Zero(1), d, 2);
        CHECK((fe.lambda * fe.f.transpose() - lam * f.transpose()).norm() < 1e-10);
        CHECK((fe.f.transpose() * fe.f / 6.0 - Matrix::Identity(2, 2)).norm() < 1e-12);
    }
    SUBCASE("no factors") {
        PanelDataset d(randn(4, 3, rng), {randn(4, 3, rng)});
        const FitResult fit = fit_at(Vector::Zero(1), d, 0);
        CHECK(fit.lambda_hat.cols() == 0);
        CHECK(fit.f_hat.cols() == 0);
        CHECK((fit.residuals - d.y).norm() == 0.0);
    }
    SUBCASE("residual trace equals the eigen tail") {
        PanelDataset d(randn(8, 6, rng), {randn(8, 6, rng)});
        const FactorEstimates fe = factor_estimates(Vector::Zero(1), d, 2);
        const double tr = (d.y * projectors(fe.f).m * d.y.transpose()).trace();
        CHECK(std::abs(tr - eig_tail_sum(d.y.transpose() * d.y, 2)) < 1e-10);
    }
    SUBCASE("rotation leaves the fit unchanged") {
        Generated g = linear_panel(10, 8, Vector::Constant(1, 0.4), 2, 0.3, rng);
        const FitResult fit = fit_at(Vector::Constant(1, 0.4), g.data, 2);
        Matrix a(2, 2);
        a << 2, 1, -0.5, 1.5;
        const Matrix lam2 = fit.lambda_hat * a.transpose();
        const Matrix f2 = fit.f_hat * a.inverse();
        CHECK((lam2 * f2.transpose() - fit.lambda_hat * fit.f_hat.transpose()).norm() < 1e-12);
        const Matrix z = g.data.residual_base(Vector::Constant(1, 0.4));
        const double obj = (z - lam2 * f2.transpose()).squaredNorm() / 80.0;
        CHECK(rel_err(obj, fit.objective) < 1e-12);
    }
}

TEST_CASE("estimator recovers noise-free coefficients") {
    std::mt19937_64 rng(7);
    SUBCASE("single regressor") {
        Generated g = linear_panel(40, 30, Vector::Constant(1, 0.5), 1, 0.0, rng);
        const FitResult fit = minimize_profile(g.data, ModelSpec{});
        CHECK(std::abs(fit.beta_hat(0) - 0.5) < 1e-6);
        CHECK(fit.converged);
    }
    SUBCASE("random configurations") {
        for (int rep = 0; rep < 10; ++rep) {
            const Index k = 1 + rep % 2, r = 1 + (rep / 2) % 2;
            const Vector beta = randn(k, 1, rng);
            Generated g = linear_panel(25, 20, beta, r, 0.0, rng);
            ModelSpec spec;
            spec.r = r;
            const FitResult fit = minimize_profile(g.data, spec);
            CHECK((fit.beta_hat - beta).cwiseAbs().maxCoeff() < 1e-6);
            CHECK((fit.lambda_hat * fit.f_hat.transpose() - g.lambda * g.f.transpose()).norm() < 1e-6);
        }
    }
}

TEST_CASE("estimator matches a grid search on a small instance") {
    std::mt19937_64 rng(8);
    Generated g = linear_panel(6, 6, Vector::Constant(1, 0.2), 1, 0.3, rng);
    double best = std::numeric_limits<double>::infinity(), arg = 0.0;
    for (int i = -1000; i <= 1000; ++i) {
        const double b = i * 1e-3;
        const double v = profile_objective(Vector::Constant(1, b), g.data, 1);
        if (v < best) best = v, arg = b;
    }
    ModelSpec spec;
    spec.lower = {-1.0};
    spec.upper = {1.0};
    const FitResult fit = minimize_profile(g.data, spec);
    CHECK(std::abs(fit.beta_hat(0) - arg) <= 1e-3);
    CHECK(fit.objective <= best + 1e-12);
    for (const StartRecord& s : fit.starts) CHECK(std::abs(s.beta(0) - fit.beta_hat(0)) < 1e-6);
    CHECK(fit.n_restarts_agreeing == static_cast<int>(fit.starts.size()));
}

TEST_CASE("gradient vanishes at the optimum") {
    std::mt19937_64 rng(9);
    Generated g = linear_panel(30, 20, Vector::Constant(2, 0.3), 1, 1.0, rng);
    const FitResult fit = minimize_profile(g.data, ModelSpec{});
    CHECK(fit.gradient.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("restricted minimization") {
    std::mt19937_64 rng(10);
    SUBCASE("fully pinned") {
        Generated g = linear_panel(12, 10, Vector::Constant(2, 0.3), 1, 1.0, rng);
        Vector b0(2);
        b0 << 0.1, -0.2;
        const RestrictionSpec rest{Matrix::Identity(2, 2), b0};
        const FitResult fit = restricted_minimize(g.data, ModelSpec{}, rest);
        CHECK(fit.beta_hat == b0);
        CHECK(fit.objective == doctest::Approx(profile_objective(b0, g.data, 1)).epsilon(1e-14));
    }
    SUBCASE("true restriction binds at the truth without noise") {
        Generated g = linear_panel(20, 15, Vector::Constant(2, 0.7), 1, 0.0, rng);
        Matrix h(1, 2);
        h << 1, -1;
        const FitResult fit = restricted_minimize(g.data, ModelSpec{}, RestrictionSpec{h, Vector::Zero(1)});
        CHECK((fit.beta_hat - Vector::Constant(2, 0.7)).norm() < 1e-6);
    }
    SUBCASE("one coordinate fixed matches a grid over the other") {
        Generated g = linear_panel(8, 7, Vector::Constant(2, 0.3), 1, 0.5, rng);
        Matrix h(1, 2);
        h << 1, 0;
        const FitResult fit =
            restricted_minimize(g.data, ModelSpec{}, RestrictionSpec{h, Vector::Constant(1, 0.2)});
        CHECK(fit.beta_hat(0) == doctest::Approx(0.2).epsilon(1e-14));
        double best = std::numeric_limits<double>::infinity(), arg = 0.0;
        for (int i = -2000; i <= 2000; ++i) {
            Vector b(2);
            b << 0.2, i * 1e-3;
            const double v = profile_objective(b, g.data, 1);
            if (v < best) best = v, arg = b(1);
        }
        CHECK(std::abs(fit.beta_hat(1) - arg) <= 1e-3);
        CHECK(fit.objective <= best + 1e-12);
    }
}

TEST_CASE("pooled least squares matches the stacked design") {
    std::mt19937_64 rng(11);
    PanelDataset d(randn(5, 6, rng), {randn(5, 6, rng), randn(5, 6, rng)});
    Matrix design(30, 2);
    design.col(0) = d.x[0].reshaped();
    design.col(1) = d.x[1].reshaped();
    const Vector oracle = design.colPivHouseholderQr().solve(d.y.reshaped().eval());
    CHECK((pooled_ols(d) - oracle).norm() < 1e-10);

    PanelDataset exact(2.0 * d.x[0], {d.x[0]});
    CHECK(pooled_ols(exact)(0) == doctest::Approx(2.0).epsilon(1e-14));
    PanelDataset zero(d.y, {Matrix::Zero(5, 6)});
    CHECK_THROWS(pooled_ols(zero));
}
