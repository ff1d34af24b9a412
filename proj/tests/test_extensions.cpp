#include "helpers.hpp"

#include "ife/diagnostics.hpp"
#include "ife/errors.hpp"
#include "ife/estimator.hpp"
#include "ife/extensions.hpp"
#include "ife/simulation.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

using namespace ife;
using namespace testutil;

namespace {

double tail_oracle(const Matrix& x, Index skip) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(x * x.transpose() / static_cast<double>(x.size()));
    const Vector ev = es.eigenvalues().reverse();
    return ev.tail(ev.size() - skip).sum();
}

// Y = beta0 X + lambda f' with X = Z + lambda f' + v and no outcome noise.
struct EndogInstance {
    PanelDataset data;
    Matrix z;
};

EndogInstance noise_free_endog(Index n, Index t, double beta0, std::mt19937_64& rng) {
    const Matrix lam = randn(n, 1, rng), f = randn(t, 1, rng);
    const Matrix z = randn(n, t, rng);
    const Matrix x = z + lam * f.transpose() + randn(n, t, rng);
    return {PanelDataset(beta0 * x + lam * f.transpose(), {x}), z};
}

}  // namespace

TEST_CASE("high-rank diagnostic") {
    std::mt19937_64 rng(31);
    SUBCASE("iid regressor is well inside the admissible region") {
        PanelDataset d(randn(30, 30, rng), {randn(30, 30, rng)});
        const double stat = highrank_diagnostic(d, 1);
        CHECK(stat > 0.1);
        CHECK(std::abs(stat - tail_oracle(d.x[0], 2)) < 1e-10);
    }
    SUBCASE("rank-one regressor") {
        PanelDataset d(randn(12, 10, rng), {randn(12, 1, rng) * randn(1, 10, rng)});
        CHECK(std::abs(highrank_diagnostic(d, 1)) < 1e-10);
    }
    SUBCASE("collinear pair") {
        const Matrix x = randn(15, 12, rng);
        PanelDataset d(randn(15, 12, rng), {x, 2.0 * x});
        Vector alpha(2);
        alpha << 2.0, -1.0;
        alpha /= std::sqrt(5.0);
        CHECK(std::abs(highrank_tail(alpha, d, 1)) < 1e-12);
        CHECK(highrank_diagnostic(d, 1) < 1e-8);
    }
    SUBCASE("scaling the regressor scales the statistic") {
        PanelDataset d(randn(14, 11, rng), {randn(14, 11, rng)});
        const double a = highrank_diagnostic(d, 1);
        d.x[0] *= 3.0;
        CHECK(highrank_diagnostic(d, 1) == doctest::Approx(9.0 * a).epsilon(1e-10));
    }
    SUBCASE("empty tail") {
        PanelDataset d(randn(2, 10, rng), {randn(2, 10, rng)});
        CHECK_THROWS_AS(highrank_diagnostic(d, 1), ValidationError);
    }
}

TEST_CASE("low-rank separation diagnostic") {
    std::mt19937_64 rng(32);
    SUBCASE("time-invariant regressor orthogonal to the loadings") {
        const Matrix lam = randn(10, 1, rng);
        Matrix zi = randn(10, 1, rng);
        zi -= lam * (lam.transpose() * zi) / lam.squaredNorm();
        PanelDataset d(randn(10, 8, rng), {zi * Matrix::Ones(1, 8)});
        d.low_rank = {true};
        const LowrankSeparation s = lowrank_separation_diagnostic(d, lam, randn(8, 1, rng));
        CHECK(s.loading_eig == doctest::Approx(lam.squaredNorm() / 10.0).epsilon(1e-12));
    }
    SUBCASE("regressor spanned by the loadings") {
        const Matrix lam = randn(10, 1, rng);
        PanelDataset d(randn(10, 8, rng), {lam * randn(1, 8, rng)});
        d.low_rank = {true};
        CHECK(std::abs(lowrank_separation_diagnostic(d, lam, randn(8, 1, rng)).loading_eig) < 1e-10);
    }
    SUBCASE("brute force") {
        const Matrix w = randn(20, 1, rng), v = randn(20, 1, rng);
        const Matrix lam = randn(20, 2, rng), f = randn(20, 2, rng);
        PanelDataset d(randn(20, 20, rng), {w * v.transpose(), randn(20, 20, rng)});
        d.low_rank = {true, false};
        const LowrankSeparation s = lowrank_separation_diagnostic(d, lam, f);
        const Matrix mw = Matrix::Identity(20, 20) - w * w.transpose() / w.squaredNorm();
        const Matrix mv = Matrix::Identity(20, 20) - v * v.transpose() / v.squaredNorm();
        Eigen::SelfAdjointEigenSolver<Matrix> el(lam.transpose() * mw * lam / 20.0);
        Eigen::SelfAdjointEigenSolver<Matrix> ef(f.transpose() * mv * f / 20.0);
        CHECK(std::abs(s.loading_eig - el.eigenvalues()(0)) < 1e-10);
        CHECK(std::abs(s.factor_eig - ef.eigenvalues()(0)) < 1e-10);
    }
    SUBCASE("needs a low-rank regressor") {
        PanelDataset d(randn(10, 8, rng), {randn(10, 8, rng)});
        CHECK_THROWS_AS(lowrank_separation_diagnostic(d, randn(10, 1, rng), randn(8, 1, rng)), ValidationError);
    }
}

TEST_CASE("diagnose leaves the dataset untouched") {
    std::mt19937_64 rng(33);
    Generated g = linear_panel(15, 12, Vector::Constant(1, 0.5), 1, 0.5, rng);
    const PanelDataset copy = g.data;
    const FitResult fit = minimize_profile(g.data, ModelSpec{});
    const DiagnosticsReport rep = diagnose(g.data, fit);
    CHECK(g.data.y == copy.y);
    CHECK(g.data.x[0] == copy.x[0]);
    CHECK(rep.highrank_stat > 0.0);
    CHECK(std::isnan(rep.lowrank_loading_eig));
    CHECK(rep.pooled_noncollinearity_eig > 0.0);
}

TEST_CASE("pooled least squares equals the estimator without factors") {
    std::mt19937_64 rng(34);
    Generated g = linear_panel(9, 7, Vector::Constant(2, 0.5), 1, 0.5, rng);
    ModelSpec spec;
    spec.r = 0;
    CHECK((minimize_profile(g.data, spec).beta_hat - pooled_ols(g.data)).norm() < 1e-8);
}

TEST_CASE("CCE proxy estimator") {
    std::mt19937_64 rng(35);
    SUBCASE("stacked design oracle") {
        PanelDataset d(randn(5, 6, rng), {randn(5, 6, rng)});
        const Vector fy = d.y.colwise().mean().transpose();
        const Vector fx = d.x[0].colwise().mean().transpose();
        Matrix design = Matrix::Zero(30, 11);
        Vector target(30);
        for (Index i = 0; i < 5; ++i)
            for (Index t = 0; t < 6; ++t) {
                const Index row = i * 6 + t;
                target(row) = d.y(i, t);
                design(row, 0) = d.x[0](i, t);
                design(row, 1 + 2 * i) = fy(t);
                design(row, 2 + 2 * i) = fx(t);
            }
        const Vector coef = design.colPivHouseholderQr().solve(target);
        CHECK(std::abs(cce_pooled_ar1(d) - coef(0)) < 1e-10);
    }
    SUBCASE("unit relabeling") {
        PanelDataset d(randn(7, 9, rng), {randn(7, 9, rng)});
        PanelDataset p = d;
        for (Index i = 0; i < 7; ++i) {
            p.y.row(i) = d.y.row(6 - i);
            p.x[0].row(i) = d.x[0].row(6 - i);
        }
        CHECK(cce_pooled_ar1(d) == doctest::Approx(cce_pooled_ar1(p)).epsilon(1e-12));
    }
    SUBCASE("single unit") {
        PanelDataset d(randn(1, 9, rng), {randn(1, 9, rng)});
        CHECK_THROWS_AS(cce_pooled_ar1(d), ValidationError);
    }
    SUBCASE("needs exactly one regressor") {
        PanelDataset d(randn(4, 9, rng), {randn(4, 9, rng), randn(4, 9, rng)});
        CHECK_THROWS_AS(cce_pooled_ar1(d), ValidationError);
    }
}

TEST_CASE("LS-MD first step") {
    std::mt19937_64 rng(36);
    SUBCASE("zero instrument coefficient at the truth") {
        const EndogInstance inst = noise_free_endog(30, 20, 0.8, rng);
        EndogenousSpec es;
        es.endog_idx = {0};
        es.instruments = {inst.z};
        const LsmdStep1 s = lsmd_step1(Vector::Constant(1, 0.8), inst.data, ModelSpec{}, es);
        CHECK(std::abs(s.gamma(0)) < 1e-8);
    }
    SUBCASE("instrument equal to an exogenous regressor") {
        const EndogInstance inst = noise_free_endog(20, 15, 0.8, rng);
        PanelDataset d = inst.data;
        d.x.push_back(randn(20, 15, rng));
        d.regressor_names.push_back("w");
        d.low_rank.push_back(false);
        EndogenousSpec es;
        es.endog_idx = {0};
        es.instruments = {d.x[1]};
        CHECK_THROWS(lsmd_step1(Vector::Constant(1, 0.5), d, ModelSpec{}, es));
    }
    SUBCASE("matches re-estimation at a wrong coefficient") {
        EndogDgpConfig cfg;
        cfg.n = 40;
        cfg.t = 15;
        cfg.seed = 5;
        const EndogenousPanel p = simulate_endogenous(cfg);
        EndogenousSpec es;
        es.endog_idx = {0};
        es.instruments = {p.instrument};
        const LsmdStep1 s = lsmd_step1(Vector::Constant(1, 0.6), p.data, ModelSpec{}, es);
        PanelDataset direct(p.data.y - 0.6 * p.data.x[0], {p.instrument});
        const FitResult fit = minimize_profile(direct, ModelSpec{});
        CHECK(std::abs(s.gamma(0)) > 1e-3);
        CHECK(s.gamma(0) == doctest::Approx(fit.beta_hat(0)).epsilon(1e-8));
    }
}

TEST_CASE("LS-MD estimate") {
    EndogDgpConfig cfg;
    cfg.n = 60;
    cfg.t = 15;
    cfg.seed = 9;
    const EndogenousPanel p = simulate_endogenous(cfg);
    EndogenousSpec es;
    es.endog_idx = {0};
    es.instruments = {p.instrument};
    const LsmdResult a = lsmd_estimate(p.data, ModelSpec{}, es);
    CHECK(a.converged);
    CHECK(lsmd_step1(a.beta_end, p.data, ModelSpec{}, es).gamma.norm() < 1e-6);
    es.weight = Matrix::Constant(1, 1, 3.0);
    const LsmdResult b = lsmd_estimate(p.data, ModelSpec{}, es);
    CHECK(std::abs(a.beta_end(0) - b.beta_end(0)) < 1e-6);
    CHECK(a.beta.size() == 1);
    CHECK(a.final_fit.beta_hat.size() == 0);  // no exogenous regressors left
    CHECK(std::abs(a.beta(0) - 1.0) < 0.2);

    EndogenousSpec bad = es;
    bad.weight = Matrix::Constant(1, 1, -1.0);
    CHECK_THROWS_AS(lsmd_estimate(p.data, ModelSpec{}, bad), ValidationError);
}
