#pragma once

#include "ife/linalg.hpp"
#include "ife/panel.hpp"

#include <random>

namespace testutil {

using ife::Index;
using ife::Matrix;
using ife::Vector;

inline Matrix randn(Index rows, Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
    return m;
}

inline Matrix random_symmetric(Index n, std::mt19937_64& rng) {
    const Matrix a = randn(n, n, rng);
    return (a + a.transpose()) / 2.0;
}

inline Matrix random_spd(Index n, std::mt19937_64& rng) {
    const Matrix a = randn(n, n, rng);
    return a * a.transpose() + Matrix::Identity(n, n);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

/// Y = sum_k beta_k X_k + lambda f' + sigma * e with iid normal regressors.
struct Generated {
    ife::PanelDataset data;
    Matrix lambda;
    Matrix f;
};

inline Generated linear_panel(Index n, Index t, const Vector& beta, Index r, double sigma, std::mt19937_64& rng) {
    Generated g;
    g.lambda = randn(n, r, rng);
    g.f = randn(t, r, rng);
    Matrix y = g.lambda * g.f.transpose() + sigma * randn(n, t, rng);
    for (Index k = 0; k < beta.size(); ++k) {
        // regressors correlated with the factor structure so that OLS is biased
        Matrix x = randn(n, t, rng) + 0.5 * g.lambda * g.f.transpose();
        y += beta(k) * x;
        g.data.x.push_back(x);
        g.data.regressor_names.push_back("x" + std::to_string(k + 1));
        g.data.low_rank.push_back(false);
    }
    g.data.y = y;
    return g;
}

}  // namespace testutil
