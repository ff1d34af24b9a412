#pragma once

#include "ife/linalg.hpp"
#include "ife/optimize.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ife {

/// Balanced panel: outcome Y (N x T) and K regressors X_k (N x T).
/// The first K1 regressors may be declared low-rank.
struct PanelDataset {
    Matrix y;
    std::vector<Matrix> x;
    std::vector<std::string> regressor_names;
    std::vector<bool> low_rank;

    PanelDataset() = default;
    /// Default names x1..xK, no low-rank flags.
    PanelDataset(Matrix y_, std::vector<Matrix> x_);

    Index n() const { return y.rows(); }
    Index t() const { return y.cols(); }
    Index k() const { return static_cast<Index>(x.size()); }
    Index n_low_rank() const;

    /// beta . X = sum_k beta_k X_k
    Matrix combine(const Vector& beta) const;
    /// Y - beta . X
    Matrix residual_base(const Vector& beta) const;

    PanelDataset units(Index begin, Index count) const;
    PanelDataset periods(Index begin, Index count) const;
    /// Swap the roles of units and periods: Y' and X_k'.
    PanelDataset transposed() const;
};

struct ValidationReport {
    std::vector<Index> numeric_rank;
    std::vector<std::string> warnings;
};

/// Shape/finiteness checks and per-regressor numeric rank. Throws ValidationError.
ValidationReport validate_dataset(const PanelDataset& d);

/// Structural checks only (shapes, finiteness, names/flags length); K = 0 allowed.
void check_shapes(const PanelDataset& d);

struct ModelSpec {
    Index r = 1;
    /// Bandwidth M for the kernel-truncated bias term; nullopt resolves to auto.
    std::optional<int> bandwidth;
    OptimizerConfig optimizer;
    /// Parameter box; empty means the default policy (see estimator).
    std::vector<double> lower;
    std::vector<double> upper;
};

/// M = max(1, floor(log2 T)).
int auto_bandwidth(Index t);
int resolve_bandwidth(const ModelSpec& spec, Index t);

/// Throws ValidationError if r > min(N, T) - 1 or the box is malformed.
void check_spec(const PanelDataset& d, const ModelSpec& spec);

/// Linear restriction H beta = h with H of full row rank.
struct RestrictionSpec {
    Matrix h_matrix;
    Vector h_vector;
};

void check_restriction(const RestrictionSpec& rest, Index k);

}  // namespace ife
