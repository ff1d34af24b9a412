#pragma once

#include "ife/estimator.hpp"
#include "ife/linalg.hpp"
#include "ife/panel.hpp"

#include <string>
#include <vector>

namespace ife {

/// Pooled least squares of Y on X over all (i, t), ignoring the factors.
Vector pooled_ols(const PanelDataset& d);

struct CceResult {
    double rho = 0.0;
    /// Number of proxy columns kept after dropping redundant ones.
    Index n_proxies = 0;
    std::vector<std::string> warnings;
};

/// Pooled CCE for the AR(1) layout (single regressor = lagged Y). Proxies are the
/// cross-sectional means of Y_t and Y_{t-1}; each unit gets its own loadings on them.
CceResult cce_pooled_ar1_detail(const PanelDataset& d);
double cce_pooled_ar1(const PanelDataset& d);

struct EndogenousSpec {
    /// Indices into X of the endogenous block; the rest are exogenous.
    std::vector<Index> endog_idx;
    /// L instruments, each N x T.
    std::vector<Matrix> instruments;
    /// L x L SPD weight; empty means identity.
    Matrix weight;
};

void check_endogenous(const PanelDataset& d, const EndogenousSpec& es);

struct LsmdStep1 {
    Vector beta_exo;
    Vector gamma;
    FitResult fit;
};

/// Fits Y - beta_end . X_end on [X_exo, Z]; gamma is the Z block of the estimate.
LsmdStep1 lsmd_step1(const Vector& beta_end, const PanelDataset& d, const ModelSpec& spec,
                     const EndogenousSpec& es);

struct GammaPoint {
    Vector beta_end;
    Vector gamma;
    double distance = 0.0;  // gamma' W gamma
};

struct LsmdResult {
    Vector beta_end;
    Vector beta_exo;
    /// Full K-vector in the original regressor order.
    Vector beta;
    std::vector<GammaPoint> gamma_path;
    FitResult final_fit;
    bool converged = false;
    std::vector<std::string> warnings;
};

LsmdResult lsmd_estimate(const PanelDataset& d, const ModelSpec& spec, const EndogenousSpec& es);

}  // namespace ife
