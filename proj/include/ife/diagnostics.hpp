#pragma once

#include "ife/estimator.hpp"
#include "ife/linalg.hpp"
#include "ife/panel.hpp"

#include <limits>
#include <string>
#include <vector>

namespace ife {

/// Sample analogs of the identification conditions. Statistics that do not
/// apply to the regressor set (e.g. no low-rank regressors) are NaN.
struct DiagnosticsReport {
    double highrank_stat = std::numeric_limits<double>::quiet_NaN();
    double lowrank_loading_eig = std::numeric_limits<double>::quiet_NaN();
    double lowrank_factor_eig = std::numeric_limits<double>::quiet_NaN();
    double pooled_noncollinearity_eig = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> warnings;
};

/// Tail sum of the eigenvalues beyond 2R+K1 of (a.X)(a.X)'/NT for the high-rank
/// regressors, at the given unit vector a.
double highrank_tail(const Vector& alpha, const PanelDataset& d, Index r);

/// min over the unit sphere of highrank_tail. Exact for one high-rank regressor;
/// lattice plus projected-gradient refinement otherwise.
double highrank_diagnostic(const PanelDataset& d, Index r);

struct LowrankSeparation {
    double loading_eig = 0.0;
    double factor_eig = 0.0;
};

/// Smallest eigenvalues of lambda' M_w lambda / N and f' M_v f / T, with (w, v)
/// the leading singular pairs of the low-rank regressors.
LowrankSeparation lowrank_separation_diagnostic(const PanelDataset& d, const Matrix& lambda, const Matrix& f);

/// Smallest eigenvalue of the pooled regressor Gram matrix / NT.
double pooled_noncollinearity_eig(const PanelDataset& d);

DiagnosticsReport diagnose(const PanelDataset& d, const FitResult& fit);

}  // namespace ife
