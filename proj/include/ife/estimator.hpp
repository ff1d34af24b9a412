#pragma once

#include "ife/linalg.hpp"
#include "ife/optimize.hpp"
#include "ife/panel.hpp"

#include <string>
#include <vector>

namespace ife {

/// Objective, envelope gradient and residuals of the profile problem at one beta.
struct ProfileEval {
    double objective = 0.0;
    Vector gradient;
    Matrix residuals;
    bool degenerate_gap = false;
};

/// Evaluates L_NT(beta) = (NT)^-1 * (sum of the T-R smallest eigenvalues of Z'Z),
/// Z = Y - beta.X, on the smaller of the two Gram matrices. With `with_gradient`
/// the residual at the optimal factors and the gradient are filled in as well.
ProfileEval evaluate_profile(const Vector& beta, const PanelDataset& d, Index r, bool with_gradient);

double profile_objective(const Vector& beta, const PanelDataset& d, Index r);

struct ProfileGradient {
    Vector gradient;
    bool degenerate_gap = false;
};

/// dL/dbeta_k = -(2/NT) tr(X_k' e(beta)), exact away from eigenvalue crossings.
ProfileGradient profile_gradient(const Vector& beta, const PanelDataset& d, Index r);

struct FactorEstimates {
    Matrix lambda;  // N x R
    Matrix f;       // T x R, f'f/T = I
    bool degenerate_gap = false;
};

FactorEstimates factor_estimates(const Vector& beta, const PanelDataset& d, Index r);

struct StartRecord {
    Vector start;
    Vector beta;
    double objective = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    bool used_simplex = false;
};

struct FitResult {
    Index r = 0;
    Vector beta_hat;
    Matrix lambda_hat;
    Matrix f_hat;
    Matrix residuals;
    double objective = 0.0;
    Vector gradient;
    int n_restarts_agreeing = 0;
    bool converged = false;
    bool degenerate_gap = false;
    bool on_boundary = false;
    std::vector<StartRecord> starts;
    std::vector<std::string> warnings;
};

/// Builds a FitResult (factors, residuals, objective, gradient) at a given beta.
FitResult fit_at(const Vector& beta, const PanelDataset& d, Index r);

/// Parameter box actually used: the spec's box if given, otherwise
/// +-10 max(|b_ols|, 1) per coefficient when low-rank regressors are present,
/// unbounded otherwise.
Box effective_box(const PanelDataset& d, const ModelSpec& spec, const Vector& ols);

/// effective_box with the pooled OLS fit computed only when it is needed.
Box parameter_box(const PanelDataset& d, const ModelSpec& spec);

/// Global minimizer of L_NT over the parameter box, best of several local runs.
FitResult minimize_profile(const PanelDataset& d, const ModelSpec& spec);

/// Minimizer of L_NT over {beta : H beta = h}, via beta = beta_p + N_H theta.
FitResult restricted_minimize(const PanelDataset& d, const ModelSpec& spec, const RestrictionSpec& rest);

/// Deterministic start points: `center` plus n-1 perturbations of size
/// spread * max(|center_k|, 1).
std::vector<Vector> start_points(const Vector& center, const OptimizerConfig& cfg);

}  // namespace ife
