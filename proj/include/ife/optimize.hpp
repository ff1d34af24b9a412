#pragma once

#include "ife/linalg.hpp"

#include <functional>
#include <limits>
#include <string>

namespace ife {

enum class OptimizerMethod { QuasiNewton, Simplex };

struct OptimizerConfig {
    int n_starts = 5;
    double start_spread = 0.5;
    int max_iter = 200;
    double grad_tol = 1e-8;
    double step_tol = 1e-12;
    OptimizerMethod method = OptimizerMethod::QuasiNewton;
};

void check_optimizer_config(const OptimizerConfig& cfg);

/// One evaluation of a smooth objective. `gradient_reliable` is false where the
/// supplied gradient may be wrong (e.g. eigenvalue crossings).
struct ObjectiveEval {
    double value = 0.0;
    Vector gradient;
    bool gradient_reliable = true;
};

using Objective = std::function<ObjectiveEval(const Vector&)>;

/// Box constraints; empty vectors mean unbounded.
struct Box {
    Vector lower;
    Vector upper;

    bool bounded() const { return lower.size() > 0; }
    Vector clamp(const Vector& x) const;
    bool on_boundary(const Vector& x, double tol = 1e-9) const;
};

struct LocalResult {
    Vector x;
    double value = std::numeric_limits<double>::infinity();
    Vector gradient;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    bool used_simplex = false;
    bool degenerate = false;
};

/// Projected BFGS with a backtracking line search. Falls back to Nelder-Mead
/// from the current iterate when the objective reports an unreliable gradient.
LocalResult minimize_local(const Objective& f, const Vector& x0, const Box& box,
                           const OptimizerConfig& cfg);

/// Nelder-Mead simplex on the clamped objective; the gradient is only read at the end.
LocalResult minimize_simplex(const Objective& f, const Vector& x0, const Box& box,
                             const OptimizerConfig& cfg, double initial_step);

/// Central-difference gradient wrapper for objectives that only provide values.
Objective with_numeric_gradient(std::function<double(const Vector&)> f, Vector step);

}  // namespace ife
