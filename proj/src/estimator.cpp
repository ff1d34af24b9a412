#include "ife/estimator.hpp"

#include "ife/errors.hpp"
#include "ife/extensions.hpp"
#include "ife/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ife {

namespace {

constexpr double kGapRelTol = 1e-10;
constexpr double kAgreeTol = 1e-6;

Vector gradient_from_residuals(const PanelDataset& d, const Matrix& e) {
    const double nt = static_cast<double>(d.n() * d.t());
    Vector g(d.k());
    for (Index k = 0; k < d.k(); ++k) {
        g(k) = -2.0 / nt * frob_dot(d.x[static_cast<size_t>(k)], e);
    }
    return g;
}

bool gap_is_degenerate(const Vector& mu_desc, Index r) {
    if (r <= 0 || r >= mu_desc.size()) {
        return false;
    }
    return mu_desc(r - 1) - mu_desc(r) < kGapRelTol * mu_desc(0);
}

}  // namespace

ProfileEval evaluate_profile(const Vector& beta, const PanelDataset& d, Index r, bool with_gradient) {
    const double nt = static_cast<double>(d.n() * d.t());
    const Matrix z = d.residual_base(beta);
    ProfileEval out;
    if (r == 0) {
        out.objective = z.squaredNorm() / nt;
        if (with_gradient) {
            out.residuals = z;
            out.gradient = gradient_from_residuals(d, z);
        }
        return out;
    }
    const bool time_side = d.t() <= d.n();
    Matrix g = time_side ? Matrix(z.transpose() * z) : Matrix(z * z.transpose());
    g = 0.5 * (g + g.transpose());
    const Index p = g.rows();
    Eigen::SelfAdjointEigenSolver<Matrix> es(
        g, with_gradient ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    const Vector& mu = es.eigenvalues();  // ascending
    out.objective = std::max(0.0, mu.head(p - r).sum() / nt);
    out.degenerate_gap = gap_is_degenerate(mu.reverse(), r);
    if (with_gradient) {
        const Matrix v = es.eigenvectors().rightCols(r);
        if (time_side) {
            out.residuals = z - (z * v) * v.transpose();
        } else {
            out.residuals = z - v * (v.transpose() * z);
        }
        out.gradient = gradient_from_residuals(d, out.residuals);
    }
    return out;
}

double profile_objective(const Vector& beta, const PanelDataset& d, Index r) {
    return evaluate_profile(beta, d, r, false).objective;
}

ProfileGradient profile_gradient(const Vector& beta, const PanelDataset& d, Index r) {
    ProfileEval e = evaluate_profile(beta, d, r, true);
    return {std::move(e.gradient), e.degenerate_gap};
}

FactorEstimates factor_estimates(const Vector& beta, const PanelDataset& d, Index r) {
    const Index n = d.n();
    const Index t = d.t();
    FactorEstimates out;
    if (r == 0) {
        out.lambda = Matrix(n, 0);
        out.f = Matrix(t, 0);
        return out;
    }
    const Matrix z = d.residual_base(beta);
    const double sqrt_t = std::sqrt(static_cast<double>(t));
    bool done = false;
    if (n < t) {
        const TopEigvecs top = top_eigvecs(z * z.transpose(), r, 0.0);
        out.degenerate_gap = gap_is_degenerate(top.eigenvalues, r);
        const double mu1 = top.eigenvalues(0);
        if (mu1 > 0.0 && top.eigenvalues(r - 1) > 1e-12 * mu1) {
            Matrix v = z.transpose() * top.vectors;
            for (Index j = 0; j < r; ++j) v.col(j) /= v.col(j).norm();
            apply_sign_convention(v);
            out.f = sqrt_t * v;
            done = true;
        }
    }
    if (!done) {
        const TopEigvecs top = top_eigvecs(z.transpose() * z, r, 0.0);
        out.degenerate_gap = gap_is_degenerate(top.eigenvalues, r);
        out.f = sqrt_t * top.vectors;
    }
    out.lambda = z * out.f / static_cast<double>(t);
    return out;
}

FitResult fit_at(const Vector& beta, const PanelDataset& d, Index r) {
    FitResult fit;
    fit.r = r;
    fit.beta_hat = beta;
    FactorEstimates fe = factor_estimates(beta, d, r);
    fit.lambda_hat = std::move(fe.lambda);
    fit.f_hat = std::move(fe.f);
    fit.degenerate_gap = fe.degenerate_gap;
    fit.residuals = d.residual_base(beta);
    if (r > 0) {
        fit.residuals -= fit.lambda_hat * fit.f_hat.transpose();
    }
    fit.objective = profile_objective(beta, d, r);
    fit.gradient = gradient_from_residuals(d, fit.residuals);
    return fit;
}

Box effective_box(const PanelDataset& d, const ModelSpec& spec, const Vector& ols) {
    Box box;
    const Index k = d.k();
    if (!spec.lower.empty()) {
        box.lower = Eigen::Map<const Vector>(spec.lower.data(), k);
        box.upper = Eigen::Map<const Vector>(spec.upper.data(), k);
        return box;
    }
    if (d.n_low_rank() > 0) {
        box.lower.resize(k);
        box.upper.resize(k);
        for (Index j = 0; j < k; ++j) {
            const double half = 10.0 * std::max(std::abs(ols(j)), 1.0);
            box.lower(j) = -half;
            box.upper(j) = half;
        }
    }
    return box;
}

Box parameter_box(const PanelDataset& d, const ModelSpec& spec) {
    const bool needs_ols = spec.lower.empty() && d.n_low_rank() > 0 && d.k() > 0;
    return effective_box(d, spec, needs_ols ? pooled_ols(d) : Vector::Zero(d.k()));
}

std::vector<Vector> start_points(const Vector& center, const OptimizerConfig& cfg) {
    std::vector<Vector> starts{center};
    const Index k = center.size();
    for (int s = 1; s < cfg.n_starts; ++s) {
        Vector p = center;
        for (Index j = 0; j < k; ++j) {
            const std::uint64_t bits = splitmix64(0x1fe5eedULL + static_cast<std::uint64_t>(s) * 1009u +
                                                  static_cast<std::uint64_t>(j));
            const double u = 2.0 * unit_interval(bits) - 1.0;
            p(j) += cfg.start_spread * std::max(std::abs(center(j)), 1.0) * u;
        }
        starts.push_back(p);
    }
    return starts;
}

namespace {

// Multi-start driver over a parameterization x -> beta = offset + basis * x.
FitResult multistart(const PanelDataset& d, const ModelSpec& spec, const Vector& offset,
                     const Matrix& basis, const Vector& x_center, const Box& box) {
    const Index r = spec.r;
    const Objective f = [&](const Vector& x) {
        const Vector beta = offset + basis * x;
        ProfileEval pe = evaluate_profile(beta, d, r, true);
        return ObjectiveEval{pe.objective, basis.transpose() * pe.gradient, !pe.degenerate_gap};
    };

    std::vector<StartRecord> records;
    for (const Vector& s : start_points(x_center, spec.optimizer)) {
        const LocalResult lr = minimize_local(f, s, box, spec.optimizer);
        StartRecord rec;
        rec.start = offset + basis * box.clamp(s);
        rec.beta = offset + basis * lr.x;
        rec.objective = lr.value;
        rec.grad_norm = lr.gradient.size() ? lr.gradient.norm() : 0.0;
        rec.iterations = lr.iterations;
        rec.evaluations = lr.evaluations;
        rec.converged = lr.converged;
        rec.used_simplex = lr.used_simplex;
        records.push_back(std::move(rec));
    }

    const bool any_converged =
        std::any_of(records.begin(), records.end(), [](const StartRecord& s) { return s.converged; });
    if (!any_converged) {
        std::ostringstream os;
        os << "profile minimization: no start converged";
        for (size_t i = 0; i < records.size(); ++i) {
            os << "\n  start " << i << ": objective=" << records[i].objective
               << " |grad|=" << records[i].grad_norm << " iterations=" << records[i].iterations
               << (records[i].used_simplex ? " (simplex)" : "");
        }
        throw NumericalError(os.str());
    }

    // best objective, ties broken lexicographically on beta
    size_t best = 0;
    for (size_t i = 1; i < records.size(); ++i) {
        const auto& a = records[i];
        const auto& b = records[best];
        if (a.objective < b.objective ||
            (a.objective == b.objective &&
             std::lexicographical_compare(a.beta.begin(), a.beta.end(), b.beta.begin(), b.beta.end()))) {
            best = i;
        }
    }

    FitResult fit = fit_at(records[best].beta, d, r);
    fit.converged = records[best].converged;
    fit.n_restarts_agreeing = static_cast<int>(std::count_if(
        records.begin(), records.end(),
        [&](const StartRecord& s) { return std::abs(s.objective - records[best].objective) <= kAgreeTol; }));
    if (fit.n_restarts_agreeing < static_cast<int>(records.size())) {
        std::ostringstream os;
        os << fit.n_restarts_agreeing << " of " << records.size()
           << " starts reached the best objective; local minima present";
        fit.warnings.push_back(os.str());
    }
    if (!fit.converged) {
        fit.warnings.push_back("best start did not meet the gradient tolerance");
    }
    fit.starts = std::move(records);
    return fit;
}

}  // namespace

FitResult minimize_profile(const PanelDataset& d, const ModelSpec& spec) {
    check_shapes(d);
    check_spec(d, spec);
    const Index k = d.k();
    if (k == 0) {
        FitResult fit = fit_at(Vector(0), d, spec.r);
        fit.converged = true;
        fit.n_restarts_agreeing = 1;
        return fit;
    }
    const Vector ols = pooled_ols(d);
    const Box box = effective_box(d, spec, ols);

    if (spec.r == 0 && box.clamp(ols) == ols) {
        FitResult fit = fit_at(ols, d, 0);
        StartRecord rec;
        rec.start = ols;
        rec.beta = ols;
        rec.objective = fit.objective;
        rec.grad_norm = fit.gradient.norm();
        rec.converged = rec.grad_norm < spec.optimizer.grad_tol;
        fit.converged = rec.converged;
        fit.n_restarts_agreeing = 1;
        fit.starts.push_back(rec);
        fit.on_boundary = box.on_boundary(ols);
        return fit;
    }

    FitResult fit = multistart(d, spec, Vector::Zero(k), Matrix::Identity(k, k), box.clamp(ols), box);
    fit.on_boundary = box.on_boundary(fit.beta_hat);
    if (fit.on_boundary) {
        fit.warnings.push_back("estimate lies on the boundary of the parameter box; "
                               "interior-point inference does not apply");
    }
    return fit;
}

FitResult restricted_minimize(const PanelDataset& d, const ModelSpec& spec, const RestrictionSpec& rest) {
    check_shapes(d);
    check_spec(d, spec);
    const Index k = d.k();
    if (rest.h_matrix.cols() != k || rest.h_vector.size() != rest.h_matrix.rows()) {
        throw ValidationError("restriction dimensions do not match K");
    }
    const Matrix& h = rest.h_matrix;
    Eigen::JacobiSVD<Matrix> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    svd.setThreshold(1e-10);
    const Vector particular = svd.solve(rest.h_vector);
    const double resid = (h * particular - rest.h_vector).norm();
    if (resid > 1e-10 * std::max(1.0, rest.h_vector.norm())) {
        throw ValidationError("infeasible restriction: H beta = h has no solution");
    }
    check_restriction(rest, k);
    const Index q = h.rows();
    Vector beta_p = particular;
    if (q == k) {
        beta_p = h.fullPivLu().solve(rest.h_vector);
    }
    const Matrix null_basis = svd.matrixV().rightCols(k - q);

    FitResult fit;
    if (k - q == 0) {
        fit = fit_at(beta_p, d, spec.r);
        fit.converged = true;
        fit.n_restarts_agreeing = 1;
        StartRecord rec;
        rec.start = beta_p;
        rec.beta = beta_p;
        rec.objective = fit.objective;
        rec.converged = true;
        fit.starts.push_back(rec);
    } else {
        const Vector ols = pooled_ols(d);
        const Vector theta0 = null_basis.transpose() * (ols - beta_p);
        fit = multistart(d, spec, beta_p, null_basis, theta0, Box{});
    }
    const Box box = parameter_box(d, spec);
    if (box.bounded() && box.clamp(fit.beta_hat) != fit.beta_hat) {
        fit.warnings.push_back("restricted estimate lies outside the parameter box");
    }
    fit.on_boundary = box.on_boundary(fit.beta_hat);
    return fit;
}

}  // namespace ife
