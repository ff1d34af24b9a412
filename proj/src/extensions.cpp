#include "ife/extensions.hpp"

#include "ife/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace ife {

Vector pooled_ols(const PanelDataset& d) {
    check_shapes(d);
    const Index k = d.k();
    if (k == 0) {
        return Vector(0);
    }
    Matrix gram(k, k);
    Vector rhs(k);
    for (Index a = 0; a < k; ++a) {
        rhs(a) = frob_dot(d.x[a], d.y);
        for (Index b = a; b < k; ++b) {
            gram(a, b) = frob_dot(d.x[a], d.x[b]);
            gram(b, a) = gram(a, b);
        }
    }
    const double nt = static_cast<double>(d.n() * d.t());
    const Matrix inv = spd_inverse(gram / nt, "pooled OLS Gram matrix");
    return inv * (rhs / nt);
}

CceResult cce_pooled_ar1_detail(const PanelDataset& d) {
    check_shapes(d);
    if (d.k() != 1) {
        throw ValidationError("pooled CCE expects the AR(1) layout with a single regressor (lagged Y)");
    }
    if (d.n() < 2) {
        throw ValidationError("pooled CCE needs N >= 2: with one unit the proxies reproduce its own data");
    }
    CceResult out;
    const Index t = d.t();
    Matrix proxies(t, 2);
    proxies.col(0) = d.y.colwise().mean().transpose();
    proxies.col(1) = d.x[0].colwise().mean().transpose();
    const Matrix basis = orthonormal_basis(proxies);
    out.n_proxies = basis.cols();
    if (out.n_proxies < 2) {
        out.warnings.push_back("proxy columns are collinear; dropped the redundant proxy");
    }
    if (out.n_proxies >= t) {
        throw ValidationError("pooled CCE: proxies span every period, nothing left to identify rho");
    }
    // sum_i x_i' M_F y_i / sum_i x_i' M_F x_i with x_i, y_i the unit rows
    const Matrix xm = annihilate_left(basis, d.x[0].transpose());  // T x N
    const Matrix ym = annihilate_left(basis, d.y.transpose());
    const double den = xm.squaredNorm();
    if (!(den > 1e-12 * std::max(1.0, d.x[0].squaredNorm()))) {
        throw NumericalError("pooled CCE: lagged outcome is explained by the proxies; rho not identified");
    }
    out.rho = frob_dot(xm, ym) / den;
    return out;
}

double cce_pooled_ar1(const PanelDataset& d) { return cce_pooled_ar1_detail(d).rho; }

void check_endogenous(const PanelDataset& d, const EndogenousSpec& es) {
    const Index k = d.k();
    if (es.endog_idx.empty()) {
        throw ValidationError("LS-MD needs at least one endogenous regressor");
    }
    std::set<Index> seen;
    for (Index j : es.endog_idx) {
        if (j < 0 || j >= k) {
            throw ValidationError("endogenous regressor index " + std::to_string(j) + " is out of range");
        }
        if (!seen.insert(j).second) {
            throw ValidationError("endogenous regressor index " + std::to_string(j) + " listed twice");
        }
    }
    const Index l = static_cast<Index>(es.instruments.size());
    if (l < static_cast<Index>(es.endog_idx.size())) {
        std::ostringstream os;
        os << "LS-MD needs at least as many instruments (" << l << ") as endogenous regressors ("
           << es.endog_idx.size() << ")";
        throw ValidationError(os.str());
    }
    for (Index i = 0; i < l; ++i) {
        const Matrix& z = es.instruments[i];
        if (z.rows() != d.n() || z.cols() != d.t()) {
            throw ValidationError("instrument " + std::to_string(i + 1) + " is not N x T");
        }
        require_finite(z, "instrument " + std::to_string(i + 1));
    }
    if (es.weight.size() > 0) {
        if (es.weight.rows() != l || es.weight.cols() != l) {
            throw ValidationError("LS-MD weight must be L x L");
        }
        if ((es.weight - es.weight.transpose()).cwiseAbs().maxCoeff() >
            1e-10 * std::max(1.0, es.weight.cwiseAbs().maxCoeff())) {
            throw ValidationError("LS-MD weight must be symmetric");
        }
        const Vector ev = eigenvalues_desc(symmetrized(es.weight));
        if (!(ev(ev.size() - 1) > 0.0)) {
            throw ValidationError("LS-MD weight must be positive definite");
        }
    }
}

namespace {

std::vector<Index> exogenous_indices(const PanelDataset& d, const EndogenousSpec& es) {
    std::vector<Index> exo;
    for (Index j = 0; j < d.k(); ++j) {
        if (std::find(es.endog_idx.begin(), es.endog_idx.end(), j) == es.endog_idx.end()) {
            exo.push_back(j);
        }
    }
    return exo;
}

// Y - beta_end . X_end on the listed exogenous regressors, optionally followed by Z.
PanelDataset partial_dataset(const Vector& beta_end, const PanelDataset& d, const EndogenousSpec& es,
                             bool with_instruments) {
    PanelDataset out;
    out.y = d.y;
    for (size_t j = 0; j < es.endog_idx.size(); ++j) {
        out.y -= beta_end(static_cast<Index>(j)) * d.x[es.endog_idx[j]];
    }
    for (Index j : exogenous_indices(d, es)) {
        out.x.push_back(d.x[j]);
        out.regressor_names.push_back(d.regressor_names[j]);
        out.low_rank.push_back(d.low_rank[j]);
    }
    if (with_instruments) {
        for (size_t i = 0; i < es.instruments.size(); ++i) {
            out.x.push_back(es.instruments[i]);
            out.regressor_names.push_back("z" + std::to_string(i + 1));
            out.low_rank.push_back(false);
        }
    }
    return out;
}

// The caller's box refers to the original K regressors; keep only the exogenous entries.
ModelSpec partial_spec(const ModelSpec& spec, const PanelDataset& d, const EndogenousSpec& es,
                       bool with_instruments) {
    ModelSpec s = spec;
    if (spec.lower.empty()) {
        return s;
    }
    s.lower.clear();
    s.upper.clear();
    for (Index j : exogenous_indices(d, es)) {
        s.lower.push_back(spec.lower[j]);
        s.upper.push_back(spec.upper[j]);
    }
    if (with_instruments) {
        const double inf = std::numeric_limits<double>::infinity();
        s.lower.insert(s.lower.end(), es.instruments.size(), -inf);
        s.upper.insert(s.upper.end(), es.instruments.size(), inf);
    }
    return s;
}

}  // namespace

LsmdStep1 lsmd_step1(const Vector& beta_end, const PanelDataset& d, const ModelSpec& spec,
                     const EndogenousSpec& es) {
    check_shapes(d);
    check_endogenous(d, es);
    if (beta_end.size() != static_cast<Index>(es.endog_idx.size())) {
        throw ValidationError("beta_end has the wrong length");
    }
    const PanelDataset aug = partial_dataset(beta_end, d, es, true);
    LsmdStep1 out;
    out.fit = minimize_profile(aug, partial_spec(spec, d, es, true));
    const Index k_exo = aug.k() - static_cast<Index>(es.instruments.size());
    out.beta_exo = out.fit.beta_hat.head(k_exo);
    out.gamma = out.fit.beta_hat.tail(static_cast<Index>(es.instruments.size()));
    return out;
}

LsmdResult lsmd_estimate(const PanelDataset& d, const ModelSpec& spec, const EndogenousSpec& es) {
    check_shapes(d);
    check_endogenous(d, es);
    const Index p = static_cast<Index>(es.endog_idx.size());
    const Index l = static_cast<Index>(es.instruments.size());
    const Matrix weight = es.weight.size() > 0 ? es.weight : Matrix(Matrix::Identity(l, l));

    LsmdResult res;
    // plain least squares estimate of the endogenous block as the start center
    Vector center(p);
    {
        const FitResult plain = minimize_profile(d, spec);
        for (Index j = 0; j < p; ++j) center(j) = plain.beta_hat(es.endog_idx[j]);
    }

    const auto distance = [&](const Vector& b) {
        const LsmdStep1 s1 = lsmd_step1(b, d, spec, es);
        const double dist = s1.gamma.dot(weight * s1.gamma);
        res.gamma_path.push_back(GammaPoint{b, s1.gamma, dist});
        return dist;
    };
    Vector step(p);
    for (Index j = 0; j < p; ++j) step(j) = 1e-5 * std::max(std::abs(center(j)), 1.0);
    const Objective outer = with_numeric_gradient(distance, step);
    const Objective value_only = [&](const Vector& b) {
        ObjectiveEval e;
        e.value = distance(b);
        e.gradient = Vector::Zero(p);
        e.gradient_reliable = false;
        return e;
    };

    struct Candidate {
        Vector x;
        double value;
        bool converged;
    };
    std::vector<Candidate> found;
    for (const Vector& s : start_points(center, spec.optimizer)) {
        LocalResult lr = minimize_local(outer, s, Box{}, spec.optimizer);
        if (!lr.converged) {
            // central differences of an inner argmin are noisy; polish by simplex
            lr = minimize_simplex(value_only, lr.x, Box{}, spec.optimizer, 1e-3 * (1.0 + lr.x.cwiseAbs().maxCoeff()));
        }
        found.push_back(Candidate{lr.x, lr.value, lr.converged});
    }
    const auto best_it = std::min_element(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) {
        if (a.converged != b.converged) return a.converged;
        return a.value < b.value;
    });
    if (!best_it->converged) {
        std::ostringstream os;
        os << "LS-MD outer minimization did not converge; gamma path (last points):";
        const size_t from = res.gamma_path.size() > 10 ? res.gamma_path.size() - 10 : 0;
        for (size_t i = from; i < res.gamma_path.size(); ++i) {
            const GammaPoint& g = res.gamma_path[i];
            os << "\n  beta_end=" << g.beta_end.transpose() << " gamma=" << g.gamma.transpose()
               << " distance=" << g.distance;
        }
        throw NumericalError(os.str());
    }
    res.converged = true;
    res.beta_end = best_it->x;

    const PanelDataset reduced = partial_dataset(res.beta_end, d, es, false);
    res.final_fit = minimize_profile(reduced, partial_spec(spec, d, es, false));
    res.beta_exo = res.final_fit.beta_hat;
    res.warnings = res.final_fit.warnings;

    res.beta = Vector::Zero(d.k());
    for (Index j = 0; j < p; ++j) res.beta(es.endog_idx[j]) = res.beta_end(j);
    const std::vector<Index> exo = exogenous_indices(d, es);
    for (size_t j = 0; j < exo.size(); ++j) res.beta(exo[j]) = res.beta_exo(static_cast<Index>(j));
    return res;
}

}  // namespace ife
