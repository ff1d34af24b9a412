#include "ife/diagnostics.hpp"

#include "ife/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace ife {

namespace {

std::vector<Index> high_rank_indices(const PanelDataset& d) {
    std::vector<Index> idx;
    for (Index j = 0; j < d.k(); ++j) {
        if (!d.low_rank[j]) idx.push_back(j);
    }
    return idx;
}

Index tail_start(const PanelDataset& d, Index r) {
    const Index q = 2 * r + d.n_low_rank();
    if (d.n() <= q) {
        throw ValidationError("high-rank diagnostic needs N > 2R + K1; the eigenvalue tail is empty");
    }
    return q;
}

Matrix combination(const Vector& alpha, const PanelDataset& d, const std::vector<Index>& idx) {
    Matrix a = Matrix::Zero(d.n(), d.t());
    for (size_t j = 0; j < idx.size(); ++j) a += alpha(static_cast<Index>(j)) * d.x[idx[j]];
    return a;
}

struct TailEval {
    double value;
    Vector gradient;
};

// value and Euclidean gradient: d/da_k = 2 tr(X_k' M_U A) / NT, U the top-q left singular vectors
TailEval tail_with_gradient(const Vector& alpha, const PanelDataset& d, const std::vector<Index>& idx, Index q) {
    const double nt = static_cast<double>(d.n() * d.t());
    const Matrix a = combination(alpha, d, idx);
    Matrix resid = a;
    if (q > 0) {
        const Index keep = std::min(q, std::min(d.n(), d.t()));
        Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU);
        const Matrix u = svd.matrixU().leftCols(keep);
        resid = a - u * (u.transpose() * a);
    }
    TailEval out;
    out.value = std::max(0.0, resid.squaredNorm() / nt);
    out.gradient.resize(static_cast<Index>(idx.size()));
    for (size_t j = 0; j < idx.size(); ++j) {
        out.gradient(static_cast<Index>(j)) = 2.0 * frob_dot(d.x[idx[j]], resid) / nt;
    }
    return out;
}

std::vector<Vector> sphere_lattice(Index k) {
    std::vector<Vector> dirs;
    for (Index i = 0; i < k; ++i) {
        for (double s : {1.0, -1.0}) {
            Vector v = Vector::Zero(k);
            v(i) = s;
            dirs.push_back(v);
        }
    }
    const double c = 1.0 / std::sqrt(2.0);
    for (Index i = 0; i < k; ++i) {
        for (Index j = i + 1; j < k; ++j) {
            for (double si : {1.0, -1.0}) {
                for (double sj : {1.0, -1.0}) {
                    Vector v = Vector::Zero(k);
                    v(i) = si * c;
                    v(j) = sj * c;
                    dirs.push_back(v);
                }
            }
        }
    }
    return dirs;
}

// projected gradient descent on the sphere with backtracking; stops when the
// statistic improves by less than 1e-8
double refine_on_sphere(Vector alpha, const PanelDataset& d, const std::vector<Index>& idx, Index q) {
    TailEval cur = tail_with_gradient(alpha, d, idx, q);
    for (int it = 0; it < 500; ++it) {
        const Vector g = cur.gradient - alpha * alpha.dot(cur.gradient);
        if (g.norm() < 1e-12) break;
        double step = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 50; ++ls) {
            Vector cand = alpha - step * g;
            cand.normalize();
            const TailEval next = tail_with_gradient(cand, d, idx, q);
            if (next.value < cur.value - 1e-4 * step * g.squaredNorm()) {
                const double gain = cur.value - next.value;
                alpha = cand;
                cur = next;
                moved = gain >= 1e-8;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    return cur.value;
}

}  // namespace

double highrank_tail(const Vector& alpha, const PanelDataset& d, Index r) {
    const std::vector<Index> idx = high_rank_indices(d);
    if (alpha.size() != static_cast<Index>(idx.size())) {
        throw ValidationError("alpha must have one entry per high-rank regressor");
    }
    return tail_with_gradient(alpha, d, idx, tail_start(d, r)).value;
}

double highrank_diagnostic(const PanelDataset& d, Index r) {
    check_shapes(d);
    const std::vector<Index> idx = high_rank_indices(d);
    if (idx.empty()) {
        throw ValidationError("high-rank diagnostic needs at least one high-rank regressor");
    }
    const Index q = tail_start(d, r);
    const Index k2 = static_cast<Index>(idx.size());
    if (k2 == 1) {
        return tail_with_gradient(Vector::Ones(1), d, idx, q).value;
    }
    std::vector<std::pair<double, Vector>> scored;
    for (const Vector& v : sphere_lattice(k2)) {
        scored.emplace_back(tail_with_gradient(v, d, idx, q).value, v);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    double best = scored.front().first;
    const size_t n_refine = std::min<size_t>(scored.size(), 4);
    for (size_t i = 0; i < n_refine; ++i) {
        best = std::min(best, refine_on_sphere(scored[i].second, d, idx, q));
    }
    return best;
}

LowrankSeparation lowrank_separation_diagnostic(const PanelDataset& d, const Matrix& lambda, const Matrix& f) {
    check_shapes(d);
    const Index k1 = d.n_low_rank();
    if (k1 == 0) {
        throw ValidationError("low-rank separation diagnostic needs at least one low-rank regressor");
    }
    if (lambda.cols() == 0 || f.cols() == 0) {
        throw ValidationError("low-rank separation diagnostic needs R >= 1 factors");
    }
    if (lambda.rows() != d.n() || f.rows() != d.t() || lambda.cols() != f.cols()) {
        throw ValidationError("loadings/factors do not match the dataset");
    }
    Matrix w(d.n(), k1);
    Matrix v(d.t(), k1);
    for (Index l = 0; l < k1; ++l) {
        Eigen::JacobiSVD<Matrix> svd(d.x[l], Eigen::ComputeThinU | Eigen::ComputeThinV);
        w.col(l) = svd.matrixU().col(0);
        v.col(l) = svd.matrixV().col(0);
    }
    const Matrix ml = annihilate_left(w, lambda);
    const Matrix mf = annihilate_left(v, f);
    LowrankSeparation out;
    const Vector el = eigenvalues_desc(symmetrized(lambda.transpose() * ml / static_cast<double>(d.n())));
    const Vector ef = eigenvalues_desc(symmetrized(f.transpose() * mf / static_cast<double>(d.t())));
    out.loading_eig = std::max(0.0, el(el.size() - 1));
    out.factor_eig = std::max(0.0, ef(ef.size() - 1));
    return out;
}

double pooled_noncollinearity_eig(const PanelDataset& d) {
    check_shapes(d);
    const Index k = d.k();
    if (k == 0) {
        throw ValidationError("no regressors");
    }
    Matrix g(k, k);
    const double nt = static_cast<double>(d.n() * d.t());
    for (Index a = 0; a < k; ++a) {
        for (Index b = a; b < k; ++b) {
            g(a, b) = frob_dot(d.x[a], d.x[b]) / nt;
            g(b, a) = g(a, b);
        }
    }
    const Vector ev = eigenvalues_desc(g);
    return std::max(0.0, ev(k - 1));
}

DiagnosticsReport diagnose(const PanelDataset& d, const FitResult& fit) {
    DiagnosticsReport rep;
    if (d.k() == 0) {
        rep.warnings.push_back("no regressors: diagnostics not applicable");
        return rep;
    }
    rep.pooled_noncollinearity_eig = pooled_noncollinearity_eig(d);
    if (d.n_low_rank() < d.k()) {
        if (d.n() > 2 * fit.r + d.n_low_rank()) {
            rep.highrank_stat = highrank_diagnostic(d, fit.r);
        } else {
            rep.warnings.push_back("high-rank diagnostic not applicable: N <= 2R + K1");
        }
    } else {
        rep.warnings.push_back("high-rank diagnostic not applicable: no high-rank regressors");
    }
    if (d.n_low_rank() > 0) {
        if (fit.r > 0) {
            const LowrankSeparation s = lowrank_separation_diagnostic(d, fit.lambda_hat, fit.f_hat);
            rep.lowrank_loading_eig = s.loading_eig;
            rep.lowrank_factor_eig = s.factor_eig;
        } else {
            rep.warnings.push_back("low-rank separation diagnostic not applicable: R = 0");
        }
    }
    return rep;
}

}  // namespace ife
