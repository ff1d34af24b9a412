#include "ife/panel.hpp"

#include "ife/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ife {

PanelDataset::PanelDataset(Matrix y_, std::vector<Matrix> x_) : y(std::move(y_)), x(std::move(x_)) {
    for (size_t k = 0; k < x.size(); ++k) {
        regressor_names.push_back("x" + std::to_string(k + 1));
    }
    low_rank.assign(x.size(), false);
}

Index PanelDataset::n_low_rank() const {
    return static_cast<Index>(std::count(low_rank.begin(), low_rank.end(), true));
}

Matrix PanelDataset::combine(const Vector& beta) const {
    if (beta.size() != k()) {
        throw ValidationError("coefficient vector length does not match K");
    }
    Matrix out = Matrix::Zero(n(), t());
    for (Index j = 0; j < k(); ++j) {
        out.noalias() += beta(j) * x[static_cast<size_t>(j)];
    }
    return out;
}

Matrix PanelDataset::residual_base(const Vector& beta) const {
    return y - combine(beta);
}

PanelDataset PanelDataset::units(Index begin, Index count) const {
    PanelDataset out = *this;
    out.y = y.middleRows(begin, count);
    for (size_t j = 0; j < x.size(); ++j) out.x[j] = x[j].middleRows(begin, count);
    return out;
}

PanelDataset PanelDataset::periods(Index begin, Index count) const {
    PanelDataset out = *this;
    out.y = y.middleCols(begin, count);
    for (size_t j = 0; j < x.size(); ++j) out.x[j] = x[j].middleCols(begin, count);
    return out;
}

PanelDataset PanelDataset::transposed() const {
    PanelDataset out = *this;
    out.y = y.transpose();
    for (size_t j = 0; j < x.size(); ++j) out.x[j] = x[j].transpose();
    return out;
}

void check_shapes(const PanelDataset& d) {
    if (d.n() < 1 || d.t() < 1) {
        throw ValidationError("outcome matrix must be non-empty");
    }
    require_finite(d.y, "outcome y");
    for (size_t j = 0; j < d.x.size(); ++j) {
        const std::string name = j < d.regressor_names.size() ? d.regressor_names[j]
                                                              : "x" + std::to_string(j + 1);
        if (d.x[j].rows() != d.n() || d.x[j].cols() != d.t()) {
            std::ostringstream os;
            os << "regressor " << name << " is " << d.x[j].rows() << "x" << d.x[j].cols()
               << " but y is " << d.n() << "x" << d.t();
            throw ValidationError(os.str());
        }
        require_finite(d.x[j], "regressor " + name);
    }
    if (!d.regressor_names.empty() && d.regressor_names.size() != d.x.size()) {
        throw ValidationError("regressor_names length does not match K");
    }
    if (!d.low_rank.empty() && d.low_rank.size() != d.x.size()) {
        throw ValidationError("low_rank flags length does not match K");
    }
    // low-rank regressors must come first
    bool seen_high = false;
    for (bool lr : d.low_rank) {
        if (!lr) seen_high = true;
        if (lr && seen_high) {
            throw ValidationError("low-rank regressors must be ordered before high-rank ones");
        }
    }
}

ValidationReport validate_dataset(const PanelDataset& d) {
    check_shapes(d);
    if (d.n() < 2 || d.t() < 2) {
        throw ValidationError("panel needs N >= 2 and T >= 2");
    }
    if (d.k() < 1) {
        throw ValidationError("at least one regressor (K >= 1) is required");
    }
    ValidationReport rep;
    for (size_t j = 0; j < d.x.size(); ++j) {
        Eigen::JacobiSVD<Matrix> svd(d.x[j]);
        const Vector& sv = svd.singularValues();
        const double tol = static_cast<double>(std::max(d.n(), d.t())) *
                           std::numeric_limits<double>::epsilon() * (sv.size() ? sv(0) : 0.0);
        Index rank = 0;
        while (rank < sv.size() && sv(rank) > tol) ++rank;
        rep.numeric_rank.push_back(rank);
        const bool flagged = j < d.low_rank.size() && d.low_rank[j];
        if (flagged && rank > 1) {
            std::ostringstream os;
            os << "regressor " << d.regressor_names[j] << " is declared low-rank but has numeric rank "
               << rank << " (sigma2/sigma1 = " << sv(1) / sv(0) << ")";
            rep.warnings.push_back(os.str());
        }
        if (rank == 0) {
            rep.warnings.push_back("regressor " + d.regressor_names[j] + " is identically zero");
        }
    }
    return rep;
}

int auto_bandwidth(Index t) {
    int m = 0;
    Index v = t;
    while (v > 1) {
        v >>= 1;
        ++m;
    }
    return std::max(1, m);
}

int resolve_bandwidth(const ModelSpec& spec, Index t) {
    if (spec.bandwidth) {
        if (*spec.bandwidth < 1) {
            throw ValidationError("bandwidth must be >= 1");
        }
        return *spec.bandwidth;
    }
    return auto_bandwidth(t);
}

void check_spec(const PanelDataset& d, const ModelSpec& spec) {
    const Index bound = std::min(d.n(), d.t()) - 1;
    if (spec.r < 0 || spec.r > bound) {
        std::ostringstream os;
        os << "number of factors R=" << spec.r << " violates 0 <= R <= min(N,T)-1 = " << bound;
        throw ValidationError(os.str());
    }
    if (spec.bandwidth && *spec.bandwidth < 1) {
        throw ValidationError("bandwidth must be >= 1");
    }
    check_optimizer_config(spec.optimizer);
    if (spec.lower.size() != spec.upper.size()) {
        throw ValidationError("parameter box: lower and upper must have equal length");
    }
    if (!spec.lower.empty()) {
        if (static_cast<Index>(spec.lower.size()) != d.k()) {
            throw ValidationError("parameter box length does not match K");
        }
        for (size_t j = 0; j < spec.lower.size(); ++j) {
            if (!(spec.lower[j] <= spec.upper[j])) {
                throw ValidationError("parameter box: lower bound exceeds upper bound");
            }
        }
    }
}

void check_restriction(const RestrictionSpec& rest, Index k) {
    const Index r = rest.h_matrix.rows();
    if (rest.h_matrix.cols() != k) {
        throw ValidationError("restriction matrix H must have K columns");
    }
    if (rest.h_vector.size() != r) {
        throw ValidationError("restriction vector h must have one entry per row of H");
    }
    if (r < 1 || r > k) {
        throw ValidationError("restriction needs 1 <= rank(H) <= K");
    }
    require_finite(rest.h_matrix, "restriction matrix H");
    require_finite(rest.h_vector, "restriction vector h");
    Eigen::ColPivHouseholderQR<Matrix> qr(rest.h_matrix);
    qr.setThreshold(1e-10);
    if (qr.rank() != r) {
        throw ValidationError("restriction matrix H must have full row rank");
    }
}

}  // namespace ife
