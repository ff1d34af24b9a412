#include "ife/optimize.hpp"

#include "ife/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace ife {

void check_optimizer_config(const OptimizerConfig& cfg) {
    if (cfg.n_starts < 1) {
        throw ValidationError("optimizer: n_starts must be >= 1");
    }
    if (!(cfg.grad_tol > 0.0) || !(cfg.step_tol > 0.0)) {
        throw ValidationError("optimizer: tolerances must be positive");
    }
    if (cfg.max_iter < 1) {
        throw ValidationError("optimizer: max_iter must be >= 1");
    }
    if (!(cfg.start_spread >= 0.0)) {
        throw ValidationError("optimizer: start_spread must be non-negative");
    }
}

Vector Box::clamp(const Vector& x) const {
    if (!bounded()) {
        return x;
    }
    return x.cwiseMax(lower).cwiseMin(upper);
}

bool Box::on_boundary(const Vector& x, double tol) const {
    if (!bounded()) {
        return false;
    }
    for (Index i = 0; i < x.size(); ++i) {
        const double scale = 1.0 + std::abs(x(i));
        if (std::isfinite(lower(i)) && x(i) - lower(i) <= tol * scale) return true;
        if (std::isfinite(upper(i)) && upper(i) - x(i) <= tol * scale) return true;
    }
    return false;
}

namespace {

// Zero the gradient components that push against an active bound.
Vector projected_gradient(const Vector& x, const Vector& g, const Box& box) {
    Vector pg = g;
    if (!box.bounded()) {
        return pg;
    }
    for (Index i = 0; i < x.size(); ++i) {
        const double scale = 1e-12 * (1.0 + std::abs(x(i)));
        if (x(i) <= box.lower(i) + scale && g(i) > 0.0) pg(i) = 0.0;
        if (x(i) >= box.upper(i) - scale && g(i) < 0.0) pg(i) = 0.0;
    }
    return pg;
}

}  // namespace

LocalResult minimize_local(const Objective& f, const Vector& x0, const Box& box,
                           const OptimizerConfig& cfg) {
    const Index k = x0.size();
    LocalResult res;
    Vector x = box.clamp(x0);
    ObjectiveEval e = f(x);
    res.evaluations = 1;

    if (k == 0) {
        res.x = x;
        res.value = e.value;
        res.gradient = e.gradient;
        res.converged = true;
        res.degenerate = !e.gradient_reliable;
        return res;
    }
    if (cfg.method == OptimizerMethod::Simplex) {
        return minimize_simplex(f, x, box, cfg, cfg.start_spread > 0 ? cfg.start_spread : 0.1);
    }

    Matrix hinv = Matrix::Identity(k, k);
    bool scaled = false;
    int polish = 0;
    for (int it = 0; it < cfg.max_iter; ++it) {
        res.iterations = it + 1;
        if (!e.gradient_reliable) {
            LocalResult nm = minimize_simplex(f, x, box, cfg, 0.05 * (1.0 + x.cwiseAbs().maxCoeff()));
            nm.evaluations += res.evaluations;
            nm.iterations += res.iterations;
            nm.degenerate = true;
            return nm;
        }
        const Vector pg = projected_gradient(x, e.gradient, box);
        // Once inside grad_tol, a few more quasi-Newton steps are nearly free and
        // sharpen exact-fit solutions well below the tolerance.
        if (pg.norm() < cfg.grad_tol && (pg.norm() < 1e-4 * cfg.grad_tol || ++polish > 3)) {
            break;
        }
        Vector d = -hinv * pg;
        if (box.bounded()) {
            for (Index i = 0; i < k; ++i) {
                if (pg(i) == 0.0 && e.gradient(i) != 0.0) d(i) = 0.0;
            }
        }
        double slope = pg.dot(d);
        if (!(slope < 0.0)) {
            hinv.setIdentity();
            scaled = false;
            d = -pg;
            slope = pg.dot(d);
        }

        double t = 1.0;
        bool accepted = false;
        Vector xn;
        ObjectiveEval en;
        const double noise = 1e-13 * (1.0 + std::abs(e.value));
        for (int ls = 0; ls < 60; ++ls) {
            xn = box.clamp(x + t * d);
            en = f(xn);
            ++res.evaluations;
            const double decrease = e.gradient.dot(xn - x);
            if (std::isfinite(en.value) &&
                (en.value <= e.value + 1e-4 * decrease ||
                 (std::abs(en.value - e.value) <= noise && en.gradient_reliable &&
                  projected_gradient(xn, en.gradient, box).norm() < pg.norm()))) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            break;
        }
        const Vector s = xn - x;
        const Vector yv = en.gradient - e.gradient;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            if (!scaled) {
                hinv = Matrix::Identity(k, k) * (sy / yv.squaredNorm());
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Matrix id = Matrix::Identity(k, k);
            hinv = (id - rho * s * yv.transpose()) * hinv * (id - rho * yv * s.transpose()) +
                   rho * s * s.transpose();
        }
        const bool tiny_step = s.cwiseAbs().maxCoeff() <= cfg.step_tol * (1.0 + x.cwiseAbs().maxCoeff());
        x = xn;
        e = en;
        if (tiny_step) {
            break;
        }
    }
    res.x = x;
    res.value = e.value;
    res.gradient = e.gradient;
    res.degenerate = !e.gradient_reliable;
    res.converged = e.gradient_reliable && projected_gradient(x, e.gradient, box).norm() < cfg.grad_tol;
    return res;
}

LocalResult minimize_simplex(const Objective& f, const Vector& x0, const Box& box,
                             const OptimizerConfig& cfg, double initial_step) {
    const Index k = x0.size();
    LocalResult res;
    res.used_simplex = true;
    if (k == 0) {
        const ObjectiveEval e = f(x0);
        res.x = x0;
        res.value = e.value;
        res.gradient = e.gradient;
        res.evaluations = 1;
        res.converged = true;
        return res;
    }
    auto value = [&](const Vector& x) {
        ++res.evaluations;
        const double v = f(box.clamp(x)).value;
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    std::vector<Vector> pts;
    std::vector<double> vals;
    pts.push_back(box.clamp(x0));
    vals.push_back(value(pts[0]));
    for (Index i = 0; i < k; ++i) {
        Vector p = pts[0];
        p(i) += initial_step;
        p = box.clamp(p);
        if ((p - pts[0]).norm() == 0.0) p(i) -= initial_step;
        pts.push_back(box.clamp(p));
        vals.push_back(value(pts.back()));
    }

    const long max_iter = static_cast<long>(cfg.max_iter) * 50 * (k + 1);
    bool simplex_converged = false;
    std::vector<size_t> order(k + 1);
    for (long it = 0; it < max_iter; ++it) {
        res.iterations = static_cast<int>(it + 1);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return vals[a] < vals[b]; });
        const size_t best = order.front();
        const size_t worst = order.back();
        const size_t second = order[k - 1];

        double diam = 0.0;
        for (const auto& p : pts) diam = std::max(diam, (p - pts[best]).cwiseAbs().maxCoeff());
        const double spread = vals[worst] - vals[best];
        if (diam <= cfg.step_tol * (1.0 + pts[best].cwiseAbs().maxCoeff()) ||
            (diam <= 1e-10 * (1.0 + pts[best].cwiseAbs().maxCoeff()) &&
             spread <= 1e-15 * (1.0 + std::abs(vals[best])))) {
            simplex_converged = true;
            break;
        }

        Vector centroid = Vector::Zero(k);
        for (size_t i = 0; i < pts.size(); ++i) {
            if (i != worst) centroid += pts[i];
        }
        centroid /= static_cast<double>(k);

        const Vector xr = centroid + (centroid - pts[worst]);
        const double fr = value(xr);
        if (fr < vals[best]) {
            const Vector xe = centroid + 2.0 * (centroid - pts[worst]);
            const double fe = value(xe);
            if (fe < fr) {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if (fr < vals[second]) {
            pts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        const bool outside = fr < vals[worst];
        const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid))
                                  : Vector(centroid + 0.5 * (pts[worst] - centroid));
        const double fc = value(xc);
        if (fc < std::min(fr, vals[worst])) {
            pts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        for (size_t i = 0; i < pts.size(); ++i) {
            if (i == best) continue;
            pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
            vals[i] = value(pts[i]);
        }
    }
    const size_t best = static_cast<size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
    res.x = box.clamp(pts[best]);
    const ObjectiveEval e = f(res.x);
    ++res.evaluations;
    res.value = e.value;
    res.gradient = e.gradient;
    res.degenerate = !e.gradient_reliable;
    if (e.gradient_reliable) {
        res.converged = projected_gradient(res.x, e.gradient, box).norm() < cfg.grad_tol;
    } else {
        // gradient meaningless at an eigenvalue crossing; fall back on simplex collapse
        res.converged = simplex_converged;
    }
    return res;
}

Objective with_numeric_gradient(std::function<double(const Vector&)> f, Vector step) {
    return [f = std::move(f), step = std::move(step)](const Vector& x) {
        ObjectiveEval e;
        e.value = f(x);
        e.gradient.resize(x.size());
        for (Index i = 0; i < x.size(); ++i) {
            Vector xp = x;
            Vector xm = x;
            xp(i) += step(i);
            xm(i) -= step(i);
            e.gradient(i) = (f(xp) - f(xm)) / (2.0 * step(i));
        }
        return e;
    };
}

}  // namespace ife
