#include "ife/inference.hpp"

#include "ife/errors.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <sstream>

namespace ife {

namespace {

double panel_nt(const FitResult& fit) {
    return static_cast<double>(fit.residuals.rows() * fit.residuals.cols());
}

// M_lambda X M_f
Matrix annihilate_both(const Matrix& x, const Matrix& lambda, const Matrix& f) {
    Matrix out = annihilate_left(lambda, x);
    return annihilate_left(f, out.transpose()).transpose();
}

void check_fit_matches(const FitResult& fit, const PanelDataset& d) {
    if (fit.residuals.rows() != d.n() || fit.residuals.cols() != d.t() || fit.beta_hat.size() != d.k()) {
        throw ValidationError("fit does not belong to this dataset");
    }
}

// a' W^-1 H' (H W^-1 Omega W^-1 H')^-1 H W^-1 a
double sandwich_form(const Vector& a, const Matrix& w_inv, const Matrix& omega, const Matrix& h) {
    const Matrix hw = h * w_inv;
    const Matrix inner = hw * omega * hw.transpose();
    const Matrix inner_inv = spd_inverse(inner, "restriction covariance H W^-1 Omega W^-1 H'");
    const Vector b = hw * a;
    return b.dot(inner_inv * b);
}

// Restricted residuals vanish to rounding: score and its variance are both zero and
// the LM form is 0/0, reported as 0.
bool exact_fit(const FitResult& fit) {
    double scale = fit.objective;
    if (fit.r > 0) {
        scale += (fit.lambda_hat * fit.f_hat.transpose()).squaredNorm() / panel_nt(fit);
    }
    return fit.objective <= 1e-24 * scale;
}

double clip_lr(double stat, const char* what) {
    if (stat < -1e-8) {
        std::ostringstream os;
        os << what << " statistic is negative (" << stat
           << "); the unrestricted minimization did not reach the global minimum";
        throw NumericalError(os.str());
    }
    return std::max(stat, 0.0);
}

}  // namespace

std::vector<Matrix> annihilated_regressors(const FitResult& fit, const PanelDataset& d) {
    check_fit_matches(fit, d);
    std::vector<Matrix> out;
    out.reserve(d.x.size());
    for (const Matrix& x : d.x) {
        out.push_back(fit.r == 0 ? x : annihilate_both(x, fit.lambda_hat, fit.f_hat));
    }
    return out;
}

namespace {

Matrix gram_of(const std::vector<Matrix>& xa, const Matrix* weights, double nt) {
    const Index k = static_cast<Index>(xa.size());
    Matrix w(k, k);
    for (Index a = 0; a < k; ++a) {
        const Matrix wa = weights ? Matrix(xa[a].cwiseProduct(*weights)) : xa[a];
        for (Index b = a; b < k; ++b) {
            w(a, b) = frob_dot(wa, xa[b]) / nt;
            w(b, a) = w(a, b);
        }
    }
    return w;
}

}  // namespace

Matrix w_hat(const FitResult& fit, const PanelDataset& d) {
    return gram_of(annihilated_regressors(fit, d), nullptr, panel_nt(fit));
}

Matrix omega_hat(const FitResult& fit, const PanelDataset& d) {
    const Matrix e2 = fit.residuals.array().square().matrix();
    return gram_of(annihilated_regressors(fit, d), &e2, panel_nt(fit));
}

BiasTerms bias_hats(const FitResult& fit, const PanelDataset& d, KernelConfig cfg,
                    std::vector<std::string>* warnings) {
    check_fit_matches(fit, d);
    if (cfg.bandwidth < 1) {
        throw ValidationError("bandwidth must be >= 1");
    }
    const Index n = d.n();
    const Index t = d.t();
    const Index k = d.k();
    if (cfg.bandwidth >= t && warnings) {
        warnings->push_back("bandwidth M >= T: the truncation kernel covers every lag");
    }
    BiasTerms out{Vector::Zero(k), Vector::Zero(k), Vector::Zero(k)};
    if (fit.r == 0) {
        return out;
    }
    const Matrix& lambda = fit.lambda_hat;
    const Matrix& f = fit.f_hat;
    const Matrix& e = fit.residuals;
    const Matrix ff_inv = pinv_symmetric(f.transpose() * f);
    const Matrix ll_inv = pinv_symmetric(lambda.transpose() * lambda);
    const Matrix pf = f * ff_inv * f.transpose();
    const Vector e2_unit = e.array().square().rowwise().sum();  // sum_t e_it^2
    const Vector e2_time = e.array().square().colwise().sum().transpose();  // sum_i e_it^2

    for (Index j = 0; j < k; ++j) {
        const Matrix& x = d.x[static_cast<size_t>(j)];
        // B1: (1/N) sum_i sum_{t<s<=t+M} [P_f]_ts e_it X_is
        const Matrix ex = e.transpose() * x;  // (t, s) -> sum_i e_it X_is
        double b1 = 0.0;
        for (Index s = 1; s < t; ++s) {
            for (Index tt = std::max<Index>(0, s - cfg.bandwidth); tt < s; ++tt) {
                b1 += kernel_weight(s - tt, cfg) * pf(tt, s) * ex(tt, s);
            }
        }
        out.b1(j) = b1 / static_cast<double>(n);

        // B2: (1/T) sum_i (sum_t e_it^2) [M_lambda X f (f'f)^-1 (l'l)^-1 l']_ii
        const Matrix dmat = annihilate_left(lambda, x) * f * ff_inv * ll_inv;  // N x R
        const Vector diag2 = dmat.cwiseProduct(lambda).rowwise().sum();
        out.b2(j) = e2_unit.dot(diag2) / static_cast<double>(t);

        // B3: (1/N) sum_t (sum_i e_it^2) [M_f X' l (l'l)^-1 (f'f)^-1 f']_tt
        const Matrix gmat = annihilate_left(f, x.transpose()) * lambda * ll_inv * ff_inv;  // T x R
        const Vector diag3 = gmat.cwiseProduct(f).rowwise().sum();
        out.b3(j) = e2_time.dot(diag3) / static_cast<double>(n);
    }
    return out;
}

InferenceResult bias_corrected(const FitResult& fit, const PanelDataset& d, KernelConfig cfg) {
    check_fit_matches(fit, d);
    InferenceResult inf;
    const double n = static_cast<double>(d.n());
    const double t = static_cast<double>(d.t());
    inf.beta_hat = fit.beta_hat;
    inf.bandwidth_used = cfg.bandwidth;
    const std::vector<Matrix> xa = annihilated_regressors(fit, d);
    const Matrix e2 = fit.residuals.array().square().matrix();
    inf.w_hat = gram_of(xa, nullptr, n * t);
    inf.omega_hat = gram_of(xa, &e2, n * t);
    const BiasTerms b = bias_hats(fit, d, cfg, &inf.warnings);
    inf.b1_hat = b.b1;
    inf.b2_hat = b.b2;
    inf.b3_hat = b.b3;
    inf.kappa = std::sqrt(n / t);
    inf.b_hat = -inf.kappa * b.b1 - b.b2 / inf.kappa - inf.kappa * b.b3;
    inf.w_inv = spd_inverse(inf.w_hat, "W_hat");
    inf.beta_star = fit.beta_hat + inf.w_inv * (b.b1 / t + b.b2 / n + b.b3 / t);
    inf.cov_star = inf.w_inv * inf.omega_hat * inf.w_inv / (n * t);
    inf.cov_star = 0.5 * (inf.cov_star + inf.cov_star.transpose());
    inf.std_err = inf.cov_star.diagonal().cwiseMax(0.0).cwiseSqrt();
    return inf;
}

JackknifeResult jackknife(const PanelDataset& d, const ModelSpec& spec) {
    JackknifeResult out;
    PanelDataset data = d;
    if (data.n() % 2 != 0) {
        out.warnings.push_back("odd N: dropping the last unit, effective N = " + std::to_string(data.n() - 1));
        data = data.units(0, data.n() - 1);
    }
    if (data.t() % 2 != 0) {
        out.warnings.push_back("odd T: dropping the last period, effective T = " + std::to_string(data.t() - 1));
        data = data.periods(0, data.t() - 1);
    }
    const Index hn = data.n() / 2;
    const Index ht = data.t() / 2;

    auto subfit = [&](const PanelDataset& sub, const std::string& label) {
        try {
            return minimize_profile(sub, spec).beta_hat;
        } catch (const ValidationError& ex) {
            throw ValidationError("jackknife subpanel " + label + ": " + ex.what());
        } catch (const NumericalError& ex) {
            throw NumericalError("jackknife subpanel " + label + ": " + ex.what());
        }
    };
    out.beta_full = subfit(data, "full");
    const Vector t1 = subfit(data.periods(0, ht), "first time half");
    const Vector t2 = subfit(data.periods(ht, ht), "second time half");
    const Vector u1 = subfit(data.units(0, hn), "first unit half");
    const Vector u2 = subfit(data.units(hn, hn), "second unit half");
    out.beta_time_halves = 0.5 * (t1 + t2);
    out.beta_unit_halves = 0.5 * (u1 + u2);
    out.beta_jk = 3.0 * out.beta_full - out.beta_time_halves - out.beta_unit_halves;
    return out;
}

std::string to_string(TestVariant v) {
    switch (v) {
        case TestVariant::WD: return "WD";
        case TestVariant::LR: return "LR";
        case TestVariant::LM: return "LM";
        case TestVariant::WDStar: return "WD*";
        case TestVariant::LRStar: return "LR*";
        case TestVariant::LMStar: return "LM*";
    }
    return "?";
}

double chi2_upper_tail(double x, int df) {
    if (df < 1) {
        throw ValidationError("chi-square degrees of freedom must be >= 1");
    }
    if (!(x > 0.0)) {
        return 1.0;
    }
    if (std::isinf(x)) {
        return 0.0;
    }
    return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

double chi2_quantile(double p, int df) {
    if (df < 1 || !(p > 0.0) || !(p < 1.0)) {
        throw ValidationError("chi2_quantile: need df >= 1 and 0 < p < 1");
    }
    return 2.0 * boost::math::gamma_p_inv(0.5 * df, p);
}

TestResult make_test_result(double statistic, int df, TestVariant v) {
    TestResult r;
    r.statistic = statistic;
    r.df = df;
    r.variant = v;
    r.p_value = chi2_upper_tail(statistic, df);
    return r;
}

namespace {

TestResult wald_at(const Vector& beta, const FitResult& fit, const InferenceResult& inf,
                   const RestrictionSpec& rest, TestVariant v) {
    check_restriction(rest, beta.size());
    const double nt = panel_nt(fit);
    const Vector dev = rest.h_matrix * beta - rest.h_vector;
    const Matrix hw = rest.h_matrix * inf.w_inv;
    const Matrix inner = hw * inf.omega_hat * hw.transpose();
    const Matrix inner_inv = spd_inverse(inner, "Wald covariance H W^-1 Omega W^-1 H'");
    const double stat = nt * dev.dot(inner_inv * dev);
    return make_test_result(std::max(stat, 0.0), static_cast<int>(rest.h_matrix.rows()), v);
}

Box shifted_box(const Box& box, const Vector& shift) {
    if (!box.bounded()) return box;
    return Box{box.lower + shift, box.upper + shift};
}

}  // namespace

TestResult wald_star(const FitResult& fit, const InferenceResult& inf, const RestrictionSpec& rest) {
    return wald_at(inf.beta_star, fit, inf, rest, TestVariant::WDStar);
}

TestResult wald(const FitResult& fit, const InferenceResult& inf, const RestrictionSpec& rest) {
    return wald_at(fit.beta_hat, fit, inf, rest, TestVariant::WD);
}

UncorrectedTests uncorrected_tests(const FitResult& fit, const InferenceResult& inf,
                                   const FitResult& restricted, const InferenceResult& restricted_inf,
                                   const RestrictionSpec& rest) {
    UncorrectedTests out;
    const double nt = panel_nt(fit);
    const int df = static_cast<int>(rest.h_matrix.rows());
    out.wd = wald(fit, inf, rest);

    const double c_hat = fit.objective;
    if (!(c_hat > 0.0)) {
        throw NumericalError("LR test: c_hat = L(beta_hat) is zero; the statistic is undefined");
    }
    out.lr = make_test_result(clip_lr(nt * (restricted.objective - fit.objective) / c_hat, "LR"), df,
                              TestVariant::LR);
    out.lr.c_hat = c_hat;

    const Vector a = std::sqrt(nt) * restricted.gradient;
    out.lm = make_test_result(
        exact_fit(restricted)
            ? 0.0
            : std::max(0.0, 0.25 * sandwich_form(a, restricted_inf.w_inv, restricted_inf.omega_hat, rest.h_matrix)),
        df, TestVariant::LM);
    return out;
}

namespace {

struct ShiftedMinima {
    double restricted = 0.0;
    double unrestricted = 0.0;
};

// min of L(beta + s) over the restricted set and over the box.
ShiftedMinima shifted_minima(const PanelDataset& d, const ModelSpec& spec, const RestrictionSpec& rest,
                             const FitResult& fit, const Vector& shift) {
    ShiftedMinima out;
    RestrictionSpec moved = rest;
    moved.h_vector = rest.h_vector + rest.h_matrix * shift;
    out.restricted = restricted_minimize(d, spec, moved).objective;

    const Box box = parameter_box(d, spec);
    out.unrestricted = fit.objective;
    if (box.bounded()) {
        const Box sb = shifted_box(box, shift);
        ModelSpec sspec = spec;
        sspec.lower.assign(sb.lower.data(), sb.lower.data() + sb.lower.size());
        sspec.upper.assign(sb.upper.data(), sb.upper.data() + sb.upper.size());
        const double moved_min = minimize_profile(d, sspec).objective;
        out.unrestricted = sb.clamp(fit.beta_hat) == fit.beta_hat ? std::min(moved_min, fit.objective) : moved_min;
    }
    return out;
}

TestResult lr_star_from(const PanelDataset& d, const ModelSpec& spec, const RestrictionSpec& rest,
                        const FitResult& fit, const InferenceResult& shift_source) {
    const double nt = static_cast<double>(d.n() * d.t());
    const double c_hat = fit.objective;
    if (!(c_hat > 0.0)) {
        throw NumericalError("LR* test: c_hat = L(beta_hat) is zero; the statistic is undefined");
    }
    const Vector shift = shift_source.w_inv * shift_source.b_hat / std::sqrt(nt);
    const ShiftedMinima m = shifted_minima(d, spec, rest, fit, shift);
    TestResult r = make_test_result(clip_lr(nt * (m.restricted - m.unrestricted) / c_hat, "LR*"),
                                    static_cast<int>(rest.h_matrix.rows()), TestVariant::LRStar);
    r.c_hat = c_hat;
    return r;
}

TestResult lm_star_from(const FitResult& restricted, const InferenceResult& rinf, const RestrictionSpec& rest) {
    const double nt = panel_nt(restricted);
    const Vector a = std::sqrt(nt) * restricted.gradient + 2.0 * rinf.b_hat;
    const double stat = exact_fit(restricted) ? 0.0 : 0.25 * sandwich_form(a, rinf.w_inv, rinf.omega_hat, rest.h_matrix);
    return make_test_result(std::max(stat, 0.0), static_cast<int>(rest.h_matrix.rows()), TestVariant::LMStar);
}

KernelConfig kernel_for(const ModelSpec& spec, const PanelDataset& d) {
    return KernelConfig{resolve_bandwidth(spec, d.t())};
}

}  // namespace

TestResult lr_star(const PanelDataset& d, const ModelSpec& spec, const RestrictionSpec& rest, TestOptions opts) {
    check_restriction(rest, d.k());
    const FitResult fit = minimize_profile(d, spec);
    const KernelConfig cfg = kernel_for(spec, d);
    if (opts.lr_shift == LrShiftSource::Restricted) {
        const FitResult restricted = restricted_minimize(d, spec, rest);
        return lr_star_from(d, spec, rest, fit, bias_corrected(restricted, d, cfg));
    }
    return lr_star_from(d, spec, rest, fit, bias_corrected(fit, d, cfg));
}

TestResult lm_star(const PanelDataset& d, const ModelSpec& spec, const RestrictionSpec& rest, KernelConfig cfg) {
    check_restriction(rest, d.k());
    const FitResult restricted = restricted_minimize(d, spec, rest);
    return lm_star_from(restricted, bias_corrected(restricted, d, cfg), rest);
}

TestSuite run_tests(const PanelDataset& d, const ModelSpec& spec, const RestrictionSpec& rest,
                    const FitResult& unrestricted, TestOptions opts) {
    check_restriction(rest, d.k());
    const KernelConfig cfg = kernel_for(spec, d);
    TestSuite s;
    s.unrestricted = unrestricted;
    s.inference = bias_corrected(s.unrestricted, d, cfg);
    s.restricted = restricted_minimize(d, spec, rest);
    s.restricted_inference = bias_corrected(s.restricted, d, cfg);

    const UncorrectedTests u = uncorrected_tests(s.unrestricted, s.inference, s.restricted,
                                                 s.restricted_inference, rest);
    s.wd = u.wd;
    s.lr = u.lr;
    s.lm = u.lm;
    s.wd_star = wald_star(s.unrestricted, s.inference, rest);
    s.lr_star = lr_star_from(d, spec, rest, s.unrestricted,
                             opts.lr_shift == LrShiftSource::Restricted ? s.restricted_inference : s.inference);
    s.lm_star = lm_star_from(s.restricted, s.restricted_inference, rest);
    return s;
}

TestSuite run_tests(const PanelDataset& d, const ModelSpec& spec, const RestrictionSpec& rest, TestOptions opts) {
    return run_tests(d, spec, rest, minimize_profile(d, spec), opts);
}

}  // namespace ife
