#pragma once

// Lightlike direction families xi^(0)..xi^(4), the linear-dependence weights
// kappa / kappa-tilde (linear solve + closed forms with a mandatory
// reconciliation gate), and log-log exponent fitting for the sigma-asymptotic
// laws.

#include "beamlab/core.hpp"
#include "beamlab/oscillatory.hpp" // fit_loglog / SlopeFit

namespace beamlab {

inline double eta_inner(const Vec& u, const Vec& v) {
    double s = -u[0] * v[0];
    for (int i = 1; i < (int)u.size(); ++i) s += u[i] * v[i];
    return s;
}

struct XiFamily {
    double s0 = 0.0;
    double sigma = 0.1;
    int sign = +1; // branch of sqrt(1 - s0^2)
    int dim = 4;   // ambient 1+n
    std::array<Vec, 5> xi;

    double inner(int j, int k) const { return eta_inner(xi[j], xi[k]); }
};

inline XiFamily build_xi(double s0, double sigma, int sign, int dim = 4) {
    if (!(sigma > 0.0 && sigma < 1.0)) throw PreconditionError("build_xi: sigma must be in (0,1)");
    if (!(s0 >= -1.0 && s0 <= 1.0)) throw PreconditionError("build_xi: s0 must be in [-1,1]");
    if (sign != 1 && sign != -1) throw PreconditionError("build_xi: sign must be +-1");
    if (dim < 3) throw PreconditionError("build_xi: need at least 1+2 dimensions");
    XiFamily f;
    f.s0 = s0;
    f.sigma = sigma;
    f.sign = sign;
    f.dim = dim;
    double c = std::sqrt(1.0 - sigma * sigma);
    double u = std::sqrt(1.0 + sigma * sigma);
    double r = sign * std::sqrt(std::max(0.0, 1.0 - s0 * s0));
    auto mk = [dim](double t, double x1, double x2) {
        Vec v = Vec::Zero(dim);
        v[0] = t;
        v[1] = x1;
        v[2] = x2;
        return v;
    };
    f.xi[0] = mk(1.0, s0, r);
    f.xi[1] = mk(1.0, 1.0, 0.0);
    f.xi[2] = mk(1.0, c, sigma);
    f.xi[3] = mk(1.0, c, -sigma);
    f.xi[4] = mk(u, 1.0, sigma);
    for (int j = 0; j < 5; ++j)
        if (std::abs(eta_inner(f.xi[j], f.xi[j])) > 1e-14 * f.xi[j].squaredNorm())
            throw NumericError("build_xi: xi^(" + std::to_string(j) + ") is not null");
    return f;
}

enum class KappaVariant { Four, Five }; // kappa (4 weights) or kappa-tilde (5)

struct KappaSolution {
    KappaVariant variant;
    std::array<double, 5> w{}; // kappa_0..kappa_4 (kappa_4 unused for Four)
    double residual = 0.0;     // | sum_j w_j xi^(j) | (Euclidean)
};

// Four-vector variant: kappa_0 = -sigma^2 imposed, solve
//   sigma^2 xi^(0) = kappa_1 xi^(1) + kappa_2 xi^(2) + kappa_3 xi^(3).
// Five-vector variant: kappa~_0 = -sigma^2 and kappa~_4 = sigma^2 imposed,
// solve for kappa~_1..kappa~_3 in sum_j kappa~_j xi^(j) = 0.
inline KappaSolution solve_kappa(const XiFamily& f, KappaVariant variant) {
    if (f.sigma < 1e-4) throw NumericError("solve_kappa: sigma below conditioning floor 1e-4");
    double s2 = f.sigma * f.sigma;
    // All xi live in the span of (t, x1, x2); solve the 3x3 system there.
    Mat A(3, 3);
    Vec rhs(3);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) A(r, c) = f.xi[c + 1][r];
        rhs[r] = s2 * f.xi[0][r];
        if (variant == KappaVariant::Five) rhs[r] -= s2 * f.xi[4][r];
    }
    Eigen::FullPivLU<Mat> lu(A);
    if (!lu.isInvertible()) throw NumericError("solve_kappa: singular dependence system");
    Vec k = lu.solve(rhs);

    KappaSolution out;
    out.variant = variant;
    out.w[0] = -s2;
    out.w[1] = k[0];
    out.w[2] = k[1];
    out.w[3] = k[2];
    out.w[4] = (variant == KappaVariant::Five) ? s2 : 0.0;

    Vec res = Vec::Zero(f.dim);
    int terms = (variant == KappaVariant::Five) ? 5 : 4;
    for (int j = 0; j < terms; ++j) res += out.w[j] * f.xi[j];
    out.residual = res.norm();
    if (out.residual > 1e-12)
        throw NumericError("solve_kappa: dependence residual " + std::to_string(out.residual) +
                           " exceeds 1e-12");
    return out;
}

// Closed forms (Gaussian elimination of the dependence system). The kappa_2/3
// denominator is 2 sqrt(1-sigma^2) - 2: the variant printed with "-1" fails
// reconciliation by O(1) and contradicts kappa_2 -> 1 - s0.
inline KappaSolution kappa_closed_form(double s0, double sigma, int sign, KappaVariant variant,
                                       bool reconcile = true) {
    XiFamily f = build_xi(s0, sigma, sign, 4);
    double s2 = sigma * sigma;
    double c = std::sqrt(1.0 - s2);
    double r = sign * std::sqrt(std::max(0.0, 1.0 - s0 * s0));
    KappaSolution out;
    out.variant = variant;
    out.w[0] = -s2;
    if (variant == KappaVariant::Four) {
        out.w[1] = s2 * (c - s0) / (c - 1.0);
        out.w[2] = s2 * (s0 - 1.0) / (2.0 * c - 2.0) + sigma * r / 2.0;
        out.w[3] = s2 * (s0 - 1.0) / (2.0 * c - 2.0) - sigma * r / 2.0;
        out.w[4] = 0.0;
    } else {
        double u = std::sqrt(1.0 + s2);
        out.w[1] = s2 * (-std::sqrt(1.0 - s2 * s2) + c - s0 + 1.0) / (c - 1.0);
        out.w[2] = s2 * (-c + u + s0 - 1.0) / (2.0 * c - 2.0) + 0.5 * sigma * r;
        out.w[3] = s2 * (c + u + s0 - 3.0) / (2.0 * c - 2.0) - 0.5 * sigma * r;
        out.w[4] = s2;
    }
    Vec res = Vec::Zero(f.dim);
    int terms = (variant == KappaVariant::Five) ? 5 : 4;
    for (int j = 0; j < terms; ++j) res += out.w[j] * f.xi[j];
    out.residual = res.norm();

    if (reconcile) {
        KappaSolution ref = solve_kappa(f, variant);
        for (int j = 0; j < terms; ++j)
            if (std::abs(out.w[j] - ref.w[j]) > 1e-9)
                throw NumericError("kappa_closed_form: weight " + std::to_string(j) +
                                   " disagrees with the linear solve by " +
                                   std::to_string(std::abs(out.w[j] - ref.w[j])));
    }
    return out;
}

// Least-squares power-law fit value ~ C sigma^a on (sigma, value) samples.
struct ExponentFit {
    double exponent = 0.0;
    double coefficient = 0.0;
    double r2 = 0.0;
    bool sign_change = false;
};

inline ExponentFit fit_exponent(const std::vector<std::pair<double, double>>& samples) {
    if (samples.size() < 5) throw PreconditionError("fit_exponent: need >= 5 samples");
    double lo = samples.front().first, hi = samples.front().first;
    std::vector<double> xs, ys;
    bool pos = false, neg = false;
    for (auto& [s, v] : samples) {
        if (v == 0.0) throw PreconditionError("fit_exponent: zero sample value");
        (v > 0 ? pos : neg) = true;
        lo = std::min(lo, s);
        hi = std::max(hi, s);
        xs.push_back(s);
        ys.push_back(std::abs(v));
    }
    if (hi / lo < 10.0) throw PreconditionError("fit_exponent: samples must span a decade");
    SlopeFit f = fit_loglog(xs, ys);
    ExponentFit out;
    out.exponent = f.slope;
    out.coefficient = std::exp(f.intercept);
    out.r2 = f.r2;
    out.sign_change = pos && neg;
    return out;
}

// Default sigma sweep grid: 12 logarithmic points in [0.02, 0.2].
inline std::vector<double> sigma_sweep_grid(int pts = 12, double lo = 0.02, double hi = 0.2) {
    std::vector<double> g(pts);
    for (int i = 0; i < pts; ++i) g[i] = lo * std::pow(hi / lo, (double)i / (pts - 1));
    return g;
}

// Psi#_{jk}(p0) = 1/(2 kappa_j kappa_k <xi_j, xi_k>_eta) for a weight set.
inline cplx pair_sharp(const XiFamily& f, const KappaSolution& k, int j, int l) {
    double ip = 2.0 * k.w[j] * k.w[l] * f.inner(j, l);
    if (std::abs(ip) < 1e-300) throw NumericError("pair_sharp: degenerate pair");
    return cplx(1.0 / ip, 0.0);
}

} // namespace beamlab
