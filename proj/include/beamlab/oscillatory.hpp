#pragma once

// Stationary-phase leading term for complex phases (Im psi >= 0) and a
// brute-force oscillatory quadrature oracle: tensor Gauss-Legendre panels
// with dyadic refinement, skipping panels that the e^{-Im psi/h} decay has
// already killed.

#include "beamlab/core.hpp"

#include <array>
#include <cmath>

namespace beamlab {

struct OscillatoryIntegral {
    int d = 1;
    double h = 0.01;
    std::function<cplx(const Vec&)> phase;      // psi, Im psi >= 0
    std::function<CMat(const Vec&)> phase_hess; // needed at x0
    std::function<cplx(const Vec&)> amplitude;  // u, compactly supported in the box
    Vec x0, box_lo, box_hi;
};

// Leading term (2 pi h)^{d/2} det(-i Hpsi(x0))^{-1/2} u(x0) e^{i psi(x0)/h},
// branch via principal square roots of the eigenvalues of -i Hpsi (all in the
// closed right half-plane when Im Hpsi >= 0). The h-power convention is the
// one validated by the Gaussian oracle.
inline cplx stationary_phase_leading(const OscillatoryIntegral& in) {
    CMat H = in.phase_hess(in.x0);
    CMat miH = -I_UNIT * H;
    Eigen::ComplexEigenSolver<CMat> es(miH);
    if (es.info() != Eigen::Success) throw NumericError("stationary_phase: eigen solve failed");
    cplx invroot = 1.0;
    for (int i = 0; i < in.d; ++i) {
        cplx lam = es.eigenvalues()[i];
        if (std::abs(lam) < 1e-14)
            throw NumericError("stationary_phase: degenerate phase Hessian");
        if (lam.real() < -1e-10 * std::abs(lam))
            throw NumericError("stationary_phase: eigenvalue outside the right half-plane");
        invroot /= std::sqrt(lam); // principal branch
    }
    cplx phase0 = in.phase(in.x0);
    return std::pow(2.0 * M_PI * in.h, 0.5 * in.d) * invroot * in.amplitude(in.x0) *
           std::exp(I_UNIT * phase0 / in.h);
}

namespace detail {

inline const std::array<double, 4>& gl8_nodes() {
    static const std::array<double, 4> x = {0.1834346424956498, 0.5255324099163290,
                                            0.7966664774136267, 0.9602898564975363};
    return x;
}
inline const std::array<double, 4>& gl8_weights() {
    static const std::array<double, 4> w = {0.3626837833783620, 0.3137066458778873,
                                            0.2223810344533745, 0.1012285362903763};
    return w;
}

// 8-point Gauss-Legendre nodes/weights on [a, b].
inline void gl8_on(double a, double b, std::array<double, 8>& xs, std::array<double, 8>& ws) {
    double mid = 0.5 * (a + b), rad = 0.5 * (b - a);
    for (int i = 0; i < 4; ++i) {
        xs[2 * i] = mid - rad * gl8_nodes()[i];
        xs[2 * i + 1] = mid + rad * gl8_nodes()[i];
        ws[2 * i] = ws[2 * i + 1] = rad * gl8_weights()[i];
    }
}

} // namespace detail

// Full integrand e^{i psi/h} u at x.
inline cplx oscillatory_integrand(const OscillatoryIntegral& in, const Vec& x) {
    cplx p = in.phase(x);
    if (p.imag() > 40.0 * in.h) return 0.0; // below double-precision relevance
    return std::exp(I_UNIT * p / in.h) * in.amplitude(x);
}

// One pass with m panels per axis (8-point GL per panel, d <= 3). Panels whose
// center phase has Im psi > 40h + margin are skipped wholesale.
inline cplx oscillatory_pass(const OscillatoryIntegral& in, int m) {
    const int d = in.d;
    std::vector<std::vector<std::array<double, 8>>> xs(d), ws(d);
    for (int a = 0; a < d; ++a) {
        xs[a].resize(m);
        ws[a].resize(m);
        double lo = in.box_lo[a], hi = in.box_hi[a];
        for (int p = 0; p < m; ++p) {
            double pa = lo + (hi - lo) * p / m;
            double pb = lo + (hi - lo) * (p + 1) / m;
            detail::gl8_on(pa, pb, xs[a][p], ws[a][p]);
        }
    }
    auto panel_skippable = [&](const std::vector<int>& pidx) {
        Vec c(d);
        double diam2 = 0.0;
        for (int a = 0; a < d; ++a) {
            double lo = in.box_lo[a], hi = in.box_hi[a];
            double w = (hi - lo) / m;
            c[a] = lo + w * (pidx[a] + 0.5);
            diam2 += w * w;
        }
        // Conservative: skip only when the center is deep inside the dead zone.
        return in.phase(c).imag() > 40.0 * in.h + 4.0 * std::sqrt(diam2);
    };

    cplx total = 0.0;
    std::vector<int> pidx(d, 0);
    Vec x(d);
    while (true) {
        if (!panel_skippable(pidx)) {
            if (d == 1) {
                for (int i = 0; i < 8; ++i)
                    total += ws[0][pidx[0]][i] *
                             oscillatory_integrand(in, (Vec(1) << xs[0][pidx[0]][i]).finished());
            } else if (d == 2) {
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        x[0] = xs[0][pidx[0]][i];
                        x[1] = xs[1][pidx[1]][j];
                        total += ws[0][pidx[0]][i] * ws[1][pidx[1]][j] * oscillatory_integrand(in, x);
                    }
            } else if (d == 3) {
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j)
                        for (int k = 0; k < 8; ++k) {
                            x[0] = xs[0][pidx[0]][i];
                            x[1] = xs[1][pidx[1]][j];
                            x[2] = xs[2][pidx[2]][k];
                            total += ws[0][pidx[0]][i] * ws[1][pidx[1]][j] * ws[2][pidx[2]][k] *
                                     oscillatory_integrand(in, x);
                        }
            } else {
                throw ConfigError("oscillatory_quadrature: d must be <= 3");
            }
        }
        int a = 0;
        while (a < d && ++pidx[a] == m) pidx[a++] = 0;
        if (a == d) break;
    }
    return total;
}

struct QuadratureResult {
    cplx value = 0.0;
    cplx previous = 0.0;
    int panels = 0;
    bool converged = false;
};

// Dyadic panel refinement until two successive passes agree to tol (relative
// to the larger magnitude, with an absolute floor).
inline QuadratureResult oscillatory_quadrature_full(const OscillatoryIntegral& in, double tol,
                                                    int m0 = 0, int max_level = 6) {
    if (m0 <= 0) {
        // Panel count scaling ~ h^{-1/2} per axis to resolve the Gaussian width.
        double span = 0.0;
        for (int a = 0; a < in.d; ++a) span = std::max(span, in.box_hi[a] - in.box_lo[a]);
        m0 = std::max(2, (int)std::ceil(0.5 * span / std::sqrt(in.h)));
    }
    QuadratureResult res;
    res.value = oscillatory_pass(in, m0);
    res.panels = m0;
    for (int lvl = 1; lvl <= max_level; ++lvl) {
        int m = m0 << lvl;
        res.previous = res.value;
        res.value = oscillatory_pass(in, m);
        res.panels = m;
        double scale = std::max({std::abs(res.value), std::abs(res.previous), 1e-300});
        if (std::abs(res.value - res.previous) < tol * scale + 1e-15) {
            res.converged = true;
            return res;
        }
    }
    throw NumericError("oscillatory_quadrature: no convergence at max refinement; last two values " +
                       std::to_string(std::abs(res.previous)) + ", " +
                       std::to_string(std::abs(res.value)));
}

inline cplx oscillatory_quadrature(const OscillatoryIntegral& in, double tol) {
    return oscillatory_quadrature_full(in, tol).value;
}

// Fitted slope of log(relative error of the leading term) vs log h.
struct SlopeFit {
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
    bool saturated = false;
};

inline SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw PreconditionError("fit_loglog: need >= 2 samples");
    double n = (double)x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        double lx = std::log(x[i]), ly = std::log(std::abs(y[i]));
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly; syy += ly * ly;
    }
    SlopeFit f;
    double denom = n * sxx - sx * sx;
    f.slope = (n * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / n;
    double sstot = syy - sy * sy / n;
    double ssres = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        double ly = std::log(std::abs(y[i]));
        double fy = f.intercept + f.slope * std::log(x[i]);
        ssres += (ly - fy) * (ly - fy);
    }
    f.r2 = (sstot > 0) ? 1.0 - ssres / sstot : 1.0;
    return f;
}

// Relative-error slope of stationary phase across an h-list.
inline SlopeFit sp_error_slope(const std::function<OscillatoryIntegral(double)>& family,
                               const std::vector<double>& hs, double quad_tol = 1e-9) {
    if (hs.size() < 4) throw PreconditionError("sp_error_slope: need >= 4 values of h");
    std::vector<double> errs;
    bool saturated = true;
    for (double h : hs) {
        OscillatoryIntegral in = family(h);
        cplx lead = stationary_phase_leading(in);
        cplx quad = oscillatory_quadrature(in, quad_tol);
        double rel = std::abs(quad - lead) / std::max(std::abs(lead), 1e-300);
        if (rel > 100.0 * quad_tol) saturated = false;
        errs.push_back(std::max(rel, 1e-300));
    }
    SlopeFit f = fit_loglog(hs, errs);
    f.saturated = saturated;
    return f;
}

} // namespace beamlab
