#pragma once

// Finite-difference leapfrog solver for linear and semilinear wave equations
//   d_t^2 u - Lap u + q1 u + q2 u^2 = F + f,   u(0) = d_t u(0) = 0,
// on flat 1+1 / 1+2 space-time grids. Ground-truth engine for beams,
// linearization chains, integral identities and gauge checks. The
// nonlinearity is treated explicitly under a hard amplitude guard
// (small-data regime); no implicit stepping.

#include "beamlab/core.hpp"

#include <fstream>
#include <functional>
#include <utility>

namespace beamlab {

using SpaceTimeFn = std::function<double(double t, const Vec& x)>;

enum class Boundary { Periodic, DirichletSponge };

struct GridSpec {
    int d = 1;            // spatial dimension, 1 or 2
    Vec lo, hi;           // spatial box extents
    double dx = 0.0;
    double dt = 0.0;
    double T = 0.0;
    Boundary boundary = Boundary::Periodic;
    double sponge_width = 0.0; // absorbing margin for Dirichlet boundaries

    int n(int axis) const { return (int)std::round((hi[axis] - lo[axis]) / dx) + 1; }
    int nodes() const { return d == 1 ? n(0) : n(0) * n(1); }
    int nt() const { return (int)std::round(T / dt) + 1; }

    Vec x_of(int idx) const {
        Vec x(d);
        if (d == 1) {
            x[0] = lo[0] + idx * dx;
        } else {
            int n1 = n(1);
            x[0] = lo[0] + (idx / n1) * dx;
            x[1] = lo[1] + (idx % n1) * dx;
        }
        return x;
    }

    void validate() const {
        if (d != 1 && d != 2) throw ConfigError("grid: spatial dimension must be 1 or 2");
        if (dx <= 0.0 || dt <= 0.0 || T <= 0.0) throw ConfigError("grid: dx, dt, T must be positive");
        if ((int)lo.size() < d || (int)hi.size() < d) throw ConfigError("grid: box extents missing");
        for (int a = 0; a < d; ++a)
            if (hi[a] <= lo[a]) throw ConfigError("grid: empty box");
        if (dt > 0.9 * dx / std::sqrt((double)d) * (1.0 + 1e-12))
            throw ConfigError("grid: CFL violated, need dt <= 0.9 dx / sqrt(d)");
    }
};

struct CoefficientSet {
    SpaceTimeFn q1, q2, F; // any of them may be null (treated as zero)
};

// Space-time scalar field, time-major storage: a[it * nodes + node].
struct STField {
    GridSpec grid;
    std::vector<double> a;

    STField() = default;
    explicit STField(const GridSpec& g) : grid(g), a((size_t)g.nt() * g.nodes(), 0.0) {}

    double& at(int it, int node) { return a[(size_t)it * grid.nodes() + node]; }
    double at(int it, int node) const { return a[(size_t)it * grid.nodes() + node]; }
    const double* slice(int it) const { return a.data() + (size_t)it * grid.nodes(); }
    double* slice(int it) { return a.data() + (size_t)it * grid.nodes(); }

    double max_abs() const {
        double m = 0.0;
        for (double v : a) m = std::max(m, std::abs(v));
        return m;
    }

    // Flat binary export with a one-line text header (row-major, time-major).
    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw ConfigError("field: cannot open " + path);
        f << "beamlab-field d=" << grid.d << " nt=" << grid.nt() << " n0=" << grid.n(0)
          << " n1=" << (grid.d == 2 ? grid.n(1) : 1) << " dx=" << grid.dx << " dt=" << grid.dt
          << " order=time-major\n";
        f.write(reinterpret_cast<const char*>(a.data()), (std::streamsize)(a.size() * sizeof(double)));
    }
};

struct WaveSolution {
    STField u;
    double max_amplitude = 0.0;
    std::vector<double> energy; // discrete energy trace per stored step
};

// Composite-trapezoid space-time L2 inner product (fixed reduction order).
inline double st_inner(const STField& a, const STField& b) {
    const GridSpec& g = a.grid;
    if (a.a.size() != b.a.size()) throw PreconditionError("st_inner: field size mismatch");
    const int nt = g.nt(), nn = g.nodes(), n0 = g.n(0), n1 = (g.d == 2 ? g.n(1) : 1);
    double sum = 0.0;
    for (int it = 0; it < nt; ++it) {
        double wt = (it == 0 || it == nt - 1) ? 0.5 : 1.0;
        const double* pa = a.slice(it);
        const double* pb = b.slice(it);
        double s = 0.0;
        for (int i = 0; i < nn; ++i) {
            double w = 1.0;
            int i0 = (g.d == 2) ? i / n1 : i;
            int i1 = (g.d == 2) ? i % n1 : 0;
            if (i0 == 0 || i0 == n0 - 1) w *= 0.5;
            if (g.d == 2 && (i1 == 0 || i1 == n1 - 1)) w *= 0.5;
            s += w * pa[i] * pb[i];
        }
        sum += wt * s;
    }
    return sum * std::pow(g.dx, g.d) * g.dt;
}

inline double st_l2(const STField& a) { return std::sqrt(std::max(0.0, st_inner(a, a))); }

namespace detail {

// Sponge damping profile: 0 in the interior, quadratic ramp to sigma_max at
// the box faces over sponge_width.
inline double sponge_sigma(const GridSpec& g, int node, double sigma_max = 30.0) {
    if (g.boundary != Boundary::DirichletSponge || g.sponge_width <= 0.0) return 0.0;
    Vec x = g.x_of(node);
    double r = 0.0;
    for (int a = 0; a < g.d; ++a) {
        double m = std::min(x[a] - g.lo[a], g.hi[a] - x[a]);
        if (m < g.sponge_width) r = std::max(r, 1.0 - m / g.sponge_width);
    }
    return sigma_max * r * r;
}

// 5-point (3-point in 1d) Laplacian of a time slice.
inline void laplacian(const GridSpec& g, const double* u, std::vector<double>& out) {
    const double inv2 = 1.0 / (g.dx * g.dx);
    if (g.d == 1) {
        const int n = g.n(0);
        for (int i = 0; i < n; ++i) {
            int im = (i == 0) ? (g.boundary == Boundary::Periodic ? n - 2 : -1) : i - 1;
            int ip = (i == n - 1) ? (g.boundary == Boundary::Periodic ? 1 : -1) : i + 1;
            double um = (im >= 0) ? u[im] : 0.0;
            double up = (ip >= 0) ? u[ip] : 0.0;
            out[i] = (um - 2.0 * u[i] + up) * inv2;
        }
        return;
    }
    const int n0 = g.n(0), n1 = g.n(1);
    auto idx = [n1](int i, int j) { return i * n1 + j; };
    for (int i = 0; i < n0; ++i)
        for (int j = 0; j < n1; ++j) {
            auto nb = [&](int ii, int jj) -> double {
                if (g.boundary == Boundary::Periodic) {
                    if (ii < 0) ii = n0 - 2;
                    if (ii >= n0) ii = 1;
                    if (jj < 0) jj = n1 - 2;
                    if (jj >= n1) jj = 1;
                } else if (ii < 0 || ii >= n0 || jj < 0 || jj >= n1) {
                    return 0.0;
                }
                return u[idx(ii, jj)];
            };
            out[idx(i, j)] = (nb(i - 1, j) + nb(i + 1, j) + nb(i, j - 1) + nb(i, j + 1) -
                              4.0 * u[idx(i, j)]) *
                             inv2;
        }
}

// Explicit leapfrog driver. rhs_extra(it, node, u_val) adds everything
// beyond the Laplacian: -q1 u - q2 u^2 + F + f evaluated at time level it.
template <typename RhsExtra>
WaveSolution leapfrog_solve(const GridSpec& g, RhsExtra&& rhs_extra, double guard) {
    g.validate();
    const int nt = g.nt(), nn = g.nodes();
    WaveSolution sol;
    sol.u = STField(g);
    sol.energy.reserve(nt);
    std::vector<double> lap(nn), sigma(nn);
    for (int i = 0; i < nn; ++i) sigma[i] = sponge_sigma(g, i);
    const double dt2 = g.dt * g.dt;

    // u^0 = 0; u^1 = (dt^2/2) rhs(0) from zero Cauchy data.
    for (int i = 0; i < nn; ++i) sol.u.at(1, i) = 0.5 * dt2 * rhs_extra(0, i, 0.0);
    for (int it = 1; it + 1 < nt; ++it) {
        const double* un = sol.u.slice(it);
        const double* um = sol.u.slice(it - 1);
        double* up = sol.u.slice(it + 1);
        laplacian(g, un, lap);
        for (int i = 0; i < nn; ++i) {
            double rhs = lap[i] + rhs_extra(it, i, un[i]);
            double sd = 0.5 * sigma[i] * g.dt;
            up[i] = (2.0 * un[i] - (1.0 - sd) * um[i] + dt2 * rhs) / (1.0 + sd);
        }
        if (g.boundary == Boundary::DirichletSponge) {
            const int n0 = g.n(0), n1 = (g.d == 2 ? g.n(1) : 1);
            for (int i = 0; i < nn; ++i) {
                int i0 = (g.d == 2) ? i / n1 : i;
                int i1 = (g.d == 2) ? i % n1 : 0;
                if (i0 == 0 || i0 == n0 - 1 || (g.d == 2 && (i1 == 0 || i1 == n1 - 1))) up[i] = 0.0;
            }
        }
        // E^{n+1/2} = 1/2 |(u^{n+1}-u^n)/dt|^2 - 1/2 <u^{n+1}, Lap u^n>: the
        // staggered form conserved exactly by the homogeneous leapfrog flow.
        double m = 0.0, e = 0.0;
        for (int i = 0; i < nn; ++i) {
            m = std::max(m, std::abs(up[i]));
            double v = (up[i] - un[i]) / g.dt;
            e += 0.5 * v * v - 0.5 * up[i] * lap[i];
        }
        sol.energy.push_back(e * std::pow(g.dx, g.d));
        sol.max_amplitude = std::max(sol.max_amplitude, m);
        if (!(m < guard))
            throw NumericError("wave: amplitude guard exceeded (small-data regime violated)");
        if (!std::isfinite(m)) throw NumericError("wave: non-finite amplitude");
    }
    return sol;
}

// Sampled space-time function: evaluated once per (time level, node).
inline std::vector<double> sample_fn(const GridSpec& g, const SpaceTimeFn& f) {
    const int nt = g.nt(), nn = g.nodes();
    std::vector<double> out((size_t)nt * nn, 0.0);
    if (!f) return out;
    for (int it = 0; it < nt; ++it) {
        double t = it * g.dt;
        for (int i = 0; i < nn; ++i) out[(size_t)it * nn + i] = f(t, g.x_of(i));
    }
    return out;
}

// Spatial-only sampling (coefficients constant in t are the common case, but
// we keep full space-time sampling for generality).
} // namespace detail

// Linear wave d_t^2 u - Lap u + Q u = source, zero Cauchy data.
inline WaveSolution solve_linear_wave(const SpaceTimeFn& Q, const SpaceTimeFn& source,
                                      const GridSpec& grid, double guard = 1e6) {
    grid.validate();
    auto q = detail::sample_fn(grid, Q);
    auto s = detail::sample_fn(grid, source);
    const int nn = grid.nodes();
    return detail::leapfrog_solve(
        grid,
        [&](int it, int i, double u) {
            size_t k = (size_t)it * nn + i;
            return -q[k] * u + s[k];
        },
        guard);
}

// Semilinear wave d_t^2 u - Lap u + q1 u + q2 u^2 = F + f, explicit in the
// nonlinearity, hard amplitude guard.
inline WaveSolution solve_nonlinear_wave(const CoefficientSet& coeffs, const SpaceTimeFn& f,
                                         const GridSpec& grid, double guard = 10.0) {
    grid.validate();
    auto q1 = detail::sample_fn(grid, coeffs.q1);
    auto q2 = detail::sample_fn(grid, coeffs.q2);
    auto F = detail::sample_fn(grid, coeffs.F);
    auto fs = detail::sample_fn(grid, f);
    const int nn = grid.nodes();
    return detail::leapfrog_solve(
        grid,
        [&](int it, int i, double u) {
            size_t k = (size_t)it * nn + i;
            return -q1[k] * u - q2[k] * u * u + F[k] + fs[k];
        },
        guard);
}

// Source f = eta_plus (d_t^2 - Lap + Q)(eta_minus v) assembled discretely on
// the grid; the solve driven by f reproduces eta_minus v after the cutoff
// transition. v, eta_minus, eta_plus are callables on (t, x); the support of
// f must stay inside the ball of radius `ball_radius` around `ball_center`
// (space-time Euclidean) when a radius is given.
inline STField beam_source(const SpaceTimeFn& v, const SpaceTimeFn& Q, const SpaceTimeFn& eta_minus,
                           const SpaceTimeFn& eta_plus, const GridSpec& grid,
                           double ball_radius = -1.0, const Vec& ball_center = Vec(),
                           double ball_t = 0.0) {
    grid.validate();
    const int nt = grid.nt(), nn = grid.nodes();
    // Sample w = eta_minus v, then apply the discrete wave operator.
    STField w(grid);
    for (int it = 0; it < nt; ++it) {
        double t = it * grid.dt;
        for (int i = 0; i < nn; ++i) {
            Vec x = grid.x_of(i);
            w.at(it, i) = eta_minus(t, x) * v(t, x);
        }
    }
    STField f(grid);
    std::vector<double> lap(nn);
    for (int it = 1; it + 1 < nt; ++it) {
        double t = it * grid.dt;
        detail::laplacian(grid, w.slice(it), lap);
        for (int i = 0; i < nn; ++i) {
            Vec x = grid.x_of(i);
            double utt = (w.at(it + 1, i) - 2.0 * w.at(it, i) + w.at(it - 1, i)) / (grid.dt * grid.dt);
            double box = utt - lap[i] + (Q ? Q(t, x) : 0.0) * w.at(it, i);
            f.at(it, i) = eta_plus(t, x) * box;
        }
    }
    if (ball_radius > 0.0) {
        for (int it = 0; it < nt; ++it)
            for (int i = 0; i < nn; ++i) {
                if (std::abs(f.at(it, i)) < 1e-14) continue;
                Vec x = grid.x_of(i);
                double r2 = sq(it * grid.dt - ball_t);
                for (int a = 0; a < grid.d; ++a) r2 += sq(x[a] - ball_center[a]);
                if (r2 > sq(ball_radius))
                    throw ConfigError("beam_source: support escapes the configured source ball");
            }
    }
    return f;
}

// Linearization chain around the f = 0 background u0:
//   (box + q1 + 2 q2 u0) v(i)     = f(i)
//   (box + q1 + 2 q2 u0) w(ij)    = -2 q2 v(i) v(j)
//   (box + q1 + 2 q2 u0) w(ijk)   = -2 q2 (v(i) w(jk) + v(j) w(ik) + v(k) w(ij))
//   (box + q1 + 2 q2 u0) w(1234)  = -2 q2 (w(14) w(23) + w(24) w(13) + w(34) w(12))
//                                   -2 q2 (v(1) w(234) + v(2) w(134) + v(3) w(124) + v(4) w(123))
struct LinearizedChain {
    STField u0;
    std::vector<STField> v;          // v[i], i = 0..K-1
    std::vector<std::vector<STField>> w;   // w[i][j], i < j
    std::vector<STField> w3;         // K = 3: {w012}; K = 4: {w123,w023,w013,w012} indexed by omitted i
    STField w4;                      // K = 4 only
};

inline LinearizedChain solve_linearized_chain(const CoefficientSet& coeffs,
                                              const std::vector<SpaceTimeFn>& f,
                                              const GridSpec& grid, double guard = 10.0) {
    grid.validate();
    const int K = (int)f.size();
    if (K != 3 && K != 4) throw PreconditionError("chain: need 3 or 4 sources");
    const int nn = grid.nodes();

    auto q1 = detail::sample_fn(grid, coeffs.q1);
    auto q2 = detail::sample_fn(grid, coeffs.q2);

    LinearizedChain ch;
    ch.u0 = solve_nonlinear_wave(coeffs, nullptr, grid, guard).u;

    // Effective linear potential q1 + 2 q2 u0 sampled once.
    std::vector<double> pot(q1.size());
    for (size_t k = 0; k < pot.size(); ++k) pot[k] = q1[k] + 2.0 * q2[k] * ch.u0.a[k];

    auto lin_solve = [&](const std::function<double(size_t)>& src) {
        return detail::leapfrog_solve(
                   grid,
                   [&](int it, int i, double u) {
                       size_t k = (size_t)it * nn + i;
                       return -pot[k] * u + src(k);
                   },
                   guard)
            .u;
    };

    for (int i = 0; i < K; ++i) {
        auto fi = detail::sample_fn(grid, f[i]);
        ch.v.push_back(lin_solve([&](size_t k) { return fi[k]; }));
    }
    ch.w.assign(K, std::vector<STField>(K));
    for (int i = 0; i < K; ++i)
        for (int j = i + 1; j < K; ++j) {
            ch.w[i][j] = lin_solve(
                [&](size_t k) { return -2.0 * q2[k] * ch.v[i].a[k] * ch.v[j].a[k]; });
            ch.w[j][i] = ch.w[i][j]; // symmetric assembly, bit-for-bit
        }

    auto w3_src = [&](int i, int j, int k) {
        return [&, i, j, k](size_t m) {
            return -2.0 * q2[m] *
                   (ch.v[i].a[m] * ch.w[j][k].a[m] + ch.v[j].a[m] * ch.w[i][k].a[m] +
                    ch.v[k].a[m] * ch.w[i][j].a[m]);
        };
    };
    if (K == 3) {
        ch.w3.push_back(lin_solve(w3_src(0, 1, 2)));
    } else {
        // w3[m] omits index m: w3[0] = w(234) etc. (0-based: omits source m).
        for (int m = 0; m < 4; ++m) {
            int idx[3], c = 0;
            for (int i = 0; i < 4; ++i)
                if (i != m) idx[c++] = i;
            ch.w3.push_back(lin_solve(w3_src(idx[0], idx[1], idx[2])));
        }
        ch.w4 = lin_solve([&](size_t m) {
            double pair_terms = ch.w[0][3].a[m] * ch.w[1][2].a[m] +
                                ch.w[1][3].a[m] * ch.w[0][2].a[m] +
                                ch.w[2][3].a[m] * ch.w[0][1].a[m];
            double v_terms = ch.v[0].a[m] * ch.w3[0].a[m] + ch.v[1].a[m] * ch.w3[1].a[m] +
                             ch.v[2].a[m] * ch.w3[2].a[m] + ch.v[3].a[m] * ch.w3[3].a[m];
            return -2.0 * q2[m] * (pair_terms + v_terms);
        });
    }
    return ch;
}

// Central mixed FD derivative d^order u / d eps_1 ... d eps_order at eps = 0
// via the 2^order tensor-corner stencil with spacing eps.
inline STField fd_mixed_derivative(const CoefficientSet& coeffs,
                                   const std::vector<SpaceTimeFn>& f, double eps, int order,
                                   const GridSpec& grid, double guard = 10.0) {
    grid.validate();
    if (order != 3 && order != 4) throw PreconditionError("fd_mixed: order must be 3 or 4");
    if ((int)f.size() != order) throw PreconditionError("fd_mixed: need one source per order");
    STField out(grid);
    const int corners = 1 << order;
    for (int c = 0; c < corners; ++c) {
        double sign = 1.0;
        std::vector<double> s(order);
        for (int b = 0; b < order; ++b) {
            s[b] = (c >> b & 1) ? 1.0 : -1.0;
            sign *= s[b];
        }
        SpaceTimeFn fc = [&f, s, eps, order](double t, const Vec& x) {
            double v = 0.0;
            for (int b = 0; b < order; ++b) v += eps * s[b] * f[b](t, x);
            return v;
        };
        WaveSolution sol;
        try {
            sol = solve_nonlinear_wave(coeffs, fc, grid, guard);
        } catch (const NumericError&) {
            throw NumericError("fd_mixed: amplitude guard hit at a stencil corner, reduce eps");
        }
        for (size_t k = 0; k < out.a.size(); ++k) out.a[k] += sign * sol.u.a[k];
    }
    double scale = std::pow(2.0 * eps, order);
    for (double& v : out.a) v /= scale;
    return out;
}

// Gauge transform (q1, q2, F) = (q~1 + 2 q~2 phi, q~2, F~ - (box phi + q~1 phi + q~2 phi^2)).
// box phi is evaluated by central differences with step fd_step; if
// `must_vanish` is given, phi is required to vanish on its sample points.
inline CoefficientSet gauge_transform(const SpaceTimeFn& q1t, const SpaceTimeFn& q2t,
                                      const SpaceTimeFn& Ft, const SpaceTimeFn& phi, int d,
                                      const std::vector<std::pair<double, Vec>>& must_vanish = {},
                                      double fd_step = 1e-3) {
    for (const auto& [t, x] : must_vanish)
        if (std::abs(phi(t, x)) > 1e-12)
            throw PreconditionError("gauge: phi does not vanish on the measurement set");
    auto val = [](const SpaceTimeFn& f, double t, const Vec& x) { return f ? f(t, x) : 0.0; };
    CoefficientSet out;
    out.q1 = [q1t, q2t, phi, val](double t, const Vec& x) {
        return val(q1t, t, x) + 2.0 * val(q2t, t, x) * phi(t, x);
    };
    out.q2 = q2t;
    out.F = [q1t, q2t, Ft, phi, val, fd_step, d](double t, const Vec& x) {
        double p0 = phi(t, x);
        double box = (phi(t + fd_step, x) - 2.0 * p0 + phi(t - fd_step, x)) / sq(fd_step);
        for (int a = 0; a < d; ++a) {
            Vec xp = x, xm = x;
            xp[a] += fd_step;
            xm[a] -= fd_step;
            box -= (phi(t, xp) - 2.0 * p0 + phi(t, xm)) / sq(fd_step);
        }
        return val(Ft, t, x) - (box + val(q1t, t, x) * p0 + val(q2t, t, x) * p0 * p0);
    };
    return out;
}

// Backward solution of (box + q1 + 2 q2 u0) v0 = f0: forward solve in
// reversed time (flat-space time symmetry), then flipped back.
inline STField solve_backward_linear(const CoefficientSet& coeffs, const STField& u0,
                                     const SpaceTimeFn& f0, const GridSpec& grid,
                                     double guard = 1e6) {
    grid.validate();
    const int nt = grid.nt(), nn = grid.nodes();
    const double T = grid.T;
    auto rev = [T](const SpaceTimeFn& f) -> SpaceTimeFn {
        if (!f) return nullptr;
        return [f, T](double t, const Vec& x) { return f(T - t, x); };
    };
    auto q1 = detail::sample_fn(grid, rev(coeffs.q1));
    auto q2 = detail::sample_fn(grid, rev(coeffs.q2));
    auto fs = detail::sample_fn(grid, rev(f0));
    WaveSolution sol = detail::leapfrog_solve(
        grid,
        [&](int it, int i, double u) {
            size_t k = (size_t)it * nn + i;
            double u0v = u0.at(nt - 1 - it, i);
            return -(q1[k] + 2.0 * q2[k] * u0v) * u + fs[k];
        },
        guard);
    STField out(grid);
    for (int it = 0; it < nt; ++it)
        for (int i = 0; i < nn; ++i) out.at(it, i) = sol.u.at(nt - 1 - it, i);
    return out;
}

struct IdentityCheck {
    double lhs = 0.0;       // (d^3 (S - S~) f, f0)
    double rhs = 0.0;       // 2 (q~2 (...), v~0) - 2 (q2 (...), v0)
    double gap = 0.0;       // |lhs - rhs|
    double scale = 0.0;     // max(|lhs|, |rhs|)
};

// Third-order integral identity: left side from FD mixed derivatives of the
// two source-to-solution maps, right side from the linearization chains.
inline IdentityCheck verify_integral_identity(const CoefficientSet& coeffs,
                                              const CoefficientSet& coeffs_t,
                                              const std::vector<SpaceTimeFn>& f,
                                              const SpaceTimeFn& f0, const GridSpec& grid,
                                              double eps = 1e-2, double guard = 10.0) {
    grid.validate();
    if (f.size() != 3) throw PreconditionError("identity: need three sources");

    STField d3 = fd_mixed_derivative(coeffs, f, eps, 3, grid, guard);
    STField d3t = fd_mixed_derivative(coeffs_t, f, eps, 3, grid, guard);
    STField diff(grid);
    for (size_t k = 0; k < diff.a.size(); ++k) diff.a[k] = d3.a[k] - d3t.a[k];

    STField f0g(grid);
    {
        auto fs = detail::sample_fn(grid, f0);
        f0g.a = std::move(fs);
    }
    IdentityCheck out;
    out.lhs = st_inner(diff, f0g);

    auto rhs_side = [&](const CoefficientSet& cs) {
        LinearizedChain ch = solve_linearized_chain(cs, f, grid, guard);
        STField v0 = solve_backward_linear(cs, ch.u0, f0, grid);
        auto q2 = detail::sample_fn(grid, cs.q2);
        STField integrand(grid);
        for (size_t k = 0; k < integrand.a.size(); ++k)
            integrand.a[k] = 2.0 * q2[k] *
                             (ch.v[0].a[k] * ch.w[1][2].a[k] + ch.v[1].a[k] * ch.w[0][2].a[k] +
                              ch.v[2].a[k] * ch.w[0][1].a[k]);
        return st_inner(integrand, v0);
    };
    out.rhs = rhs_side(coeffs_t) - rhs_side(coeffs);
    out.gap = std::abs(out.lhs - out.rhs);
    out.scale = std::max(std::abs(out.lhs), std::abs(out.rhs));
    return out;
}

} // namespace beamlab
