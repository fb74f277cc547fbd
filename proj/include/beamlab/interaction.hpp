#pragma once

// WKB interaction calculus: combined phases of two or three kappa-scaled
// beams, the nondegeneracy reciprocal Psi#, the c_j coefficient recursion for
// pair interactions, and the beta/theta coefficients of triple interactions.
//
// Sign conventions. With box = -g^{ab} d^2_{ab} + Gamma^a d_a and the pairing
// <du,dv> = g^{ab} d_a u d_b v one has
//   (box+Q)(e^{iPsi/h} c) = e^{iPsi/h} [ (box+Q)c + h^{-2}<dPsi,dPsi> c
//                                        + i h^{-1}((box Psi) c - 2<dPsi,dc>) ].
// The coefficients below make e^{iPsi/h} sum c_j h^j solve
//   (box+Q) w = -q e^{iPsi/h} sum b_l h^l + O(h^{2K+1})
// exactly order by order, which fixes
//   c_2 = -q b_0 / <dPsi,dPsi>
//   c_j = (-q b_{j-2} - (box+Q)c_{j-2} - i (box Psi) c_{j-1} + 2i <dPsi,dc_{j-1}>)
//         / <dPsi,dPsi>.
// The minus on the source matches the second linearization of q u^2 terms
// (the effective coupling there is -2 q_2 and is passed in by the caller).

#include "beamlab/beam.hpp"

#include <random>

namespace beamlab {

using ScalarField = std::function<cplx(const Vec&)>;

struct CombinedPhase {
    MetricField metric;
    std::vector<const FormalBeam*> beams;
    Vec p0;
    double box_half = 0.1;    // N0 is the coordinate box |x - p0|_inf <= box_half
    double min_nondeg = 0.0;  // min |<dPsi,dPsi>| over the sample set

    cplx value(const Vec& x) const {
        cplx s = 0.0;
        for (auto* b : beams) s += b->Psi(x);
        return s;
    }
    CVec gradient(const Vec& x) const {
        CVec g = CVec::Zero(metric.dim);
        for (auto* b : beams) g += b->dPsi(x);
        return g;
    }
    CMat hessian(const Vec& x) const {
        CMat H = CMat::Zero(metric.dim, metric.dim);
        for (auto* b : beams) H += b->d2Psi(x);
        return H;
    }

    // Complex-bilinear Lorentzian square <dPsi,dPsi>_g (no conjugation).
    cplx ip_grad(const Vec& x) const {
        CVec g = gradient(x);
        Mat gi = metric_eval(metric, x).g_inv;
        return (g.transpose() * gi.cast<cplx>() * g)(0, 0);
    }
    cplx ip_with(const Vec& x, const CVec& w) const {
        CVec g = gradient(x);
        Mat gi = metric_eval(metric, x).g_inv;
        return (g.transpose() * gi.cast<cplx>() * w)(0, 0);
    }
    cplx box_psi(const Vec& x) const {
        MetricEval me = metric_eval(metric, x);
        Christoffel ch = christoffel(metric, x);
        return wave_operator<cplx>(me.g_inv, ch.contracted, hessian(x), gradient(x));
    }

    bool in_box(const Vec& x) const {
        return ((x - p0).cwiseAbs().maxCoeff() <= box_half + 1e-14);
    }
};

// Sum the given beam phases and verify nondegeneracy of <dPsi,dPsi> over N0
// on a 7^d lattice plus 100 pseudorandom points (fixed seed: deterministic).
inline CombinedPhase combine_phases(const std::vector<const FormalBeam*>& beams,
                                    const MetricField& metric, const Vec& p0,
                                    double delta_p) {
    if (beams.size() < 2 || beams.size() > 3)
        throw PreconditionError("combine_phases: expected two or three beams");
    CombinedPhase cp;
    cp.metric = metric;
    cp.beams = beams;
    cp.p0 = p0;
    cp.box_half = 0.3 * delta_p;

    const int d = metric.dim;
    double minv = std::numeric_limits<double>::infinity();
    Vec argmin = p0;
    auto probe = [&](const Vec& x) {
        double v = std::abs(cp.ip_grad(x));
        if (v < minv) {
            minv = v;
            argmin = x;
        }
    };
    std::vector<int> idx(d, 0);
    Vec x(d);
    while (true) {
        for (int a = 0; a < d; ++a) x[a] = p0[a] + cp.box_half * (idx[a] - 3) / 3.0;
        probe(x);
        int a = 0;
        while (a < d && ++idx[a] == 7) idx[a++] = 0;
        if (a == d) break;
    }
    std::mt19937 rng(20240613);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        for (int a = 0; a < d; ++a) x[a] = p0[a] + cp.box_half * uni(rng);
        probe(x);
    }
    cp.min_nondeg = minv;
    if (minv < 1e-10) {
        std::string msg = "combine_phases: degenerate phase, |<dPsi,dPsi>| = " +
                          std::to_string(minv) + " at (";
        for (int a = 0; a < d; ++a) msg += std::to_string(argmin[a]) + (a + 1 < d ? "," : ")");
        throw NumericError(msg);
    }
    return cp;
}

// Psi# = 1 / <dPsi,dPsi>_g.
inline cplx psi_sharp(const CombinedPhase& cp, const Vec& x) {
    cplx ip = cp.ip_grad(x);
    if (std::abs(ip) < 1e-10) throw NumericError("psi_sharp: degenerate phase at the query point");
    return 1.0 / ip;
}

namespace detail {

// Central-difference gradient of a complex scalar field.
inline CVec fd_gradient(const ScalarField& f, const Vec& x, double step) {
    const int d = (int)x.size();
    CVec g(d);
    for (int a = 0; a < d; ++a) {
        Vec xp = x, xm = x;
        xp[a] += step;
        xm[a] -= step;
        g[a] = (f(xp) - f(xm)) / (2.0 * step);
    }
    return g;
}

} // namespace detail

struct InteractionExpansion {
    CombinedPhase phase;
    ScalarField b0, b1; // source amplitude orders (product of beam amplitudes)
    ScalarField q;      // coupling (e.g. -2 q2; sign folded in by caller)
    ScalarField c2, c3;
    double fd_step = 0.0;
};

// Closed-form first two coefficients; derivatives of c2 are nested central
// differences with step 1e-4 * delta' unless b0 is cheap enough to refine.
inline InteractionExpansion c_coefficients(const CombinedPhase& cp, ScalarField b0, ScalarField b1,
                                           ScalarField q, const std::function<double(const Vec&)>& Q,
                                           double delta_p) {
    InteractionExpansion ex;
    ex.phase = cp;
    ex.b0 = b0;
    ex.b1 = b1;
    ex.q = q;
    ex.fd_step = 1e-4 * delta_p;

    CombinedPhase phase = cp;
    ex.c2 = [phase, b0, q](const Vec& x) -> cplx {
        cplx ip = phase.ip_grad(x);
        if (std::abs(ip) < 1e-10) throw NumericError("c_coefficients: degenerate phase");
        return -q(x) * b0(x) / ip;
    };
    ScalarField c2 = ex.c2;
    double fdh = ex.fd_step;
    ex.c3 = [phase, c2, b1, q, Q, fdh](const Vec& x) -> cplx {
        cplx ip = phase.ip_grad(x);
        if (std::abs(ip) < 1e-10) throw NumericError("c_coefficients: degenerate phase");
        CVec dc2 = detail::fd_gradient(c2, x, fdh);
        cplx cross = phase.ip_with(x, dc2);
        return (-q(x) * b1(x) - I_UNIT * phase.box_psi(x) * c2(x) + 2.0 * I_UNIT * cross) / ip;
    };
    (void)Q; // Q first enters at c4
    return ex;
}

// Uniform tensor grid over N0 used by the general recursion.
struct GridField {
    Vec lo, hi;
    int m = 0; // nodes per axis
    int d = 0;
    std::vector<cplx> v;

    long size() const {
        long t = 1;
        for (int a = 0; a < d; ++a) t *= m;
        return t;
    }
    double step(int a) const { return (hi[a] - lo[a]) / (m - 1); }
    Vec node(long flat) const {
        Vec x(d);
        for (int a = 0; a < d; ++a) {
            x[a] = lo[a] + (flat % m) * step(a);
            flat /= m;
        }
        return x;
    }
    long stride(int a) const {
        long s = 1;
        for (int i = 0; i < a; ++i) s *= m;
        return s;
    }
    bool interior(long flat, int margin) const {
        for (int a = 0; a < d; ++a) {
            int ia = (int)(flat % m);
            flat /= m;
            if (ia < margin || ia >= m - margin) return false;
        }
        return true;
    }
};

// c_2 .. c_{2K+2} on a grid via the recursion (see header comment). Boundary
// nodes hold clamped-difference values and are outside the accuracy contract;
// every recursion level widens the polluted rim by one cell.
inline std::vector<GridField> c_recursion(const CombinedPhase& cp,
                                          const std::vector<ScalarField>& b, int K, ScalarField q,
                                          const std::function<double(const Vec&)>& Q, int m) {
    if (K < 0 || K > 3) throw PreconditionError("c_recursion: K must be in 0..3 (FD noise grows fast)");
    if ((int)b.size() < 2 * K + 1) throw PreconditionError("c_recursion: need b_0..b_{2K}");
    if (m < 7) throw PreconditionError("c_recursion: grid too coarse");

    const int d = cp.metric.dim;
    GridField proto;
    proto.lo = cp.p0.array() - cp.box_half;
    proto.hi = cp.p0.array() + cp.box_half;
    proto.m = m;
    proto.d = d;
    proto.v.assign(proto.size(), cplx(0.0));

    const long N = proto.size();
    // Per-node geometric data.
    std::vector<cplx> ip(N), boxpsi(N), qv(N);
    std::vector<double> Qv(N);
    std::vector<CVec> grad(N);
    std::vector<Mat> ginv(N);
    std::vector<Vec> gam(N);
    for (long f = 0; f < N; ++f) {
        Vec x = proto.node(f);
        ip[f] = cp.ip_grad(x);
        if (std::abs(ip[f]) < 1e-10) throw NumericError("c_recursion: degenerate phase on the grid");
        boxpsi[f] = cp.box_psi(x);
        qv[f] = q(x);
        Qv[f] = Q(x);
        grad[f] = cp.gradient(x);
        MetricEval me = metric_eval(cp.metric, x);
        ginv[f] = me.g_inv;
        gam[f] = christoffel(cp.metric, x).contracted;
    }

    auto fd1 = [&](const GridField& gfield, long f, int a) -> cplx {
        long s = gfield.stride(a);
        long ia = (f / s) % m;
        if (ia == 0) return (gfield.v[f + s] - gfield.v[f]) / gfield.step(a);
        if (ia == m - 1) return (gfield.v[f] - gfield.v[f - s]) / gfield.step(a);
        return (gfield.v[f + s] - gfield.v[f - s]) / (2.0 * gfield.step(a));
    };
    auto fd2 = [&](const GridField& gfield, long f, int a, int bax) -> cplx {
        long sa = gfield.stride(a), sb = gfield.stride(bax);
        long ia = (f / sa) % m, ib = (f / sb) % m;
        if (a == bax) {
            if (ia == 0 || ia == m - 1) return 0.0; // clamped; outside contract
            return (gfield.v[f + sa] - 2.0 * gfield.v[f] + gfield.v[f - sa]) /
                   (gfield.step(a) * gfield.step(a));
        }
        if (ia == 0 || ia == m - 1 || ib == 0 || ib == m - 1) return 0.0;
        return (gfield.v[f + sa + sb] - gfield.v[f + sa - sb] - gfield.v[f - sa + sb] +
                gfield.v[f - sa - sb]) /
               (4.0 * gfield.step(a) * gfield.step(bax));
    };

    std::vector<GridField> out; // index j-2 holds c_j
    for (int j = 2; j <= 2 * K + 2; ++j) {
        GridField cj = proto;
        const GridField* cm1 = (j - 1 >= 2) ? &out[j - 3] : nullptr;
        const GridField* cm2 = (j - 2 >= 2) ? &out[j - 4] : nullptr;
        for (long f = 0; f < N; ++f) {
            Vec x = cj.node(f);
            cplx rhs = -qv[f] * b[j - 2](x);
            if (cm2) {
                CVec g1(d);
                CMat h2(d, d);
                for (int a = 0; a < d; ++a) {
                    g1[a] = fd1(*cm2, f, a);
                    for (int bx = a; bx < d; ++bx) h2(a, bx) = h2(bx, a) = fd2(*cm2, f, a, bx);
                }
                cplx boxc = wave_operator<cplx>(ginv[f], gam[f], h2, g1);
                rhs -= boxc + Qv[f] * cm2->v[f];
            }
            if (cm1) {
                CVec g1(d);
                for (int a = 0; a < d; ++a) g1[a] = fd1(*cm1, f, a);
                cplx cross = (grad[f].transpose() * ginv[f].cast<cplx>() * g1)(0, 0);
                rhs += -I_UNIT * boxpsi[f] * cm1->v[f] + 2.0 * I_UNIT * cross;
            }
            cj.v[f] = rhs / ip[f];
        }
        out.push_back(std::move(cj));
    }
    return out;
}

struct TripleExpansion {
    CombinedPhase phase;
    ScalarField beta2, beta3;
    ScalarField theta4, theta5;
};

// beta_2 = a^(i) a^(jk) + a^(j) a^(ik) + a^(k) a^(ij); theta_4/theta_5 by the
// same recursion pattern as c_2/c_3 with theta_2 = theta_3 = 0.
inline TripleExpansion beta_theta(const CombinedPhase& triple,
                                  const std::array<ScalarField, 3>& a_single,
                                  const std::array<ScalarField, 3>& a_pair_opposite,
                                  ScalarField beta3, ScalarField q,
                                  const std::function<double(const Vec&)>& Q, double delta_p) {
    TripleExpansion te;
    te.phase = triple;
    te.beta2 = [a_single, a_pair_opposite](const Vec& x) {
        return a_single[0](x) * a_pair_opposite[0](x) + a_single[1](x) * a_pair_opposite[1](x) +
               a_single[2](x) * a_pair_opposite[2](x);
    };
    te.beta3 = beta3 ? beta3 : [](const Vec&) { return cplx(0.0); };

    CombinedPhase phase = triple;
    ScalarField beta2 = te.beta2;
    te.theta4 = [phase, beta2, q](const Vec& x) -> cplx {
        cplx ip = phase.ip_grad(x);
        if (std::abs(ip) < 1e-10) throw NumericError("beta_theta: degenerate triple phase");
        return -q(x) * beta2(x) / ip;
    };
    ScalarField theta4 = te.theta4;
    ScalarField b3 = te.beta3;
    double fdh = 1e-4 * delta_p;
    te.theta5 = [phase, theta4, b3, q, fdh](const Vec& x) -> cplx {
        cplx ip = phase.ip_grad(x);
        if (std::abs(ip) < 1e-10) throw NumericError("beta_theta: degenerate triple phase");
        CVec dt4 = detail::fd_gradient(theta4, x, fdh);
        cplx cross = phase.ip_with(x, dt4);
        return (-q(x) * b3(x) - I_UNIT * phase.box_psi(x) * theta4(x) + 2.0 * I_UNIT * cross) / ip;
    };
    (void)Q;
    return te;
}

// Discrete L2 norm of (box+Q) w_hat - F over N0 on a uniform grid, where
// w_hat = e^{iPsi/h}(h^2 c2 + h^3 c3) and F = -q e^{iPsi/h}(b0 + h b1).
// Expected decay: O(h^2) relative to ||F|| for the (c2, c3) truncation.
struct InteractionResidual {
    double residual = 0.0; // || (box+Q) w_hat - F ||_{L2(N0)}
    double source = 0.0;   // || F ||_{L2(N0)}
    double relative() const { return residual / std::max(source, 1e-300); }
};

inline InteractionResidual interaction_residual(const InteractionExpansion& ex,
                                                const std::function<double(const Vec&)>& Q,
                                                double h, int m) {
    if (m < 9) throw PreconditionError("interaction_residual: grid too coarse");
    const CombinedPhase& cp = ex.phase;
    const int d = cp.metric.dim;

    // Complex amplitude of w_hat without the oscillatory factor.
    auto amp = [&ex, h](const Vec& x) { return h * h * ex.c2(x) + h * h * h * ex.c3(x); };
    double fdh = std::min(0.25 * cp.box_half / m, 1e-3);

    GridField grid;
    grid.lo = cp.p0.array() - cp.box_half;
    grid.hi = cp.p0.array() + cp.box_half;
    grid.m = m;
    grid.d = d;
    grid.v.assign(grid.size(), cplx(0.0));

    double cell = 1.0;
    for (int a = 0; a < d; ++a) cell *= grid.step(a);

    double sum_r = 0.0, sum_f = 0.0;
    const long N = grid.size();
    for (long f = 0; f < N; ++f) {
        Vec x = grid.node(f);
        if (!grid.interior(f, 1)) continue;
        MetricEval me = metric_eval(cp.metric, x);
        Christoffel ch = christoffel(cp.metric, x);

        cplx a0 = amp(x);
        CVec da(d);
        CMat d2a(d, d);
        for (int a = 0; a < d; ++a) {
            Vec xp = x, xm = x;
            xp[a] += fdh;
            xm[a] -= fdh;
            cplx fp = amp(xp), fm = amp(xm);
            da[a] = (fp - fm) / (2.0 * fdh);
            d2a(a, a) = (fp - 2.0 * a0 + fm) / (fdh * fdh);
        }
        for (int a = 0; a < d; ++a)
            for (int bx = a + 1; bx < d; ++bx) {
                Vec xpp = x, xpm = x, xmp = x, xmm = x;
                xpp[a] += fdh; xpp[bx] += fdh;
                xpm[a] += fdh; xpm[bx] -= fdh;
                xmp[a] -= fdh; xmp[bx] += fdh;
                xmm[a] -= fdh; xmm[bx] -= fdh;
                d2a(a, bx) = d2a(bx, a) =
                    (amp(xpp) - amp(xpm) - amp(xmp) + amp(xmm)) / (4.0 * fdh * fdh);
            }

        CVec dpsi = cp.gradient(x);
        cplx box_a = wave_operator<cplx>(me.g_inv, ch.contracted, d2a, da);
        cplx eik = cp.ip_grad(x);
        cplx box_psi = cp.box_psi(x);
        cplx cross = (dpsi.transpose() * me.g_inv.cast<cplx>() * da)(0, 0);

        cplx bracket = box_a + Q(x) * a0 + eik * a0 / (h * h) +
                       I_UNIT / h * (box_psi * a0 - 2.0 * cross);
        cplx Famp = -ex.q(x) * (ex.b0(x) + h * ex.b1(x));
        cplx osc = std::exp(I_UNIT * cp.value(x) / h);
        sum_r += std::norm(osc * (bracket - Famp));
        sum_f += std::norm(osc * Famp);
    }
    InteractionResidual out;
    out.residual = std::sqrt(sum_r * cell);
    out.source = std::sqrt(sum_f * cell);
    return out;
}

} // namespace beamlab
