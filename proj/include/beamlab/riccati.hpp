#pragma once

// Matrix Riccati phase equation dH/ds + HCH + D = 0 with C = diag(0,2,..,2),
// solved through the linear system Y' = CZ, Z' = -DY, H = Z Y^{-1}, plus the
// amplitude transport solutions a00 = (det Y)^{-1/2} (continuous branch) and
// the two parts of a10.

#include "beamlab/fermi.hpp"

namespace beamlab {

struct RiccatiSolution {
    int n = 0;
    double s0 = 0.0, s_a = 0.0, s_b = 0.0;
    CMat H0;
    std::function<CMat(double)> D; // driver, kept for residual checks
    OdeSamples<CVec> fwd, bwd;     // stacked state: vec(Y) | vec(Z)

    CMat Y(double s) const { return unpack(s, 0); }
    CMat Z(double s) const { return unpack(s, 1); }
    CMat H(double s) const { return Z(s) * Y(s).partialPivLu().inverse(); }

    cplx detY(double s) const { return Y(s).determinant(); }

private:
    CMat unpack(double s, int block) const {
        const auto& side = (s >= s0) ? fwd : bwd;
        CVec y = side.eval(s);
        CMat M(n, n);
        for (int c = 0; c < n; ++c) M.col(c) = y.segment(block * n * n + c * n, n);
        return M;
    }
};

// D as a callable; the chart-based overload below derives it from the
// pulled-back metric.
inline RiccatiSolution solve_riccati(std::function<CMat(double)> D, int n, const CMat& H0,
                                     double s_a, double s_b, double s0, double tol = 1e-10) {
    if (s0 < s_a || s0 > s_b) throw PreconditionError("riccati: s0 outside [s_a, s_b]");
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (H0 - H0.adjoint()) / cplx(0, 1));
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw PreconditionError("riccati: Im H0 must be positive definite");

    Vec cdiag = 2.0 * Vec::Ones(n);
    cdiag[0] = 0.0;

    auto rhs = [D, n, cdiag](double s, const CVec& y) {
        CMat Ym(n, n), Zm(n, n);
        for (int c = 0; c < n; ++c) {
            Ym.col(c) = y.segment(c * n, n);
            Zm.col(c) = y.segment(n * n + c * n, n);
        }
        CMat dY = cdiag.asDiagonal() * Zm;
        CMat dZ = -D(s) * Ym;
        CVec out(2 * n * n);
        for (int c = 0; c < n; ++c) {
            out.segment(c * n, n) = dY.col(c);
            out.segment(n * n + c * n, n) = dZ.col(c);
        }
        return out;
    };

    CVec y0(2 * n * n);
    CMat Id = CMat::Identity(n, n);
    for (int c = 0; c < n; ++c) {
        y0.segment(c * n, n) = Id.col(c);
        y0.segment(n * n + c * n, n) = H0.col(c);
    }

    RiccatiSolution sol;
    sol.n = n;
    sol.s0 = s0;
    sol.s_a = s_a;
    sol.s_b = s_b;
    sol.H0 = H0;
    sol.D = D;
    sol.fwd = rk45_integrate<CVec>(rhs, s0, s_b, y0, tol, tol * 1e-2);
    sol.bwd = (s_a < s0) ? rk45_integrate<CVec>(rhs, s0, s_a, y0, tol, tol * 1e-2) : sol.fwd;

    // Positivity of Im H along the computed samples.
    for (const auto* side : {&sol.fwd, &sol.bwd})
        for (double s : side->t) {
            CMat Hs = sol.H(s);
            Eigen::SelfAdjointEigenSolver<CMat> ev(0.5 * (Hs - Hs.adjoint()) / cplx(0, 1));
            if (ev.eigenvalues().minCoeff() <= 0.0)
                throw NumericError("riccati: Im H lost positivity along the interval");
        }
    return sol;
}

// Chart-based driver: D_ij(s) = d^2_ij g^11 in the Fermi chart, sampled on a
// uniform grid and Hermite-interpolated (each sample needs FD second
// derivatives of the pulled-back metric, which is expensive off flat space).
inline RiccatiSolution solve_riccati(const FermiChart& chart, const CMat& H0, double s_a,
                                     double s_b, double s0, double tol = 1e-10,
                                     int d_samples = 33) {
    const int n = chart.n();
    std::function<CMat(double)> D;
    if (chart.flat) {
        D = [n](double) { return CMat::Zero(n, n); };
    } else {
        auto tbl = std::make_shared<std::vector<std::pair<double, Mat>>>();
        for (int i = 0; i < d_samples; ++i) {
            double s = s_a + (s_b - s_a) * i / (d_samples - 1);
            tbl->push_back({s, chart.riccati_D(s)});
        }
        D = [tbl, n](double s) -> CMat {
            const auto& t = *tbl;
            if (s <= t.front().first) return t.front().second.cast<cplx>();
            if (s >= t.back().first) return t.back().second.cast<cplx>();
            size_t i = 0;
            while (i + 2 < t.size() && t[i + 1].first < s) ++i;
            double u = (s - t[i].first) / (t[i + 1].first - t[i].first);
            Mat M = (1 - u) * t[i].second + u * t[i + 1].second;
            return M.cast<cplx>();
        };
    }
    return solve_riccati(D, n, H0, s_a, s_b, s0, tol);
}

// Riccati residual ||dH/ds + HCH + D|| at s, via FD differentiation of H.
inline double riccati_residual(const RiccatiSolution& sol, double s, double fdh = 1e-6) {
    s = std::clamp(s, sol.s_a + fdh, sol.s_b - fdh); // keep the FD stencil inside
    CMat dH = (sol.H(s + fdh) - sol.H(s - fdh)) / (2.0 * fdh);
    Vec cdiag = 2.0 * Vec::Ones(sol.n);
    cdiag[0] = 0.0;
    CMat Hs = sol.H(s);
    return (dH + Hs * cdiag.asDiagonal() * Hs + sol.D(s)).norm();
}

// Continuous-branch helper: log det Y tracked along s from log 1 = 0 at s0.
struct DetBranch {
    std::vector<double> s;
    std::vector<double> logabs;
    std::vector<double> arg; // unwrapped

    cplx log_detY(double si) const {
        if (si <= s.front()) return {logabs.front(), arg.front()};
        if (si >= s.back()) return {logabs.back(), arg.back()};
        auto it = std::upper_bound(s.begin(), s.end(), si);
        size_t i = (size_t)(it - s.begin()) - 1;
        double u = (si - s[i]) / (s[i + 1] - s[i]);
        return {(1 - u) * logabs[i] + u * logabs[i + 1], (1 - u) * arg[i] + u * arg[i + 1]};
    }
    // (det Y)^p with the tracked branch, p = -1/2 for a00.
    cplx detY_pow(double si, double p) const { return std::exp(p * log_detY(si)); }
};

inline DetBranch track_det_branch(const RiccatiSolution& sol, int samples = 801) {
    DetBranch br;
    br.s.resize(samples);
    br.logabs.resize(samples);
    br.arg.resize(samples);
    // march outward from s0 in both directions so the branch starts at +1
    std::vector<double> ss(samples);
    for (int i = 0; i < samples; ++i)
        ss[i] = sol.s_a + (sol.s_b - sol.s_a) * i / (samples - 1);
    int i0 = 0;
    for (int i = 1; i < samples; ++i)
        if (std::abs(ss[i] - sol.s0) < std::abs(ss[i0] - sol.s0)) i0 = i;
    ss[i0] = sol.s0;
    std::vector<cplx> det(samples);
    for (int i = 0; i < samples; ++i) det[i] = sol.detY(ss[i]);
    std::vector<double> ph(samples);
    ph[i0] = std::arg(det[i0]);
    for (int i = i0 + 1; i < samples; ++i) {
        if (std::abs(det[i]) < 1e-12) throw NumericError("riccati: det Y winds through 0, branch tracking failed");
        ph[i] = ph[i - 1] + std::arg(det[i] / det[i - 1]);
    }
    for (int i = i0 - 1; i >= 0; --i) {
        if (std::abs(det[i]) < 1e-12) throw NumericError("riccati: det Y winds through 0, branch tracking failed");
        ph[i] = ph[i + 1] + std::arg(det[i] / det[i + 1]);
    }
    for (int i = 0; i < samples; ++i) {
        br.s[i] = ss[i];
        br.logabs[i] = std::log(std::abs(det[i]));
        br.arg[i] = ph[i];
    }
    return br;
}

// a00(s) = (det Y(s))^{-1/2}, continuous branch equal to +1 at s0.
struct LeadingAmplitude {
    DetBranch branch;
    cplx operator()(double s) const { return branch.detY_pow(s, -0.5); }
};

inline LeadingAmplitude leading_amplitude(const RiccatiSolution& sol) {
    return LeadingAmplitude{track_det_branch(sol)};
}

// a10 = a_sharp + a_flat with
//   a_sharp(s) = 1/2 (det Y(s))^{-1/2} int_{s0}^{s} box_a0(t) (det Y(t))^{1/2} dt
//   a_flat(s)  = 1/2 (det Y(s))^{-1/2} int_{s0}^{s} Q(t) dt
// where box_a0 is the wave operator applied to the constant-in-z' extension
// of a00, evaluated on the axis.
struct SubleadingAmplitude {
    std::vector<double> s;
    std::vector<cplx> sharp, flat;

    cplx interp(const std::vector<cplx>& v, double si) const {
        if (si <= s.front()) return v.front();
        if (si >= s.back()) return v.back();
        auto it = std::upper_bound(s.begin(), s.end(), si);
        size_t i = (size_t)(it - s.begin()) - 1;
        double u = (si - s[i]) / (s[i + 1] - s[i]);
        return (1.0 - u) * v[i] + u * v[i + 1];
    }
    cplx a_sharp(double si) const { return interp(sharp, si); }
    cplx a_flat(double si) const { return interp(flat, si); }
    cplx a1(double si) const { return a_sharp(si) + a_flat(si); }
};

inline SubleadingAmplitude subleading_amplitude(const RiccatiSolution& sol,
                                                const std::function<cplx(double)>& box_a0_on_axis,
                                                const std::function<cplx(double)>& Q_on_axis,
                                                int samples = 801) {
    DetBranch br = track_det_branch(sol, samples);
    SubleadingAmplitude out;
    out.s.resize(samples);
    out.sharp.resize(samples);
    out.flat.resize(samples);
    for (int i = 0; i < samples; ++i)
        out.s[i] = sol.s_a + (sol.s_b - sol.s_a) * i / (samples - 1);

    // cumulative trapezoid from s0 in both directions
    int i0 = 0;
    for (int i = 1; i < samples; ++i)
        if (std::abs(out.s[i] - sol.s0) < std::abs(out.s[i0] - sol.s0)) i0 = i;
    out.s[i0] = sol.s0;

    std::vector<cplx> f_sharp(samples), f_flat(samples);
    for (int i = 0; i < samples; ++i) {
        f_sharp[i] = box_a0_on_axis(out.s[i]) * br.detY_pow(out.s[i], 0.5);
        f_flat[i] = Q_on_axis(out.s[i]);
    }
    std::vector<cplx> Fs(samples, 0.0), Ff(samples, 0.0);
    for (int i = i0 + 1; i < samples; ++i) {
        double ds = out.s[i] - out.s[i - 1];
        Fs[i] = Fs[i - 1] + 0.5 * ds * (f_sharp[i] + f_sharp[i - 1]);
        Ff[i] = Ff[i - 1] + 0.5 * ds * (f_flat[i] + f_flat[i - 1]);
    }
    for (int i = i0 - 1; i >= 0; --i) {
        double ds = out.s[i] - out.s[i + 1];
        Fs[i] = Fs[i + 1] + 0.5 * ds * (f_sharp[i] + f_sharp[i + 1]);
        Ff[i] = Ff[i + 1] + 0.5 * ds * (f_flat[i] + f_flat[i + 1]);
    }
    for (int i = 0; i < samples; ++i) {
        cplx pref = 0.5 * br.detY_pow(out.s[i], -0.5);
        out.sharp[i] = pref * Fs[i];
        out.flat[i] = pref * Ff[i];
    }
    return out;
}

} // namespace beamlab
