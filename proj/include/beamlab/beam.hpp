#pragma once

// Formal Gaussian beams: quadratic beam phase Phi = z1 + H_ij z^i z^j over a
// Fermi chart, amplitudes a0/a1 with smooth tube cutoff, kappa-rescaling with
// optional conjugation, and the residual norm of (box + Q) applied to the beam.

#include "beamlab/riccati.hpp"

namespace beamlab {

// Smooth profile: 1 on [0, 1/4], 0 on [1/2, inf).
inline double cutoff_profile(double r) {
    if (r <= 0.25) return 1.0;
    if (r >= 0.5) return 0.0;
    double t = (r - 0.25) / 0.25; // in (0,1)
    double a = std::exp(-1.0 / (1.0 - t));
    double b = std::exp(-1.0 / t);
    return a / (a + b);
}

struct BeamPhase {
    FermiChart chart;
    std::shared_ptr<RiccatiSolution> riccati;

    // Flat fast path: chart coordinates are affine in x.
    bool flat = false;
    Vec base;   // gamma(s0_chart = 0)
    Vec srow;   // s(x)  = srow . (x - base)
    Mat zrows;  // z'(x) = zrows (x - base), n rows

    int dim() const { return chart.dim(); }
    int n() const { return chart.n(); }

    Vec chart_coords(const Vec& x) const {
        if (flat) {
            Vec dx = x - base;
            Vec z(dim());
            z[0] = srow.dot(dx);
            z.tail(n()) = zrows * dx;
            return z;
        }
        return chart.inverse(x);
    }

    cplx value_z(const Vec& z) const {
        CMat H = riccati->H(z[0]);
        Vec zp = z.tail(n());
        return cplx(z[1], 0.0) + (zp.cast<cplx>().transpose() * H * zp.cast<cplx>())(0, 0);
    }

    cplx value(const Vec& x) const { return value_z(chart_coords(x)); }

    // Coordinate gradient (covector) and Hessian of Phi in ambient coordinates.
    CVec gradient(const Vec& x) const {
        if (flat) {
            Vec z = chart_coords(x);
            CVec gz = grad_in_chart(z);
            CVec g = gz[0] * srow.cast<cplx>();
            for (int k = 0; k < n(); ++k) g += gz[k + 1] * zrows.row(k).transpose().cast<cplx>();
            return g;
        }
        const double fdh = 1e-6;
        CVec g(dim());
        for (int a = 0; a < dim(); ++a) {
            Vec xp = x, xm = x;
            xp[a] += fdh;
            xm[a] -= fdh;
            g[a] = (value(xp) - value(xm)) / (2.0 * fdh);
        }
        return g;
    }

    CMat hessian(const Vec& x) const {
        if (flat) {
            Vec z = chart_coords(x);
            CMat Hz = hess_in_chart(z);
            // J maps dx -> dz: row 0 = srow, rows 1..n = zrows.
            Mat J(dim(), dim());
            J.row(0) = srow.transpose();
            J.bottomRows(n()) = zrows;
            return J.transpose().cast<cplx>() * Hz * J.cast<cplx>();
        }
        const double fdh = 1e-4;
        CMat Hs(dim(), dim());
        for (int a = 0; a < dim(); ++a)
            for (int b = a; b < dim(); ++b) {
                Vec xpp = x, xpm = x, xmp = x, xmm = x;
                xpp[a] += fdh; xpp[b] += fdh;
                xpm[a] += fdh; xpm[b] -= fdh;
                xmp[a] -= fdh; xmp[b] += fdh;
                xmm[a] -= fdh; xmm[b] -= fdh;
                Hs(a, b) = Hs(b, a) =
                    (value(xpp) - value(xpm) - value(xmp) + value(xmm)) / (4.0 * fdh * fdh);
            }
        return Hs;
    }

private:
    // dH/ds = -(HCH + D).
    CMat Hprime(double s) const {
        Vec cdiag = 2.0 * Vec::Ones(n());
        cdiag[0] = 0.0;
        CMat H = riccati->H(s);
        return -(H * cdiag.asDiagonal() * H + riccati->D(s));
    }

    CVec grad_in_chart(const Vec& z) const {
        double s = z[0];
        Vec zp = z.tail(n());
        CMat H = riccati->H(s);
        CVec g(dim());
        g[0] = (zp.cast<cplx>().transpose() * Hprime(s) * zp.cast<cplx>())(0, 0);
        CVec tz = 2.0 * (H * zp.cast<cplx>());
        for (int k = 0; k < n(); ++k) g[k + 1] = tz[k];
        g[1] += 1.0;
        return g;
    }

    CMat hess_in_chart(const Vec& z) const {
        double s = z[0];
        Vec zp = z.tail(n());
        CMat H = riccati->H(s);
        CMat Hp = Hprime(s);
        // H'' by FD of H' (D' is not available analytically in general).
        const double fdh = 1e-5;
        CMat Hpp = (Hprime(s + fdh) - Hprime(s - fdh)) / (2.0 * fdh);
        CMat out = CMat::Zero(dim(), dim());
        out(0, 0) = (zp.cast<cplx>().transpose() * Hpp * zp.cast<cplx>())(0, 0);
        CVec cross = 2.0 * (Hp * zp.cast<cplx>());
        for (int k = 0; k < n(); ++k) {
            out(0, k + 1) = out(k + 1, 0) = cross[k];
            for (int l = 0; l < n(); ++l) out(k + 1, l + 1) = 2.0 * H(k, l);
        }
        return out;
    }
};

inline BeamPhase make_beam_phase(const FermiChart& chart,
                                 std::shared_ptr<RiccatiSolution> riccati) {
    BeamPhase ph;
    ph.chart = chart;
    ph.riccati = std::move(riccati);
    ph.flat = chart.flat;
    if (ph.flat) {
        const int d = chart.dim();
        ph.base = chart.geo->x(0.0);
        Mat E = chart.frame.at(0.0);
        Mat g = chart.metric.g(ph.base);
        ph.srow = -0.5 * (g * E.col(1));
        ph.zrows = Mat(d - 1, d);
        ph.zrows.row(0) = (g * E.col(0)).transpose();
        for (int k = 2; k < d; ++k) ph.zrows.row(k - 1) = (g * E.col(k)).transpose();
    }
    return ph;
}

struct BeamAmplitude {
    LeadingAmplitude a0;
    SubleadingAmplitude a1;
    int K = 1;           // 0: a0 only; 1: a0 + (h/|kappa|) a1
    double delta = 0.5;  // tube cutoff radius
};

struct FormalBeam {
    BeamPhase phase;
    BeamAmplitude amplitude;
    double h = 0.01;
    double kappa = 1.0;
    bool conjugate = false;

    // Psi = kappa * Phi, with Phi conjugated when the flag is set.
    cplx Psi(const Vec& x) const {
        cplx p = phase.value(x);
        return kappa * (conjugate ? std::conj(p) : p);
    }
    CVec dPsi(const Vec& x) const {
        CVec g = phase.gradient(x);
        return kappa * (conjugate ? g.conjugate() : g);
    }
    CMat d2Psi(const Vec& x) const {
        CMat H = phase.hessian(x);
        return kappa * (conjugate ? H.conjugate() : H);
    }

    // Amplitude a = (a0 + (h/|kappa|) a1) chi(|z'|/delta), conjugated with Psi.
    cplx amplitude_at(const Vec& x, int order_cap = -1) const {
        Vec z = phase.chart_coords(x);
        int K = (order_cap >= 0) ? order_cap : amplitude.K;
        cplx a = amplitude.a0(z[0]);
        if (K >= 1) a += (h / std::abs(kappa)) * amplitude.a1.a1(z[0]);
        a *= cutoff_profile(z.tail(phase.n()).norm() / amplitude.delta);
        return conjugate ? std::conj(a) : a;
    }
    // Leading (a0 chi) and subleading (a1 chi) pieces separately, conjugated.
    cplx a0_at(const Vec& x) const {
        Vec z = phase.chart_coords(x);
        cplx a = amplitude.a0(z[0]) * cutoff_profile(z.tail(phase.n()).norm() / amplitude.delta);
        return conjugate ? std::conj(a) : a;
    }
    cplx a1_at(const Vec& x) const {
        Vec z = phase.chart_coords(x);
        cplx a = amplitude.a1.a1(z[0]) * cutoff_profile(z.tail(phase.n()).norm() / amplitude.delta);
        return conjugate ? std::conj(a) : a;
    }

    cplx value(const Vec& x) const {
        return std::exp(I_UNIT * Psi(x) / h) * amplitude_at(x);
    }
};

inline FormalBeam assemble_formal_beam(const BeamPhase& phase, const BeamAmplitude& amplitude,
                                       double h, double kappa, bool conjugate) {
    if (kappa == 0.0) throw PreconditionError("beam: kappa must be nonzero");
    if (!(h > 0.0 && h < 1.0)) throw PreconditionError("beam: h must lie in (0,1)");
    FormalBeam b;
    b.phase = phase;
    b.amplitude = amplitude;
    b.h = h;
    b.kappa = kappa;
    b.conjugate = conjugate;
    return b;
}

// (box_g + Q) v for v = e^{i Psi/h} a via the expansion
//   e^{iPsi/h} [ (box+Q) a + h^{-2} <dPsi,dPsi>_g a - i h^{-1} (2<dPsi,da>_g - (box Psi) a) ].
// All derivatives of the amplitude are FD in ambient coordinates.
struct BeamResidualTerms {
    cplx total;       // the bracket above times e^{iPsi/h}
    cplx eikonal;     // <dPsi,dPsi>_g at x
};

inline BeamResidualTerms beam_residual_at(const FormalBeam& beam,
                                          const std::function<double(const Vec&)>& Q,
                                          const Vec& x, double fdh = 1e-4) {
    const MetricField& metric = beam.phase.chart.metric;
    const int d = metric.dim;
    MetricEval me = metric_eval(metric, x);
    Christoffel ch = christoffel(metric, x);

    auto amp = [&beam](const Vec& y) { return beam.amplitude_at(y); };
    CVec da(d);
    CMat d2a(d, d);
    cplx a0 = amp(x);
    for (int a = 0; a < d; ++a) {
        Vec xp = x, xm = x;
        xp[a] += fdh;
        xm[a] -= fdh;
        cplx fp = amp(xp), fm = amp(xm);
        da[a] = (fp - fm) / (2.0 * fdh);
        d2a(a, a) = (fp - 2.0 * a0 + fm) / (fdh * fdh);
    }
    for (int a = 0; a < d; ++a)
        for (int b = a + 1; b < d; ++b) {
            Vec xpp = x, xpm = x, xmp = x, xmm = x;
            xpp[a] += fdh; xpp[b] += fdh;
            xpm[a] += fdh; xpm[b] -= fdh;
            xmp[a] -= fdh; xmp[b] += fdh;
            xmm[a] -= fdh; xmm[b] -= fdh;
            d2a(a, b) = d2a(b, a) = (amp(xpp) - amp(xpm) - amp(xmp) + amp(xmm)) / (4.0 * fdh * fdh);
        }

    CVec dpsi = beam.dPsi(x);
    CMat d2psi = beam.d2Psi(x);

    auto ip = [&me, d](const CVec& u, const CVec& v) {
        cplx s{};
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) s += me.g_inv(a, b) * u[a] * v[b];
        return s;
    };

    cplx box_a = wave_operator<cplx>(me.g_inv, ch.contracted, d2a, da);
    cplx box_psi = wave_operator<cplx>(me.g_inv, ch.contracted, d2psi, dpsi);
    cplx eik = ip(dpsi, dpsi);
    cplx transport = 2.0 * ip(dpsi, da) - box_psi * a0;

    cplx bracket = (box_a + Q(x) * a0) + eik * a0 / (beam.h * beam.h) -
                   I_UNIT / beam.h * transport;
    BeamResidualTerms out;
    out.total = std::exp(I_UNIT * beam.Psi(x) / beam.h) * bracket;
    out.eikonal = eik;
    return out;
}

struct BeamResidualNorm {
    double value = 0.0;   // discrete H^k norm
    double sup_beam = 0.0; // L-inf of the beam itself over the grid
};

// Discrete H^k (k in {0,1}) norm of (box+Q)v over a chart-aligned grid
// covering the cutoff support.
inline BeamResidualNorm beam_residual_norm(const FormalBeam& beam,
                                           const std::function<double(const Vec&)>& Q,
                                           int k, int ns = 41, int nt = 25) {
    if (k != 0 && k != 1) throw PreconditionError("beam_residual_norm: k must be 0 or 1");
    const int n = beam.phase.n();
    const double half = 0.5 * beam.amplitude.delta;
    double sqh = std::sqrt(beam.h);
    int needed = (int)std::ceil(6.0 * (2.0 * half) / sqh);
    if (nt < needed)
        throw ConfigError("beam_residual_norm: grid too coarse for the h-width, need nt >= " +
                          std::to_string(needed));

    const RiccatiSolution& ric = *beam.phase.riccati;
    double sa = ric.s_a, sb = ric.s_b;
    double ds = (sb - sa) / (ns - 1);
    double dz = 2.0 * half / (nt - 1);

    // Jacobian volume factor of the chart map (flat charts: constant).
    double vol = 1.0;
    if (beam.phase.flat) {
        Mat E = beam.phase.chart.frame.at(0.0);
        vol = std::abs(E.determinant());
    }

    double sum2 = 0.0, sumd2 = 0.0;
    double sup = 0.0;
    long total = 1;
    for (int i = 0; i < n; ++i) total *= nt;
    std::vector<cplx> cur(total), prev(total);
    for (int is = 0; is < ns; ++is) {
        double s = sa + is * ds;
        for (long fl = 0; fl < total; ++fl) {
            long r = fl;
            Vec z(beam.phase.dim());
            z[0] = s;
            for (int i = 0; i < n; ++i) {
                z[i + 1] = -half + (r % nt) * dz;
                r /= nt;
            }
            Vec x = beam.phase.chart.forward(z);
            cplx rv = beam_residual_at(beam, Q, x).total;
            cur[fl] = rv;
            sum2 += std::norm(rv);
            sup = std::max(sup, std::abs(beam.value(x)));
        }
        if (k == 1 && is > 0)
            for (long fl = 0; fl < total; ++fl) sumd2 += std::norm((cur[fl] - prev[fl]) / ds);
        std::swap(cur, prev);
    }
    double cell = ds * std::pow(dz, n) * vol;
    BeamResidualNorm out;
    out.value = std::sqrt((sum2 + (k == 1 ? sumd2 : 0.0)) * cell);
    out.sup_beam = sup;
    return out;
}

} // namespace beamlab
