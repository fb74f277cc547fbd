#pragma once

// Fermi charts along a null geodesic: forward map (s,y) -> ambient through
// the exponential map, Newton-based inverse, and pulled-back metric helpers
// (the Riccati driver D_ij = d^2_ij g^11 lives here).

#include "beamlab/frame.hpp"

#include <memory>

namespace beamlab {

struct FermiChart {
    MetricField metric;
    std::shared_ptr<NullGeodesic> geo;
    NullFrame frame; // frame.geodesic points at *geo
    double delta = 0.5;
    bool flat = false;     // exponential map is affine (constant metric)
    double exp_tol = 1e-10;

    int dim() const { return metric.dim; }
    int n() const { return metric.dim - 1; }

    // z = (s, y^1..y^n) -> ambient point exp_{gamma(s)}(sum y^k f_k(s)).
    // Chart basis: f_1 = -e_1/2 (so <e_0, f_1> = +1 and the axis metric is
    // ds (x) dz1 + dz1 (x) ds + sum dzi (x) dzi), f_i = e_i for i >= 2.
    Vec forward(const Vec& z) const {
        double s = z[0];
        Mat E = frame.at(s);
        Vec v = -0.5 * z[1] * E.col(1);
        for (int k = 2; k < dim(); ++k) v += z[k] * E.col(k);
        Vec base = geo->x(s);
        if (flat || v.squaredNorm() == 0.0) return base + v;
        auto [samples, reached] = detail::integrate_geodesic_flow(metric, base, v, 1.0, exp_tol, std::nullopt);
        (void)reached;
        return samples.y.back().head(dim());
    }

    // Newton inverse; max 50 iterations, tolerance 1e-12 on the chart scale.
    Vec inverse(const Vec& x) const {
        const int d = dim();
        Vec z = initial_guess(x);
        if (flat) return z; // the guess is exact for affine charts
        const double fdh = 1e-6;
        double scale = std::max(1.0, x.norm());
        for (int it = 0; it < 50; ++it) {
            Vec r = forward(z) - x;
            if (r.lpNorm<Eigen::Infinity>() <= 1e-12 * scale) return z;
            Mat J(d, d);
            for (int a = 0; a < d; ++a) {
                Vec zp = z, zm = z;
                zp[a] += fdh;
                zm[a] -= fdh;
                J.col(a) = (forward(zp) - forward(zm)) / (2.0 * fdh);
            }
            Vec step = J.partialPivLu().solve(r);
            z -= step;
            if (!z.allFinite()) break;
        }
        Vec r = forward(z) - x;
        if (r.lpNorm<Eigen::Infinity>() <= 1e-12 * scale) return z;
        throw NumericError("fermi: Newton inversion did not converge; shrink the tube radius");
    }

    // Pulled-back metric at chart point z via FD Jacobian of the forward map.
    Mat pullback_metric(const Vec& z, double fdh = 1e-5) const {
        const int d = dim();
        Mat J(d, d);
        for (int a = 0; a < d; ++a) {
            Vec zp = z, zm = z;
            zp[a] += fdh;
            zm[a] -= fdh;
            J.col(a) = (forward(zp) - forward(zm)) / (2.0 * fdh);
        }
        return J.transpose() * metric.g(forward(z)) * J;
    }

    double g11_inv(const Vec& z) const {
        Mat gt = pullback_metric(z);
        return gt.inverse()(1, 1);
    }

    // Riccati driver: D_ij(s) = d^2 g^11 / dz^i dz^j at (s, 0), i,j = 1..n.
    Mat riccati_D(double s, double fdh = 5e-3) const {
        const int nn = n();
        if (flat) {
            // Constant-coefficient pullback: g^11 is constant, D = 0.
            return Mat::Zero(nn, nn);
        }
        Vec z0 = Vec::Zero(dim());
        z0[0] = s;
        double f0 = g11_inv(z0);
        Mat D(nn, nn);
        for (int i = 1; i <= nn; ++i) {
            Vec zp = z0, zm = z0;
            zp[i] += fdh;
            zm[i] -= fdh;
            D(i - 1, i - 1) = (g11_inv(zp) - 2.0 * f0 + g11_inv(zm)) / (fdh * fdh);
        }
        for (int i = 1; i <= nn; ++i)
            for (int j = i + 1; j <= nn; ++j) {
                Vec zpp = z0, zpm = z0, zmp = z0, zmm = z0;
                zpp[i] += fdh; zpp[j] += fdh;
                zpm[i] += fdh; zpm[j] -= fdh;
                zmp[i] -= fdh; zmp[j] += fdh;
                zmm[i] -= fdh; zmm[j] -= fdh;
                D(i - 1, j - 1) = D(j - 1, i - 1) =
                    (g11_inv(zpp) - g11_inv(zpm) - g11_inv(zmp) + g11_inv(zmm)) / (4.0 * fdh * fdh);
            }
        return D;
    }

private:
    // Dual-basis projection using the frame at a parameter found by a short
    // axial search; exact for flat charts.
    Vec initial_guess(const Vec& x) const {
        const int d = dim();
        // Scalar iteration for the axial parameter: s solves z1-dual(x - gamma(s)) = 0.
        double s = 0.0;
        for (int it = 0; it < 60; ++it) {
            Vec base = geo->x(s);
            Mat E = frame.at(s);
            Mat g = metric.g(base);
            Vec dx = x - base;
            // Dual coordinates: s-coordinate = -1/2 <dx, e1>.
            double ds = -0.5 * dx.dot(g * E.col(1));
            s += ds;
            s = std::clamp(s, geo->s_a, geo->s_b);
            if (std::abs(ds) < 1e-13) break;
        }
        Vec base = geo->x(s);
        Mat E = frame.at(s);
        Mat g = metric.g(base);
        Vec dx = x - base;
        Vec z(d);
        z[0] = s;
        z[1] = dx.dot(g * E.col(0)); // z1-dual: <dx, e0> since <f_1, e0> = 1
        for (int k = 2; k < d; ++k) z[k] = dx.dot(g * E.col(k));
        return z;
    }
};

inline FermiChart build_fermi_chart(const MetricField& metric, const NullGeodesic& geodesic,
                                    const NullFrame& frame, double delta) {
    FermiChart chart;
    chart.metric = metric;
    chart.geo = std::make_shared<NullGeodesic>(geodesic);
    chart.frame = frame;
    chart.frame.geodesic = chart.geo.get();
    chart.delta = delta;
    chart.flat = metric.flat;
    return chart;
}

} // namespace beamlab
