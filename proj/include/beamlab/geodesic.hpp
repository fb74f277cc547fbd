#pragma once

// Null geodesics on a metric chart: adaptive RK4(5) integration of the
// geodesic flow with dense sample storage and an optional chart-domain box
// (exit => truncated result, never extrapolation).

#include "beamlab/metric.hpp"
#include "beamlab/ode.hpp"

#include <optional>

namespace beamlab {

struct ChartBox {
    Vec lo, hi;
    bool contains(const Vec& x) const {
        for (int i = 0; i < (int)x.size(); ++i)
            if (x[i] < lo[i] || x[i] > hi[i]) return false;
        return true;
    }
};

struct NullGeodesic {
    MetricField metric;
    Vec p;   // gamma(0)
    Vec xi;  // gamma'(0)
    double s_a = 0.0, s_b = 0.0;
    bool truncated = false;
    OdeSamples<Vec> fwd, bwd; // stacked state (x, xdot), parameter >= 0 / <= 0

    int dim() const { return metric.dim; }

    Vec state(double s) const {
        const auto& side = (s >= 0.0) ? fwd : bwd;
        return side.eval(s);
    }
    Vec x(double s) const { return state(s).head(dim()); }
    Vec xdot(double s) const { return state(s).tail(dim()); }
};

namespace detail {

inline Vec geodesic_rhs(const MetricField& metric, const Vec& state) {
    const int d = metric.dim;
    Vec x = state.head(d), v = state.tail(d);
    Christoffel ch = christoffel(metric, x);
    Vec acc = Vec::Zero(d);
    for (int a = 0; a < d; ++a) acc[a] = -v.dot(ch.Gamma[a] * v);
    Vec rhs(2 * d);
    rhs << v, acc;
    return rhs;
}

// Integrates the geodesic flow from parameter 0 to send; stops at the chart
// box if one is given. Returns (samples, reached_parameter).
inline std::pair<OdeSamples<Vec>, double>
integrate_geodesic_flow(const MetricField& metric, const Vec& p, const Vec& xi, double send,
                        double tol, const std::optional<ChartBox>& box) {
    const int d = metric.dim;
    Vec y0(2 * d);
    y0 << p, xi;
    auto rhs = [&metric](double, const Vec& y) { return geodesic_rhs(metric, y); };
    auto samples = rk45_integrate<Vec>(rhs, 0.0, send, y0, tol, tol * 1e-2);
    // Samples are sorted by parameter; the base point sits at the front for
    // send > 0 and at the back for send < 0. Walk outward from the base and
    // drop everything past the first box exit.
    if (box) {
        const bool back = (send < 0.0);
        const size_t n = samples.t.size();
        for (size_t k = 0; k < n; ++k) {
            size_t i = back ? n - 1 - k : k;
            if (!box->contains(samples.y[i].head(d))) {
                size_t keep = std::max<size_t>(k, 1); // samples kept, base included
                if (back) {
                    samples.truncate_front(keep);
                    return {samples, samples.t.front()};
                }
                samples.truncate_back(keep);
                return {samples, samples.t.back()};
            }
        }
    }
    return {samples, send};
}

} // namespace detail

// General (not necessarily null) geodesic through p with velocity xi; used by
// the Fermi exponential map.
inline NullGeodesic integrate_geodesic(const MetricField& metric, const Vec& p, const Vec& xi,
                                       double s_a, double s_b, double tol = 1e-10,
                                       std::optional<ChartBox> box = std::nullopt) {
    if (s_a > 0.0 || s_b < 0.0)
        throw PreconditionError("geodesic: interval must contain the base parameter 0");
    NullGeodesic geo;
    geo.metric = metric;
    geo.p = p;
    geo.xi = xi;
    auto [fwd, reached_b] = detail::integrate_geodesic_flow(metric, p, xi, s_b, tol, box);
    auto [bwd, reached_a] = detail::integrate_geodesic_flow(metric, p, xi, s_a, tol, box);
    geo.fwd = std::move(fwd);
    geo.bwd = std::move(bwd);
    geo.s_b = reached_b;
    geo.s_a = reached_a;
    geo.truncated = (reached_b != s_b) || (reached_a != s_a);
    return geo;
}

inline NullGeodesic integrate_null_geodesic(const MetricField& metric, const Vec& p, const Vec& xi,
                                            double s_a, double s_b, double tol = 1e-10,
                                            std::optional<ChartBox> box = std::nullopt) {
    double n2 = xi.squaredNorm();
    double defect = std::abs(lorentz_inner(metric, p, xi, xi));
    if (defect > 1e-10 * n2)
        throw PreconditionError("geodesic: initial vector is not null to 1e-10");
    return integrate_geodesic(metric, p, xi, s_a, s_b, tol, box);
}

// sup_s |<xdot, xdot>_g| over the stored samples, for the null-conservation check.
inline double null_defect(const NullGeodesic& geo) {
    double worst = 0.0;
    for (const auto* side : {&geo.fwd, &geo.bwd})
        for (size_t i = 0; i < side->t.size(); ++i) {
            Vec x = side->y[i].head(geo.dim()), v = side->y[i].tail(geo.dim());
            worst = std::max(worst, std::abs(lorentz_inner(geo.metric, x, v, v)));
        }
    return worst;
}

} // namespace beamlab
