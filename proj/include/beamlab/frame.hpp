#pragma once

// Null frames along null geodesics: e0 = gamma', a second null vector e1 with
// <e0,e1> = -2, <e1,e1> = 0, and spacelike e2..en, all parallel transported.

#include "beamlab/geodesic.hpp"

namespace beamlab {

struct NullFrame {
    const NullGeodesic* geodesic = nullptr;
    // Transported frame matrices: columns e1..en as a function of s (e0 is
    // the geodesic velocity itself). Stored as stacked column vectors.
    OdeSamples<Vec> fwd, bwd;
    int dim = 0;

    // Frame at parameter s: columns e0, e1, ..., en.
    Mat at(double s) const {
        Mat E(dim, dim);
        E.col(0) = geodesic->xdot(s);
        Vec packed = (s >= 0.0) ? fwd.eval(s) : bwd.eval(s);
        for (int k = 1; k < dim; ++k) E.col(k) = packed.segment((k - 1) * dim, dim);
        return E;
    }
};

namespace detail {

// Initial frame at gamma(0): solve for e1 in span{e0, time axis} with
// <e0,e1> = -2 and <e1,e1> = 0, then Gram-Schmidt the coordinate axes
// against the null pair (deterministic coordinate order).
inline Mat initial_null_frame(const MetricField& metric, const Vec& x, const Vec& e0) {
    const int d = metric.dim;
    Mat g = metric.g(x);
    auto ip = [&g](const Vec& a, const Vec& b) { return a.dot(g * b); };

    Vec T = Vec::Zero(d);
    T[0] = 1.0;
    double e0T = ip(e0, T);
    if (std::abs(e0T) < 1e-12)
        throw NumericError("frame: e0 orthogonal to the time axis, cannot build null pair");
    // e1 = alpha e0 + beta T with <e0,e1> = beta <e0,T> = -2 and
    // <e1,e1> = 2 alpha beta <e0,T> + beta^2 <T,T> = 0.
    double beta = -2.0 / e0T;
    double alpha = -beta * ip(T, T) / (2.0 * e0T);
    Vec e1 = alpha * e0 + beta * T;

    Mat E(d, d);
    E.col(0) = e0;
    E.col(1) = e1;
    int next = 2;
    for (int axis = 0; axis < d && next < d; ++axis) {
        Vec v = Vec::Zero(d);
        v[axis] = 1.0;
        // Remove null-pair components: with <e0,e1> = -2 the dual projectors
        // are v -> v + (1/2)<v,e1> e0 + (1/2)<v,e0> e1.
        v += 0.5 * ip(v, e1) * e0 + 0.5 * ip(v, e0) * e1;
        for (int k = 2; k < next; ++k) v -= ip(v, E.col(k)) * E.col(k);
        double n2 = ip(v, v);
        if (n2 < 1e-10) continue;
        E.col(next++) = v / std::sqrt(n2);
    }
    if (next < d) throw NumericError("frame: failed to complete the spacelike frame");
    return E;
}

} // namespace detail

inline NullFrame build_null_frame_and_transport(const MetricField& metric,
                                                const NullGeodesic& geodesic,
                                                double tol = 1e-10) {
    const int d = metric.dim;
    Vec x0 = geodesic.x(0.0), v0 = geodesic.xdot(0.0);
    Mat E0 = detail::initial_null_frame(metric, x0, v0);

    // Pack e1..en; transport along the geodesic using its dense samples.
    Vec y0((d - 1) * d);
    for (int k = 1; k < d; ++k) y0.segment((k - 1) * d, d) = E0.col(k);

    auto rhs = [&metric, &geodesic, d](double s, const Vec& y) {
        Vec x = geodesic.x(s), v = geodesic.xdot(s);
        Christoffel ch = christoffel(metric, x);
        Vec out((d - 1) * d);
        for (int k = 0; k < d - 1; ++k) {
            Vec e = y.segment(k * d, d);
            for (int a = 0; a < d; ++a) out[k * d + a] = -v.dot(ch.Gamma[a] * e);
        }
        return out;
    };

    NullFrame frame;
    frame.geodesic = &geodesic;
    frame.dim = d;
    frame.fwd = rk45_integrate<Vec>(rhs, 0.0, geodesic.s_b, y0, tol, tol * 1e-2);
    frame.bwd = rk45_integrate<Vec>(rhs, 0.0, geodesic.s_a, y0, tol, tol * 1e-2);
    return frame;
}

// Max violation of the five frame relations at parameter s.
inline double frame_defect(const MetricField& metric, const NullFrame& frame, double s) {
    Mat E = frame.at(s);
    Mat g = metric.g(frame.geodesic->x(s));
    Mat G = E.transpose() * g * E; // Gram matrix
    const int d = frame.dim;
    double worst = std::abs(G(0, 0));
    worst = std::max(worst, std::abs(G(1, 1)));
    worst = std::max(worst, std::abs(G(0, 1) + 2.0));
    for (int j = 2; j < d; ++j) {
        worst = std::max(worst, std::abs(G(0, j)));
        worst = std::max(worst, std::abs(G(1, j)));
        for (int k = 2; k < d; ++k)
            worst = std::max(worst, std::abs(G(j, k) - (j == k ? 1.0 : 0.0)));
    }
    return worst;
}

} // namespace beamlab
