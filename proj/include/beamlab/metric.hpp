#pragma once

// Lorentzian metric fields on a single coordinate chart: evaluation, inverses,
// Christoffel symbols (analytic derivatives when supplied, central differences
// otherwise) and the coordinate wave operator helpers.

#include "beamlab/core.hpp"

namespace beamlab {

// x has 1+n entries, x[0] = t.
using SpacetimePoint = Vec;

struct MetricField {
    int dim = 0; // 1+n
    std::function<Mat(const Vec&)> g_eval;
    // Optional analytic partials: dg_eval(x, a) = d g / d x^a. When absent,
    // central differences with step fd_step are used.
    std::function<Mat(const Vec&, int)> dg_eval;
    double fd_step = 1e-5;
    bool flat = false; // constant metric: geodesics are straight lines

    Mat g(const Vec& x) const {
        if ((int)x.size() != dim) throw PreconditionError("metric: point dimension mismatch");
        Mat m = g_eval(x);
        if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12)
            throw NumericError("metric: g(x) not symmetric to 1e-12");
        return 0.5 * (m + m.transpose());
    }

    Mat dg(const Vec& x, int a) const {
        if (dg_eval) return dg_eval(x, a);
        if (fd_step < 1e-14) throw ConfigError("metric: FD step underflow");
        Vec xp = x, xm = x;
        xp[a] += fd_step;
        xm[a] -= fd_step;
        return (g_eval(xp) - g_eval(xm)) / (2.0 * fd_step);
    }
};

struct MetricEval {
    Mat g;
    Mat g_inv;
    double sqrt_abs_det;
};

inline MetricEval metric_eval(const MetricField& metric, const Vec& x) {
    MetricEval out;
    out.g = metric.g(x);
    double det = out.g.determinant();
    if (std::abs(det) < 1e-14) throw NumericError("metric: degenerate metric, |det g| < 1e-14");
    out.g_inv = out.g.inverse();
    if ((out.g * out.g_inv - Mat::Identity(metric.dim, metric.dim)).cwiseAbs().maxCoeff() > 1e-10)
        throw NumericError("metric: inversion contract violated");
    out.sqrt_abs_det = std::sqrt(std::abs(det));
    return out;
}

inline double lorentz_inner(const MetricField& metric, const Vec& x, const Vec& v, const Vec& w) {
    if ((int)v.size() != metric.dim || (int)w.size() != metric.dim)
        throw PreconditionError("lorentz_inner: vector dimension mismatch");
    return v.dot(metric.g(x) * w);
}

struct Christoffel {
    std::vector<Mat> Gamma;  // Gamma[a](b,c) = Gamma^a_{bc}
    Vec contracted;          // Gamma^a = g^{bc} Gamma^a_{bc}
};

inline Christoffel christoffel(const MetricField& metric, const Vec& x) {
    const int d = metric.dim;
    Mat ginv = metric_eval(metric, x).g_inv;
    std::vector<Mat> dg(d);
    for (int a = 0; a < d; ++a) dg[a] = metric.dg(x, a);

    Christoffel ch;
    ch.Gamma.assign(d, Mat::Zero(d, d));
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            for (int c = b; c < d; ++c) {
                double s = 0.0;
                for (int e = 0; e < d; ++e)
                    s += ginv(a, e) * (dg[b](e, c) + dg[c](e, b) - dg[e](b, c));
                ch.Gamma[a](b, c) = 0.5 * s;
                ch.Gamma[a](c, b) = ch.Gamma[a](b, c);
            }
    ch.contracted = Vec::Zero(d);
    for (int a = 0; a < d; ++a) {
        double s = 0.0;
        for (int b = 0; b < d; ++b)
            for (int c = 0; c < d; ++c) s += ginv(b, c) * ch.Gamma[a](b, c);
        ch.contracted[a] = s;
    }
    return ch;
}

// Wave operator on a scalar field given its coordinate Hessian and gradient:
//   box u = -g^{ab} d^2_{ab} u + Gamma^a d_a u.
template <typename Scalar>
Scalar wave_operator(const Mat& g_inv, const Vec& gamma_contracted,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& hess,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& grad) {
    Scalar out{};
    const int d = (int)g_inv.rows();
    for (int a = 0; a < d; ++a) {
        out += gamma_contracted[a] * grad[a];
        for (int b = 0; b < d; ++b) out -= g_inv(a, b) * hess(a, b);
    }
    return out;
}

inline MetricField minkowski(int dim) {
    MetricField m;
    m.dim = dim;
    Mat eta = Mat::Identity(dim, dim);
    eta(0, 0) = -1.0;
    m.g_eval = [eta](const Vec&) { return eta; };
    m.dg_eval = [dim](const Vec&, int) { return Mat::Zero(dim, dim); };
    m.flat = true;
    return m;
}

// g = -dt^2 + (1 + A exp(-|x'|^2 / w^2)) sum dx_i^2 : a smooth non-flat test
// metric whose derivatives are available analytically.
inline MetricField gaussian_bump_metric(int dim, double amplitude, double width) {
    if (width <= 0.0) throw ConfigError("gaussian-bump metric: width must be positive");
    MetricField m;
    m.dim = dim;
    m.g_eval = [dim, amplitude, width](const Vec& x) {
        double r2 = x.tail(dim - 1).squaredNorm();
        double f = 1.0 + amplitude * std::exp(-r2 / (width * width));
        Mat g = f * Mat::Identity(dim, dim);
        g(0, 0) = -1.0;
        return g;
    };
    m.dg_eval = [dim, amplitude, width](const Vec& x, int a) {
        Mat d = Mat::Zero(dim, dim);
        if (a == 0) return d;
        double r2 = x.tail(dim - 1).squaredNorm();
        double df = amplitude * std::exp(-r2 / (width * width)) * (-2.0 * x[a] / (width * width));
        for (int i = 1; i < dim; ++i) d(i, i) = df;
        return d;
    };
    return m;
}

} // namespace beamlab
