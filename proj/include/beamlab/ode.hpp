#pragma once

// Adaptive Dormand-Prince RK4(5) integrator used by the geodesic flow,
// parallel transport and the Riccati linear system. Works for real or
// complex Eigen vector states; dense output via the standard order-4
// continuous extension of DOPRI5, so interpolated values are as accurate
// as the accepted steps themselves.

#include "beamlab/core.hpp"

#include <algorithm>
#include <cmath>

namespace beamlab {

template <typename State>
struct OdeSamples {
    std::vector<double> t;  // accepted nodes, sorted ascending
    std::vector<State> y;
    std::vector<State> dy;  // f(t, y) at the nodes

    // Per-interval dense-output data (size t.size() - 1, sorted order).
    // Each interval stores the signed step h0 taken from its start node t0
    // and the continuous-extension vectors rc3..rc5.
    std::vector<double> t0s, h0s;
    std::vector<State> rc3, rc4, rc5;

    State eval(double s) const {
        if (t.empty()) throw NumericError("ode: empty sample set");
        if (s <= t.front()) return y.front();
        if (s >= t.back()) return y.back();
        auto it = std::upper_bound(t.begin(), t.end(), s);
        size_t i = (size_t)(it - t.begin()) - 1;
        double th = (s - t0s[i]) / h0s[i];
        // y0 and ydiff in the orientation the step was taken.
        bool fwd_step = h0s[i] > 0.0;
        const State& y0 = fwd_step ? y[i] : y[i + 1];
        State ydiff = fwd_step ? State(y[i + 1] - y[i]) : State(y[i] - y[i + 1]);
        return y0 + th * (ydiff + (1.0 - th) * (rc3[i] + th * (rc4[i] + (1.0 - th) * rc5[i])));
    }

    // Keep only the first / last `keep` nodes (with matching intervals).
    void truncate_back(size_t keep) {
        t.resize(keep);
        y.resize(keep);
        dy.resize(keep);
        size_t ni = keep > 0 ? keep - 1 : 0;
        t0s.resize(ni);
        h0s.resize(ni);
        rc3.resize(ni);
        rc4.resize(ni);
        rc5.resize(ni);
    }
    void truncate_front(size_t keep) {
        size_t drop = t.size() - keep;
        t.erase(t.begin(), t.begin() + drop);
        y.erase(y.begin(), y.begin() + drop);
        dy.erase(dy.begin(), dy.begin() + drop);
        size_t idrop = std::min(drop, t0s.size());
        t0s.erase(t0s.begin(), t0s.begin() + idrop);
        h0s.erase(h0s.begin(), h0s.begin() + idrop);
        rc3.erase(rc3.begin(), rc3.begin() + idrop);
        rc4.erase(rc4.begin(), rc4.begin() + idrop);
        rc5.erase(rc5.begin(), rc5.begin() + idrop);
    }
};

// Integrates y' = f(t, y) from t0 to t1 (t1 > t0 or t1 < t0).
template <typename State, typename F>
OdeSamples<State> rk45_integrate(F&& f, double t0, double t1, const State& y0,
                                 double rtol = 1e-10, double atol = 1e-12,
                                 int max_steps = 2000000) {
    // Dormand-Prince coefficients.
    static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static const double a21 = 1.0 / 5;
    static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
    static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static const double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                        e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                        e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;
    // Continuous-extension weights (Hairer-Norsett-Wanner DOPRI5).
    static const double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

    const double dir = (t1 >= t0) ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);
    double t = t0;
    State y = y0;
    State k1 = f(t, y);

    OdeSamples<State> out;
    out.t.push_back(t);
    out.y.push_back(y);
    out.dy.push_back(k1);
    if (span == 0.0) return out;

    double h = dir * std::min(span, std::max(1e-6 * span, 1e-3));
    for (int step = 0; step < max_steps; ++step) {
        if (std::abs(t - t1) < 1e-300) break;
        if (std::abs(h) > std::abs(t1 - t)) h = t1 - t;

        State k2 = f(t + c2 * h, y + h * (a21 * k1));
        State k3 = f(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
        State k4 = f(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        State k5 = f(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        State k6 = f(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        State ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        State k7 = f(t + h, ynew);
        State err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        double sc = atol + rtol * std::max(y.template lpNorm<Eigen::Infinity>(),
                                           ynew.template lpNorm<Eigen::Infinity>());
        double errnorm = err.template lpNorm<Eigen::Infinity>() / sc;

        if (errnorm <= 1.0) {
            State ydiff = ynew - y;
            State bspl = h * k1 - ydiff;
            out.t0s.push_back(t);
            out.h0s.push_back(h);
            out.rc3.push_back(bspl);
            out.rc4.push_back(ydiff - h * k7 - bspl);
            out.rc5.push_back(h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7));
            t += h;
            y = ynew;
            k1 = k7;
            out.t.push_back(t);
            out.y.push_back(y);
            out.dy.push_back(k1);
            if (t == t1) break;
        }
        double fac = 0.9 * std::pow(std::max(errnorm, 1e-16), -0.2);
        h *= std::clamp(fac, 0.2, 5.0);
        if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t)))
            throw NumericError("ode: step size underflow");
        if (step == max_steps - 1) throw NumericError("ode: max step count exceeded");
    }
    if (dir * (out.t.back() - t1) < 0) throw NumericError("ode: failed to reach interval end");
    if (dir < 0) { // keep nodes (and intervals) sorted by t for eval()
        std::reverse(out.t.begin(), out.t.end());
        std::reverse(out.y.begin(), out.y.end());
        std::reverse(out.dy.begin(), out.dy.end());
        std::reverse(out.t0s.begin(), out.t0s.end());
        std::reverse(out.h0s.begin(), out.h0s.end());
        std::reverse(out.rc3.begin(), out.rc3.end());
        std::reverse(out.rc4.begin(), out.rc4.end());
        std::reverse(out.rc5.begin(), out.rc5.end());
    }
    return out;
}

} // namespace beamlab
