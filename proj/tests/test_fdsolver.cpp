#include <catch2/catch_amalgamated.hpp>

#include "beamlab/fdsolver.hpp"
#include "beamlab/oscillatory.hpp" // fit_loglog

#include <cstdio>

using namespace beamlab;

namespace {

GridSpec grid1(double dx, double T = 1.0, Boundary b = Boundary::Periodic) {
    GridSpec g;
    g.d = 1;
    g.lo = Vec::Zero(1);
    g.hi = Vec::Ones(1);
    g.dx = dx;
    g.dt = 0.45 * dx;
    g.T = T;
    g.boundary = b;
    return g;
}

GridSpec grid2(double dx, double T = 0.5) {
    GridSpec g;
    g.d = 2;
    g.lo = Vec::Zero(2);
    g.hi = Vec::Ones(2);
    g.dx = dx;
    g.dt = 0.45 * dx; // CFL margin: 0.45 < 0.9 / sqrt(2)
    g.T = T;
    return g;
}

// Exact fields with zero Cauchy data, periodic on [0,1]^d.
double ustar1(double t, const Vec& x) { return sq(std::sin(t)) * std::sin(2.0 * M_PI * x[0]); }
double ustar1_tt(double t, const Vec& x) { return 2.0 * std::cos(2.0 * t) * std::sin(2.0 * M_PI * x[0]); }
double ustar1_lap(double t, const Vec& x) { return -4.0 * M_PI * M_PI * ustar1(t, x); }

double rel_l2_error(const STField& u, const SpaceTimeFn& exact) {
    STField e(u.grid), ex(u.grid);
    const int nt = u.grid.nt(), nn = u.grid.nodes();
    for (int it = 0; it < nt; ++it)
        for (int i = 0; i < nn; ++i) {
            double v = exact(it * u.grid.dt, u.grid.x_of(i));
            ex.at(it, i) = v;
            e.at(it, i) = u.at(it, i) - v;
        }
    return st_l2(e) / st_l2(ex);
}

double smoothstep(double t, double a, double b) {
    double s = std::clamp((t - a) / (b - a), 0.0, 1.0);
    return s * s * (3.0 - 2.0 * s);
}

} // namespace

TEST_CASE("grid validation") {
    GridSpec g = grid1(0.01);
    g.validate();
    SECTION("CFL") {
        g.dt = 0.95 * g.dx;
        REQUIRE_THROWS_AS(g.validate(), ConfigError);
        GridSpec g2 = grid2(0.05);
        g2.dt = 0.8 * g2.dx; // fine in 1d, violates 0.9/sqrt(2)
        REQUIRE_THROWS_AS(g2.validate(), ConfigError);
    }
    SECTION("shape") {
        g.d = 3;
        REQUIRE_THROWS_AS(g.validate(), ConfigError);
        g.d = 1;
        g.hi[0] = g.lo[0];
        REQUIRE_THROWS_AS(g.validate(), ConfigError);
    }
}

TEST_CASE("zero sources give the zero solution") {
    GridSpec g = grid1(0.02);
    WaveSolution lin = solve_linear_wave([](double, const Vec&) { return 0.7; }, nullptr, g);
    REQUIRE(lin.u.max_abs() == 0.0);
    CoefficientSet cs;
    cs.q1 = [](double, const Vec&) { return 0.3; };
    cs.q2 = [](double, const Vec&) { return 1.0; };
    WaveSolution non = solve_nonlinear_wave(cs, nullptr, g);
    REQUIRE(non.u.max_abs() == 0.0);
}

TEST_CASE("linear solver converges at second order") {
    SpaceTimeFn Q = [](double, const Vec&) { return 0.8; };
    SpaceTimeFn src = [Q](double t, const Vec& x) {
        return ustar1_tt(t, x) - ustar1_lap(t, x) + Q(t, x) * ustar1(t, x);
    };
    std::vector<double> dxs = {1.0 / 50, 1.0 / 100, 1.0 / 200}, errs;
    for (double dx : dxs) {
        WaveSolution s = solve_linear_wave(Q, src, grid1(dx));
        errs.push_back(rel_l2_error(s.u, ustar1));
    }
    SlopeFit f = fit_loglog(dxs, errs);
    INFO("errors " << errs[0] << " " << errs[1] << " " << errs[2]);
    REQUIRE(std::abs(f.slope - 2.0) < 0.2);
}

TEST_CASE("2d linear solver refines at second order") {
    auto ustar2 = [](double t, const Vec& x) {
        return sq(std::sin(t)) * std::sin(2.0 * M_PI * x[0]) * std::sin(2.0 * M_PI * x[1]);
    };
    SpaceTimeFn src = [ustar2](double t, const Vec& x) {
        double utt = 2.0 * std::cos(2.0 * t) * std::sin(2.0 * M_PI * x[0]) * std::sin(2.0 * M_PI * x[1]);
        return utt + 8.0 * M_PI * M_PI * ustar2(t, x);
    };
    WaveSolution c = solve_linear_wave(nullptr, src, grid2(1.0 / 20));
    WaveSolution fref = solve_linear_wave(nullptr, src, grid2(1.0 / 40));
    double ec = rel_l2_error(c.u, ustar2);
    double ef = rel_l2_error(fref.u, ustar2);
    INFO("coarse " << ec << " fine " << ef);
    REQUIRE(ec / ef > 3.0);
    REQUIRE(ec / ef < 5.5);
}

TEST_CASE("nonlinear solver: manufactured solution at second order") {
    CoefficientSet cs;
    cs.q1 = [](double, const Vec&) { return 0.5; };
    cs.q2 = [](double, const Vec& x) { return 1.0 + 0.3 * x[0]; };
    auto uex = [](double t, const Vec& x) { return 0.1 * ustar1(t, x); };
    cs.F = [cs, uex](double t, const Vec& x) {
        double u = uex(t, x);
        return 0.1 * (ustar1_tt(t, x) - ustar1_lap(t, x)) + cs.q1(t, x) * u + cs.q2(t, x) * u * u;
    };
    std::vector<double> dxs = {1.0 / 50, 1.0 / 100, 1.0 / 200}, errs;
    for (double dx : dxs) {
        WaveSolution s = solve_nonlinear_wave(cs, nullptr, grid1(dx));
        errs.push_back(rel_l2_error(s.u, uex));
    }
    SlopeFit f = fit_loglog(dxs, errs);
    INFO("errors " << errs[0] << " " << errs[1] << " " << errs[2]);
    REQUIRE(std::abs(f.slope - 2.0) < 0.2);
}

TEST_CASE("amplitude guard enforces the small-data regime") {
    CoefficientSet cs;
    cs.q2 = [](double, const Vec&) { return -50.0; }; // focusing, blows up
    SpaceTimeFn f = [](double, const Vec& x) { return 50.0 * std::exp(-sq(x[0] - 0.5) / 0.01); };
    REQUIRE_THROWS_AS(solve_nonlinear_wave(cs, f, grid1(0.01, 3.0), 10.0), NumericError);
}

TEST_CASE("Lipschitz bound is stable under source halving") {
    CoefficientSet cs;
    cs.q1 = [](double, const Vec&) { return 0.3; };
    cs.q2 = [](double, const Vec&) { return 1.0; };
    cs.F = [](double t, const Vec& x) { return 0.05 * std::sin(2.0 * M_PI * x[0]) * sq(std::sin(t)); };
    GridSpec g = grid1(0.01, 1.5);
    STField u0 = solve_nonlinear_wave(cs, nullptr, g).u;
    auto ratio = [&](double A) {
        SpaceTimeFn f = [A](double t, const Vec& x) {
            return A * std::exp(-sq(x[0] - 0.5) / 0.02) * sq(std::sin(2.0 * t));
        };
        STField u = solve_nonlinear_wave(cs, f, g).u;
        STField d(g);
        for (size_t k = 0; k < d.a.size(); ++k) d.a[k] = u.a[k] - u0.a[k];
        return st_l2(d) / A;
    };
    double c1 = ratio(0.01), c2 = ratio(0.005);
    REQUIRE(std::abs(c1 - c2) < 0.05 * c1);
}

TEST_CASE("discrete energy is conserved after the source switches off") {
    // Drive for t < 0.5, then the homogeneous periodic evolution conserves
    // the discrete energy up to O(dt^2).
    SpaceTimeFn src = [](double t, const Vec& x) {
        return (t < 0.5) ? std::sin(2.0 * M_PI * x[0]) * sq(std::sin(2.0 * M_PI * t)) : 0.0;
    };
    GridSpec g = grid1(0.005, 3.0);
    WaveSolution s = solve_linear_wave(nullptr, src, g);
    int i0 = (int)std::ceil(0.6 / g.dt);
    double e0 = s.energy[i0], emin = e0, emax = e0;
    for (size_t i = i0; i < s.energy.size(); ++i) {
        emin = std::min(emin, s.energy[i]);
        emax = std::max(emax, s.energy[i]);
    }
    REQUIRE(e0 > 0.0);
    REQUIRE((emax - emin) / e0 < 0.01);
}

TEST_CASE("finite propagation speed of the discrete cone") {
    GridSpec g = grid1(0.01, 0.4);
    int nn = g.nodes();
    int c = nn / 2, k = 3;
    SpaceTimeFn f = [&g, c, k](double, const Vec& x) {
        int i = (int)std::round((x[0] - g.lo[0]) / g.dx);
        return (std::abs(i - c) <= k) ? 1.0 : 0.0;
    };
    WaveSolution s = solve_linear_wave(nullptr, f, g);
    for (int it = 0; it < g.nt(); ++it)
        for (int i = 0; i < nn; ++i)
            if (std::abs(i - c) > k + it) REQUIRE(s.u.at(it, i) == 0.0);
}

TEST_CASE("beam_source reproduces the windowed field after the transition") {
    GridSpec g = grid1(0.01, 1.5);
    SpaceTimeFn v = [](double t, const Vec& x) { return std::sin(2.0 * M_PI * x[0]) * std::cos(4.0 * t); };
    SpaceTimeFn em = [](double t, const Vec&) { return smoothstep(t, 0.2, 0.5); };
    SpaceTimeFn ep = [](double, const Vec&) { return 1.0; };
    SpaceTimeFn Q = [](double, const Vec&) { return 0.3; };
    STField f = beam_source(v, Q, em, ep, g);
    SpaceTimeFn fsrc = [&f, &g](double t, const Vec& x) {
        int it = (int)std::round(t / g.dt);
        int i = (int)std::round((x[0] - g.lo[0]) / g.dx);
        return f.at(it, i);
    };
    WaveSolution s = solve_linear_wave(Q, fsrc, g);
    double scale = 0.0, maxdiff = 0.0;
    for (int it = 0; it < g.nt(); ++it)
        for (int i = 0; i < g.nodes(); ++i) {
            double w = em(it * g.dt, g.x_of(i)) * v(it * g.dt, g.x_of(i));
            scale = std::max(scale, std::abs(w));
            maxdiff = std::max(maxdiff, std::abs(s.u.at(it, i) - w));
        }
    REQUIRE(maxdiff < 1e-10 * scale);
}

TEST_CASE("beam_source support checks and Q dependence") {
    GridSpec g = grid1(0.02, 1.0);
    SpaceTimeFn v = [](double t, const Vec& x) {
        return std::exp(-sq(x[0] - 0.5) / 0.01 - sq(t - 0.5) / 0.01);
    };
    SpaceTimeFn em = [](double, const Vec&) { return 1.0; };
    // Support of f = support of v here; a tight ball elsewhere must throw.
    Vec ctr(1);
    ctr << 0.5;
    REQUIRE_NOTHROW(beam_source(v, nullptr, em, em, g, 0.9, ctr, 0.5));
    Vec far(1);
    far << 0.1;
    REQUIRE_THROWS_AS(beam_source(v, nullptr, em, em, g, 0.05, far, 0.5), ConfigError);

    // f_Q - f_0 = eta_plus * Q * eta_minus * v pointwise.
    SpaceTimeFn Q = [](double, const Vec&) { return 0.5; };
    STField fq = beam_source(v, Q, em, em, g);
    STField f0 = beam_source(v, nullptr, em, em, g);
    for (int it = 1; it + 1 < g.nt(); ++it)
        for (int i = 0; i < g.nodes(); ++i) {
            double expect = 0.5 * v(it * g.dt, g.x_of(i));
            REQUIRE(std::abs(fq.at(it, i) - f0.at(it, i) - expect) < 1e-12);
        }
}

TEST_CASE("linearized chain structure") {
    GridSpec g = grid1(0.02, 1.2);
    std::vector<SpaceTimeFn> f = {
        [](double t, const Vec& x) { return std::exp(-sq(x[0] - 0.3) / 0.02 - sq(t - 0.2) / 0.02); },
        [](double t, const Vec& x) { return std::exp(-sq(x[0] - 0.5) / 0.02 - sq(t - 0.25) / 0.02); },
        [](double t, const Vec& x) { return std::exp(-sq(x[0] - 0.7) / 0.02 - sq(t - 0.3) / 0.02); }};

    SECTION("zero coupling kills the higher levels") {
        CoefficientSet cs;
        cs.q1 = [](double, const Vec&) { return 0.4; };
        LinearizedChain ch = solve_linearized_chain(cs, f, g);
        REQUIRE(ch.u0.max_abs() == 0.0);
        for (int i = 0; i < 3; ++i) REQUIRE(ch.v[i].max_abs() > 0.0);
        REQUIRE(ch.w[0][1].max_abs() == 0.0);
        REQUIRE(ch.w3[0].max_abs() == 0.0);
    }

    SECTION("symmetry and v-equation reduction") {
        CoefficientSet cs;
        cs.q2 = [](double, const Vec&) { return 1.0; };
        LinearizedChain ch = solve_linearized_chain(cs, f, g);
        REQUIRE(ch.w[0][1].a == ch.w[1][0].a); // bit-for-bit
        // q1 = F = 0: u0 = 0 and v solves the free wave equation.
        REQUIRE(ch.u0.max_abs() == 0.0);
        STField v0 = solve_linear_wave(nullptr, f[0], g).u;
        double maxdiff = 0.0;
        for (size_t k = 0; k < v0.a.size(); ++k)
            maxdiff = std::max(maxdiff, std::abs(v0.a[k] - ch.v[0].a[k]));
        REQUIRE(maxdiff < 1e-13);
    }

    SECTION("arity guard") {
        CoefficientSet cs;
        REQUIRE_THROWS_AS(solve_linearized_chain(cs, {f[0], f[1]}, g), PreconditionError);
    }
}

TEST_CASE("mixed FD derivative matches the direct chain") {
    GridSpec g = grid1(1.0 / 150, 1.2);
    CoefficientSet cs;
    cs.q2 = [](double, const Vec& x) { return 1.0 + 0.2 * std::sin(2.0 * M_PI * x[0]); };
    std::vector<SpaceTimeFn> f = {
        [](double t, const Vec& x) { return std::exp(-sq(x[0] - 0.3) / 0.02 - sq(t - 0.2) / 0.02); },
        [](double t, const Vec& x) { return std::exp(-sq(x[0] - 0.5) / 0.02 - sq(t - 0.25) / 0.02); },
        [](double t, const Vec& x) { return std::exp(-sq(x[0] - 0.7) / 0.02 - sq(t - 0.3) / 0.02); }};
    LinearizedChain ch = solve_linearized_chain(cs, f, g);
    STField d3 = fd_mixed_derivative(cs, f, 1e-2, 3, g);
    STField diff(g);
    for (size_t k = 0; k < diff.a.size(); ++k) diff.a[k] = d3.a[k] - ch.w3[0].a[k];
    double rel = st_l2(diff) / st_l2(ch.w3[0]);
    INFO("relative gap " << rel);
    REQUIRE(rel < 0.05);

    // Stencil truncation is second order in eps: doubling eps grows the gap
    // by about 4x. Small eps sits on the roundoff floor (the 1/eps^3 stencil
    // scale amplifies it), so the ratio is measured at large eps where the
    // truncation term dominates.
    auto gap = [&](double eps) {
        STField d = fd_mixed_derivative(cs, f, eps, 3, g);
        STField dd(g);
        for (size_t k = 0; k < dd.a.size(); ++k) dd.a[k] = d.a[k] - ch.w3[0].a[k];
        return st_l2(dd) / st_l2(ch.w3[0]);
    };
    double r1 = gap(0.1), r2 = gap(0.2);
    INFO("gaps " << r1 << " " << r2);
    REQUIRE(r2 / r1 > 2.5);
    REQUIRE(r2 / r1 < 6.0);
}

TEST_CASE("mixed FD derivative: zero coupling and guard errors") {
    GridSpec g = grid1(0.02, 1.0);
    std::vector<SpaceTimeFn> f = {
        [](double t, const Vec& x) { return std::exp(-sq(x[0] - 0.4) / 0.02 - sq(t - 0.2) / 0.02); },
        [](double t, const Vec& x) { return std::exp(-sq(x[0] - 0.5) / 0.02 - sq(t - 0.25) / 0.02); },
        [](double t, const Vec& x) { return std::exp(-sq(x[0] - 0.6) / 0.02 - sq(t - 0.3) / 0.02); }};
    CoefficientSet free;
    STField z = fd_mixed_derivative(free, f, 1e-2, 3, g);
    REQUIRE(z.max_abs() < 1e-9);

    CoefficientSet cs;
    cs.q2 = [](double, const Vec&) { return 1.0; };
    REQUIRE_THROWS_AS(fd_mixed_derivative(cs, f, 1e-2, 2, g), PreconditionError);
    REQUIRE_THROWS_AS(fd_mixed_derivative(cs, f, 1e3, 3, g, 0.5), NumericError);
}

TEST_CASE("gauge transform preserves the solution on the vanishing set") {
    CoefficientSet tilde;
    tilde.q1 = [](double, const Vec&) { return 0.3; };
    tilde.q2 = [](double, const Vec&) { return 1.0; };
    tilde.F = [](double t, const Vec& x) { return 0.02 * std::sin(2.0 * M_PI * x[0]) * sq(std::sin(t)); };
    // phi: zero Cauchy data, compact in space, zero near x = 0 (the
    // measurement region).
    SpaceTimeFn phi = [](double t, const Vec& x) {
        double b = std::exp(-sq(x[0] - 0.5) / 0.005);
        return 0.01 * sq(std::sin(M_PI * t / 1.5)) * b;
    };
    GridSpec g = grid1(1.0 / 300, 1.5);
    std::vector<std::pair<double, Vec>> mv = {{0.5, Vec::Zero(1)}, {1.0, Vec::Zero(1)}};
    CoefficientSet cs = gauge_transform(tilde.q1, tilde.q2, tilde.F, phi, 1, mv);

    SpaceTimeFn f = [](double t, const Vec& x) {
        return 0.05 * std::exp(-sq(x[0] - 0.2) / 0.01) * sq(std::sin(3.0 * t));
    };
    STField u = solve_nonlinear_wave(cs, f, g).u;
    STField ut = solve_nonlinear_wave(tilde, f, g).u;
    // u = u~ - phi pointwise, to within the grid truncation of phi; the
    // natural scale is the larger of the field and gauge amplitudes.
    double scale = std::max(ut.max_abs(), 0.01), maxgap = 0.0;
    for (int it = 0; it < g.nt(); ++it)
        for (int i = 0; i < g.nodes(); ++i) {
            double expect = ut.at(it, i) - phi(it * g.dt, g.x_of(i));
            maxgap = std::max(maxgap, std::abs(u.at(it, i) - expect));
        }
    INFO("scale " << scale << " maxgap " << maxgap);
    REQUIRE(maxgap < 1e-3 * scale);

    // phi = 0 is the identity transform.
    SpaceTimeFn zero = [](double, const Vec&) { return 0.0; };
    CoefficientSet id = gauge_transform(tilde.q1, tilde.q2, tilde.F, zero, 1);
    Vec x(1);
    x << 0.37;
    REQUIRE(id.q1(0.4, x) == tilde.q1(0.4, x));
    REQUIRE(id.F(0.4, x) == tilde.F(0.4, x));

    // phi violating the vanishing set is rejected.
    REQUIRE_THROWS_AS(
        gauge_transform(tilde.q1, tilde.q2, tilde.F, phi, 1,
                        {{0.75, (Vec(1) << 0.5).finished()}}),
        PreconditionError);
}

TEST_CASE("third-order integral identity") {
    GridSpec g = grid1(1.0 / 150, 1.6);
    std::vector<SpaceTimeFn> f = {
        [](double t, const Vec& x) { return std::exp(-sq(x[0] - 0.35) / 0.02 - sq(t - 0.2) / 0.02); },
        [](double t, const Vec& x) { return std::exp(-sq(x[0] - 0.5) / 0.02 - sq(t - 0.25) / 0.02); },
        [](double t, const Vec& x) { return std::exp(-sq(x[0] - 0.65) / 0.02 - sq(t - 0.3) / 0.02); }};
    SpaceTimeFn f0 = [](double t, const Vec& x) {
        return std::exp(-sq(x[0] - 0.5) / 0.02 - sq(t - 1.3) / 0.02);
    };
    CoefficientSet a, b;
    a.q1 = [](double, const Vec&) { return 0.2; };
    a.q2 = [](double, const Vec&) { return 1.0; };
    b.q1 = a.q1;
    b.q2 = [](double, const Vec& x) { return 1.0 + 0.4 * std::exp(-sq(x[0] - 0.5) / 0.02); };

    SECTION("identical coefficient sets") {
        IdentityCheck ic = verify_integral_identity(a, a, f, f0, g);
        REQUIRE(ic.gap <= 1e-12 * (1.0 + ic.scale));
    }

    SECTION("distinct q2 pair") {
        IdentityCheck ic = verify_integral_identity(a, b, f, f0, g);
        INFO("lhs " << ic.lhs << " rhs " << ic.rhs);
        REQUIRE(ic.scale > 0.0);
        REQUIRE(ic.gap < 0.05 * ic.scale);
    }
}

TEST_CASE("field export layout") {
    GridSpec g = grid1(0.1, 0.5);
    STField f(g);
    for (size_t k = 0; k < f.a.size(); ++k) f.a[k] = (double)k;
    std::string path = "test_field_export.bin";
    f.save(path);
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    REQUIRE(header.find("beamlab-field d=1") == 0);
    std::vector<double> back(f.a.size());
    in.read(reinterpret_cast<char*>(back.data()), (std::streamsize)(back.size() * sizeof(double)));
    REQUIRE(in.gcount() == (std::streamsize)(back.size() * sizeof(double)));
    REQUIRE(back == f.a);
    std::remove(path.c_str());
}
