#include <catch2/catch_amalgamated.hpp>

#include "beamlab/fermi.hpp"

using namespace beamlab;

namespace {

Vec pt(std::initializer_list<double> v) {
    Vec x((int)v.size());
    int i = 0;
    for (double c : v) x[i++] = c;
    return x;
}

} // namespace

TEST_CASE("minkowski metric basics") {
    MetricField m = minkowski(4);
    Vec x = pt({0.3, -1.0, 2.0, 0.5});
    MetricEval me = metric_eval(m, x);
    REQUIRE(me.g(0, 0) == -1.0);
    REQUIRE(me.sqrt_abs_det == Catch::Approx(1.0));
    Christoffel ch = christoffel(m, x);
    for (int a = 0; a < 4; ++a) REQUIRE(ch.Gamma[a].cwiseAbs().maxCoeff() == 0.0);

    Vec u = pt({1.0, 1.0, 0.0, 0.0});
    REQUIRE(lorentz_inner(m, x, u, u) == Catch::Approx(0.0).margin(1e-15));
    Vec v = pt({1.0, 0.0, 0.0, 0.0});
    REQUIRE(lorentz_inner(m, x, v, v) == Catch::Approx(-1.0));
}

TEST_CASE("metric symmetry contract") {
    MetricField bad;
    bad.dim = 2;
    bad.g_eval = [](const Vec&) {
        Mat g(2, 2);
        g << -1.0, 0.1, 0.0, 1.0;
        return g;
    };
    REQUIRE_THROWS_AS(bad.g(pt({0.0, 0.0})), NumericError);
}

TEST_CASE("FD christoffel matches analytic on the bump metric") {
    MetricField an = gaussian_bump_metric(3, 0.2, 1.5);
    MetricField fd = an;
    fd.dg_eval = nullptr; // force central differences with step 1e-5
    Vec x = pt({0.1, 0.4, -0.3});
    Christoffel ca = christoffel(an, x);
    Christoffel cf = christoffel(fd, x);
    for (int a = 0; a < 3; ++a)
        REQUIRE((ca.Gamma[a] - cf.Gamma[a]).cwiseAbs().maxCoeff() < 1e-8);
    REQUIRE((ca.contracted - cf.contracted).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("wave operator on a quadratic in minkowski") {
    // u = t^2 - x^2: box u = -g^{ab} d2u = -(-1)*2 - (1)*(-2) = 4.
    MetricField m = minkowski(2);
    Vec x = pt({0.2, 0.7});
    Mat hess(2, 2);
    hess << 2.0, 0.0, 0.0, -2.0;
    Vec grad = pt({2.0 * x[0], -2.0 * x[1]});
    MetricEval me = metric_eval(m, x);
    double box = wave_operator<double>(me.g_inv, Vec::Zero(2), hess, grad);
    REQUIRE(box == Catch::Approx(4.0));
}

TEST_CASE("null geodesics in minkowski are straight lines") {
    MetricField m = minkowski(4);
    Vec p = pt({0.0, 0.0, 0.0, 0.0});
    Vec xi = pt({1.0, std::sqrt(0.5), std::sqrt(0.5), 0.0});
    NullGeodesic geo = integrate_null_geodesic(m, p, xi, -1.0, 2.0);
    for (double s : {-0.9, -0.25, 0.0, 0.7, 1.9}) {
        REQUIRE((geo.x(s) - (p + s * xi)).norm() < 1e-10);
        REQUIRE((geo.xdot(s) - xi).norm() < 1e-10);
    }
}

TEST_CASE("non-null initial velocity is rejected") {
    MetricField m = minkowski(3);
    REQUIRE_THROWS_AS(
        integrate_null_geodesic(m, pt({0, 0, 0}), pt({1.0, 0.5, 0.0}), -1.0, 1.0),
        PreconditionError);
}

TEST_CASE("null defect stays small along a curved geodesic") {
    MetricField m = gaussian_bump_metric(3, 0.15, 1.0);
    Vec p = pt({0.0, -0.5, 0.2});
    // Null direction at p for this metric: -t^2 + f |x'|^2 with f = g_11(p).
    double f = m.g(p)(1, 1);
    Vec xi = pt({std::sqrt(f), 1.0, 0.0});
    NullGeodesic geo = integrate_null_geodesic(m, p, xi, -0.8, 0.8);
    REQUIRE(null_defect(geo) < 1e-8);
}

TEST_CASE("geodesic box truncation flags") {
    MetricField m = minkowski(2);
    ChartBox box;
    box.lo = pt({-0.5, -0.5});
    box.hi = pt({0.5, 0.5});
    NullGeodesic geo = integrate_null_geodesic(m, pt({0, 0}), pt({1.0, 1.0}), -2.0, 2.0, 1e-10, box);
    REQUIRE(geo.truncated);
    REQUIRE(geo.s_b < 2.0);
}

TEST_CASE("null frame relations in minkowski") {
    MetricField m = minkowski(4);
    Vec p = Vec::Zero(4);
    Vec xi = pt({1.0, 0.6, 0.8, 0.0});
    NullGeodesic geo = integrate_null_geodesic(m, p, xi, -1.0, 1.0);
    NullFrame fr = build_null_frame_and_transport(m, geo);
    for (double s : {-1.0, -0.4, 0.0, 0.5, 1.0}) {
        REQUIRE(frame_defect(m, fr, s) < 1e-10);
        Mat E = fr.at(s);
        REQUIRE((E.col(0) - geo.xdot(s)).norm() < 1e-10); // e0 = velocity
    }
}

TEST_CASE("null frame transported along curved geodesic") {
    MetricField m = gaussian_bump_metric(4, 0.1, 1.2);
    Vec p = pt({0.0, -0.4, 0.3, 0.0});
    double f = m.g(p)(1, 1);
    Vec xi = pt({std::sqrt(f), 1.0, 0.0, 0.0});
    NullGeodesic geo = integrate_null_geodesic(m, p, xi, -0.6, 0.6);
    NullFrame fr = build_null_frame_and_transport(m, geo);
    for (double s : {-0.6, -0.2, 0.0, 0.3, 0.6})
        REQUIRE(frame_defect(m, fr, s) < 1e-8);
}

TEST_CASE("fermi chart roundtrip and axis metric, minkowski") {
    MetricField m = minkowski(3);
    Vec p = Vec::Zero(3);
    Vec xi = pt({1.0, 0.0, 1.0});
    NullGeodesic geo = integrate_null_geodesic(m, p, xi, -1.0, 1.0);
    NullFrame fr = build_null_frame_and_transport(m, geo);
    FermiChart chart = build_fermi_chart(m, geo, fr, 0.5);

    Vec z = pt({0.3, 0.1, -0.2});
    Vec x = chart.forward(z);
    REQUIRE((chart.inverse(x) - z).lpNorm<Eigen::Infinity>() < 1e-10);

    // Pulled-back metric on the axis: ds dz1 + dz1 ds cross block (chart
    // basis f1 = -e1/2) plus dz2^2; in particular g~^{11} = 0 on the axis
    // (the beam phase is null there) and grad z1 = the geodesic velocity.
    Vec axis = pt({0.2, 0.0, 0.0});
    Mat gt = chart.pullback_metric(axis);
    Mat expect = Mat::Zero(3, 3);
    expect(0, 1) = expect(1, 0) = 1.0;
    expect(2, 2) = 1.0;
    REQUIRE((gt - expect).cwiseAbs().maxCoeff() < 1e-8);
    REQUIRE(std::abs(chart.g11_inv(axis)) < 1e-8);
    REQUIRE(chart.riccati_D(0.2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fermi chart roundtrip on curved space") {
    MetricField m = gaussian_bump_metric(3, 0.1, 1.2);
    Vec p = pt({0.0, -0.3, 0.25});
    double f = m.g(p)(1, 1);
    Vec xi = pt({std::sqrt(f), 1.0, 0.0});
    NullGeodesic geo = integrate_null_geodesic(m, p, xi, -0.5, 0.5);
    NullFrame fr = build_null_frame_and_transport(m, geo);
    FermiChart chart = build_fermi_chart(m, geo, fr, 0.3);

    Vec z = pt({0.2, 0.05, -0.08});
    Vec x = chart.forward(z);
    REQUIRE((chart.inverse(x) - z).lpNorm<Eigen::Infinity>() < 1e-9);

    // On the axis the pulled-back metric keeps the canonical null form.
    Mat gt = chart.pullback_metric(pt({0.1, 0.0, 0.0}));
    Mat expect = Mat::Zero(3, 3);
    expect(0, 1) = expect(1, 0) = 1.0;
    expect(2, 2) = 1.0;
    REQUIRE((gt - expect).cwiseAbs().maxCoeff() < 1e-6);
    REQUIRE(std::abs(chart.g11_inv(pt({0.1, 0.0, 0.0}))) < 1e-6);
}
