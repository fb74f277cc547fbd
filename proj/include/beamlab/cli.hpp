#pragma once

// Scenario engine behind the beamlab command-line tool: JSON config
// validation (schemas with defaults and range checks), named experiment
// pipelines over the library modules, and deterministic report/CSV bundles.

#include "beamlab/recovery.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

namespace beamlab::cli {

using nlohmann::json;

inline const char* version() { return "1.0.0"; }

// ---------------------------------------------------------------------------
// Config schema and validation
// ---------------------------------------------------------------------------

struct ParamSpec {
    std::string key;
    enum Kind { Number, Int, NumberArray, Choice } kind = Number;
    json def;                          // default; never null (all params defaulted)
    double lo = -1e300, hi = 1e300;    // closed bounds unless *_open
    bool lo_open = false, hi_open = false;
    std::vector<std::string> choices;  // Choice kind
    std::string range_note;            // appended to range errors, e.g. "sigma in (0,1)"
};

inline const std::map<std::string, std::vector<ParamSpec>>& scenario_schema() {
    auto num = [](const char* k, double d, double lo, double hi, bool lo_open = false,
                  bool hi_open = false, const char* note = "") {
        return ParamSpec{k, ParamSpec::Number, json(d), lo, hi, lo_open, hi_open, {}, note};
    };
    auto iv = [](const char* k, int d, int lo, int hi) {
        return ParamSpec{k, ParamSpec::Int, json(d), (double)lo, (double)hi, false, false, {}, ""};
    };
    auto arr = [](const char* k, std::initializer_list<double> d, double lo, double hi,
                  bool lo_open = false, bool hi_open = false) {
        return ParamSpec{k, ParamSpec::NumberArray, json(std::vector<double>(d)),
                         lo, hi, lo_open, hi_open, {}, ""};
    };
    auto choice = [](const char* k, const char* d, std::vector<std::string> cs) {
        return ParamSpec{k, ParamSpec::Choice, json(d), 0, 0, false, false, std::move(cs), ""};
    };
    static const std::map<std::string, std::vector<ParamSpec>> schema = {
        {"beam-check",
         {num("Q", 0.3, -10, 10), arr("h_ladder", {0.04, 0.02, 0.01, 0.005}, 0, 1, true, true),
          iv("ns", 25, 5, 201), iv("nt", 48, 4, 501)}},
        {"riccati", {num("s_half", 1.0, 0, 4, true), iv("samples", 41, 5, 1001)}},
        {"kappa-sweep",
         {num("s0_min", -0.5, -1, 1), num("s0_max", 0.5, -1, 1),
          num("sigma_min", 0.05, 0, 1, true, true, "sigma in (0,1)"),
          num("sigma_max", 0.3, 0, 1, true, true, "sigma in (0,1)"), iv("points", 5, 2, 41)}},
        {"asymptotics",
         {num("s0", 0.0, -0.9, 0.9), iv("sign", 1, -1, 1),
          num("sigma_lo", 0.02, 0, 1, true, true, "sigma in (0,1)"),
          num("sigma_hi", 0.2, 0, 1, true, true, "sigma in (0,1)"), iv("points", 12, 5, 41)}},
        {"stationary-phase",
         {arr("gauss_h", {0.1, 0.01, 0.001}, 0, 1, true, true),
          arr("slope_h", {0.2, 0.1, 0.05, 0.025, 0.0125}, 0, 1, true, true),
          num("quad_tol", 1e-9, 0, 1e-2, true)}},
        {"interaction-check",
         {num("h", 0.02, 0, 1, true, true), iv("m", 33, 9, 101),
          arr("residual_h", {0.02, 0.012, 0.007}, 0, 1, true, true), iv("residual_m", 21, 9, 101)}},
        {"fd-linearize",
         {iv("nodes", 201, 51, 1001), num("eps", 0.01, 0, 1, true, true), num("T", 1.2, 0, 5, true)}},
        {"gauge-check", {iv("nodes", 300, 51, 2001), num("phi_amp", 0.01, 0, 1, true)}},
        {"identity-check",
         {iv("nodes", 150, 51, 1001), num("eps", 0.01, 0, 1, true, true),
          num("bump_amp", 0.4, 0, 2)}},
        {"recover-q2sq",
         {num("sigma", 0.1, 0, 1, true, true, "sigma in (0,1)"), num("s0", 0.0, -0.9, 0.9),
          arr("h_ladder", {0.04, 0.02, 0.01}, 0, 1, true, true),
          num("tol", 1e-3, 0, 0.1, true), choice("profile", "bump", {"bump", "constant"})}},
        {"recover-q2",
         {num("sigma", 0.1, 0, 1, true, true, "sigma in (0,1)"), num("h", 0.01, 0, 1, true, true),
          num("tol", 1e-3, 0, 0.1, true), num("q2", -1.0, -10, 10)}},
        {"recover-Q",
         {num("Q_const", 0.7, -10, 10), num("s_range", 0.8, 0, 0.95, true),
          arr("ds_ladder", {0.2, 0.1, 0.05}, 0, 1, true, true)}},
    };
    return schema;
}

struct ScenarioConfig {
    std::string scenario;
    json params;                       // fully defaulted and validated
    std::string out_dir;               // optional output directory from the config
    std::vector<std::string> notices;  // defaults that were filled in
};

namespace detail {

inline bool in_range(const ParamSpec& p, double v) {
    if (p.lo_open ? !(v > p.lo) : !(v >= p.lo)) return false;
    if (p.hi_open ? !(v < p.hi) : !(v <= p.hi)) return false;
    return true;
}

inline std::string range_text(const ParamSpec& p) {
    if (!p.range_note.empty()) return p.range_note;
    char b[96];
    std::snprintf(b, sizeof b, "range %c%g, %g%c", p.lo_open ? '(' : '[', p.lo, p.hi,
                  p.hi_open ? ')' : ']');
    return b;
}

} // namespace detail

inline ScenarioConfig validate_config(const json& root) {
    std::vector<std::string> errors;
    ScenarioConfig cfg;
    if (!root.is_object()) throw ConfigError("config: top level must be a JSON object");

    for (auto& [k, v] : root.items())
        if (k != "scenario" && k != "params" && k != "out")
            errors.push_back("unknown key \"" + k + "\"");
    if (!root.contains("scenario") || !root["scenario"].is_string()) {
        errors.push_back("scenario: required string, one of the documented scenario names");
    } else {
        cfg.scenario = root["scenario"].get<std::string>();
        if (!scenario_schema().count(cfg.scenario))
            errors.push_back("scenario: unknown scenario \"" + cfg.scenario + "\"");
    }
    if (root.contains("out")) {
        if (!root["out"].is_string())
            errors.push_back("out: must be a string path");
        else
            cfg.out_dir = root["out"].get<std::string>();
    }
    json params = root.value("params", json::object());
    if (!params.is_object()) {
        errors.push_back("params: must be an object");
        params = json::object();
    }

    if (errors.empty()) {
        const auto& specs = scenario_schema().at(cfg.scenario);
        for (auto& [k, v] : params.items()) {
            bool known = false;
            for (const auto& p : specs) known = known || (p.key == k);
            if (!known) errors.push_back("params: unknown key \"" + k + "\"");
        }
        for (const auto& p : specs) {
            if (!params.contains(p.key)) {
                cfg.params[p.key] = p.def;
                cfg.notices.push_back("params." + p.key + ": missing, using default " + p.def.dump());
                continue;
            }
            const json& v = params[p.key];
            switch (p.kind) {
                case ParamSpec::Number:
                case ParamSpec::Int: {
                    if (!v.is_number() || (p.kind == ParamSpec::Int && !v.is_number_integer())) {
                        errors.push_back("params." + p.key + ": expected " +
                                         (p.kind == ParamSpec::Int ? "integer" : "number"));
                        break;
                    }
                    double d = v.get<double>();
                    if (!detail::in_range(p, d))
                        errors.push_back("params." + p.key + ": value " + v.dump() + " outside " +
                                         detail::range_text(p));
                    else
                        cfg.params[p.key] = v;
                    break;
                }
                case ParamSpec::NumberArray: {
                    bool ok = v.is_array() && v.size() >= 2;
                    if (ok)
                        for (const auto& e : v) ok = ok && e.is_number();
                    if (!ok) {
                        errors.push_back("params." + p.key + ": expected an array of >= 2 numbers");
                        break;
                    }
                    for (const auto& e : v)
                        if (!detail::in_range(p, e.get<double>()))
                            errors.push_back("params." + p.key + ": element " + e.dump() +
                                             " outside " + detail::range_text(p));
                    cfg.params[p.key] = v;
                    break;
                }
                case ParamSpec::Choice: {
                    bool ok = v.is_string();
                    if (ok) {
                        ok = false;
                        for (const auto& c : p.choices) ok = ok || (c == v.get<std::string>());
                    }
                    if (!ok) {
                        std::string cs;
                        for (const auto& c : p.choices) cs += (cs.empty() ? "" : ", ") + c;
                        errors.push_back("params." + p.key + ": expected one of {" + cs + "}");
                    } else {
                        cfg.params[p.key] = v;
                    }
                    break;
                }
            }
        }
    }
    if (!errors.empty()) {
        std::string msg = "config validation failed:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return cfg;
}

// Parse + validate; parse errors are reported with line/column.
inline ScenarioConfig validate_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        size_t line = 1, col = 1;
        for (size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError("config: JSON parse error at line " + std::to_string(line) + ", column " +
                          std::to_string(col) + ": " + e.what());
    }
    return validate_config(root);
}

// ---------------------------------------------------------------------------
// Report plumbing
// ---------------------------------------------------------------------------

struct ReportBundle {
    json report;                           // deterministic numeric results
    json meta;                             // version, wall time, parameter echo
    std::map<std::string, std::string> csv; // file name -> contents
    bool passed = true;
};

namespace detail {

inline std::string fmt(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

// Assertion collector: every scenario check lands in the report with its
// bound, and the bundle's pass flag aggregates them.
struct Checks {
    json items = json::array();
    bool ok = true;

    void record(const std::string& name, double value, const std::string& cmp, double bound,
                bool pass) {
        items.push_back({{"name", name}, {"value", value}, {"bound", bound}, {"cmp", cmp},
                         {"pass", pass}});
        ok = ok && pass;
    }
    void le(const std::string& name, double value, double bound) {
        record(name, value, "<=", bound, value <= bound);
    }
    void ge(const std::string& name, double value, double bound) {
        record(name, value, ">=", bound, value >= bound);
    }
    void within(const std::string& name, double value, double target, double tol) {
        record(name, value, "within " + fmt(tol) + " of " + fmt(target), target,
               std::abs(value - target) <= tol);
    }
    void is_true(const std::string& name, bool pass) { record(name, pass ? 1.0 : 0.0, "==", 1.0, pass); }
};

struct CsvTable {
    std::string header;
    std::string body;
    explicit CsvTable(std::string h) : header(std::move(h)) {}
    void row(std::initializer_list<double> vals) {
        std::string r;
        for (double v : vals) r += (r.empty() ? "" : ",") + fmt(v);
        body += r + "\n";
    }
    std::string str() const { return header + "\n" + body; }
};

// Index-ordered parallel map with deterministic aggregation.
template <typename F>
void parallel_for(int jobs, int n, F&& f) {
    if (jobs <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errs(n);
    auto worker = [&] {
        int i;
        while ((i = next.fetch_add(1)) < n) {
            try {
                f(i);
            } catch (...) {
                errs[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> ws;
    for (int w = 0; w < std::min(jobs, n); ++w) ws.emplace_back(worker);
    for (auto& t : ws) t.join();
    for (int i = 0; i < n; ++i)
        if (errs[i]) std::rethrow_exception(errs[i]); // first failure by index: deterministic
}

// Flat beam rig along (1, 0, .., 1) in 1+d Minkowski (shared by scenarios).
struct FlatRig {
    MetricField metric;
    FermiChart chart;
    std::shared_ptr<RiccatiSolution> ric;
};

inline FlatRig flat_rig(int dim) {
    FlatRig r;
    r.metric = minkowski(dim);
    Vec xi = Vec::Zero(dim);
    xi[0] = 1.0;
    xi[dim - 1] = 1.0;
    NullGeodesic geo = integrate_null_geodesic(r.metric, Vec::Zero(dim), xi, -1.0, 1.0);
    NullFrame fr = build_null_frame_and_transport(r.metric, geo);
    r.chart = build_fermi_chart(r.metric, geo, fr, 0.5);
    CMat H0 = cplx(0.0, 0.5) * CMat::Identity(dim - 1, dim - 1);
    r.ric = std::make_shared<RiccatiSolution>(solve_riccati(r.chart, H0, -1.0, 1.0, 0.0));
    return r;
}

inline FormalBeam ibeam(const MetricField& m, const Vec& xi, double kappa, bool conj, double h) {
    NullGeodesic geo = integrate_null_geodesic(m, Vec::Zero(m.dim), xi, -1.0, 1.0);
    NullFrame fr = build_null_frame_and_transport(m, geo);
    FermiChart chart = build_fermi_chart(m, geo, fr, 0.5);
    CMat H0 = cplx(0.0, 0.5) * CMat::Identity(m.dim - 1, m.dim - 1);
    auto ric = std::make_shared<RiccatiSolution>(solve_riccati(chart, H0, -1.0, 1.0, 0.0));
    auto zero = [](double) { return cplx(0.0); };
    BeamAmplitude amp;
    amp.a0 = leading_amplitude(*ric);
    amp.a1 = subleading_amplitude(*ric, zero, zero, 101);
    amp.K = 0;
    amp.delta = 0.5;
    return assemble_formal_beam(make_beam_phase(chart, ric), amp, h, kappa, conj);
}

inline GridSpec grid1(double dx, double T) {
    GridSpec g;
    g.d = 1;
    g.lo = Vec::Constant(1, 0.0);
    g.hi = Vec::Constant(1, 1.0);
    g.dx = dx;
    g.dt = 0.45 * dx;
    g.T = T;
    return g;
}

inline double sq(double v) { return v * v; }

} // namespace detail

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

namespace scenarios {

using detail::Checks;
using detail::CsvTable;

inline void beam_check(const ScenarioConfig& cfg, int jobs, ReportBundle& out, Checks& ck) {
    double Qv = cfg.params["Q"].get<double>();
    std::vector<double> hs = cfg.params["h_ladder"].get<std::vector<double>>();
    int ns = cfg.params["ns"].get<int>(), nt = cfg.params["nt"].get<int>();

    detail::FlatRig rig = detail::flat_rig(3);
    auto zero = [](double) { return cplx(0.0); };
    BeamAmplitude amp;
    amp.a0 = leading_amplitude(*rig.ric);
    amp.a1 = subleading_amplitude(*rig.ric, zero, [Qv](double) { return cplx(Qv); });
    amp.K = 1;
    amp.delta = 0.5;
    auto Qf = [Qv](const Vec&) { return Qv; };

    std::vector<double> norms(hs.size()), sups(hs.size());
    detail::parallel_for(jobs, (int)hs.size(), [&](int i) {
        FormalBeam b = assemble_formal_beam(make_beam_phase(rig.chart, rig.ric), amp, hs[i], 1.0,
                                            false);
        BeamResidualNorm rn = beam_residual_norm(b, Qf, 0, ns, nt);
        norms[i] = rn.value;
        sups[i] = rn.sup_beam;
    });
    SlopeFit fit = fit_loglog(hs, norms);
    double smin = *std::min_element(sups.begin(), sups.end());
    double smax = *std::max_element(sups.begin(), sups.end());

    CsvTable t("h,residual,sup_beam");
    for (size_t i = 0; i < hs.size(); ++i) t.row({hs[i], norms[i], sups[i]});
    out.csv["residuals.csv"] = t.str();
    out.report["residual_slope"] = fit.slope;
    out.report["sup_variation"] = (smax - smin) / smax;
    ck.ge("residual_slope", fit.slope, 0.15);
    ck.le("sup_variation", (smax - smin) / smax, 0.05);
}

inline void riccati(const ScenarioConfig& cfg, int, ReportBundle& out, Checks& ck) {
    double sh = cfg.params["s_half"].get<double>();
    int samples = cfg.params["samples"].get<int>();

    detail::FlatRig rig = detail::flat_rig(4); // n = 3, C = diag(0,2,2), det Y = (1+is)^2
    LeadingAmplitude a0 = leading_amplitude(*rig.ric);
    double errH = 0.0, errdet = 0.0, erra0 = 0.0, res = 0.0, min_im = 1e300;
    CsvTable t("s,errH,errdet,erra0");
    for (int i = 0; i < samples; ++i) {
        double s = -sh + 2.0 * sh * i / (samples - 1);
        cplx ys = cplx(1.0, s);
        CMat Hc = CMat::Zero(3, 3);
        Hc(0, 0) = cplx(0.0, 0.5);
        Hc(1, 1) = Hc(2, 2) = cplx(0.0, 0.5) / ys;
        CMat H = rig.ric->H(s);
        double eH = (H - Hc).norm();
        double ed = std::abs(std::norm(rig.ric->detY(s)) - detail::sq(1.0 + s * s)) /
                    detail::sq(1.0 + s * s);
        double ea = std::abs(a0(s) - 1.0 / ys);
        errH = std::max(errH, eH);
        errdet = std::max(errdet, ed);
        erra0 = std::max(erra0, ea);
        res = std::max(res, riccati_residual(*rig.ric, s));
        Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (H - H.adjoint()) / cplx(0, 1));
        min_im = std::min(min_im, es.eigenvalues().minCoeff());
        t.row({s, eH, ed, ea});
    }
    out.csv["riccati.csv"] = t.str();
    out.report["max_H_error"] = errH;
    out.report["max_det_identity_error"] = errdet;
    out.report["max_a0_error"] = erra0;
    out.report["max_riccati_residual"] = res;
    out.report["min_imH_eigenvalue"] = min_im;
    ck.le("max_H_error", errH, 1e-9);
    ck.le("max_det_identity_error", errdet, 1e-8);
    ck.le("max_a0_error", erra0, 1e-8);
    ck.le("max_riccati_residual", res, 1e-4); // FD-differentiated H: step-limited
    ck.ge("min_imH_eigenvalue", min_im, 1e-12);
}

inline void kappa_sweep(const ScenarioConfig& cfg, int, ReportBundle& out, Checks& ck) {
    double s0a = cfg.params["s0_min"].get<double>(), s0b = cfg.params["s0_max"].get<double>();
    double sga = cfg.params["sigma_min"].get<double>(), sgb = cfg.params["sigma_max"].get<double>();
    int pts = cfg.params["points"].get<int>();
    if (s0b <= s0a || sgb <= sga) throw ConfigError("kappa-sweep: empty parameter rectangle");

    double maxres = 0.0, maxdiff = 0.0;
    CsvTable t("s0,sigma,variant,residual,closed_form_gap");
    for (int i = 0; i < pts; ++i)
        for (int j = 0; j < pts; ++j) {
            double s0 = s0a + (s0b - s0a) * i / (pts - 1);
            double sg = sga + (sgb - sga) * j / (pts - 1);
            XiFamily f = build_xi(s0, sg, +1, 4);
            for (KappaVariant v : {KappaVariant::Four, KappaVariant::Five}) {
                KappaSolution sol = solve_kappa(f, v);
                KappaSolution cf = kappa_closed_form(s0, sg, +1, v, false);
                double d = 0.0;
                for (int w = 0; w < 5; ++w) d = std::max(d, std::abs(sol.w[w] - cf.w[w]));
                maxres = std::max(maxres, sol.residual);
                maxdiff = std::max(maxdiff, d);
                t.row({s0, sg, v == KappaVariant::Five ? 5.0 : 4.0, sol.residual, d});
            }
        }
    out.csv["kappa.csv"] = t.str();
    out.report["max_dependence_residual"] = maxres;
    out.report["max_closed_form_gap"] = maxdiff;
    ck.le("max_dependence_residual", maxres, 1e-12);
    ck.le("max_closed_form_gap", maxdiff, 1e-9);
}

inline void asymptotics(const ScenarioConfig& cfg, int, ReportBundle& out, Checks& ck) {
    double s0 = cfg.params["s0"].get<double>();
    int sign = cfg.params["sign"].get<int>();
    if (sign != 1 && sign != -1) throw ConfigError("asymptotics: sign must be +-1");
    double lo = cfg.params["sigma_lo"].get<double>(), hi = cfg.params["sigma_hi"].get<double>();
    int pts = cfg.params["points"].get<int>();
    std::vector<double> grid = sigma_sweep_grid(pts, lo, hi);

    std::vector<std::pair<double, double>> sharp_sum, xi24, ups24, ups_full;
    double kappa1_corr = 0.0;
    CsvTable t("sigma,psi_sharp_sum,xi24_inner,upsilon24,upsilon_full");
    for (double sg : grid) {
        XiFamily f = build_xi(s0, sg, sign, 4);
        KappaSolution k4 = solve_kappa(f, KappaVariant::Four);
        KappaSolution k5 = solve_kappa(f, KappaVariant::Five);
        double S = (pair_sharp(f, k4, 1, 2) + pair_sharp(f, k4, 1, 3) + pair_sharp(f, k4, 2, 3))
                       .real();
        double ip24 = f.inner(2, 4);
        double u24 = pair_sharp(f, k5, 2, 4).real();
        auto tri = [&](int a, int b, int c) {
            double ip = 2.0 * (k5.w[a] * k5.w[b] * f.inner(a, b) +
                               k5.w[a] * k5.w[c] * f.inner(a, c) +
                               k5.w[b] * k5.w[c] * f.inner(b, c));
            return 1.0 / ip;
        };
        auto pr = [&](int a, int b) { return pair_sharp(f, k5, a, b).real(); };
        double full = tri(2, 3, 4) * (pr(2, 3) + pr(2, 4) + pr(3, 4)) +
                      tri(1, 3, 4) * (pr(1, 3) + pr(1, 4) + pr(3, 4)) +
                      tri(1, 2, 4) * (pr(1, 2) + pr(1, 4) + pr(2, 4)) +
                      tri(1, 2, 3) * (pr(1, 2) + pr(1, 3) + pr(2, 3)) +
                      pr(1, 4) * pr(2, 3) + pr(2, 4) * pr(1, 3) + pr(3, 4) * pr(1, 2);
        sharp_sum.push_back({sg, S});
        xi24.push_back({sg, ip24});
        ups24.push_back({sg, u24});
        ups_full.push_back({sg, full});
        t.row({sg, S, ip24, u24, full});
        if (sg == grid.front())
            kappa1_corr = (k4.w[1] + 2.0 * (1.0 - s0)) / (sg * sg);
    }
    out.csv["asymptotics.csv"] = t.str();

    ExponentFit fS = fit_exponent(sharp_sum);
    ExponentFit f24 = fit_exponent(xi24);
    ExponentFit fu = fit_exponent(ups24);
    ExponentFit ff = fit_exponent(ups_full);
    double b = 1.0 - s0;
    out.report["psi_sharp_sum"] = {{"exponent", fS.exponent}, {"coefficient", fS.coefficient},
                                   {"r2", fS.r2}};
    out.report["xi24_inner"] = {{"exponent", f24.exponent}, {"coefficient", f24.coefficient}};
    out.report["upsilon24"] = {{"exponent", fu.exponent}};
    out.report["upsilon_full"] = {{"exponent", ff.exponent}};
    out.report["kappa1_correction"] = kappa1_corr;

    // Measured laws (the sharp-sum decay is sigma^-2 with coefficient
    // 3/(4 b^2); see the unit suite for the derivation cross-checks). The
    // coefficient is read off at the smallest sigma: the global fit absorbs
    // O(sigma) corrections over the sweep window.
    double coeff0 = std::abs(sharp_sum.front().second) * detail::sq(grid.front());
    ck.within("psi_sharp_sum_exponent", fS.exponent, -2.0, 0.1);
    ck.within("psi_sharp_sum_coefficient", coeff0, 0.75 / (b * b), 0.02 * 0.75 / (b * b));
    ck.within("xi24_exponent", f24.exponent, 6.0, 0.1);
    ck.within("xi24_coefficient", f24.coefficient, 0.125, 0.0125);
    ck.within("upsilon24_exponent", fu.exponent, -8.0, 0.15);
    ck.within("upsilon_full_exponent", ff.exponent, -10.0, 0.2);
    ck.within("kappa1_correction", kappa1_corr, 0.5 * (3.0 - s0), 0.02 * 0.5 * (3.0 - s0));
}

inline void stationary_phase(const ScenarioConfig& cfg, int jobs, ReportBundle& out, Checks& ck) {
    std::vector<double> gh = cfg.params["gauss_h"].get<std::vector<double>>();
    std::vector<double> sh = cfg.params["slope_h"].get<std::vector<double>>();
    double tol = cfg.params["quad_tol"].get<double>();

    // Gaussian phase, unit amplitude: the leading term is exact up to the
    // exponentially small box truncation.
    std::vector<double> gerr(gh.size());
    detail::parallel_for(jobs, (int)gh.size(), [&](int i) {
        OscillatoryIntegral in;
        in.d = 1;
        in.h = gh[i];
        in.phase = [](const Vec& x) { return cplx(0.0, 0.5 * x[0] * x[0]); };
        in.phase_hess = [](const Vec&) {
            CMat H(1, 1);
            H(0, 0) = cplx(0.0, 1.0);
            return H;
        };
        in.amplitude = [](const Vec&) { return cplx(1.0); };
        in.x0 = Vec::Zero(1);
        in.box_lo = Vec::Constant(1, -8.0);
        in.box_hi = Vec::Constant(1, 8.0);
        cplx lead = stationary_phase_leading(in);
        gerr[i] = std::abs(oscillatory_quadrature(in, tol) - lead) / std::abs(lead);
    });
    double gmax = *std::max_element(gerr.begin(), gerr.end());

    // C-infinity bump amplitude: anything less smooth leaks boundary terms
    // that flatten the O(h) remainder slope.
    auto bump = [](double r) -> cplx {
        if (r >= 1.0) return 0.0;
        return std::exp(-1.0 / (1.0 - r * r) + 1.0);
    };

    // Fresnel (real quadratic phase, compact smooth amplitude): O(h) remainder.
    auto fresnel = [bump](double h) {
        OscillatoryIntegral in;
        in.d = 1;
        in.h = h;
        in.phase = [](const Vec& x) { return cplx(0.5 * x[0] * x[0], 0.0); };
        in.phase_hess = [](const Vec&) {
            CMat H(1, 1);
            H(0, 0) = 1.0;
            return H;
        };
        in.amplitude = [bump](const Vec& x) { return bump(std::abs(x[0]) / 0.5); };
        in.x0 = Vec::Zero(1);
        in.box_lo = Vec::Constant(1, -0.5);
        in.box_hi = Vec::Constant(1, 0.5);
        return in;
    };
    SlopeFit fr = sp_error_slope(fresnel, sh, tol);

    // 3-D complex phase with a real off-diagonal part.
    auto complex3 = [bump](double h) {
        OscillatoryIntegral in;
        in.d = 3;
        in.h = h;
        CMat A = cplx(0.0, 1.0) * CMat::Identity(3, 3);
        A(0, 1) = A(1, 0) = 0.3;
        A(1, 2) = A(2, 1) = -0.2;
        in.phase = [A](const Vec& x) {
            return 0.5 * (x.cast<cplx>().transpose() * A * x.cast<cplx>())(0, 0);
        };
        in.phase_hess = [A](const Vec&) { return A; };
        in.amplitude = [bump](const Vec& x) { return bump(x.norm() / 0.5); };
        in.x0 = Vec::Zero(3);
        in.box_lo = Vec::Constant(3, -0.5);
        in.box_hi = Vec::Constant(3, 0.5);
        return in;
    };
    std::vector<double> sh3(sh.begin(), sh.begin() + std::min<size_t>(sh.size(), 4));
    SlopeFit c3 = sp_error_slope(complex3, sh3, std::max(tol, 1e-7));

    CsvTable t("h,gauss_rel_error");
    for (size_t i = 0; i < gh.size(); ++i) t.row({gh[i], gerr[i]});
    out.csv["stationary_phase.csv"] = t.str();
    out.report["gauss_max_rel_error"] = gmax;
    out.report["fresnel_slope"] = fr.slope;
    out.report["complex3_slope"] = c3.slope;
    ck.le("gauss_max_rel_error", gmax, 1e-8);
    ck.ge("fresnel_slope", fr.slope, 0.9);
    ck.ge("complex3_slope", c3.slope, 0.9);
}

inline void interaction_check(const ScenarioConfig& cfg, int jobs, ReportBundle& out, Checks& ck) {
    double h = cfg.params["h"].get<double>();
    int m = cfg.params["m"].get<int>();
    std::vector<double> rhs = cfg.params["residual_h"].get<std::vector<double>>();
    int rm = cfg.params["residual_m"].get<int>();

    MetricField mk = minkowski(3);
    Vec d1(3), d2(3);
    d1 << 1, 0, 1;
    d2 << 1, 0, -1;
    FormalBeam b1 = detail::ibeam(mk, d1, 1.0, false, h);
    FormalBeam b2 = detail::ibeam(mk, d2, 1.0, false, h);
    Vec p0 = Vec::Zero(3);

    ScalarField b0 = [](const Vec& x) { return std::exp(cplx(0.3 * x[0] - 0.2 * x[1] + 0.1 * x[2])); };
    ScalarField b1f = [](const Vec& x) { return cplx(std::cos(x[0] + 0.5 * x[1]), 0.1 * x[2]); };
    ScalarField q = [](const Vec& x) { return cplx(1.0 + 0.3 * x[2]); };
    auto Q = [](const Vec& x) { return 0.4 - 0.1 * x[0]; };

    // Defining relations on the standard box.
    double dp = 0.3;
    CombinedPhase cp = combine_phases({&b1, &b2}, mk, p0, dp);
    InteractionExpansion ex = c_coefficients(cp, b0, b1f, q, Q, dp);
    double rel2 = 0.0, rel3 = 0.0;
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(-cp.box_half, cp.box_half);
    for (int i = 0; i < 20; ++i) {
        Vec x = p0;
        for (int a = 0; a < 3; ++a) x[a] += u(rng);
        cplx ip = cp.ip_grad(x);
        rel2 = std::max(rel2, std::abs(ex.c2(x) * ip + q(x) * b0(x)));
        CVec dc2 = beamlab::detail::fd_gradient(ex.c2, x, ex.fd_step);
        rel3 = std::max(rel3, std::abs(ip * ex.c3(x) + q(x) * b1f(x) +
                                       I_UNIT * cp.box_psi(x) * ex.c2(x) -
                                       2.0 * I_UNIT * cp.ip_with(x, dc2)));
    }

    // Grid recursion vs closed-form c3 on a small box (grid-FD truncation
    // scales with the squared step).
    double dps = 0.05;
    CombinedPhase cps = combine_phases({&b1, &b2}, mk, p0, dps);
    ScalarField b2f = [](const Vec&) { return cplx(0.0); };
    InteractionExpansion exs = c_coefficients(cps, b0, b1f, q, Q, dps);
    std::vector<GridField> c = c_recursion(cps, {b0, b1f, b2f}, 1, q, Q, m);
    double scale = 0.0, maxdiff = 0.0;
    for (long f = 0; f < c[1].size(); ++f) {
        if (f % 2 != 0) continue;
        if (!c[1].interior(f, 2)) continue;
        cplx closed = exs.c3(c[1].node(f));
        scale = std::max(scale, std::abs(closed));
        maxdiff = std::max(maxdiff, std::abs(c[1].v[f] - closed));
    }

    // Residual decay of the truncated expansion.
    double dpr = 1.0;
    CombinedPhase cpr = combine_phases({&b1, &b2}, mk, p0, dpr);
    ScalarField b0r = [](const Vec& x) { return std::exp(cplx(0.2 * x[0] + 0.1 * x[1] - 0.15 * x[2])); };
    ScalarField b1r = [](const Vec& x) { return cplx(0.5 + 0.15 * x[0]); };
    ScalarField qr = [](const Vec&) { return cplx(1.0); };
    auto Qr = [](const Vec& x) { return 0.3 + 0.1 * x[2]; };
    InteractionExpansion exr = c_coefficients(cpr, b0r, b1r, qr, Qr, dpr);
    std::vector<double> res(rhs.size());
    detail::parallel_for(jobs, (int)rhs.size(), [&](int i) {
        res[i] = interaction_residual(exr, Qr, rhs[i], rm).residual;
    });
    SlopeFit fit = fit_loglog(rhs, res);

    CsvTable t("h,residual");
    for (size_t i = 0; i < rhs.size(); ++i) t.row({rhs[i], res[i]});
    out.csv["interaction_residual.csv"] = t.str();
    out.report["c2_relation_max"] = rel2;
    out.report["c3_relation_max"] = rel3;
    out.report["recursion_gap"] = maxdiff;
    out.report["recursion_scale"] = scale;
    out.report["residual_slope"] = fit.slope;
    ck.le("c2_relation_max", rel2, 1e-10);
    ck.le("c3_relation_max", rel3, 1e-10);
    ck.le("recursion_gap", maxdiff, 1e-6 * scale);
    ck.ge("residual_slope", fit.slope, 2.5);
}

inline void fd_linearize(const ScenarioConfig& cfg, int, ReportBundle& out, Checks& ck) {
    int nodes = cfg.params["nodes"].get<int>();
    double eps = cfg.params["eps"].get<double>();
    double T = cfg.params["T"].get<double>();
    GridSpec g = detail::grid1(1.0 / (nodes - 1), T);

    CoefficientSet cs;
    cs.q2 = [](double, const Vec& x) { return 1.0 + 0.2 * std::sin(2.0 * M_PI * x[0]); };
    auto gsrc = [](double x0, double t0) {
        return SpaceTimeFn([x0, t0](double t, const Vec& x) {
            return std::exp(-detail::sq(x[0] - x0) / 0.02 - detail::sq(t - t0) / 0.02);
        });
    };
    std::vector<SpaceTimeFn> f3 = {gsrc(0.3, 0.2), gsrc(0.5, 0.25), gsrc(0.7, 0.3)};
    std::vector<SpaceTimeFn> f4 = {gsrc(0.3, 0.2), gsrc(0.5, 0.25), gsrc(0.7, 0.3),
                                   gsrc(0.45, 0.22)};

    LinearizedChain ch3 = solve_linearized_chain(cs, f3, g);
    STField d3 = fd_mixed_derivative(cs, f3, eps, 3, g);
    STField diff3(g);
    for (size_t k = 0; k < diff3.a.size(); ++k) diff3.a[k] = d3.a[k] - ch3.w3[0].a[k];
    double rel3 = st_l2(diff3) / st_l2(ch3.w3[0]);

    LinearizedChain ch4 = solve_linearized_chain(cs, f4, g);
    STField d4 = fd_mixed_derivative(cs, f4, eps, 4, g);
    STField diff4(g);
    for (size_t k = 0; k < diff4.a.size(); ++k) diff4.a[k] = d4.a[k] - ch4.w4.a[k];
    double rel4 = st_l2(diff4) / st_l2(ch4.w4);

    out.report["rel_error_order3"] = rel3;
    out.report["rel_error_order4"] = rel4;
    ck.le("rel_error_order3", rel3, 0.05);
    ck.le("rel_error_order4", rel4, 0.08);
}

inline void gauge_check(const ScenarioConfig& cfg, int, ReportBundle& out, Checks& ck) {
    int nodes = cfg.params["nodes"].get<int>();
    double amp = cfg.params["phi_amp"].get<double>();
    GridSpec g = detail::grid1(1.0 / (nodes - 1), 1.5);

    CoefficientSet tilde;
    tilde.q1 = [](double, const Vec&) { return 0.3; };
    tilde.q2 = [](double, const Vec&) { return 1.0; };
    tilde.F = [](double t, const Vec& x) {
        return 0.02 * std::sin(2.0 * M_PI * x[0]) * detail::sq(std::sin(t));
    };
    SpaceTimeFn phi = [amp](double t, const Vec& x) {
        return amp * detail::sq(std::sin(M_PI * t / 1.5)) * std::exp(-detail::sq(x[0] - 0.5) / 0.005);
    };
    CoefficientSet plain = gauge_transform(tilde.q1, tilde.q2, tilde.F, phi, 1);
    SpaceTimeFn f = [](double t, const Vec& x) {
        return 0.05 * std::exp(-detail::sq(x[0] - 0.2) / 0.01) * detail::sq(std::sin(3.0 * t));
    };
    STField u = solve_nonlinear_wave(plain, f, g).u;
    STField ut = solve_nonlinear_wave(tilde, f, g).u;

    // U: the measurement region, where phi vanishes to machine precision.
    double num = 0.0, den = 0.0, maxgap = 0.0;
    for (int it = 0; it < g.nt(); ++it)
        for (int i = 0; i < g.nodes(); ++i) {
            Vec x = g.x_of(i);
            double gap = u.at(it, i) - (ut.at(it, i) - phi(it * g.dt, x));
            maxgap = std::max(maxgap, std::abs(gap));
            if (std::abs(x[0] - 0.5) > 0.3) {
                num += detail::sq(u.at(it, i) - ut.at(it, i));
                den += detail::sq(u.at(it, i));
            }
        }
    double relU = std::sqrt(num) / std::sqrt(std::max(den, 1e-300));
    double scale = std::max(ut.max_abs(), amp);
    out.report["rel_error_on_U"] = relU;
    out.report["off_U_identity_gap"] = maxgap / scale;
    ck.le("rel_error_on_U", relU, 1e-3);
    ck.le("off_U_identity_gap", maxgap / scale, 1e-3);
}

inline void identity_check(const ScenarioConfig& cfg, int, ReportBundle& out, Checks& ck) {
    int nodes = cfg.params["nodes"].get<int>();
    double eps = cfg.params["eps"].get<double>();
    double bamp = cfg.params["bump_amp"].get<double>();
    GridSpec g = detail::grid1(1.0 / (nodes - 1), 1.6);

    auto gsrc = [](double x0, double t0) {
        return SpaceTimeFn([x0, t0](double t, const Vec& x) {
            return std::exp(-detail::sq(x[0] - x0) / 0.02 - detail::sq(t - t0) / 0.02);
        });
    };
    std::vector<SpaceTimeFn> f = {gsrc(0.3, 0.2), gsrc(0.5, 0.25), gsrc(0.7, 0.3)};
    SpaceTimeFn f0 = gsrc(0.5, 1.3);
    CoefficientSet a;
    a.q1 = [](double, const Vec&) { return 0.2; };
    a.q2 = [](double, const Vec&) { return 1.0; };
    CoefficientSet b;
    b.q1 = a.q1;
    b.q2 = [bamp](double, const Vec& x) {
        return 1.0 + bamp * std::exp(-detail::sq(x[0] - 0.5) / 0.02);
    };

    IdentityCheck generic = verify_integral_identity(a, b, f, f0, g, eps);
    IdentityCheck same = verify_integral_identity(a, a, f, f0, g, eps);
    double rel = std::abs(generic.gap) / std::max(generic.scale, 1e-300);
    out.report["generic_rel_gap"] = rel;
    out.report["identical_gap"] = same.gap;
    out.report["scale"] = generic.scale;
    ck.le("generic_rel_gap", rel, 0.05);
    ck.le("identical_gap", std::abs(same.gap), 1e-12 * (1.0 + same.scale));
}

inline void recover_q2sq_scenario(const ScenarioConfig& cfg, int jobs, ReportBundle& out,
                                  Checks& ck) {
    double sigma = cfg.params["sigma"].get<double>();
    double s0 = cfg.params["s0"].get<double>();
    std::vector<double> hs = cfg.params["h_ladder"].get<std::vector<double>>();
    double tol = cfg.params["tol"].get<double>();
    bool is_bump = cfg.params["profile"].get<std::string>() == "bump";

    RealField q2;
    if (is_bump) {
        q2 = [](const Vec& x) {
            double u = (x[1] - x[0]) / std::sqrt(2.0);
            return 1.0 + 0.5 * std::exp(-(u * u + x[2] * x[2]) / 0.25);
        };
    } else {
        q2 = [](const Vec&) { return 1.0; };
    }
    double truth = detail::sq(q2(Vec::Zero(3)));

    std::vector<double> est(hs.size()), err(hs.size());
    std::vector<cplx> i0(hs.size());
    detail::parallel_for(jobs, (int)hs.size(), [&](int i) {
        EnsembleConfig ec;
        ec.sigma = sigma;
        ec.s0 = s0;
        ec.h = hs[i];
        BeamEnsemble ens = make_ensemble(ec);
        i0[i] = assemble_I0(ens, q2, tol);
        Q2sqEstimate e = recover_q2sq(i0[i], ens, q2, tol, Normalization::Calibrated);
        est[i] = e.value;
        err[i] = std::abs(e.value - truth) / truth;
    });
    // Diagnostic: the frozen-amplitude quadratic-phase model normalizer,
    // reusing the finest assembled I0. The soft eigendirection of Im Hpsi
    // (~ sigma^2) spans the whole box, so this model, like the closed-form
    // stationary-phase factor, sits far below the calibrated reference at
    // practical h; it is reported, not gated.
    EnsembleConfig ec;
    ec.sigma = sigma;
    ec.s0 = s0;
    ec.h = hs.back();
    BeamEnsemble ens = make_ensemble(ec);
    Q2sqEstimate gb = recover_q2sq(i0.back(), ens, q2, tol, Normalization::GaussianBox);
    SlopeFit fit = fit_loglog(hs, err.back() > 1e-14 ? err : std::vector<double>(hs.size(), 1e-15));

    CsvTable t("h,estimate,rel_error");
    for (size_t i = 0; i < hs.size(); ++i) t.row({hs[i], est[i], err[i]});
    out.csv["ladder.csv"] = t.str();
    out.report["truth"] = truth;
    out.report["estimates"] = est;
    out.report["rel_errors"] = err;
    out.report["h_slope"] = fit.slope;
    out.report["model_estimate"] = gb.value;
    out.report["model_rel_error"] = std::abs(gb.value - truth) / truth;

    bool monotone = true;
    for (size_t i = 1; i < err.size(); ++i) monotone = monotone && (err[i] <= err[i - 1] + 1e-14);
    ck.is_true("ladder_monotone", monotone);
    ck.le("final_rel_error", err.back(), is_bump ? 0.20 : 0.10);
}

inline void recover_q2_scenario(const ScenarioConfig& cfg, int, ReportBundle& out, Checks& ck) {
    double sigma = cfg.params["sigma"].get<double>();
    double h = cfg.params["h"].get<double>();
    double tol = cfg.params["tol"].get<double>();
    double q2v = cfg.params["q2"].get<double>();
    if (q2v == 0.0) throw ConfigError("recover-q2: ground truth q2 must be nonzero");

    EnsembleConfig ec;
    ec.sigma = sigma;
    ec.h = h;
    ec.variant = KappaVariant::Five;
    BeamEnsemble ens = make_ensemble(ec);
    RealField q2 = [q2v](const Vec&) { return q2v; };
    Q2CubeEstimate cal = assemble_J0_and_recover_q2(ens, q2, tol, Normalization::Calibrated);

    out.report["truth"] = q2v;
    out.report["calibrated_estimate"] = cal.q2;
    out.report["q2_cubed"] = cal.q2_cubed;
    out.report["imag_residual"] = cal.imag_residual;
    ck.is_true("sign_correct", cal.q2 * q2v > 0.0);
    ck.le("calibrated_rel_error", std::abs(cal.q2 - q2v) / std::abs(q2v), 0.15);
}

inline void recover_Q_scenario(const ScenarioConfig& cfg, int, ReportBundle& out, Checks& ck) {
    double Qc = cfg.params["Q_const"].get<double>();
    double sr = cfg.params["s_range"].get<double>();
    std::vector<double> dss = cfg.params["ds_ladder"].get<std::vector<double>>();

    auto run = [&](const std::function<cplx(double)>& Qfn, double ds) {
        EnsembleConfig ec;
        ec.K = 1;
        ec.Q[1] = Qfn;
        BeamEnsemble ens = make_ensemble(ec);
        const auto& amp = ens.beams[1].amplitude;
        std::vector<double> s;
        std::vector<cplx> a1, sharp;
        for (double si = -sr; si <= sr + 1e-12; si += ds) {
            s.push_back(si);
            a1.push_back(amp.a1.a1(si));
            sharp.push_back(amp.a1.a_sharp(si));
        }
        return recover_Q_along_geodesic(s, a1, sharp, amp.a0.branch);
    };

    QRecovery cst = run([Qc](double) { return cplx(Qc); }, 0.1);
    double cerr = 0.0;
    CsvTable t("s,Q_recovered,one_sided");
    for (size_t i = 0; i < cst.s.size(); ++i) {
        cerr = std::max(cerr, std::abs(cst.Q[i] - Qc) / std::abs(Qc));
        t.row({cst.s[i], cst.Q[i], cst.one_sided[i] ? 1.0 : 0.0});
    }
    out.csv["q_const.csv"] = t.str();

    std::vector<double> errs;
    CsvTable ts("ds,max_interior_error");
    for (double ds : dss) {
        QRecovery r = run([](double s) { return cplx(std::sin(s)); }, ds);
        double e = 0.0;
        for (size_t i = 1; i + 1 < r.s.size(); ++i)
            e = std::max(e, std::abs(r.Q[i] - std::sin(r.s[i])));
        errs.push_back(e);
        ts.row({ds, e});
    }
    out.csv["q_sin_ladder.csv"] = ts.str();
    SlopeFit fit = fit_loglog(dss, errs);

    out.report["const_max_rel_error"] = cerr;
    out.report["sin_errors"] = errs;
    out.report["sin_order"] = fit.slope;
    ck.le("const_max_rel_error", cerr, 0.01);
    ck.ge("sin_order", fit.slope, 1.8);
}

} // namespace scenarios

// ---------------------------------------------------------------------------
// Dispatch and artifact output
// ---------------------------------------------------------------------------

inline ReportBundle run_scenario(const ScenarioConfig& cfg, int jobs = 1) {
    using Fn = void (*)(const ScenarioConfig&, int, ReportBundle&, detail::Checks&);
    static const std::map<std::string, Fn> table = {
        {"beam-check", scenarios::beam_check},
        {"riccati", scenarios::riccati},
        {"kappa-sweep", scenarios::kappa_sweep},
        {"asymptotics", scenarios::asymptotics},
        {"stationary-phase", scenarios::stationary_phase},
        {"interaction-check", scenarios::interaction_check},
        {"fd-linearize", scenarios::fd_linearize},
        {"gauge-check", scenarios::gauge_check},
        {"identity-check", scenarios::identity_check},
        {"recover-q2sq", scenarios::recover_q2sq_scenario},
        {"recover-q2", scenarios::recover_q2_scenario},
        {"recover-Q", scenarios::recover_Q_scenario},
    };
    auto it = table.find(cfg.scenario);
    if (it == table.end()) throw ConfigError("run_scenario: unknown scenario " + cfg.scenario);

    auto start = std::chrono::steady_clock::now();
    ReportBundle out;
    detail::Checks ck;
    out.report["scenario"] = cfg.scenario;
    it->second(cfg, std::max(1, jobs), out, ck);
    out.report["checks"] = ck.items;
    out.report["passed"] = ck.ok;
    out.passed = ck.ok;

    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                    .count();
    out.meta["version"] = version();
    out.meta["scenario"] = cfg.scenario;
    out.meta["params"] = cfg.params;
    out.meta["notices"] = cfg.notices;
    out.meta["jobs"] = jobs;
    out.meta["wall_ms"] = ms;
    return out;
}

inline void write_bundle(const ReportBundle& bundle, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto dump = [&](const std::string& name, const std::string& text) {
        std::ofstream f(fs::path(dir) / name, std::ios::binary);
        if (!f) throw ConfigError("write_bundle: cannot open " + name + " under " + dir);
        f << text;
    };
    dump("report.json", bundle.report.dump(2) + "\n");
    dump("meta.json", bundle.meta.dump(2) + "\n");
    for (const auto& [name, text] : bundle.csv) dump(name, text);
}

} // namespace beamlab::cli
