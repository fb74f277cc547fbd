// beamlab command-line front end.
//
//   beamlab run <config.json> [--out DIR] [--jobs N] [--verbose]
//   beamlab validate <config.json>
//
// Exit codes: 0 success, 2 configuration errors, 3 numeric failures.

#include <beamlab/cli.hpp>

#include <CLI11.hpp>

#include <iostream>

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw beamlab::ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"beamlab: Gaussian-beam interaction experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    int jobs = 1;
    bool verbose = false;

    CLI::App* run = app.add_subcommand("run", "run a scenario from a JSON config");
    run->add_option("config", config_path, "path to the JSON config")->required();
    run->add_option("--out", out_dir, "output directory (overrides \"out\" in the config)");
    run->add_option("--jobs", jobs, "worker threads for independent sweep points")
        ->check(CLI::Range(1, 64));
    run->add_flag("--verbose", verbose, "print per-check detail");

    CLI::App* val = app.add_subcommand("validate", "validate a JSON config and exit");
    val->add_option("config", config_path, "path to the JSON config")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    using namespace beamlab;
    try {
        cli::ScenarioConfig cfg = cli::validate_config_text(slurp(config_path));
        for (const auto& n : cfg.notices) std::cerr << "notice: " << n << "\n";

        if (val->parsed()) {
            std::cout << "ok: scenario \"" << cfg.scenario << "\"\n";
            return 0;
        }

        cli::ReportBundle bundle = cli::run_scenario(cfg, jobs);
        if (verbose) {
            for (const auto& c : bundle.report["checks"]) {
                std::cout << (c["pass"].get<bool>() ? "PASS " : "FAIL ")
                          << c["name"].get<std::string>() << " = " << c["value"].get<double>()
                          << " (" << c["cmp"].get<std::string>() << " "
                          << c["bound"].get<double>() << ")\n";
            }
        }
        std::string dir = !out_dir.empty() ? out_dir
                          : !cfg.out_dir.empty() ? cfg.out_dir
                                                 : "beamlab-out/" + cfg.scenario;
        cli::write_bundle(bundle, dir);
        std::cout << (bundle.passed ? "PASS" : "FAIL") << " " << cfg.scenario << " ("
                  << bundle.meta["wall_ms"].get<double>() / 1000.0 << " s), report in " << dir
                  << "\n";
        return bundle.passed ? 0 : 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const PreconditionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
