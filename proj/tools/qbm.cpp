// qbm.cpp — command-line front end: run scenarios, summarize artifact directories

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qbm/cli_runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Quantum Brownian motion scenarios: Wigner evolution, kernels and decoherence"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "execute the pipelines named in a scenario file");
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    long long seed = -1;
    run->add_option("config", config_path, "scenario file (INI)")->required();
    run->add_option("--set", overrides, "override a key: section.key=value (repeatable)");
    run->add_option("--seed", seed, "random seed for Monte Carlo oracles");
    run->add_option("--out", out_dir, "output directory (default: out/<name>)");

    auto* report = app.add_subcommand("report", "summarize manifests below a directory");
    std::string report_dir;
    report->add_option("dir", report_dir, "artifact directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : qbm::exit_config;
    }

    if (*report) {
        try {
            qbm::print_report(qbm::collect_report(report_dir), std::cout);
            return qbm::exit_ok;
        } catch (const qbm::ConfigError& e) {
            std::cerr << "qbm report: " << e.what() << '\n';
            return qbm::exit_config;
        } catch (const std::exception& e) {
            std::cerr << "qbm report: " << e.what() << '\n';
            return qbm::exit_io;
        }
    }

    qbm::ScenarioConfig cfg;
    try {
        cfg = qbm::load_config(config_path);
        for (const auto& o : overrides) qbm::apply_override(cfg, o);
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "qbm run: configuration error: " << e.what() << '\n';
        return qbm::exit_config;
    }
    const std::filesystem::path out = out_dir.empty() ? std::filesystem::path("out") / cfg.name : std::filesystem::path(out_dir);
    try {
        const auto result = qbm::run_scenario(cfg, out);
        for (const auto& r : result.records) {
            std::cout << (r.status == "ok" ? "PASS" : "FAIL") << "  " << r.mode << "  "
                      << (r.error.empty() ? r.summary : "error: " + r.error) << '\n';
            if (!r.error.empty()) std::cerr << "qbm run: " << r.mode << ": " << r.error << '\n';
        }
        std::cout << "manifest: " << result.manifest.string() << '\n';
        return result.exit_code;
    } catch (const qbm::ConfigError& e) {
        std::cerr << "qbm run: configuration error: " << e.what() << '\n';
        return qbm::exit_config;
    } catch (const std::exception& e) {
        std::cerr << "qbm run: " << e.what() << '\n';
        return qbm::exit_io;
    }
}
