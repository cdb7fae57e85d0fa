// cli_runner.hpp — scenario configuration, pipelines behind the qbm command,
// manifests and the report table

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/version.hpp>
#include <Eigen/Core>
#include <fftw3.h>

#include "json.hpp"
#include "qbm/bath_models.hpp"
#include "qbm/decoherence_suite.hpp"
#include "qbm/evolvers.hpp"
#include "qbm/response_quadrature.hpp"
#include "qbm/wigner_core.hpp"

namespace qbm {

inline constexpr const char* tool_version = "0.1.0";

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct OutputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum ExitCode : int { exit_ok = 0, exit_check_failed = 1, exit_config = 2, exit_numerical = 3, exit_io = 4 };

// ---------------------------------------------------------------------------
// Configuration

struct ScenarioConfig {
    // [run]
    std::string name{"scenario"};
    std::vector<std::string> modes{};
    // [bath]
    std::string bath_kind{"ohmic"};
    double gamma{0.2};
    double tau{0.0};
    // [oscillator]
    double mass{1.0};
    double spring_constant{1.0};
    double hbar{1.0};
    // [thermal]
    double kT{5.0};
    std::string noise_kernel{"high-temperature"};
    bool allow_low_temperature{false};
    // [drive]
    std::string drive_kind{"none"};
    double drive_g{0.0};
    double drive_amplitude{0.0};
    double drive_frequency{0.0};
    // [state]
    std::string state_kind{"gaussian"};
    double q0{0.0};
    double p0{0.0};
    double sigma{1.0};
    double d{0.0};
    double state_kT{0.0};
    // [evolve]
    std::string equation{"lambda"};
    int lambda{-1};
    std::vector<int> lambdas{-1, 0, 1};
    double t_final{1.0};
    double dt{0.0};
    std::size_t record_every{0};
    std::size_t samples{10};
    // [grid]
    std::size_t nq{256};
    std::size_t np{256};
    double q_extent{0.0};
    double p_extent{0.0};
    // [decohere]
    std::string regime{"zero-T-initial"};
    double decohere_t_final{1.0};
    std::size_t decohere_samples{21};
    double law_window{0.0};
    // [kramers]
    std::size_t paths{100000};
    std::size_t kramers_samples{10};
    double kramers_t_final{10.0};
    double mc_dt{0.0};
    // [coefficients]
    double coefficients_t_final{10.0};
    double coefficients_step{0.0};
    // [output]
    std::size_t checkpoint_every{0};
    std::uint64_t seed{1};

    bool operator==(const ScenarioConfig&) const = default;

    BathSpec bath() const {
        return bath_kind == "srt" ? BathSpec::single_relaxation_time(gamma, tau, mass) : BathSpec::ohmic(gamma, mass);
    }
    OscillatorSpec oscillator() const { return OscillatorSpec{mass, spring_constant, hbar}; }
    ThermalSpec thermal() const { return ThermalSpec{kT}; }
    MomentOptions moment_options() const {
        MomentOptions o;
        o.kernel = noise_kernel == "quantum" ? NoiseKernel::Quantum : NoiseKernel::HighTemperature;
        o.allow_low_temperature = allow_low_temperature;
        return o;
    }
    DriveSpec drive() const {
        if (drive_kind == "delta") return DriveSpec::delta_correlated(drive_g);
        if (drive_kind == "harmonic") {
            const double f0 = drive_amplitude, w = drive_frequency;
            return DriveSpec::deterministic([f0, w](double t) { return f0 * std::cos(w * t); },
                                            [f0, w](double u) { return 0.5 * f0 * f0 * std::cos(w * u); });
        }
        return DriveSpec::none();
    }

    void validate() const;
};

namespace detail {

struct ConfigField {
    std::string key;  // section.name
    std::function<void(ScenarioConfig&, const std::string&)> set;
    std::function<std::string(const ScenarioConfig&)> get;
};

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ConfigError(key + ": '" + v + "' is not a number");
    }
    if (used != v.size() || !std::isfinite(x)) throw ConfigError(key + ": '" + v + "' is not a finite number");
    return x;
}

inline long long parse_integer(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &used);
    } catch (const std::exception&) {
        throw ConfigError(key + ": '" + v + "' is not an integer");
    }
    if (used != v.size()) throw ConfigError(key + ": '" + v + "' is not an integer");
    return x;
}

inline std::string format_exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline ConfigField real_field(std::string key, double ScenarioConfig::*m) {
    return {key, [key, m](ScenarioConfig& c, const std::string& v) { c.*m = parse_double(key, v); },
            [m](const ScenarioConfig& c) { return format_exact(c.*m); }};
}

inline ConfigField count_field(std::string key, std::size_t ScenarioConfig::*m) {
    return {key,
            [key, m](ScenarioConfig& c, const std::string& v) {
                const auto x = parse_integer(key, v);
                if (x < 0) throw ConfigError(key + ": must be >= 0");
                c.*m = static_cast<std::size_t>(x);
            },
            [m](const ScenarioConfig& c) { return std::to_string(c.*m); }};
}

inline ConfigField text_field(std::string key, std::string ScenarioConfig::*m) {
    return {key, [m](ScenarioConfig& c, const std::string& v) { c.*m = v; }, [m](const ScenarioConfig& c) { return c.*m; }};
}

inline const std::vector<ConfigField>& config_fields() {
    static const std::vector<ConfigField> fields = [] {
        using C = ScenarioConfig;
        std::vector<ConfigField> f;
        f.push_back(text_field("run.name", &C::name));
        f.push_back({"run.modes", [](C& c, const std::string& v) { c.modes = split_list(v); },
                     [](const C& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.modes.size(); ++i) s += (i ? ", " : "") + c.modes[i];
                         return s;
                     }});
        f.push_back(text_field("bath.kind", &C::bath_kind));
        f.push_back(real_field("bath.gamma", &C::gamma));
        f.push_back(real_field("bath.tau", &C::tau));
        f.push_back(real_field("oscillator.mass", &C::mass));
        f.push_back(real_field("oscillator.spring_constant", &C::spring_constant));
        f.push_back(real_field("oscillator.hbar", &C::hbar));
        f.push_back(real_field("thermal.kT", &C::kT));
        f.push_back(text_field("thermal.noise_kernel", &C::noise_kernel));
        f.push_back({"thermal.allow_low_temperature",
                     [](C& c, const std::string& v) {
                         if (v == "true" || v == "1" || v == "yes") c.allow_low_temperature = true;
                         else if (v == "false" || v == "0" || v == "no") c.allow_low_temperature = false;
                         else throw ConfigError("thermal.allow_low_temperature: expected true or false, got '" + v + "'");
                     },
                     [](const C& c) { return std::string(c.allow_low_temperature ? "true" : "false"); }});
        f.push_back(text_field("drive.kind", &C::drive_kind));
        f.push_back(real_field("drive.g", &C::drive_g));
        f.push_back(real_field("drive.amplitude", &C::drive_amplitude));
        f.push_back(real_field("drive.frequency", &C::drive_frequency));
        f.push_back(text_field("state.kind", &C::state_kind));
        f.push_back(real_field("state.q0", &C::q0));
        f.push_back(real_field("state.p0", &C::p0));
        f.push_back(real_field("state.sigma", &C::sigma));
        f.push_back(real_field("state.d", &C::d));
        f.push_back(real_field("state.kT", &C::state_kT));
        f.push_back(text_field("evolve.equation", &C::equation));
        f.push_back({"evolve.lambda", [](C& c, const std::string& v) { c.lambda = static_cast<int>(parse_integer("evolve.lambda", v)); },
                     [](const C& c) { return std::to_string(c.lambda); }});
        f.push_back({"evolve.lambdas",
                     [](C& c, const std::string& v) {
                         c.lambdas.clear();
                         for (const auto& item : split_list(v)) c.lambdas.push_back(static_cast<int>(parse_integer("evolve.lambdas", item)));
                     },
                     [](const C& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.lambdas.size(); ++i) s += (i ? ", " : "") + std::to_string(c.lambdas[i]);
                         return s;
                     }});
        f.push_back(real_field("evolve.t_final", &C::t_final));
        f.push_back(real_field("evolve.dt", &C::dt));
        f.push_back(count_field("evolve.record_every", &C::record_every));
        f.push_back(count_field("evolve.samples", &C::samples));
        f.push_back(count_field("grid.nq", &C::nq));
        f.push_back(count_field("grid.np", &C::np));
        f.push_back(real_field("grid.q_extent", &C::q_extent));
        f.push_back(real_field("grid.p_extent", &C::p_extent));
        f.push_back(text_field("decohere.regime", &C::regime));
        f.push_back(real_field("decohere.t_final", &C::decohere_t_final));
        f.push_back(count_field("decohere.samples", &C::decohere_samples));
        f.push_back(real_field("decohere.law_window", &C::law_window));
        f.push_back(count_field("kramers.paths", &C::paths));
        f.push_back(count_field("kramers.samples", &C::kramers_samples));
        f.push_back(real_field("kramers.t_final", &C::kramers_t_final));
        f.push_back(real_field("kramers.mc_dt", &C::mc_dt));
        f.push_back(real_field("coefficients.t_final", &C::coefficients_t_final));
        f.push_back(real_field("coefficients.step", &C::coefficients_step));
        f.push_back(count_field("output.checkpoint_every", &C::checkpoint_every));
        f.push_back({"output.seed",
                     [](C& c, const std::string& v) {
                         const auto x = parse_integer("output.seed", v);
                         if (x < 0) throw ConfigError("output.seed: must be >= 0");
                         c.seed = static_cast<std::uint64_t>(x);
                     },
                     [](const C& c) { return std::to_string(c.seed); }});
        return f;
    }();
    return fields;
}

inline const ConfigField& find_field(const std::string& key) {
    for (const auto& f : config_fields())
        if (f.key == key) return f;
    throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace detail

inline const std::vector<std::string>& known_modes() {
    static const std::vector<std::string> m{"evolve", "decohere", "equilibrium-check", "kramers-compare", "coefficients"};
    return m;
}

inline void ScenarioConfig::validate() const {
    auto need = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    for (const auto& m : modes)
        need(std::find(known_modes().begin(), known_modes().end(), m) != known_modes().end(), "run.modes: unknown mode '" + m + "'");
    need(bath_kind == "ohmic" || bath_kind == "srt", "bath.kind: expected ohmic or srt");
    need(gamma >= 0.0, "bath.gamma: must be >= 0");
    need(bath_kind != "srt" || tau > 0.0, "bath.tau: must be > 0 for the srt bath");
    need(mass > 0.0, "oscillator.mass: must be > 0");
    need(spring_constant >= 0.0, "oscillator.spring_constant: must be >= 0");
    need(hbar > 0.0, "oscillator.hbar: must be > 0");
    need(kT >= 0.0, "thermal.kT: must be >= 0");
    need(noise_kernel == "high-temperature" || noise_kernel == "quantum", "thermal.noise_kernel: expected high-temperature or quantum");
    need(drive_kind == "none" || drive_kind == "delta" || drive_kind == "harmonic", "drive.kind: expected none, delta or harmonic");
    need(drive_g >= 0.0, "drive.g: must be >= 0");
    need(state_kind == "gaussian" || state_kind == "cat" || state_kind == "thermal", "state.kind: expected gaussian, cat or thermal");
    need(sigma > 0.0, "state.sigma: must be > 0");
    need(d >= 0.0, "state.d: must be >= 0");
    need(state_kT >= 0.0, "state.kT: must be >= 0");
    need(equation == "lambda" || equation == "hpz" || equation == "kernel", "evolve.equation: expected lambda, hpz or kernel");
    need(lambda >= -1 && lambda <= 1, "evolve.lambda: must be -1, 0 or 1");
    for (int l : lambdas) need(l >= -1 && l <= 1, "evolve.lambdas: entries must be -1, 0 or 1");
    need(t_final > 0.0, "evolve.t_final: must be > 0");
    need(dt >= 0.0, "evolve.dt: must be >= 0");
    need(samples >= 1, "evolve.samples: must be >= 1");
    need(nq >= 16 && np >= 16, "grid.nq, grid.np: need at least 16 points");
    need(nq <= 4096 && np <= 4096, "grid.nq, grid.np: at most 4096 points");
    need(q_extent >= 0.0 && p_extent >= 0.0, "grid extents: must be >= 0 (0 selects automatically)");
    try {
        (void)regime_from_string(regime);
    } catch (const std::invalid_argument&) {
        throw ConfigError("decohere.regime: unknown regime '" + regime + "'");
    }
    need(decohere_t_final > 0.0, "decohere.t_final: must be > 0");
    need(decohere_samples >= 2, "decohere.samples: need at least 2");
    need(law_window >= 0.0, "decohere.law_window: must be >= 0");
    need(paths >= 100, "kramers.paths: need at least 100 paths");
    need(kramers_samples >= 1, "kramers.samples: must be >= 1");
    need(kramers_t_final > 0.0, "kramers.t_final: must be > 0");
    need(mc_dt >= 0.0, "kramers.mc_dt: must be >= 0");
    need(coefficients_t_final > 0.0, "coefficients.t_final: must be > 0");
    need(coefficients_step >= 0.0, "coefficients.step: must be >= 0");
    // domain-level checks
    try {
        bath().validate();
        oscillator().validate();
        thermal().validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const bool needs_equilibrium =
        std::find(modes.begin(), modes.end(), "equilibrium-check") != modes.end() ||
        std::find(modes.begin(), modes.end(), "kramers-compare") != modes.end() || state_kind == "thermal";
    need(!needs_equilibrium || spring_constant > 0.0, "equilibrium states need oscillator.spring_constant > 0");
}

inline void apply_setting(ScenarioConfig& c, const std::string& key, const std::string& value) {
    detail::find_field(key).set(c, detail::trim(value));
}

// "section.key=value"
inline void apply_override(ScenarioConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
    apply_setting(c, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline ScenarioConfig parse_config(std::istream& is) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("configuration syntax: ") + e.what());
    }
    ScenarioConfig c;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError("key '" + section + "' outside of a section");
        for (const auto& [key, value] : body) apply_setting(c, section + "." + key, value.data());
    }
    c.validate();
    return c;
}

inline ScenarioConfig parse_config_text(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read configuration file '" + path + "'");
    return parse_config(is);
}

inline std::string to_ini(const ScenarioConfig& c) {
    std::ostringstream os;
    std::string section;
    for (const auto& f : detail::config_fields()) {
        const auto dot = f.key.find('.');
        const std::string sec = f.key.substr(0, dot);
        if (sec != section) {
            os << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
            section = sec;
        }
        os << f.key.substr(dot + 1) << " = " << f.get(c) << '\n';
    }
    return os.str();
}

inline std::string config_hash(const ScenarioConfig& c) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : to_ini(c)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Shared pieces of the pipelines

struct Check {
    std::string name;
    double value{0.0};
    double limit{0.0};
    bool pass{false};
    std::string detail{};
};

struct RunRecord {
    std::string mode;
    std::string status{"ok"};  // ok, failed, error
    int exit_code{exit_ok};
    std::string error{};
    std::vector<std::string> outputs{};
    std::vector<Check> checks{};
    std::string summary{};
    nlohmann::json details = nlohmann::json::object();

    void check(const std::string& name, double value, double limit, const std::string& detail = "") {
        checks.push_back({name, value, limit, std::isfinite(value) && value <= limit, detail});
    }
    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }
};

namespace detail {

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : path_(path), os_(path) {
        if (!os_) throw OutputError("cannot write '" + path.string() + "'");
        for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
        os_ << '\n';
    }
    CsvWriter& operator<<(double v) {
        sep();
        os_ << format_number(v);
        return *this;
    }
    CsvWriter& operator<<(const std::string& s) {
        sep();
        os_ << s;
        return *this;
    }
    void end_row() {
        os_ << '\n';
        first_ = true;
        if (!os_) throw OutputError("write failed on '" + path_.string() + "'");
    }

private:
    void sep() {
        if (!first_) os_ << ',';
        first_ = false;
    }
    std::filesystem::path path_;
    std::ofstream os_;
    bool first_{true};
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path);
    os << text;
    if (!os) throw OutputError("cannot write '" + path.string() + "'");
}

inline std::vector<double> sample_times(double t_final, std::size_t n, bool include_zero) {
    std::vector<double> t;
    const std::size_t first = include_zero ? 0 : 1;
    for (std::size_t i = first; i <= n; ++i) t.push_back(t_final * static_cast<double>(i) / static_cast<double>(n));
    return t;
}

inline double equilibrium_var_q(const ScenarioConfig& c, double kT) {
    const auto osc = c.oscillator();
    return occupation_factor(osc, ThermalSpec{kT}) * osc.hbar / (2.0 * osc.mass * osc.omega0());
}

inline double equilibrium_var_p(const ScenarioConfig& c, double kT) {
    const auto osc = c.oscillator();
    return occupation_factor(osc, ThermalSpec{kT}) * osc.mass * osc.hbar * osc.omega0() / 2.0;
}

// Grid for an evolution: initial state, the equilibrium it relaxes to and the
// phase-space orbit of the displaced mean.
inline GridSpec evolution_grid(const ScenarioConfig& c, double t_final) {
    const auto osc = c.oscillator();
    double sq = c.sigma, sp = c.hbar / (2.0 * c.sigma);
    if (c.state_kind == "thermal") {
        sq = std::sqrt(equilibrium_var_q(c, c.state_kT));
        sp = std::sqrt(equilibrium_var_p(c, c.state_kT));
    }
    double aq = std::abs(c.q0), ap = std::abs(c.p0);
    if (osc.spring_constant > 0.0) {
        const double w0 = osc.omega0();
        const double amp_q = std::hypot(c.q0, c.p0 / (c.mass * w0));
        aq = amp_q;
        ap = c.mass * w0 * amp_q;
        sq = std::max(sq, std::sqrt(equilibrium_var_q(c, c.kT)));
        sp = std::max(sp, std::sqrt(equilibrium_var_p(c, c.kT)));
    } else {
        sp = std::max(sp, std::sqrt(c.mass * c.kT + sp * sp));
        aq += ap * t_final / c.mass;
        sq = std::hypot(sq, sp * t_final / c.mass);
    }
    const double q_ext = c.q_extent > 0.0 ? c.q_extent : aq + 0.5 * c.d + 8.0 * sq;
    const double p_ext = c.p_extent > 0.0 ? c.p_extent : ap + 8.0 * sp;
    return GridSpec::symmetric(q_ext, p_ext, c.nq, c.np);
}

inline WignerGrid initial_state(const ScenarioConfig& c, const GridSpec& grid) {
    const auto osc = c.oscillator();
    if (c.state_kind == "cat") {
        if (c.q0 != 0.0 || c.p0 != 0.0) throw ConfigError("state: cat states are centred; q0 and p0 must be 0");
        return cat_wigner(CatSpec{c.d, c.sigma}, grid, osc);
    }
    if (c.state_kind == "thermal") return equilibrium_wigner(osc, ThermalSpec{c.state_kT}, grid, c.q0, c.p0);
    return gaussian_wigner(c.q0, c.p0, c.sigma, grid, osc);
}

inline HPZCoefficients coefficient_table(const ScenarioConfig& c, double t_final, double step) {
    const auto bath = c.bath();
    double rate = std::max({c.oscillator().omega0(), bath.gamma, 1e-300});
    if (bath.kind == BathKind::SingleRelaxationTime) rate = std::max(rate, 1.0 / bath.tau);
    double h = step > 0.0 ? step : std::min(0.02 / rate, t_final / 50.0);
    const auto n = static_cast<std::size_t>(std::ceil(t_final / h - 1e-9));
    h = t_final / static_cast<double>(n);
    return hpz_coefficients(bath, c.oscillator(), c.thermal(), TimeGrid{h, n + 1}, c.moment_options());
}

inline std::string gnuplot_header(const std::string& title) {
    return "set datafile separator ','\nset key autotitle columnhead\nset title '" + title + "'\nset grid\n";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pipelines

inline RunRecord run_evolve(const ScenarioConfig& c, const std::filesystem::path& dir) {
    RunRecord rec;
    rec.mode = "evolve";
    const auto grid = detail::evolution_grid(c, c.t_final);
    const auto w0 = detail::initial_state(c, grid);
    EvolutionConfig cfg;
    cfg.lambda = c.lambda;
    cfg.dt = c.dt;
    cfg.t_final = c.t_final;
    cfg.drive = c.drive();
    cfg.record_every = c.checkpoint_every;
    Trajectory tr;
    if (c.equation == "lambda") {
        tr = evolve_lambda(w0, cfg, c.oscillator(), c.thermal(), c.bath());
    } else if (c.equation == "hpz") {
        if (c.drive_kind != "none") throw ConfigError("evolve: the hpz equation takes no drive");
        tr = evolve_hpz(w0, detail::coefficient_table(c, c.t_final, 0.0), cfg);
    } else {
        if (c.drive_kind != "none") throw ConfigError("evolve: kernel propagation takes no drive");
        const double mass0 = normalization(w0);
        tr.times.push_back(0.0);
        tr.moments.push_back(moments(w0));
        tr.mass.push_back(mass0);
        WignerGrid w = w0;
        for (double t : detail::sample_times(c.t_final, c.samples, false)) {
            w = kernel_propagate(w0, c.bath(), c.oscillator(), c.thermal(), t, c.moment_options());
            tr.times.push_back(t);
            tr.moments.push_back(moments(w));
            tr.mass.push_back(normalization(w));
            const double det = tr.moments.back().uncertainty_determinant();
            if (det < tr.uncertainty.min_determinant) {
                tr.uncertainty.min_determinant = det;
                tr.uncertainty.min_time = t;
            }
            if (c.checkpoint_every > 0) tr.frames.push_back({t, w});
        }
        tr.final_state = w;
    }
    {
        detail::CsvWriter csv(dir / "moments.csv", {"t", "mean_q", "mean_p", "var_q", "var_p", "cov_qp", "mass", "uncertainty_det"});
        for (std::size_t i = 0; i < tr.times.size(); ++i) {
            const auto& m = tr.moments[i];
            csv << tr.times[i] << m.mean_q << m.mean_p << m.var_q() << m.var_p() << m.cov_qp() << tr.mass[i]
                << m.uncertainty_determinant();
            csv.end_row();
        }
    }
    rec.outputs.push_back("moments.csv");
    write_grid_dump(tr.final_state, (dir / "final.dat").string(), tr.times.back());
    rec.outputs.push_back("final.dat");
    if (!tr.frames.empty()) {
        std::filesystem::create_directories(dir / "checkpoints");
        for (std::size_t i = 0; i < tr.frames.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof name, "checkpoints/frame_%05zu.dat", i + 1);
            write_grid_dump(tr.frames[i].state, (dir / name).string(), tr.frames[i].time);
            rec.outputs.push_back(name);
        }
    }
    double drift = 0.0;
    for (std::size_t i = 1; i < tr.mass.size(); ++i) drift = std::max(drift, std::abs(tr.mass[i] - tr.mass[0]) / tr.times[i]);
    rec.check("normalization_drift_per_time", drift, 1e-5);
    rec.details["uncertainty_detector_fired"] = tr.uncertainty.fired;
    rec.details["min_uncertainty_determinant"] = tr.uncertainty.min_determinant;
    rec.details["min_uncertainty_time"] = tr.uncertainty.min_time;
    if (tr.uncertainty.fired) rec.details["first_violation_time"] = tr.uncertainty.first_violation;
    rec.summary = "equation=" + c.equation + (c.equation == "lambda" ? " lambda=" + std::to_string(c.lambda) : "") +
                  " detector=" + (tr.uncertainty.fired ? "fired" : "quiet");
    detail::write_text(dir / "plot.gp", detail::gnuplot_header("second moments") +
                                            "plot 'moments.csv' using 1:4 with lines, '' using 1:5 with lines, '' using 1:6 with lines\n");
    rec.outputs.push_back("plot.gp");
    return rec;
}

// max |W(t) - W0| / max W0 for the equilibrium state under each lambda.
struct EquilibriumDeviation {
    int lambda;
    std::vector<double> times;
    std::vector<double> deviation;
    double worst{0.0};
};

inline std::vector<EquilibriumDeviation> equilibrium_deviations(const ScenarioConfig& c) {
    const auto osc = c.oscillator();
    const double sq = std::sqrt(detail::equilibrium_var_q(c, c.kT)), sp = std::sqrt(detail::equilibrium_var_p(c, c.kT));
    const GridSpec grid = GridSpec::symmetric(c.q_extent > 0.0 ? c.q_extent : 8.0 * sq, c.p_extent > 0.0 ? c.p_extent : 8.0 * sp,
                                              c.nq, c.np);
    const auto w0 = equilibrium_wigner(osc, c.thermal(), grid);
    const double peak = max_abs(w0);
    std::vector<EquilibriumDeviation> out;
    for (int l : c.lambdas) {
        EquilibriumDeviation dev{l, {}, {}, 0.0};
        EvolutionConfig cfg;
        cfg.lambda = l;
        cfg.dt = c.dt;
        cfg.t_final = c.t_final;
        std::size_t calls = 0;
        const std::size_t every = std::max<std::size_t>(c.record_every, 1);
        cfg.observer = [&](double t, const WignerGrid& w) {
            const double e = max_abs_difference(w, w0) / peak;
            dev.worst = std::max(dev.worst, e);
            if (calls++ % every == 0 || t >= c.t_final * (1.0 - 1e-12)) {
                dev.times.push_back(t);
                dev.deviation.push_back(e);
            }
        };
        evolve_lambda(w0, cfg, osc, c.thermal(), c.bath());
        out.push_back(std::move(dev));
    }
    return out;
}

inline RunRecord run_equilibrium_check(const ScenarioConfig& c, const std::filesystem::path& dir) {
    RunRecord rec;
    rec.mode = "equilibrium-check";
    const auto devs = equilibrium_deviations(c);
    detail::CsvWriter csv(dir / "equilibrium.csv", {"lambda", "t", "max_rel_deviation"});
    std::string summary;
    for (const auto& d : devs) {
        for (std::size_t i = 0; i < d.times.size(); ++i) {
            csv << static_cast<double>(d.lambda) << d.times[i] << d.deviation[i];
            csv.end_row();
        }
        rec.check("equilibrium_fixed_point[lambda=" + std::to_string(d.lambda) + "]", d.worst, 1e-4);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%slambda=%d:%.2e", summary.empty() ? "" : " ", d.lambda, d.worst);
        summary += buf;
    }
    rec.summary = "max|W-W0|/maxW0 " + summary;
    rec.outputs.push_back("equilibrium.csv");
    detail::write_text(dir / "plot.gp", detail::gnuplot_header("equilibrium deviation") +
                                            "set logscale y\nplot 'equilibrium.csv' using 2:($1==-1?$3:1/0) title 'lambda=-1' with lines, "
                                            "'' using 2:($1==0?$3:1/0) title 'lambda=0' with lines, "
                                            "'' using 2:($1==1?$3:1/0) title 'lambda=+1' with lines\n");
    rec.outputs.push_back("plot.gp");
    return rec;
}

inline DecoherenceScenario decoherence_scenario(const ScenarioConfig& c) {
    DecoherenceScenario sc;
    sc.regime = regime_from_string(c.regime);
    sc.bath = c.bath();
    sc.osc = c.oscillator();
    sc.thermal = c.thermal();
    sc.cat = CatSpec{c.d, c.sigma};
    sc.drive = c.drive();
    sc.moments = c.moment_options();
    return sc;
}

inline RunRecord run_decohere(const ScenarioConfig& c, const std::filesystem::path& dir) {
    RunRecord rec;
    rec.mode = "decohere";
    const auto sc = decoherence_scenario(c);
    const auto times = detail::sample_times(c.decohere_t_final, c.decohere_samples - 1, true);
    const auto series = simulate_attenuation(sc, times, c.law_window);
    {
        std::ofstream os(dir / "attenuation.csv");
        write_attenuation_csv(series, os,
                              {{"gamma", c.gamma}, {"kT", c.kT}, {"mass", c.mass}, {"hbar", c.hbar}, {"d", c.d}, {"sigma", c.sigma}});
        if (!os) throw OutputError("cannot write attenuation.csv");
    }
    rec.outputs.push_back("attenuation.csv");
    rec.check("a(0)=1", std::abs(series.a.front() - 1.0), 1e-3);
    double over = 0.0;
    for (double a : series.a) over = std::max(over, a - 1.0);
    rec.check("a<=1", over, 1e-3);
    const auto p = sc.params();
    switch (sc.regime) {
        case Regime::ThermalInitial: {
            const double tau = std::sqrt(8.0) * c.sigma * c.sigma / (std::sqrt(c.kT / c.mass) * c.d);
            rec.check("short_time_exponent", std::abs(series.law.exponent - 2.0), 0.1);
            rec.check("tau_d_vs_sqrt8_sigma2_over_vd", std::abs(series.law.tau_d / tau - 1.0), 0.05);
            rec.details["tau_d_expected"] = tau;
            break;
        }
        case Regime::ZeroTInitial: {
            double worst = 0.0;
            for (std::size_t i = 0; i < times.size(); ++i) {
                const auto cf = closed_form_zero_T_initial(p, times[i]);
                if (cf.in_regime && cf.value >= 1e-3) worst = std::max(worst, std::abs(series.a[i] / cf.value - 1.0));
            }
            rec.check("closed_form_agreement_in_window", worst, 0.05);
            break;
        }
        case Regime::Entangled: {
            double worst = 0.0;
            for (std::size_t i = 0; i < times.size(); ++i)
                if (times[i] * c.gamma <= 0.1) worst = std::max(worst, std::abs(series.a[i] / series.a_closed[i] - 1.0));
            rec.check("high_T_reduction", worst, 0.02);
            break;
        }
        case Regime::Driven: {
            double worst = 0.0;
            for (std::size_t i = 1; i < times.size(); ++i) worst = std::max(worst, std::abs(series.a[i] / series.a_closed[i] - 1.0));
            rec.check("closed_form_agreement", worst, 0.05);
            break;
        }
    }
    rec.details["law_exponent"] = series.law.exponent;
    rec.details["law_tau_d"] = series.law.tau_d;
    rec.details["crossing_tau_d"] = series.tau_d;
    char buf[160];
    std::snprintf(buf, sizeof buf, "regime=%s exponent=%.3f tau_d(fit)=%.6g tau_d(e^-1)=%.6g", c.regime.c_str(), series.law.exponent,
                  series.law.tau_d, series.tau_d);
    rec.summary = buf;
    detail::write_text(dir / "plot.gp", detail::gnuplot_header("attenuation factor") +
                                            "plot 'attenuation.csv' using 1:2 with points title 'simulated', '' using 1:3 with lines "
                                            "title 'closed form'\n");
    rec.outputs.push_back("plot.gp");
    return rec;
}

// ---------------------------------------------------------------------------
// Classical Langevin Monte Carlo: m q'' = -K q - m gamma q' + xi,
// <xi(t) xi(s)> = 2 m gamma kT delta(t - s), BAOAB splitting.

struct LangevinMoments {
    std::vector<double> times;
    std::vector<std::array<double, 5>> mean;    // mean_q, mean_p, var_q, var_p, cov_qp
    std::vector<std::array<double, 5>> stderr_;  // standard errors of the same
};

// noise_g is the white-noise strength: <xi(t) xi(s)> = noise_g delta(t - s)
inline LangevinMoments langevin_monte_carlo_driven(double mass, double K, double gamma, double noise_g, const Eigen::Vector2d& mean0,
                                                   const Eigen::Matrix2d& cov0, const std::vector<double>& times, std::size_t paths,
                                                   double dt_max, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    // 2x2 Cholesky factor that tolerates a singular (e.g. deterministic) start
    Eigen::Matrix2d chol = Eigen::Matrix2d::Zero();
    chol(0, 0) = std::sqrt(std::max(cov0(0, 0), 0.0));
    chol(1, 0) = chol(0, 0) > 0.0 ? cov0(1, 0) / chol(0, 0) : 0.0;
    chol(1, 1) = std::sqrt(std::max(cov0(1, 1) - chol(1, 0) * chol(1, 0), 0.0));
    std::vector<double> q(paths), p(paths);
    for (std::size_t i = 0; i < paths; ++i) {
        const Eigen::Vector2d z(normal(rng), normal(rng));
        const Eigen::Vector2d x = mean0 + chol * z;
        q[i] = x(0);
        p[i] = x(1);
    }
    LangevinMoments out;
    double t = 0.0;
    const double decay_rate = gamma;
    for (double target : times) {
        const double span = target - t;
        const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(span / dt_max - 1e-9)));
        const double h = span / static_cast<double>(n);
        const double c1 = std::exp(-decay_rate * h);
        const double c2 = gamma > 0.0 ? std::sqrt(std::max(0.0, noise_g * (1.0 - c1 * c1) / (2.0 * gamma))) : std::sqrt(noise_g * h);
        if (span > 0.0) {
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t i = 0; i < paths; ++i) {
                    p[i] -= 0.5 * h * K * q[i];
                    q[i] += 0.5 * h * p[i] / mass;
                    p[i] = c1 * p[i] + c2 * normal(rng);
                    q[i] += 0.5 * h * p[i] / mass;
                    p[i] -= 0.5 * h * K * q[i];
                }
        }
        t = target;
        const auto nn = static_cast<double>(paths);
        double mq = 0.0, mp = 0.0;
        for (std::size_t i = 0; i < paths; ++i) {
            mq += q[i];
            mp += p[i];
        }
        mq /= nn;
        mp /= nn;
        double vq = 0.0, vp = 0.0, cqp = 0.0, q4 = 0.0, p4 = 0.0, x2 = 0.0;
        for (std::size_t i = 0; i < paths; ++i) {
            const double a = q[i] - mq, b = p[i] - mp;
            vq += a * a;
            vp += b * b;
            cqp += a * b;
            q4 += a * a * a * a;
            p4 += b * b * b * b;
            x2 += a * a * b * b;
        }
        vq /= nn - 1.0;
        vp /= nn - 1.0;
        cqp /= nn - 1.0;
        q4 /= nn;
        p4 /= nn;
        x2 /= nn;
        out.times.push_back(target);
        out.mean.push_back({mq, mp, vq, vp, cqp});
        out.stderr_.push_back({std::sqrt(vq / nn), std::sqrt(vp / nn), std::sqrt(std::max(q4 - vq * vq, 0.0) / nn),
                               std::sqrt(std::max(p4 - vp * vp, 0.0) / nn), std::sqrt(std::max(x2 - cqp * cqp, 0.0) / nn)});
    }
    return out;
}

inline LangevinMoments langevin_monte_carlo(double mass, double K, double gamma, double kT, const Eigen::Vector2d& mean0,
                                            const Eigen::Matrix2d& cov0, const std::vector<double>& times, std::size_t paths,
                                            double dt_max, std::uint64_t seed) {
    return langevin_monte_carlo_driven(mass, K, gamma, 2.0 * mass * gamma * kT, mean0, cov0, times, paths, dt_max, seed);
}

struct KramersComparison {
    std::vector<double> times;
    std::vector<std::array<double, 5>> pde, mc, se, z;
    double max_abs_z{0.0};
};

inline KramersComparison kramers_compare(const ScenarioConfig& c) {
    const auto osc = c.oscillator();
    const auto grid = detail::evolution_grid(c, c.kramers_t_final);
    const auto w0 = detail::initial_state(c, grid);
    const auto m0 = moments(w0);
    const auto times = detail::sample_times(c.kramers_t_final, c.kramers_samples, false);
    EvolutionConfig cfg;
    cfg.lambda = -1;
    cfg.t_final = c.kramers_t_final;
    double dt = c.dt > 0.0 ? c.dt : default_time_step(c.bath(), osc);
    // align steps with the sample times
    const double spacing = c.kramers_t_final / static_cast<double>(c.kramers_samples);
    const auto per = static_cast<std::size_t>(std::ceil(spacing / dt - 1e-9));
    cfg.dt = spacing / static_cast<double>(per);
    const auto tr = evolve_lambda(w0, cfg, osc, c.thermal(), c.bath());
    Eigen::Matrix2d cov0;
    cov0 << m0.var_q(), m0.cov_qp(), m0.cov_qp(), m0.var_p();
    const double mc_dt = c.mc_dt > 0.0 ? c.mc_dt : 0.01 / std::max(osc.omega0(), c.gamma);
    const auto mc = langevin_monte_carlo(c.mass, c.spring_constant, c.gamma, c.kT, Eigen::Vector2d(m0.mean_q, m0.mean_p), cov0, times,
                                         c.paths, mc_dt, c.seed);
    KramersComparison out;
    out.times = times;
    for (std::size_t k = 0; k < times.size(); ++k) {
        std::size_t best = 0;
        for (std::size_t i = 0; i < tr.times.size(); ++i)
            if (std::abs(tr.times[i] - times[k]) < std::abs(tr.times[best] - times[k])) best = i;
        const auto& m = tr.moments[best];
        const std::array<double, 5> pde{m.mean_q, m.mean_p, m.var_q(), m.var_p(), m.cov_qp()};
        std::array<double, 5> z{};
        for (std::size_t j = 0; j < 5; ++j) {
            z[j] = (pde[j] - mc.mean[k][j]) / mc.stderr_[k][j];
            out.max_abs_z = std::max(out.max_abs_z, std::abs(z[j]));
        }
        out.pde.push_back(pde);
        out.mc.push_back(mc.mean[k]);
        out.se.push_back(mc.stderr_[k]);
        out.z.push_back(z);
    }
    return out;
}

inline RunRecord run_kramers_compare(const ScenarioConfig& c, const std::filesystem::path& dir) {
    RunRecord rec;
    rec.mode = "kramers-compare";
    const auto cmp = kramers_compare(c);
    static const std::array<const char*, 5> names{"mean_q", "mean_p", "var_q", "var_p", "cov_qp"};
    detail::CsvWriter csv(dir / "kramers.csv", {"t", "quantity", "pde", "monte_carlo", "std_error", "z"});
    std::array<double, 5> worst{};
    for (std::size_t k = 0; k < cmp.times.size(); ++k)
        for (std::size_t j = 0; j < 5; ++j) {
            csv << cmp.times[k] << std::string(names[j]) << cmp.pde[k][j] << cmp.mc[k][j] << cmp.se[k][j] << cmp.z[k][j];
            csv.end_row();
            worst[j] = std::max(worst[j], std::abs(cmp.z[k][j]));
        }
    rec.outputs.push_back("kramers.csv");
    rec.check("kramers_max_abs_z", cmp.max_abs_z, 3.0);
    std::string s = "max|z|";
    for (std::size_t j = 0; j < 5; ++j) {
        char buf[48];
        std::snprintf(buf, sizeof buf, " %s=%.2f", names[j], worst[j]);
        s += buf;
        rec.details[std::string("max_abs_z_") + names[j]] = worst[j];
    }
    rec.summary = s;
    detail::write_text(dir / "plot.gp", detail::gnuplot_header("PDE vs Monte Carlo z-scores") +
                                            "plot 'kramers.csv' using 1:6 with points title 'z'\n");
    rec.outputs.push_back("plot.gp");
    return rec;
}

inline RunRecord run_coefficients(const ScenarioConfig& c, const std::filesystem::path& dir) {
    RunRecord rec;
    rec.mode = "coefficients";
    const auto coeffs = detail::coefficient_table(c, c.coefficients_t_final, c.coefficients_step);
    {
        detail::CsvWriter csv(dir / "coefficients.csv", {"t", "two_gamma", "omega2", "d_pp", "d_qp"});
        for (std::size_t i = 0; i < coeffs.times.size(); ++i) {
            csv << coeffs.times[i] << coeffs.gamma_t[i] << coeffs.omega2_t[i] << coeffs.d_pp[i] << coeffs.d_qp[i];
            csv.end_row();
        }
    }
    rec.outputs.push_back("coefficients.csv");
    const auto osc = c.oscillator();
    const auto bath = c.bath();
    if (bath.kind == BathKind::Ohmic && bath.gamma > 0.0) {
        double dg = 0.0, dw = 0.0;
        for (std::size_t i = 1; i < coeffs.times.size(); ++i) {
            dg = std::max(dg, std::abs(coeffs.gamma_t[i] / bath.gamma - 1.0));
            if (osc.spring_constant > 0.0)
                dw = std::max(dw, std::abs(coeffs.omega2_t[i] / (osc.omega0() * osc.omega0()) - 1.0));
            else
                dw = std::max(dw, std::abs(coeffs.omega2_t[i]));
        }
        rec.check("ohmic_two_gamma_equals_gamma", dg, 1e-4);
        rec.check("ohmic_omega2_equals_omega0^2", dw, 1e-4);
        if (c.coefficients_t_final * bath.gamma >= 10.0 && osc.spring_constant > 0.0) {
            const double target = bath.gamma * 0.5 * occupation_factor(osc, c.thermal()) * osc.mass * osc.hbar * osc.omega0();
            rec.check("long_time_d_pp_vs_lambda_minus_one", std::abs(coeffs.d_pp.back() / target - 1.0), 0.01);
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "2Gamma(T)=%.6g Omega2(T)=%.6g d_pp(T)=%.6g d_qp(T)=%.6g", coeffs.gamma_t.back(),
                  coeffs.omega2_t.back(), coeffs.d_pp.back(), coeffs.d_qp.back());
    rec.summary = buf;
    detail::write_text(dir / "plot.gp", detail::gnuplot_header("HPZ coefficients") +
                                            "plot 'coefficients.csv' using 1:2 with lines, '' using 1:3 with lines, '' using 1:4 with "
                                            "lines, '' using 1:5 with lines\n");
    rec.outputs.push_back("plot.gp");
    return rec;
}

// ---------------------------------------------------------------------------
// Orchestration

inline RunRecord run_mode(const ScenarioConfig& c, const std::string& mode, const std::filesystem::path& out) {
    RunRecord rec;
    rec.mode = mode;
    try {
        const auto dir = out / mode;
        std::filesystem::create_directories(dir);
        if (mode == "evolve") rec = run_evolve(c, dir);
        else if (mode == "equilibrium-check") rec = run_equilibrium_check(c, dir);
        else if (mode == "decohere") rec = run_decohere(c, dir);
        else if (mode == "kramers-compare") rec = run_kramers_compare(c, dir);
        else if (mode == "coefficients") rec = run_coefficients(c, dir);
        else throw ConfigError("unknown mode '" + mode + "'");
        for (auto& o : rec.outputs) o = mode + "/" + o;
        rec.status = rec.passed() ? "ok" : "failed";
        rec.exit_code = rec.passed() ? exit_ok : exit_check_failed;
    } catch (const ConfigError& e) {
        rec.status = "error", rec.exit_code = exit_config, rec.error = e.what();
    } catch (const OutputError& e) {
        rec.status = "error", rec.exit_code = exit_io, rec.error = e.what();
    } catch (const std::filesystem::filesystem_error& e) {
        rec.status = "error", rec.exit_code = exit_io, rec.error = e.what();
    } catch (const std::ios_base::failure& e) {
        rec.status = "error", rec.exit_code = exit_io, rec.error = e.what();
    } catch (const std::exception& e) {
        rec.status = "error", rec.exit_code = exit_numerical, rec.error = e.what();
    }
    return rec;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline nlohmann::json versions_json() {
    nlohmann::json v;
    v["qbm"] = std::string(tool_version);
    v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
    v["boost"] = std::string(BOOST_LIB_VERSION);
    v["fftw"] = std::string(static_cast<const char*>(fftw_version));
    v["compiler"] = std::string(__VERSION__);
    return v;
}

inline nlohmann::json record_json(const RunRecord& r) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : r.checks)
        checks.push_back({{"name", c.name}, {"value", c.value}, {"limit", c.limit}, {"pass", c.pass}, {"detail", c.detail}});
    nlohmann::json j = {{"mode", r.mode},       {"status", r.status}, {"exit_code", r.exit_code}, {"outputs", r.outputs},
                        {"checks", checks},     {"summary", r.summary}, {"details", r.details}};
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

struct RunResult {
    std::vector<RunRecord> records;
    int exit_code{exit_ok};
    std::filesystem::path manifest;
};

// Runs every configured mode (concurrently when cores allow) and writes
// out/manifest.json.  The manifest is the only shared file.
inline RunResult run_scenario(const ScenarioConfig& c, const std::filesystem::path& out) {
    c.validate();
    const auto started = std::chrono::steady_clock::now();
    const std::string created = utc_timestamp();
    try {
        std::filesystem::create_directories(out);
    } catch (const std::filesystem::filesystem_error& e) {
        throw OutputError(e.what());
    }
    RunResult res;
    res.records.resize(c.modes.size());
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), c.modes.size()));
    for (std::size_t begin = 0; begin < c.modes.size(); begin += workers) {
        std::vector<std::future<RunRecord>> batch;
        for (std::size_t i = begin; i < std::min(begin + workers, c.modes.size()); ++i)
            batch.push_back(std::async(std::launch::async, [&c, &out, i] { return run_mode(c, c.modes[i], out); }));
        for (std::size_t i = 0; i < batch.size(); ++i) res.records[begin + i] = batch[i].get();
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : res.records) {
        runs.push_back(record_json(r));
        if (r.exit_code > exit_check_failed && (res.exit_code <= exit_check_failed || r.exit_code < res.exit_code))
            res.exit_code = r.exit_code;
        else if (r.exit_code == exit_check_failed && res.exit_code == exit_ok)
            res.exit_code = exit_check_failed;
    }
    nlohmann::json manifest = {{"tool", "qbm"},
                               {"name", c.name},
                               {"created", created},
                               {"wall_time_s", wall},
                               {"config_hash", config_hash(c)},
                               {"seed", c.seed},
                               {"versions", versions_json()},
                               {"config", to_ini(c)},
                               {"runs", runs}};
    res.manifest = out / "manifest.json";
    std::ofstream os(res.manifest);
    os << manifest.dump(2) << '\n';
    if (!os) throw OutputError("cannot write '" + res.manifest.string() + "'");
    return res;
}

// ---------------------------------------------------------------------------
// Report

struct ReportRow {
    bool pass;
    std::string run;
    std::string mode;
    std::string detail;
};

inline std::vector<ReportRow> collect_report(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("'" + dir.string() + "' is not a directory");
    std::vector<std::filesystem::path> manifests;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() == "manifest.json") manifests.push_back(e.path());
    if (manifests.empty()) throw ConfigError("no manifest.json under '" + dir.string() + "'");
    std::sort(manifests.begin(), manifests.end());
    std::vector<ReportRow> rows;
    for (const auto& path : manifests) {
        std::ifstream is(path);
        nlohmann::json m;
        try {
            is >> m;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("malformed manifest '" + path.string() + "': " + e.what());
        }
        const auto rel = std::filesystem::relative(path.parent_path(), dir).generic_string();
        const std::string run = rel == "." ? m.value("name", std::string("run")) : rel;
        for (const auto& r : m.at("runs")) {
            ReportRow row{true, run, r.at("mode").get<std::string>(), r.value("summary", "")};
            if (r.at("status") == "error") {
                row.pass = false;
                row.detail = "error: " + r.value("error", "unknown");
            }
            std::string violated;
            for (const auto& c : r.at("checks"))
                if (!c.at("pass").get<bool>()) {
                    char buf[200];
                    std::snprintf(buf, sizeof buf, "%s%s (%.3g > %.3g)", violated.empty() ? "" : "; ",
                                  c.at("name").get<std::string>().c_str(), c.at("value").get<double>(), c.at("limit").get<double>());
                    violated += buf;
                }
            if (!violated.empty()) {
                row.pass = false;
                row.detail = "violated: " + violated + (row.detail.empty() ? "" : " | " + row.detail);
            }
            rows.push_back(row);
        }
    }
    return rows;
}

inline void print_report(const std::vector<ReportRow>& rows, std::ostream& os) {
    std::size_t wr = 3, wm = 4;
    for (const auto& r : rows) {
        wr = std::max(wr, r.run.size());
        wm = std::max(wm, r.mode.size());
    }
    os << std::left << std::setw(6) << "STATUS" << "  " << std::setw(static_cast<int>(wr)) << "RUN" << "  "
       << std::setw(static_cast<int>(wm)) << "MODE" << "  DETAIL\n";
    for (const auto& r : rows)
        os << std::left << std::setw(6) << (r.pass ? "PASS" : "FAIL") << "  " << std::setw(static_cast<int>(wr)) << r.run << "  "
           << std::setw(static_cast<int>(wm)) << r.mode << "  " << r.detail << '\n';
}

}  // namespace qbm
