// acceptance.cpp — end-to-end acceptance run: one PASS/FAIL line per criterion
//
// Usage: acceptance [criterion numbers...]   (default: all ten)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "qbm/cli_runner.hpp"

using namespace qbm;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

// 1: thermal equilibrium is a fixed point of all three lambda equations
Outcome equilibrium_fixed_point() {
    ScenarioConfig c;
    c.gamma = 0.2;
    c.spring_constant = 1.0;
    c.kT = 5.0;
    c.t_final = 10.0 / c.gamma;
    c.lambdas = {-1, 0, 1};
    const auto devs = equilibrium_deviations(c);
    bool pass = true;
    std::string detail = "max|W-W0|/maxW0:";
    for (const auto& d : devs) {
        pass = pass && d.worst < 1e-4;
        detail += fmt(" lambda=%.0f %.2e", d.lambda, d.worst);
    }
    return {pass, detail + " (limit 1e-4)"};
}

// 2: lambda = +-1 means obey the damped-oscillator ODE; lambda = 0 shifts omega^2 by gamma^2/4
Outcome exact_mean_motion() {
    const OscillatorSpec osc{1.0, 1.0, 1.0};
    const ThermalSpec th{1.0};
    const auto bath = BathSpec::ohmic(0.2);
    const double g = bath.gamma, q0 = 2.0, wd = std::sqrt(1.0 - g * g / 4.0);
    const auto w0 = gaussian_wigner(q0, 0.0, 1.0, GridSpec::symmetric(10.0, 10.0, 256, 256));
    EvolutionConfig cfg;
    cfg.t_final = 20.0;
    double worst = 0.0;
    for (int lambda : {-1, 1}) {
        cfg.lambda = lambda;
        const auto tr = evolve_lambda(w0, cfg, osc, th, bath);
        // lambda = +1: d<q>/dt = <p>/m - gamma <q>
        const double v0 = lambda == -1 ? 0.0 : -g * q0;
        const double b = (v0 + 0.5 * g * q0) / wd;
        for (std::size_t n = 0; n < tr.times.size(); ++n) {
            const double t = tr.times[n];
            const double exact = std::exp(-0.5 * g * t) * (q0 * std::cos(wd * t) + b * std::sin(wd * t));
            worst = std::max(worst, std::abs(tr.moments[n].mean_q - exact) / q0);
        }
    }
    cfg.lambda = 0;
    const auto tr = evolve_lambda(w0, cfg, osc, th, bath);
    const double h = tr.times[1] - tr.times[0];
    Eigen::Matrix2d n = Eigen::Matrix2d::Zero();
    Eigen::Vector2d r = Eigen::Vector2d::Zero();
    for (std::size_t k = 1; k + 1 < tr.times.size(); ++k) {
        const double x = tr.moments[k].mean_q;
        const double v = (tr.moments[k + 1].mean_q - tr.moments[k - 1].mean_q) / (2.0 * h);
        const double acc = (tr.moments[k + 1].mean_q - 2.0 * x + tr.moments[k - 1].mean_q) / (h * h);
        const Eigen::Vector2d row(v, x);
        n += row * row.transpose();
        r -= row * acc;
    }
    const Eigen::Vector2d fit = n.ldlt().solve(r);
    const double shift = (fit(1) - 1.0) / (g * g / 4.0);
    return {worst < 1e-3 && std::abs(shift - 1.0) <= 0.02,
            fmt("lambda=+-1 residual/amplitude %.2e (limit 1e-3); lambda=0 (w_eff^2-w0^2)/(gamma^2/4) = %.4f (limit 1 +- 0.02)", worst,
                shift)};
}

// 3: Kramers limit against classical Langevin Monte Carlo
Outcome kramers_limit() {
    ScenarioConfig c;
    c.gamma = 0.2;
    c.spring_constant = 1.0;
    c.kT = 100.0;
    c.state_kind = "thermal";
    c.state_kT = 10.0;
    c.q0 = 20.0;
    c.paths = 100000;
    c.kramers_samples = 10;
    c.kramers_t_final = 10.0;
    c.seed = 20260101;
    const auto cmp = kramers_compare(c);
    return {cmp.max_abs_z <= 3.0, fmt("max |z| over mean/var/cov at 10 times = %.2f (limit 3), %.0f paths", cmp.max_abs_z,
                                      static_cast<double>(c.paths))};
}

// 4: transition kernel vs HPZ evolution
Outcome kernel_pde_equivalence() {
    const OscillatorSpec osc{1.0, 1.0, 1.0};
    const ThermalSpec th{2.0};
    const auto bath = BathSpec::ohmic(0.5);
    const auto grid = GridSpec::symmetric(9.0, 9.0, 256, 256);
    const std::vector<double> targets{0.5 / bath.gamma, 2.0 / bath.gamma, 10.0 / bath.gamma};
    const auto coef = hpz_coefficients(bath, osc, th, TimeGrid::spanning(targets.back(), 0.005));
    double worst = 0.0;
    for (const auto& w0 : {gaussian_wigner(1.0, 0.0, 0.6, grid), cat_wigner(CatSpec{3.0, 0.6}, grid)}) {
        EvolutionConfig cfg;
        cfg.t_final = targets.back();
        std::vector<WignerGrid> snaps;
        std::size_t next = 0;
        cfg.observer = [&](double t, const WignerGrid& w) {
            if (next < targets.size() && std::abs(t - targets[next]) < 1e-9 * targets.back()) {
                snaps.push_back(w);
                ++next;
            }
        };
        evolve_hpz(w0, coef, cfg);
        if (snaps.size() != targets.size()) throw std::runtime_error("observer missed a target time");
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const auto ker = kernel_propagate(w0, bath, osc, th, targets[i]);
            worst = std::max(worst, max_abs_difference(snaps[i], ker) / max_abs(ker));
        }
    }
    return {worst < 1e-3, fmt("max|PDE-kernel|/max over Gaussian+cat at t = 0.5, 2, 10 /gamma: %.2e (limit 1e-3)", worst)};
}

// 5: Ohmic HPZ coefficients
Outcome hpz_coefficients_ohmic() {
    const OscillatorSpec osc{1.0, 1.0, 1.0};
    const ThermalSpec th{5.0};
    const auto bath = BathSpec::ohmic(0.2);
    const auto c = hpz_coefficients(bath, osc, th, TimeGrid::spanning(60.0, 0.05));
    double dg = 0.0, dw = 0.0;
    for (std::size_t i = 1; i < c.times.size(); ++i) {
        dg = std::max(dg, std::abs(c.gamma_t[i] / bath.gamma - 1.0));
        dw = std::max(dw, std::abs(c.omega2_t[i] - 1.0));
    }
    const double target = bath.gamma * 0.5 * occupation_factor(osc, th) * osc.mass * osc.hbar * osc.omega0();
    const double dd = std::abs(c.d_pp.back() / target - 1.0);
    return {dg <= 1e-4 && dw <= 1e-4 && dd <= 0.01,
            fmt("2Gamma rel %.1e, Omega^2 rel %.1e (limit 1e-4); d_pp(60)/gamma(N+1/2)m hbar w0 - 1 = %.2e (limit 1e-2)", dg, dw, dd)};
}

// 6: zero-temperature-initial regime
Outcome zero_t_initial() {
    DecoherenceScenario sc;
    sc.regime = Regime::ZeroTInitial;
    sc.bath = BathSpec::ohmic(1e-3);
    sc.osc = OscillatorSpec{1.0, 0.0, 1.0};
    sc.thermal = ThermalSpec{50.0};
    sc.cat = CatSpec{12.0, 1.0};
    const auto times = linspace(0.0, 1.2, 13);
    const auto series = simulate_attenuation(sc, times);
    double worst = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const auto cf = closed_form_zero_T_initial(sc.params(), times[i]);
        if (!cf.in_regime || cf.value < 1e-3) continue;
        ++used;
        worst = std::max(worst, std::abs(series.a[i] / cf.value - 1.0));
    }
    DecoherenceScenario narrow = sc;
    narrow.cat = CatSpec{14.0, 0.1};
    const double tau = 0.4;
    narrow.thermal = ThermalSpec{3.0 / (tau * 1e-3 * 14.0 * 14.0)};
    const auto ns = simulate_attenuation(narrow, linspace(0.2, 0.6, 9));
    const double tau_err = std::abs(ns.law.tau_d / tau - 1.0);
    return {worst <= 0.05 && used >= 8 && tau_err <= 0.05 && ns.law.nominal_exponent == 1,
            fmt("a(t) vs closed form worst %.2e over %.0f in-window points (limit 5e-2); sigma->0 tau_d rel err %.2e (limit 5e-2)",
                worst, static_cast<double>(used), tau_err)};
}

// 7: thermal-initial tau_d, entangled high-T reduction, zero-T log scaling
Outcome thermal_and_entangled() {
    DecoherenceScenario sc;
    sc.regime = Regime::ThermalInitial;
    sc.bath = BathSpec::ohmic(1e-3);
    sc.osc = OscillatorSpec{1.0, 0.0, 1.0};
    sc.thermal = ThermalSpec{4.0};
    sc.cat = CatSpec{10.0, 1.0};
    const double tau = std::sqrt(8.0) * 1.0 / (std::sqrt(4.0) * 10.0);
    const auto series = simulate_attenuation(sc, linspace(0.01, 0.05, 9));
    const double tau_err = std::abs(series.law.tau_d / tau - 1.0);
    const double exp_err = std::abs(series.law.exponent - 2.0);

    const double gamma = 0.05;
    const OscillatorSpec free{1.0, 0.0, 1.0};
    double reduce = 0.0;
    for (double kT : {20.0 * gamma, 2.0, 10.0})
        for (double d : {1.0, 3.0})
            for (double t : linspace(0.1 / gamma / 20.0, 0.1 / gamma, 20)) {
                const double e = closed_form_entangled(BathSpec::ohmic(gamma), free, ThermalSpec{kT}, CatSpec{d, 1.0}, t);
                const double r = closed_form_thermal_initial(DecoherenceParams{1.0, 1.0, kT, gamma, d, 1.0, 0.0}, t).value;
                reduce = std::max(reduce, std::abs(e / r - 1.0));
            }

    const double g = 0.01, sigma = 10.0, d = 10.0;
    std::vector<double> logs, slopes;
    double worst_exp = 0.0;
    for (double gt : {1e-4, 2e-4, 5e-4, 1e-3}) {
        const double tau_b = gt / g;
        const auto bath = BathSpec::single_relaxation_time(g, tau_b);
        std::vector<double> ts = linspace(0.02 * tau_b, 0.1 * tau_b, 5), as;
        for (double t : ts) as.push_back(closed_form_entangled(bath, free, ThermalSpec{0.0}, CatSpec{d, sigma}, t));
        worst_exp = std::max(worst_exp, std::abs(fit_short_time_law(ts, as, ts.back()).exponent - 2.0));
        logs.push_back(std::abs(std::log(gt)));
        slopes.push_back(-std::log(as.front()) / (ts.front() * ts.front()) * 8.0 * std::pow(sigma, 4) / (d * d));
    }
    const double slope = (slopes.front() - slopes.back()) / (logs.front() - logs.back()) / (g / pi);
    const bool pass = tau_err <= 0.05 && exp_err <= 0.1 && reduce <= 0.02 && worst_exp <= 0.1 && std::abs(slope - 1.0) <= 0.05;
    char buf[320];
    std::snprintf(buf, sizeof buf,
                  "thermal tau_d rel err %.2e, exponent %.3f; entangled/thermal worst %.2e (limit 2e-2); "
                  "kT=0 srt: exponent dev %.3f (limit 0.1), d(s/t^2)/d|log gamma tau| / (hbar gamma/pi m) = %.4f (limit 1 +- 0.05)",
                  tau_err, series.law.exponent, reduce, worst_exp, slope);
    return {pass, buf};
}

// 8: driven displacement: cubic law and Monte Carlo
Outcome driven_decoherence() {
    const double g = 0.5, m = 1.0;
    const OscillatorSpec osc{m, 1.0, 1.0};
    const auto bath = BathSpec::ohmic(0.0, m);
    const auto green = initial_value_green(bath, osc, TimeGrid{0.01, 1001});
    double cubic = 0.0;
    for (double t : linspace(0.01, 0.1, 10))
        cubic = std::max(cubic, std::abs(driven_msd(DriveSpec::delta_correlated(g), green, t) / (g * t * t * t / (3.0 * m * m)) - 1.0));
    const std::vector<double> times{0.5, 1.0, 2.0, 4.0, 8.0};
    const auto mc = langevin_monte_carlo_driven(m, osc.spring_constant, 0.0, g, Eigen::Vector2d::Zero(), Eigen::Matrix2d::Zero(), times,
                                                10000, 0.005, 8);
    double zmax = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double sd = driven_msd(DriveSpec::delta_correlated(g), green, times[k]);
        zmax = std::max(zmax, std::abs(mc.mean[k][2] - sd) / mc.stderr_[k][2]);
    }
    return {cubic <= 0.01 && zmax <= 3.0,
            fmt("s_d vs g t^3/3m^2 worst %.2e for w0 t <= 0.1 (limit 1e-2); Monte Carlo (1e4 paths) max |z| %.2f (limit 3)", cubic, zmax)};
}

// 9: uncertainty-determinant detector
Outcome non_positivity_detector() {
    const OscillatorSpec osc{1.0, 1.0, 1.0};
    const ThermalSpec th{0.1};
    const auto bath = BathSpec::ohmic(0.5);
    const auto w0 = gaussian_wigner(0.0, 0.0, 0.3, GridSpec::symmetric(11.0, 11.0, 256, 256));
    EvolutionConfig cfg;
    cfg.t_final = 4.0;
    cfg.lambda = -1;
    const auto pre = evolve_lambda(w0, cfg, osc, th, bath);
    cfg.lambda = 0;
    const auto master = evolve_lambda(w0, cfg, osc, th, bath);
    return {pre.uncertainty.fired && !master.uncertainty.fired,
            fmt("lambda=-1 min det %.4f at t=%.2f (bound 0.25)", pre.uncertainty.min_determinant, pre.uncertainty.min_time) +
                (pre.uncertainty.fired ? ", fired" : ", never fired") +
                fmt("; lambda=0 min det %.4f", master.uncertainty.min_determinant) +
                (master.uncertainty.fired ? ", fired" : ", never fired")};
}

// 10: Fourier-path density vs kernel marginal
Outcome fourier_path_consistency() {
    const OscillatorSpec osc{1.0, 1.0, 1.0};
    const ThermalSpec th{2.0};
    const auto bath = BathSpec::ohmic(0.5);
    const CatSpec cat{3.0, 0.6};
    const auto grid = GridSpec::symmetric(9.0, 9.0, 256, 256);
    std::vector<double> x;
    for (std::size_t i = 0; i < grid.q.n; ++i) x.push_back(grid.q.at(i));
    double worst = 0.0;
    for (double t : {0.5 / bath.gamma, 2.0 / bath.gamma, 10.0 / bath.gamma}) {
        const auto k = gaussian_transition(bath, osc, th, t);
        const auto mq = marginal_q(kernel_propagate(cat_wigner(cat, grid), k));
        const auto p = probability_density_fourier(cat, k, osc, x);
        const double peak = *std::max_element(mq.begin(), mq.end());
        for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(p[i] - mq[i]) / peak);
    }
    return {worst <= 1e-3, fmt("max|P_fourier - marginal|/max at t = 0.5, 2, 10 /gamma: %.2e (limit 1e-3)", worst)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"equilibrium fixed point", equilibrium_fixed_point},
        {"exact mean motion", exact_mean_motion},
        {"Kramers limit", kramers_limit},
        {"kernel/PDE equivalence", kernel_pde_equivalence},
        {"HPZ coefficients", hpz_coefficients_ohmic},
        {"zero-T-initial decoherence", zero_t_initial},
        {"thermal-initial and entangled decoherence", thermal_and_entangled},
        {"driven decoherence", driven_decoherence},
        {"non-positivity detector", non_positivity_detector},
        {"Fourier-path consistency", fourier_path_consistency},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o{false, ""};
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
