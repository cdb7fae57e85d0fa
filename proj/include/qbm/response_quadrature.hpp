// response_quadrature.hpp — Green functions, fluctuation-dissipation integrals,
// fluctuation moments and driven mean-square displacement

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qbm/bath_models.hpp"
#include "qbm/quadrature.hpp"

namespace qbm {

// Uniform time samples t_i = i * step, i = 0 .. count-1.
struct TimeGrid {
    double step{0.01};
    std::size_t count{1};

    double at(std::size_t i) const noexcept { return static_cast<double>(i) * step; }
    double last() const noexcept { return at(count - 1); }
    std::vector<double> times() const {
        std::vector<double> t(count);
        for (std::size_t i = 0; i < count; ++i) t[i] = at(i);
        return t;
    }
    static TimeGrid spanning(double t_final, double max_step) {
        if (!(t_final > 0.0) || !(max_step > 0.0)) throw std::invalid_argument("TimeGrid: need t_final > 0 and step > 0");
        const auto n = static_cast<std::size_t>(std::ceil(t_final / max_step - 1e-9));
        return TimeGrid{t_final / static_cast<double>(n), n + 1};
    }
};

namespace detail {

// Quintic Hermite interpolation on [0, h] from value, first and second derivative.
inline double hermite5(double f0, double d0, double s0, double f1, double d1, double s1, double h, double x) {
    const double u = x / h;
    const double u2 = u * u, u3 = u2 * u, u4 = u3 * u, u5 = u4 * u;
    const double h00 = 1 - 10 * u3 + 15 * u4 - 6 * u5;
    const double h01 = 10 * u3 - 15 * u4 + 6 * u5;
    const double h10 = u - 6 * u3 + 8 * u4 - 3 * u5;
    const double h11 = -4 * u3 + 7 * u4 - 3 * u5;
    const double h20 = 0.5 * (u2 - 3 * u3 + 3 * u4 - u5);
    const double h21 = 0.5 * (u3 - 2 * u4 + u5);
    return h00 * f0 + h01 * f1 + h * (h10 * d0 + h11 * d1) + h * h * (h20 * s0 + h21 * s1);
}

inline double hermite3(double f0, double d0, double f1, double d1, double h, double x) {
    const double u = x / h;
    const double u2 = u * u, u3 = u2 * u;
    return (2 * u3 - 3 * u2 + 1) * f0 + (u3 - 2 * u2 + u) * h * d0 + (-2 * u3 + 3 * u2) * f1 + (u3 - u2) * h * d1;
}

}  // namespace detail

// Sampled G(t) and its first three derivatives.
struct GreenTable {
    std::vector<double> times;
    std::vector<double> g, gdot, gddot, gdddot;
    double mass{1.0};

    double step() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
    std::size_t size() const noexcept { return times.size(); }

    double g_at(double t) const { return eval(t, 0); }
    double gdot_at(double t) const { return eval(t, 1); }
    double gddot_at(double t) const { return eval(t, 2); }

private:
    double eval(double t, int order) const {
        if (times.empty()) throw std::out_of_range("GreenTable: empty");
        const double h = step();
        if (t < 0.0) return 0.0;
        if (t > times.back() * (1.0 + 1e-12) + 1e-300)
            throw std::out_of_range("GreenTable: t = " + std::to_string(t) + " beyond table end " + std::to_string(times.back()));
        if (size() == 1) return order == 0 ? g[0] : order == 1 ? gdot[0] : gddot[0];
        auto i = static_cast<std::size_t>(t / h);
        if (i >= size() - 1) i = size() - 2;
        const double x = t - times[i];
        switch (order) {
            case 0: return detail::hermite5(g[i], gdot[i], gddot[i], g[i + 1], gdot[i + 1], gddot[i + 1], h, x);
            case 1: return detail::hermite5(gdot[i], gddot[i], gdddot[i], gdot[i + 1], gddot[i + 1], gdddot[i + 1], h, x);
            default: return detail::hermite3(gddot[i], gdddot[i], gddot[i + 1], gdddot[i + 1], h, x);
        }
    }
};

struct VolterraError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CausalityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LowTemperatureError : std::domain_error {
    using std::domain_error::domain_error;
};

// Largest frequency resolved by panels before the analytic tail.
inline double spectral_cutoff(const BathSpec& bath, const OscillatorSpec& osc) {
    double w = std::max(50.0 * osc.omega0(), 50.0 * bath.gamma);
    if (bath.kind == BathKind::SingleRelaxationTime) w = std::max(w, 50.0 / bath.tau);
    return w > 0.0 ? w : 1.0;
}

inline SpectralOptions spectral_options(const BathSpec& bath, const OscillatorSpec& osc, const ThermalSpec* th = nullptr) {
    SpectralOptions opt;
    opt.omega_max = spectral_cutoff(bath, osc);
    const double w0 = osc.omega0();
    if (w0 > 0.0) opt.features.push_back(w0);
    if (bath.gamma > 0.0) opt.features.push_back(bath.gamma);
    if (bath.kind == BathKind::SingleRelaxationTime) opt.features.push_back(1.0 / bath.tau);
    if (th && th->kT > 0.0) opt.features.push_back(th->kT / osc.hbar);
    opt.feature_width = 0.5 * bath.gamma;
    return opt;
}

// ---------------------------------------------------------------------------
// Closed forms for the Ohmic oscillator: m G'' + m gamma G' + K G = 0,
// G(0) = 0, G'(0) = 1/m. Returns d^n G / dt^n for n = 0..3.

inline std::array<double, 4> ohmic_green(double gamma, double mass, double K, double t) {
    std::array<double, 4> out{};
    if (t < 0.0) return out;
    const double w0sq = K / mass;
    const double half = 0.5 * gamma;
    const std::complex<double> delta = std::sqrt(std::complex<double>(half * half - w0sq, 0.0));
    const double scale = half + std::sqrt(w0sq) + 1e-300;
    if (std::abs(delta) < 1e-7 * scale) {
        // critical damping: G = t e^{rt}/m
        const double r = -half;
        const double e = std::exp(r * t);
        double rn = 1.0, rn1 = 0.0;  // r^n, r^(n-1)
        for (int n = 0; n < 4; ++n) {
            out[n] = (n * rn1 + rn * t) * e / mass;
            rn1 = rn;
            rn *= r;
        }
        return out;
    }
    const std::complex<double> r1 = -half + delta, r2 = -half - delta;
    const std::complex<double> e1 = std::exp(r1 * t), e2 = std::exp(r2 * t);
    std::complex<double> p1 = 1.0, p2 = 1.0;
    for (int n = 0; n < 4; ++n) {
        out[n] = ((p1 * e1 - p2 * e2) / (mass * (r1 - r2))).real();
        p1 *= r1;
        p2 *= r2;
    }
    return out;
}

namespace detail {

inline GreenTable ohmic_table(const BathSpec& bath, const OscillatorSpec& osc, const TimeGrid& grid) {
    GreenTable tab;
    tab.mass = osc.mass;
    tab.times = grid.times();
    for (double t : tab.times) {
        const auto d = ohmic_green(bath.gamma, osc.mass, osc.spring_constant, t);
        tab.g.push_back(d[0]);
        tab.gdot.push_back(d[1]);
        tab.gddot.push_back(d[2]);
        tab.gdddot.push_back(d[3]);
    }
    return tab;
}

inline void require_well_posed(const BathSpec& bath, const OscillatorSpec& osc) {
    bath.validate();
    osc.validate();
    if (!(bath.gamma > 0.0) && !(osc.spring_constant > 0.0))
        throw std::domain_error("Green function: gamma = 0 and K = 0 leaves the Fourier inversion ill-posed");
}

}  // namespace detail

// G(t) = (1/2pi) int dw alpha(w+i0+) e^{-iwt}. Ohmic and undamped cases use
// the closed form; otherwise G = (2/pi) int_0^inf Im alpha sin(wt) with a
// causality check comparing it against (1/pi) int_0^inf Re alpha cos(wt).
inline GreenTable green_stationary(const BathSpec& bath, const OscillatorSpec& osc, const TimeGrid& grid,
                                   double causality_tol = 1e-6) {
    detail::require_well_posed(bath, osc);
    if (bath.kind == BathKind::Ohmic || bath.gamma == 0.0) {
        return detail::ohmic_table(BathSpec::ohmic(bath.gamma, bath.mass), osc, grid);
    }
    const auto opt = spectral_options(bath, osc);
    auto im = [&](double w) { return response_imag(bath, osc, w); };
    auto re = [&](double w) { return response(bath, osc, w).real(); };
    GreenTable tab;
    tab.mass = osc.mass;
    tab.times = grid.times();
    double peak = 0.0, worst = 0.0;
    for (double t : tab.times) {
        const double gs = integrate_spectral(im, Weight::Sin, t, opt).value / pi;
        const double gc = integrate_spectral(re, Weight::Cos, t, opt).value / pi;
        tab.g.push_back(2.0 * gs);
        tab.gdot.push_back(2.0 / pi * integrate_spectral([&](double w) { return w * im(w); }, Weight::Cos, t, opt).value);
        tab.gddot.push_back(-2.0 / pi * integrate_spectral([&](double w) { return w * w * im(w); }, Weight::Sin, t, opt).value);
        tab.gdddot.push_back(-2.0 / pi * integrate_spectral([&](double w) { return w * w * w * im(w); }, Weight::Cos, t, opt).value);
        // G(-t) = gc - gs must vanish
        if (t > 0.0) worst = std::max(worst, std::abs(gc - gs));
        peak = std::max(peak, std::abs(2.0 * gs));
    }
    if (peak > 0.0 && worst > causality_tol * peak)
        throw CausalityError("green_stationary: |G(t<0)| = " + std::to_string(worst) + " exceeds causality tolerance");
    return tab;
}

namespace detail {

struct VolterraSolution {
    std::vector<double> g, v, a, j;  // G, G', G'', G'''
};

// Trapezoidal product integration of
//   m G'' + c G' + int_0^t mu(t-s) G'(s) ds + K G = 0,  G(0)=0, G'(0)=1/m
// where c = m gamma for a local (Ohmic) bath and mu the non-local memory.
inline VolterraSolution volterra_trapezoid(const BathSpec& bath, const OscillatorSpec& osc, double h, std::size_t n) {
    const double m = osc.mass, K = osc.spring_constant;
    const double c = bath.is_local() ? bath.friction() : 0.0;
    const bool nonlocal = !bath.is_local() && bath.gamma > 0.0;
    VolterraSolution s;
    s.g.assign(n + 1, 0.0);
    s.v.assign(n + 1, 0.0);
    s.a.assign(n + 1, 0.0);
    s.j.assign(n + 1, 0.0);
    std::vector<double> mu, dmu;
    if (nonlocal) {
        mu.resize(n + 1);
        dmu.resize(n + 1);
        for (std::size_t k = 0; k <= n; ++k) {
            mu[k] = bath.memory(static_cast<double>(k) * h);
            dmu[k] = bath.memory_derivative(static_cast<double>(k) * h);
        }
    }
    // I_n = int_0^{t_n} mu(t_n - s) v(s) ds by trapezoid; dI_n its time derivative
    auto history = [&](std::size_t k, const std::vector<double>& kern, bool include_end) {
        if (k == 0) return 0.0;
        double acc = 0.5 * kern[k] * s.v[0];
        for (std::size_t j = 1; j < k; ++j) acc += kern[k - j] * s.v[j];
        if (include_end) acc += 0.5 * kern[0] * s.v[k];
        return acc * h;
    };
    s.v[0] = 1.0 / m;
    s.a[0] = -c * s.v[0] / m;
    s.j[0] = (-(nonlocal ? mu[0] * s.v[0] : 0.0) - c * s.a[0] - K * s.v[0]) / m;
    double force_prev = -c * s.v[0] - K * s.g[0];  // m G'' at t_n
    for (std::size_t k = 0; k < n; ++k) {
        const double partial = nonlocal ? history(k + 1, mu, false) : 0.0;
        const double mu0h = nonlocal ? 0.5 * h * mu[0] : 0.0;
        // unknowns x = G_{k+1}, y = V_{k+1}
        //   x - h/2 y = G_k + h/2 V_k
        //   m y + h/2 (mu0h y + c y + K x) = m V_k + h/2 force_prev - h/2 partial
        const double a11 = 1.0, a12 = -0.5 * h;
        const double a21 = 0.5 * h * K, a22 = m + 0.5 * h * (mu0h + c);
        const double b1 = s.g[k] + 0.5 * h * s.v[k];
        const double b2 = m * s.v[k] + 0.5 * h * force_prev - 0.5 * h * partial;
        const double det = a11 * a22 - a12 * a21;
        s.g[k + 1] = (b1 * a22 - a12 * b2) / det;
        s.v[k + 1] = (a11 * b2 - a21 * b1) / det;
        const double I = partial + mu0h * s.v[k + 1];
        force_prev = -I - c * s.v[k + 1] - K * s.g[k + 1];
        s.a[k + 1] = force_prev / m;
        if (!std::isfinite(s.g[k + 1]) || !std::isfinite(s.v[k + 1]))
            throw VolterraError("green_initial_value: integrator produced non-finite values at step " + std::to_string(k + 1));
    }
    for (std::size_t k = 1; k <= n; ++k) {
        // m G''' = -(mu(0) V + int mu'(t-s) V ds) - c G'' - K G'
        const double dI = nonlocal ? mu[0] * s.v[k] + history(k, dmu, true) : 0.0;
        s.j[k] = (-dI - c * s.a[k] - K * s.v[k]) / m;
    }
    return s;
}

}  // namespace detail

// Homogeneous initial-value Green function by time-domain Volterra
// integration, Richardson-extrapolated from steps h and h/2.
inline GreenTable green_initial_value(const BathSpec& bath, const OscillatorSpec& osc, const TimeGrid& grid) {
    detail::require_well_posed(bath, osc);
    if (bath.gamma == 0.0) return detail::ohmic_table(BathSpec::ohmic(0.0, bath.mass), osc, grid);
    double hmax = grid.step;
    const double w0 = osc.omega0();
    if (w0 > 0.0) hmax = std::min(hmax, 0.02 / w0);
    if (bath.gamma > 0.0) hmax = std::min(hmax, 0.02 / bath.gamma);
    if (bath.kind == BathKind::SingleRelaxationTime) hmax = std::min(hmax, 0.05 * bath.tau);
    const auto sub = static_cast<std::size_t>(std::max(1.0, std::ceil(grid.step / hmax - 1e-9)));
    const double h = grid.step / static_cast<double>(sub);
    const std::size_t n = (grid.count - 1) * sub;
    const auto coarse = detail::volterra_trapezoid(bath, osc, h, n);
    const auto fine = detail::volterra_trapezoid(bath, osc, 0.5 * h, 2 * n);
    GreenTable tab;
    tab.mass = osc.mass;
    tab.times = grid.times();
    auto rich = [](double fine_v, double coarse_v) { return (4.0 * fine_v - coarse_v) / 3.0; };
    for (std::size_t i = 0; i < grid.count; ++i) {
        const std::size_t kc = i * sub, kf = 2 * i * sub;
        tab.g.push_back(rich(fine.g[kf], coarse.g[kc]));
        tab.gdot.push_back(rich(fine.v[kf], coarse.v[kc]));
        tab.gddot.push_back(rich(fine.a[kf], coarse.a[kc]));
        tab.gdddot.push_back(rich(fine.j[kf], coarse.j[kc]));
    }
    return tab;
}

// ---------------------------------------------------------------------------
// Fluctuation-dissipation integrals over Im alpha.

namespace detail {

inline auto im_alpha_coth(const BathSpec& bath, const OscillatorSpec& osc, const ThermalSpec& th) {
    return [&bath, &osc, kT = th.kT](double w) {
        return response_imag(bath, osc, w) * thermal_coth(osc.hbar * w, kT);
    };
}

inline void require_damped(const BathSpec& bath, const OscillatorSpec& osc) {
    bath.validate();
    osc.validate();
    if (!(bath.gamma > 0.0) && !(osc.spring_constant > 0.0))
        throw std::domain_error("free undamped particle: correlation integrals diverge");
}

}  // namespace detail

// C0(t) = (hbar/pi) int_0^inf Im alpha coth(hbar w/2kT) cos(wt) dw.
inline double position_autocorrelation(const BathSpec& bath, const OscillatorSpec& osc, const ThermalSpec& th, double t) {
    detail::require_damped(bath, osc);
    th.validate();
    if (!(osc.spring_constant > 0.0))
        throw std::domain_error("position_autocorrelation: K = 0 has no stationary position variance");
    const double w0 = osc.omega0();
    if (bath.gamma == 0.0)
        return osc.hbar / (2.0 * osc.mass * w0) * thermal_coth(osc.hbar * w0, th.kT) * std::cos(w0 * t);
    const auto opt = spectral_options(bath, osc, &th);
    return osc.hbar / pi * integrate_spectral(detail::im_alpha_coth(bath, osc, th), Weight::Cos, t, opt).value;
}

// s(t) = (2 hbar/pi) int_0^inf Im alpha coth(hbar w/2kT) (1 - cos wt) dw.
inline double mean_square_displacement(const BathSpec& bath, const OscillatorSpec& osc, const ThermalSpec& th, double t) {
    detail::require_damped(bath, osc);
    th.validate();
    if (t == 0.0) return 0.0;
    const double w0 = osc.omega0();
    if (bath.gamma == 0.0)
        return osc.hbar / (osc.mass * w0) * thermal_coth(osc.hbar * w0, th.kT) * (1.0 - std::cos(w0 * t));
    auto opt = spectral_options(bath, osc, &th);
    return 2.0 * osc.hbar / pi * integrate_spectral(detail::im_alpha_coth(bath, osc, th), Weight::OneMinusCos, t, opt).value;
}

// c_comm(t) = (2 hbar/pi) int_0^inf Im alpha sin(wt) dw, with [x(t),x(0)] = i c_comm.
inline double commutator_x(const BathSpec& bath, const OscillatorSpec& osc, double t) {
    detail::require_damped(bath, osc);
    if (t == 0.0) return 0.0;
    const double w0 = osc.omega0();
    if (bath.gamma == 0.0) return osc.hbar * std::sin(w0 * t) / (osc.mass * w0);
    const auto opt = spectral_options(bath, osc);
    auto im = [&](double w) { return response_imag(bath, osc, w); };
    return 2.0 * osc.hbar / pi * integrate_spectral(im, Weight::Sin, t, opt).value;
}

// ---------------------------------------------------------------------------
// Fluctuation moments of X(t) = int_0^t G(t-t') F(t') dt'.

enum class NoiseKernel {
    HighTemperature,  // hbar w coth -> 2kT (zero-point oscillations neglected)
    Quantum,          // full hbar w coth with a hard cutoff; low-T only with override
};

struct MomentOptions {
    NoiseKernel kernel{NoiseKernel::HighTemperature};
    bool allow_low_temperature{false};
    double max_step{0.0};  // internal quadrature step; 0 picks a default
};

struct FluctuationMoments {
    std::vector<double> times;
    std::vector<double> xx, vv, xv;     // <X^2>, <Xdot^2>, (1/2)<X Xdot + Xdot X>
    std::vector<double> dxx, dvv, dxv;  // exact time derivatives
    double mass{1.0};

    // A(t) in (p, q) ordering:  [[m^2 <Xdot^2>, m/2 <XXdot+XdotX>], [., <X^2>]]
    Eigen::Matrix2d a_matrix(std::size_t i) const {
        Eigen::Matrix2d a;
        a << mass * mass * vv[i], mass * xv[i], mass * xv[i], xx[i];
        return a;
    }
    // covariance increment in (q, p) ordering
    Eigen::Matrix2d covariance_qp(std::size_t i) const {
        Eigen::Matrix2d c;
        c << xx[i], mass * xv[i], mass * xv[i], mass * mass * vv[i];
        return c;
    }
    Eigen::Matrix2d covariance_qp_rate(std::size_t i) const {
        Eigen::Matrix2d c;
        c << dxx[i], mass * dxv[i], mass * dxv[i], mass * mass * dvv[i];
        return c;
    }
    std::size_t index_of(double t) const {
        const double h = times.size() > 1 ? times[1] - times[0] : 1.0;
        const double r = t / h;
        const auto i = static_cast<std::size_t>(std::llround(r));
        if (std::abs(r - static_cast<double>(i)) > 1e-6 || i >= times.size())
            throw std::out_of_range("FluctuationMoments: t = " + std::to_string(t) + " is not a grid time");
        return i;
    }
};

inline void check_moment_temperature(const OscillatorSpec& osc, const ThermalSpec& th, bool allow, const char* who) {
    if (th.kT >= osc.hbar * osc.omega0()) return;
    const std::string msg = std::string(who) +
        ": kT < hbar*omega0. The initially uncoupled state carries a zero-point divergence that a cutoff does not "
        "remove; results are only meaningful at high temperature.";
    if (!allow) throw LowTemperatureError(msg + " Set the low-temperature override to proceed.");
    std::cerr << "WARNING: " << msg << " Proceeding because the override is set.\n";
}

namespace detail {

// Cumulative D(t) = int_0^t int_0^t f(a) g(b) k(a-b) da db on a uniform grid,
// via dD/dt = f(t) int_0^t g(b) k(t-b) db + g(t) int_0^t f(a) k(t-a) da.
inline void double_integral(const std::vector<double>& f, const std::vector<double>& fp, const std::vector<double>& g,
                            const std::vector<double>& gp, const std::vector<double>& kern, const std::vector<double>& dkern,
                            double h, std::vector<double>& value, std::vector<double>& rate) {
    const std::size_t n = f.size();
    value.assign(n, 0.0);
    rate.assign(n, 0.0);
    // int_0^t u(b) k(t-b) db by trapezoid with Euler-Maclaurin end corrections
    auto inner = [&](const std::vector<double>& u, const std::vector<double>& up, std::size_t k) {
        double acc = 0.5 * (u[0] * kern[k] + u[k] * kern[0]);
        for (std::size_t j = 1; j < k; ++j) acc += u[j] * kern[k - j];
        const double d0 = up[0] * kern[k] - u[0] * dkern[k];
        const double d1 = up[k] * kern[0] - u[k] * dkern[0];
        return h * acc - h * h / 12.0 * (d1 - d0);
    };
    for (std::size_t k = 1; k < n; ++k) rate[k] = f[k] * inner(g, gp, k) + g[k] * inner(f, fp, k);
    std::vector<double> drate(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        if (n < 5) break;
        if (k >= 2 && k + 2 < n)
            drate[k] = (-rate[k + 2] + 8.0 * rate[k + 1] - 8.0 * rate[k - 1] + rate[k - 2]) / (12.0 * h);
        else if (k < 2)
            drate[k] = (-25.0 * rate[k] + 48.0 * rate[k + 1] - 36.0 * rate[k + 2] + 16.0 * rate[k + 3] - 3.0 * rate[k + 4]) / (12.0 * h);
        else
            drate[k] = (25.0 * rate[k] - 48.0 * rate[k - 1] + 36.0 * rate[k - 2] - 16.0 * rate[k - 3] + 3.0 * rate[k - 4]) / (12.0 * h);
    }
    for (std::size_t k = 1; k < n; ++k)
        value[k] = value[k - 1] + 0.5 * h * (rate[k - 1] + rate[k]) + h * h / 12.0 * (drate[k - 1] - drate[k]);
}

}  // namespace detail

inline FluctuationMoments fluctuation_moments(const BathSpec& bath, const OscillatorSpec& osc, const ThermalSpec& th,
                                              const TimeGrid& grid, const MomentOptions& opt = {}) {
    bath.validate();
    osc.validate();
    th.validate();
    check_moment_temperature(osc, th, opt.allow_low_temperature, "fluctuation_moments");
    FluctuationMoments mom;
    mom.mass = osc.mass;
    mom.times = grid.times();
    const std::size_t n = grid.count;
    mom.xx.assign(n, 0.0);
    mom.vv.assign(n, 0.0);
    mom.xv.assign(n, 0.0);
    mom.dxx.assign(n, 0.0);
    mom.dvv.assign(n, 0.0);
    mom.dxv.assign(n, 0.0);
    if (bath.gamma == 0.0 || n < 2) return mom;

    const double zeta = bath.friction();
    if (opt.kernel == NoiseKernel::HighTemperature && bath.is_local()) {
        // kappa = 2 zeta kT delta: moments are single integrals of G and G'
        const double c = 2.0 * zeta * th.kT;
        const double hmax = 0.005 / std::max(osc.omega0(), bath.gamma);
        const auto sub = static_cast<std::size_t>(std::max(1.0, std::ceil(grid.step / hmax - 1e-9)));
        const double h = grid.step / static_cast<double>(sub);
        auto d = ohmic_green(bath.gamma, osc.mass, osc.spring_constant, 0.0);
        double xx = 0.0, vv = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i > 0) {
                for (std::size_t k = 1; k <= sub; ++k) {
                    // trapezoid with end corrections, O(h^4)
                    const auto e = ohmic_green(bath.gamma, osc.mass, osc.spring_constant, grid.at(i - 1) + static_cast<double>(k) * h);
                    xx += 0.5 * h * c * (d[0] * d[0] + e[0] * e[0]) + h * h / 6.0 * c * (d[0] * d[1] - e[0] * e[1]);
                    vv += 0.5 * h * c * (d[1] * d[1] + e[1] * e[1]) + h * h / 6.0 * c * (d[1] * d[2] - e[1] * e[2]);
                    d = e;
                }
            }
            mom.xx[i] = xx;
            mom.vv[i] = vv;
            mom.dxx[i] = c * d[0] * d[0];
            mom.dvv[i] = c * d[1] * d[1];
            mom.dxv[i] = c * d[0] * d[1];
            mom.xv[i] = 0.5 * c * d[0] * d[0];
        }
        return mom;
    }

    // General kernel: tabulate kappa on a fine grid and integrate cumulatively.
    double hk = opt.max_step > 0.0 ? opt.max_step : 0.005 / std::max({osc.omega0(), bath.gamma, 1e-300});
    if (bath.kind == BathKind::SingleRelaxationTime) hk = std::min(hk, 0.01 * bath.tau);
    const double cutoff = spectral_cutoff(bath, osc);
    if (opt.kernel == NoiseKernel::Quantum) hk = std::min(hk, 0.1 / cutoff);
    const auto sub = static_cast<std::size_t>(std::max(1.0, std::ceil(grid.step / hk - 1e-9)));
    const TimeGrid fine{grid.step / static_cast<double>(sub), (n - 1) * sub + 1};
    const auto tab = bath.is_local() ? green_stationary(bath, osc, fine) : green_initial_value(bath, osc, fine);
    std::vector<double> kern(fine.count), dkern(fine.count);
    if (opt.kernel == NoiseKernel::HighTemperature) {
        for (std::size_t k = 0; k < fine.count; ++k) {
            kern[k] = th.kT * bath.memory(fine.at(k));
            dkern[k] = th.kT * bath.memory_derivative(fine.at(k));
        }
    } else {
        SpectralOptions so = spectral_options(bath, osc, &th);
        so.omega_max = cutoff;
        so.include_tail = false;
        auto spectrum = [&](double w) {
            return memory_fourier(bath, complex(w, 0.0)).real() * thermal_energy_factor(osc.hbar * w, th.kT);
        };
        for (std::size_t k = 0; k < fine.count; ++k) {
            kern[k] = integrate_spectral(spectrum, Weight::Cos, fine.at(k), so).value / pi;
            dkern[k] = -integrate_spectral([&](double w) { return w * spectrum(w); }, Weight::Sin, fine.at(k), so).value / pi;
        }
    }
    std::vector<double> xx, rxx, vv, rvv, xv, rxv;
    detail::double_integral(tab.g, tab.gdot, tab.g, tab.gdot, kern, dkern, fine.step, xx, rxx);
    detail::double_integral(tab.gdot, tab.gddot, tab.gdot, tab.gddot, kern, dkern, fine.step, vv, rvv);
    detail::double_integral(tab.g, tab.gdot, tab.gdot, tab.gddot, kern, dkern, fine.step, xv, rxv);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = i * sub;
        mom.xx[i] = xx[k];
        mom.vv[i] = vv[k];
        mom.xv[i] = xv[k];
        mom.dxx[i] = rxx[k];
        mom.dvv[i] = rvv[k];
        mom.dxv[i] = rxv[k];
    }
    return mom;
}

// ---------------------------------------------------------------------------
// Driven motion.

enum class DriveKind { None, Deterministic, DeltaCorrelatedRandom };

struct DriveSpec {
    DriveKind kind{DriveKind::None};
    double g{0.0};                                   // delta-correlated strength (force^2 * time)
    std::function<double(double)> force;             // f(t), deterministic drive
    std::function<double(double)> autocorrelation;   // <f(t') f(t'')> as a function of t' - t''

    static DriveSpec none() { return {}; }
    static DriveSpec delta_correlated(double g) {
        if (!(g >= 0.0)) throw std::invalid_argument("DriveSpec: g must be >= 0");
        DriveSpec d;
        d.kind = DriveKind::DeltaCorrelatedRandom;
        d.g = g;
        return d;
    }
    static DriveSpec deterministic(std::function<double(double)> f, std::function<double(double)> corr = {}) {
        DriveSpec d;
        d.kind = DriveKind::Deterministic;
        d.force = std::move(f);
        d.autocorrelation = std::move(corr);
        return d;
    }
    double force_at(double t) const { return kind == DriveKind::Deterministic && force ? force(t) : 0.0; }
};

// s_d(t) = int_0^t int_0^t G(t-t') G(t-t'') g(t'-t'') dt' dt''.
inline double driven_msd(const DriveSpec& drive, const GreenTable& green, double t) {
    using boost::math::quadrature::gauss_kronrod;
    if (t < 0.0) throw std::domain_error("driven_msd: t < 0");
    if (drive.kind == DriveKind::None || t == 0.0) return 0.0;
    if (drive.kind == DriveKind::DeltaCorrelatedRandom) {
        auto g2 = [&](double u) {
            const double v = green.g_at(u);
            return v * v;
        };
        // panels aligned with the table nodes
        const double h = green.step() > 0.0 ? green.step() : t;
        const auto panels = static_cast<std::size_t>(std::max(1.0, std::ceil(t / (8.0 * h))));
        double acc = 0.0;
        for (std::size_t k = 0; k < panels; ++k) {
            const double a = t * static_cast<double>(k) / static_cast<double>(panels);
            const double b = t * static_cast<double>(k + 1) / static_cast<double>(panels);
            acc += gauss_kronrod<double, 31>::integrate(g2, a, b, 10, 1e-13);
        }
        return drive.g * acc;
    }
    if (!drive.autocorrelation)
        throw std::invalid_argument("driven_msd: deterministic drive needs its autocorrelation g(t'-t'')");
    // composite Gauss-Legendre tensor rule over [0,t]^2
    static constexpr std::array<double, 8> x{-0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
                                             0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
    static constexpr std::array<double, 8> w{0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
                                             0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};
    const double h = green.step() > 0.0 ? green.step() : t;
    const auto panels = static_cast<std::size_t>(std::max(4.0, std::ceil(t / (2.0 * h))));
    const double pw = t / static_cast<double>(panels);
    std::vector<double> nodes, weights, gvals;
    for (std::size_t k = 0; k < panels; ++k)
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double s = (static_cast<double>(k) + 0.5 * (x[i] + 1.0)) * pw;
            nodes.push_back(s);
            weights.push_back(0.5 * pw * w[i]);
            gvals.push_back(green.g_at(t - s));
        }
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        for (std::size_t j = 0; j < nodes.size(); ++j)
            acc += weights[i] * weights[j] * gvals[i] * gvals[j] * drive.autocorrelation(nodes[i] - nodes[j]);
    return acc;
}

// Delta-correlated s_d for a local (Ohmic) bath from the covariance ODE
//   C' = M C + C M^T + diag(0, g/m^2),  M = [[0, 1], [-K/m, -gamma]]
// integrated with classical RK4; an independent route to g int G^2.
inline double driven_msd_lyapunov(const BathSpec& bath, const OscillatorSpec& osc, double g, double t, std::size_t steps = 20000) {
    if (!bath.is_local()) throw std::invalid_argument("driven_msd_lyapunov: local bath required");
    Eigen::Matrix2d M;
    M << 0.0, 1.0, -osc.spring_constant / osc.mass, -bath.gamma;
    Eigen::Matrix2d Q = Eigen::Matrix2d::Zero();
    Q(1, 1) = g / (osc.mass * osc.mass);
    auto rhs = [&](const Eigen::Matrix2d& C) -> Eigen::Matrix2d { return M * C + C * M.transpose() + Q; };
    Eigen::Matrix2d C = Eigen::Matrix2d::Zero();
    const double h = t / static_cast<double>(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const Eigen::Matrix2d k1 = rhs(C);
        const Eigen::Matrix2d k2 = rhs(C + 0.5 * h * k1);
        const Eigen::Matrix2d k3 = rhs(C + 0.5 * h * k2);
        const Eigen::Matrix2d k4 = rhs(C + h * k3);
        C += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return C(0, 0);
}

}  // namespace qbm
