// bath_models.hpp — memory functions, response function and thermal factors

#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

namespace qbm {

using complex = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;

enum class BathKind { Ohmic, SingleRelaxationTime };

// Heat-bath memory model. For SingleRelaxationTime the memory function is
// mu(t) = (m gamma / tau) exp(-t/tau) theta(t).
struct BathSpec {
    BathKind kind{BathKind::Ohmic};
    double gamma{0.0};  // decay constant
    double tau{0.0};    // bath relaxation time (SingleRelaxationTime only)
    double mass{1.0};

    double friction() const noexcept { return mass * gamma; }  // zeta = m gamma

    void validate() const {
        if (!(gamma >= 0.0) || !std::isfinite(gamma))
            throw std::invalid_argument("BathSpec: gamma must be finite and >= 0");
        if (!(mass > 0.0)) throw std::invalid_argument("BathSpec: mass must be > 0");
        if (kind == BathKind::SingleRelaxationTime && !(tau > 0.0))
            throw std::invalid_argument("BathSpec: tau must be > 0 for the single-relaxation-time bath");
    }

    static BathSpec ohmic(double gamma, double mass = 1.0) {
        return BathSpec{BathKind::Ohmic, gamma, 0.0, mass};
    }
    static BathSpec single_relaxation_time(double gamma, double tau, double mass = 1.0) {
        return BathSpec{BathKind::SingleRelaxationTime, gamma, tau, mass};
    }

    // True when the memory acts instantaneously (Volterra kernel is local).
    bool is_local() const noexcept { return kind == BathKind::Ohmic; }

    // mu(t) for t > 0. Only meaningful for non-local baths.
    double memory(double t) const noexcept {
        if (kind == BathKind::Ohmic || t < 0.0) return 0.0;
        return friction() / tau * std::exp(-t / tau);
    }
    double memory_derivative(double t) const noexcept {
        if (kind == BathKind::Ohmic || t < 0.0) return 0.0;
        return -friction() / (tau * tau) * std::exp(-t / tau);
    }
};

inline std::string to_string(BathKind k) {
    return k == BathKind::Ohmic ? "ohmic" : "single-relaxation-time";
}

struct OscillatorSpec {
    double mass{1.0};
    double spring_constant{1.0};  // K; 0 is the free particle
    double hbar{1.0};

    double omega0() const noexcept { return std::sqrt(spring_constant / mass); }

    void validate() const {
        if (!(mass > 0.0)) throw std::invalid_argument("OscillatorSpec: mass must be > 0");
        if (!(spring_constant >= 0.0)) throw std::invalid_argument("OscillatorSpec: K must be >= 0");
        if (!(hbar > 0.0)) throw std::invalid_argument("OscillatorSpec: hbar must be > 0");
    }
};

// Temperature in energy units (k absorbed).
struct ThermalSpec {
    double kT{0.0};

    void validate() const {
        if (!(kT >= 0.0) || !std::isfinite(kT)) throw std::invalid_argument("ThermalSpec: kT must be finite and >= 0");
    }
    double mean_thermal_velocity(double mass) const { return std::sqrt(kT / mass); }
};

// coth(x) for x >= 0 with the two limits handled explicitly:
// x -> infinity gives 1, x < 1e-4 uses the Laurent expansion 1/x + x/3.
inline double coth_stable(double x) {
    if (x < 0.0) return -coth_stable(-x);
    if (x == std::numeric_limits<double>::infinity()) return 1.0;
    if (x < 1e-4) return 1.0 / x + x / 3.0;
    if (x > 20.0) return 1.0 + 2.0 * std::exp(-2.0 * x);
    return 1.0 / std::tanh(x);
}

// coth(hbar w / 2kT); returns exactly 1 at kT = 0.
inline double thermal_coth(double hbar_omega, double kT) {
    if (kT == 0.0) return 1.0;
    return coth_stable(hbar_omega / (2.0 * kT));
}

// hbar w coth(hbar w/2kT), finite (= 2kT) at w = 0.
inline double thermal_energy_factor(double hbar_omega, double kT) {
    if (kT == 0.0) return std::abs(hbar_omega);
    const double x = hbar_omega / (2.0 * kT);
    if (std::abs(x) < 1e-4) return 2.0 * kT * (1.0 + x * x / 3.0);
    return hbar_omega * coth_stable(x);
}

// mu~(z) = int_0^inf mu(t) e^{izt} dt, defined for Im z >= 0.
inline complex memory_fourier(const BathSpec& bath, complex z) {
    if (z.imag() < 0.0)
        throw std::domain_error("memory_fourier: Im z < 0 is outside the upper half-plane");
    if (bath.kind == BathKind::Ohmic) return complex(bath.friction(), 0.0);
    return bath.friction() / (1.0 - complex(0.0, 1.0) * z * bath.tau);
}

struct ResonanceError : std::domain_error {
    using std::domain_error::domain_error;
};

// alpha(w + i0+) = 1 / (-m w^2 - i w mu~(w) + K).
inline complex response(const BathSpec& bath, const OscillatorSpec& osc, double omega) {
    if (!std::isfinite(omega)) throw std::domain_error("response: non-finite frequency");
    const complex mu = memory_fourier(bath, complex(omega, 0.0));
    const complex denom = -osc.mass * omega * omega - complex(0.0, 1.0) * omega * mu + osc.spring_constant;
    if (std::abs(denom) == 0.0)
        throw ResonanceError("response: undamped resonance pole at omega = omega0");
    return 1.0 / denom;
}

// Im alpha(w + i0+) evaluated without forming the complex quotient when the
// denominator is purely real (gamma = 0 gives zero away from the pole).
inline double response_imag(const BathSpec& bath, const OscillatorSpec& osc, double omega) {
    return response(bath, osc, omega).imag();
}

// 2(N + 1/2) = coth(hbar w0 / 2kT).
inline double occupation_factor(const OscillatorSpec& osc, const ThermalSpec& th) {
    const double w0 = osc.omega0();
    if (!(w0 > 0.0)) throw std::domain_error("occupation_factor: requires omega0 > 0");
    return thermal_coth(osc.hbar * w0, th.kT);
}

}  // namespace qbm
