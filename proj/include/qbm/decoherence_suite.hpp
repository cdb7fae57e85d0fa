// decoherence_suite.hpp — cat-state attenuation factors: extraction from evolved
// densities, closed forms for the four regimes, short-time law fits, CSV output

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "qbm/bath_models.hpp"
#include "qbm/evolvers.hpp"
#include "qbm/response_quadrature.hpp"
#include "qbm/wigner_core.hpp"

namespace qbm {

enum class Regime { ZeroTInitial, ThermalInitial, Entangled, Driven };

inline std::string to_string(Regime r) {
    switch (r) {
        case Regime::ZeroTInitial: return "zero-T-initial";
        case Regime::ThermalInitial: return "thermal-initial";
        case Regime::Entangled: return "entangled";
        case Regime::Driven: return "driven";
    }
    return "unknown";
}

inline Regime regime_from_string(const std::string& s) {
    if (s == "zero-T-initial" || s == "zero-t" || s == "zero_t_initial") return Regime::ZeroTInitial;
    if (s == "thermal-initial" || s == "thermal") return Regime::ThermalInitial;
    if (s == "entangled") return Regime::Entangled;
    if (s == "driven") return Regime::Driven;
    throw std::invalid_argument("unknown regime '" + s + "'");
}

struct AttenuationFitError : std::runtime_error {
    double time;
    AttenuationFitError(const std::string& what, double t)
        : std::runtime_error(what + " (t = " + std::to_string(t) + ")"), time(t) {}
};

// -log a(t) ~ C t^n over a short-time window.  `exponent` is the free fit;
// `coefficient` and `tau_d` refer to the law with the exponent rounded to
// the nearest integer, so that -log a = (t/tau_d)^n.
struct ShortTimeLaw {
    double exponent{std::numeric_limits<double>::quiet_NaN()};
    int nominal_exponent{0};
    double coefficient{std::numeric_limits<double>::quiet_NaN()};
    double tau_d{std::numeric_limits<double>::quiet_NaN()};
    std::size_t points{0};
};

struct AttenuationSeries {
    std::vector<double> times;
    std::vector<double> a;
    std::vector<double> a_closed;  // same length as a, or empty
    double tau_d{std::numeric_limits<double>::quiet_NaN()};  // first crossing of exp(-1)
    ShortTimeLaw law{};
    Regime regime{Regime::ZeroTInitial};
};

// ---------------------------------------------------------------------------
// Closed forms

struct DecoherenceParams {
    double mass{1.0};
    double hbar{1.0};
    double kT{0.0};
    double gamma{0.0};
    double d{0.0};
    double sigma{1.0};
    double omega0{0.0};

    double zeta() const { return mass * gamma; }
    void validate() const {
        if (!(mass > 0.0) || !(hbar > 0.0) || !(sigma > 0.0))
            throw std::invalid_argument("DecoherenceParams: mass, hbar and sigma must be > 0");
        if (!(kT >= 0.0) || !(gamma >= 0.0) || !(d >= 0.0) || !(omega0 >= 0.0))
            throw std::invalid_argument("DecoherenceParams: kT, gamma, d and omega0 must be >= 0");
    }
};

struct FlaggedValue {
    double value;
    bool in_regime;
};

inline FlaggedValue closed_form_zero_T_initial(const DecoherenceParams& p, double t) {
    p.validate();
    if (t < 0.0) throw std::domain_error("closed_form_zero_T_initial: t < 0");
    const double s2 = p.sigma * p.sigma;
    const double num = p.zeta() * p.kT * p.d * p.d * t * t * t;
    const double den = 12.0 * p.mass * p.mass * s2 * s2 + 3.0 * p.hbar * p.hbar * t * t;
    const bool ok = p.gamma * t <= 0.1 && p.omega0 * t <= 0.1 && p.kT >= 20.0 * p.hbar * p.gamma;
    return {t == 0.0 ? 1.0 : std::exp(-num / den), ok};
}

inline FlaggedValue closed_form_thermal_initial(const DecoherenceParams& p, double t) {
    p.validate();
    if (t < 0.0) throw std::domain_error("closed_form_thermal_initial: t < 0");
    const double s2 = p.sigma * p.sigma;
    const double v2 = p.kT / p.mass;
    const double num = v2 * t * t * p.d * p.d;
    const double den = 8.0 * (s2 * s2 + s2 * v2 * t * t + p.hbar * p.hbar * t * t / (4.0 * p.mass * p.mass));
    return {std::exp(-num / den), p.gamma * t <= 0.1};
}

// Free particle entangled with the bath from the start:
//   a = exp{-s d^2 / (8 sigma^2 w^2)},  w^2 = sigma^2 + s + c_comm^2 / (4 sigma^2).
inline double closed_form_entangled(const BathSpec& bath, const OscillatorSpec& osc, const ThermalSpec& th, const CatSpec& cat,
                                    double t) {
    cat.validate();
    if (osc.spring_constant != 0.0) throw std::invalid_argument("closed_form_entangled: free particle (K = 0) required");
    if (t < 0.0) throw std::domain_error("closed_form_entangled: t < 0");
    if (t == 0.0) return 1.0;
    const double s = mean_square_displacement(bath, osc, th, t);
    const double c = commutator_x(bath, osc, t);
    const double s2 = cat.sigma * cat.sigma;
    const double w2 = s2 + s + c * c / (4.0 * s2);
    return std::exp(-s * cat.d * cat.d / (8.0 * s2 * w2));
}

inline double closed_form_driven(const DriveSpec& drive, const GreenTable& green, const CatSpec& cat, double t) {
    cat.validate();
    const double sd = driven_msd(drive, green, t);
    if (sd == 0.0) return 1.0;
    const double s2 = cat.sigma * cat.sigma;
    return std::exp(-sd * cat.d * cat.d / (8.0 * s2 * (s2 + sd)));
}

// ---------------------------------------------------------------------------
// Separable nonlinear least squares: minimise |y - B(theta) c|^2 over the
// linear coefficients c (solved exactly) and theta (Levenberg-Marquardt).

namespace detail {

using BasisFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct VarProResult {
    Eigen::VectorXd theta;
    Eigen::VectorXd coef;
    double rss{0.0};
};

inline Eigen::VectorXd linear_coefficients(const Eigen::MatrixXd& b, const Eigen::VectorXd& y) {
    // column scaling keeps the decomposition's rank decision meaningful when
    // basis functions differ by many orders of magnitude
    Eigen::VectorXd norms = b.colwise().norm().transpose();
    Eigen::MatrixXd bs = b;
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
        if (norms(j) > 0.0) bs.col(j) /= norms(j);
        else norms(j) = 1.0;
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(bs);
    cod.setThreshold(1e-13);
    Eigen::VectorXd c = cod.solve(y);
    return c.cwiseQuotient(norms);
}

struct VarProFunctor {
    using Scalar = double;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;

    const Eigen::VectorXd* y;
    const BasisFn* basis;
    int n_in;

    int inputs() const { return n_in; }
    int values() const { return static_cast<int>(y->size()); }
    int operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& r) const {
        const Eigen::MatrixXd b = (*basis)(theta);
        r = *y - b * linear_coefficients(b, *y);
        if (!r.allFinite()) r.setConstant(1e150);
        return 0;
    }
};

inline VarProResult varpro(const Eigen::VectorXd& y, const BasisFn& basis, Eigen::VectorXd theta) {
    VarProFunctor f{&y, &basis, static_cast<int>(theta.size())};
    Eigen::NumericalDiff<VarProFunctor, Eigen::Central> nd(f);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<VarProFunctor, Eigen::Central>> lm(nd);
    lm.parameters.xtol = 1e-14;
    lm.parameters.ftol = 1e-16;
    lm.parameters.maxfev = 4000;
    lm.minimize(theta);
    VarProResult out;
    out.theta = theta;
    const Eigen::MatrixXd b = basis(theta);
    out.coef = linear_coefficients(b, y);
    out.rss = (y - b * out.coef).squaredNorm();
    return out;
}

inline double normal_density(double x, double mean, double var) {
    const double u = x - mean;
    return std::exp(-u * u / (2.0 * var)) / std::sqrt(2.0 * pi * var);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Attenuation extraction from a coordinate density

struct DensitySample {
    double time{0.0};
    std::vector<double> x;
    std::vector<double> density;
    double packet_variance{1.0};  // width of one evolved packet, fixed in the fit
};

// P(x) = A1 g(x - x1) + A2 g(x - x2) + [Bc cos k(x - xm) + Bs sin k(x - xm)] g(x - xm),
// all g normal densities of variance packet_variance, xm = (x1 + x2)/2.
struct AttenuationFit {
    double a{0.0};
    double x1{0.0}, x2{0.0};
    double amplitude1{0.0}, amplitude2{0.0};
    double fringe_wavenumber{0.0};
    double cross_amplitude{0.0};
    double rss{0.0};
};

inline AttenuationFit fit_attenuation(const DensitySample& s) {
    const std::size_t n = s.x.size();
    if (n < 16 || s.density.size() != n) throw std::invalid_argument("fit_attenuation: need matching x/density with >= 16 points");
    if (!(s.packet_variance > 0.0)) throw std::invalid_argument("fit_attenuation: packet_variance must be > 0");
    const double var = s.packet_variance, width = std::sqrt(var);
    Eigen::VectorXd x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x(static_cast<Eigen::Index>(i)) = s.x[i];
        y(static_cast<Eigen::Index>(i)) = s.density[i];
    }
    if (!y.allFinite()) throw AttenuationFitError("fit_attenuation: non-finite density", s.time);

    double m0 = 0.0, m1 = 0.0, m2 = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        m0 += y(i);
        m1 += y(i) * x(i);
        m2 += y(i) * x(i) * x(i);
    }
    const double mean = m1 / m0;
    const double half = std::sqrt(std::max(m2 / m0 - mean * mean - var, 0.25 * var));

    auto gauss = [&](double c) { return (-(x.array() - c).square() / (2.0 * var)).exp() / std::sqrt(2.0 * pi * var); };

    detail::BasisFn packets = [&](const Eigen::VectorXd& th) {
        Eigen::MatrixXd b(x.size(), 2);
        b.col(0) = gauss(th(0)).matrix();
        b.col(1) = gauss(th(1)).matrix();
        return b;
    };
    Eigen::VectorXd th0(2);
    th0 << mean - half, mean + half;
    const auto stage1 = detail::varpro(y, packets, th0);
    double x1 = std::min(stage1.theta(0), stage1.theta(1)), x2 = std::max(stage1.theta(0), stage1.theta(1));
    if (x2 - x1 < 2.0 * width)
        throw AttenuationFitError("fit_attenuation: packets merged beyond separability (separation " + std::to_string(x2 - x1) +
                                      " < 2 packet widths)",
                                  s.time);

    // scan of the fringe wavenumber: full linear model on the midpoint window
    const double xm = 0.5 * (x1 + x2);
    std::vector<Eigen::Index> near;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (std::abs(x(i) - xm) <= 5.0 * width) near.push_back(i);
    const auto nn = static_cast<Eigen::Index>(near.size());
    Eigen::MatrixXd bw(nn, 4);
    Eigen::VectorXd yw(nn);
    Eigen::ArrayXd gw(nn), dxw(nn);
    for (Eigen::Index r = 0; r < nn; ++r) {
        const double xv = x(near[static_cast<std::size_t>(r)]);
        yw(r) = y(near[static_cast<std::size_t>(r)]);
        bw(r, 0) = detail::normal_density(xv, x1, var);
        bw(r, 1) = detail::normal_density(xv, x2, var);
        gw(r) = detail::normal_density(xv, xm, var);
        dxw(r) = xv - xm;
    }
    double dx_min = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 1; i < x.size(); ++i) dx_min = std::min(dx_min, std::abs(x(i) - x(i - 1)));
    const double k_max = pi / dx_min;
    const double dk = 0.05 / width;
    double best_k = 0.0, best = std::numeric_limits<double>::infinity();
    for (double k = 0.0; k <= k_max; k += dk) {
        bw.col(2) = (gw * (k * dxw).cos()).matrix();
        bw.col(3) = (gw * (k * dxw).sin()).matrix();
        const double r = (yw - bw * detail::linear_coefficients(bw, yw)).squaredNorm();
        if (r < best) {
            best = r;
            best_k = k;
        }
    }

    detail::BasisFn full = [&](const Eigen::VectorXd& th) {
        Eigen::MatrixXd b(x.size(), 4);
        const double c = 0.5 * (th(0) + th(1));
        const Eigen::ArrayXd g = gauss(c);
        const Eigen::ArrayXd ph = th(2) * (x.array() - c);
        b.col(0) = gauss(th(0)).matrix();
        b.col(1) = gauss(th(1)).matrix();
        b.col(2) = (g * ph.cos()).matrix();
        b.col(3) = (g * ph.sin()).matrix();
        return b;
    };
    Eigen::VectorXd th1(3);
    th1 << x1, x2, best_k;
    const auto fit = detail::varpro(y, full, th1);
    x1 = fit.theta(0);
    x2 = fit.theta(1);
    double a1 = fit.coef(0), a2 = fit.coef(1);
    if (x1 > x2) {
        std::swap(x1, x2);
        std::swap(a1, a2);
    }
    if (!(a1 > 0.0) || !(a2 > 0.0)) throw AttenuationFitError("fit_attenuation: non-positive packet amplitude", s.time);
    if (x2 - x1 < 2.0 * width)
        throw AttenuationFitError("fit_attenuation: packets merged beyond separability after refinement", s.time);

    AttenuationFit out;
    out.x1 = x1;
    out.x2 = x2;
    out.amplitude1 = a1;
    out.amplitude2 = a2;
    out.fringe_wavenumber = std::abs(fit.theta(2));
    out.cross_amplitude = std::hypot(fit.coef(2), fit.coef(3));
    out.rss = fit.rss;
    // ratio at the midpoint: g(0)/sqrt(g(x1 - xm) g(x2 - xm)) = exp((x2 - x1)^2 / 8 var)
    const double sep = x2 - x1;
    out.a = out.cross_amplitude / (2.0 * std::sqrt(a1 * a2)) * std::exp(sep * sep / (8.0 * var));
    return out;
}

// ---------------------------------------------------------------------------
// Short-time law and crossing time

inline ShortTimeLaw fit_short_time_law(const std::vector<double>& times, const std::vector<double>& a, double t_max) {
    if (times.size() != a.size()) throw std::invalid_argument("fit_short_time_law: size mismatch");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] > 0.0) || times[i] > t_max) continue;
        const double e = -std::log(a[i]);
        if (!(e > 1e-12) || !std::isfinite(e)) continue;
        lx.push_back(std::log(times[i]));
        ly.push_back(std::log(e));
    }
    ShortTimeLaw law;
    law.points = lx.size();
    if (lx.size() < 3) return law;
    const auto nn = static_cast<double>(lx.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    law.exponent = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
    law.nominal_exponent = static_cast<int>(std::lround(law.exponent));
    if (law.nominal_exponent < 1) law.nominal_exponent = 1;
    const double n_nom = law.nominal_exponent;
    double lc = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) lc += ly[i] - n_nom * lx[i];
    law.coefficient = std::exp(lc / nn);
    law.tau_d = std::pow(law.coefficient, -1.0 / n_nom);
    return law;
}

inline double crossing_time(const std::vector<double>& times, const std::vector<double>& a, double level = std::exp(-1.0)) {
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (a[i] < level && a[i - 1] >= level) {
            const double l0 = std::log(a[i - 1]), l1 = std::log(std::max(a[i], 1e-300)), lv = std::log(level);
            return times[i - 1] + (lv - l0) / (l1 - l0) * (times[i] - times[i - 1]);
        }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

inline AttenuationSeries attenuation_from_density(const std::vector<DensitySample>& samples, const CatSpec& cat,
                                                  Regime regime = Regime::ZeroTInitial, double law_window = 0.0) {
    cat.validate();
    AttenuationSeries out;
    out.regime = regime;
    for (const auto& s : samples) {
        out.times.push_back(s.time);
        out.a.push_back(fit_attenuation(s).a);
    }
    out.tau_d = crossing_time(out.times, out.a);
    const double window = law_window > 0.0 ? law_window : (out.times.empty() ? 0.0 : out.times.back());
    out.law = fit_short_time_law(out.times, out.a, window);
    return out;
}

// ---------------------------------------------------------------------------
// Evolved cat densities through the Gaussian transition

inline double single_packet_variance(const CatSpec& cat, const GaussianTransition& k, const OscillatorSpec& osc,
                                     double extra_variance = 0.0) {
    const double a = k.phi(0, 0), b = k.phi(0, 1), s2 = cat.sigma * cat.sigma;
    return a * a * s2 + b * b * osc.hbar * osc.hbar / (4.0 * s2) + k.a(0, 0) + extra_variance;
}

// Samples P(x) on a window covering both packets, with spacing that resolves
// both the packet width and the interference fringes.
inline DensitySample sample_cat_density(const CatSpec& cat, const GaussianTransition& k, const OscillatorSpec& osc,
                                        double extra_variance = 0.0, std::size_t max_points = 20000) {
    DensitySample s;
    s.time = k.time;
    s.packet_variance = single_packet_variance(cat, k, osc, extra_variance);
    const double width = std::sqrt(s.packet_variance);
    const double half = 0.5 * std::abs(k.phi(0, 0)) * cat.d;
    const double fringe_k = osc.hbar * std::abs(k.phi(0, 1)) * cat.d / (4.0 * cat.sigma * cat.sigma * s.packet_variance);
    double h = width / 25.0;
    if (fringe_k > 0.0) h = std::min(h, 2.0 * pi / fringe_k / 16.0);
    const double extent = half + 8.0 * width;
    auto n = static_cast<std::size_t>(std::ceil(2.0 * extent / h)) + 1;
    if (n > max_points)
        throw std::domain_error("sample_cat_density: fringes need " + std::to_string(n) + " samples (limit " +
                                std::to_string(max_points) + ")");
    n = std::max<std::size_t>(n, 64);
    s.x.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.x[i] = -extent + 2.0 * extent * static_cast<double>(i) / static_cast<double>(n - 1);
    s.density = probability_density_fourier(cat, k, osc, s.x, extra_variance);
    return s;
}

// ---------------------------------------------------------------------------
// Regime scenarios: simulated attenuation beside the closed form

struct DecoherenceScenario {
    Regime regime{Regime::ZeroTInitial};
    BathSpec bath{};
    OscillatorSpec osc{1.0, 0.0, 1.0};
    ThermalSpec thermal{};
    CatSpec cat{};
    DriveSpec drive{};
    MomentOptions moments{};

    DecoherenceParams params() const {
        return DecoherenceParams{osc.mass, osc.hbar, thermal.kT, bath.gamma, cat.d, cat.sigma, osc.omega0()};
    }
};

namespace detail {

inline GreenTable green_to(const BathSpec& bath, const OscillatorSpec& osc, double t) {
    const std::size_t n = 400;
    return initial_value_green(bath, osc, TimeGrid{t / static_cast<double>(n), n + 1});
}

inline GaussianTransition transition_at(const DecoherenceScenario& sc, double t) {
    if (t == 0.0) return GaussianTransition{};
    if (sc.bath.gamma == 0.0) {
        const auto g = green_to(sc.bath, sc.osc, t);
        const double m = sc.osc.mass;
        GaussianTransition k;
        k.time = t;
        k.phi << m * g.gdot.back(), g.g.back(), m * m * g.gddot.back(), m * g.gdot.back();
        return k;
    }
    return gaussian_transition(sc.bath, sc.osc, sc.thermal, t, sc.moments);
}

}  // namespace detail

// Extra position variance added to the Fourier form: thermal velocity spread
// of the initial cat, or the displacement produced by a random drive.
inline double regime_extra_variance(const DecoherenceScenario& sc, const GaussianTransition& k) {
    if (k.time == 0.0) return 0.0;
    switch (sc.regime) {
        case Regime::ThermalInitial: return sc.osc.mass * sc.thermal.kT * k.phi(0, 1) * k.phi(0, 1);
        case Regime::Driven: return driven_msd(sc.drive, detail::green_to(sc.bath, sc.osc, k.time), k.time);
        default: return 0.0;
    }
}

inline double regime_closed_form(const DecoherenceScenario& sc, double t) {
    switch (sc.regime) {
        case Regime::ZeroTInitial: return closed_form_zero_T_initial(sc.params(), t).value;
        case Regime::ThermalInitial: return closed_form_thermal_initial(sc.params(), t).value;
        case Regime::Entangled: return closed_form_thermal_initial(sc.params(), t).value;
        case Regime::Driven:
            return t == 0.0 ? 1.0 : closed_form_driven(sc.drive, detail::green_to(sc.bath, sc.osc, t), sc.cat, t);
    }
    return 1.0;
}

// Simulated column: fitted attenuation of the Fourier-path density.  The
// entangled regime has no separate simulation; its quadrature expression is
// reported against the thermal-initial closed form it should reduce to.
inline AttenuationSeries simulate_attenuation(const DecoherenceScenario& sc, const std::vector<double>& times,
                                              double law_window = 0.0) {
    sc.cat.validate();
    AttenuationSeries out;
    out.regime = sc.regime;
    out.times = times;
    for (double t : times) {
        if (t < 0.0) throw std::domain_error("simulate_attenuation: negative time");
        if (sc.regime == Regime::Entangled) {
            out.a.push_back(closed_form_entangled(sc.bath, sc.osc, sc.thermal, sc.cat, t));
        } else {
            const auto k = detail::transition_at(sc, t);
            out.a.push_back(fit_attenuation(sample_cat_density(sc.cat, k, sc.osc, regime_extra_variance(sc, k))).a);
        }
        out.a_closed.push_back(regime_closed_form(sc, t));
    }
    out.tau_d = crossing_time(out.times, out.a);
    out.law = fit_short_time_law(out.times, out.a, law_window > 0.0 ? law_window : (times.empty() ? 0.0 : times.back()));
    return out;
}

// ---------------------------------------------------------------------------
// Momentum-space fringe contrast

struct MomentumContrast {
    std::vector<double> times;
    std::vector<double> contrast;
};

// Fits marginal_p to N(p; mu, v) [alpha + beta cos k(p - mu) + delta sin k(p - mu)]
// and reports sqrt(beta^2 + delta^2)/alpha.
inline double momentum_fringe_contrast(const WignerGrid& w, const CatSpec& cat) {
    cat.validate();
    const Axis& pa = w.grid.p;
    const double k0 = cat.d / w.osc.hbar;
    if (k0 * pa.step > pi / 4.0) throw FringeResolutionError("momentum_fringe_contrast: p-grid does not resolve the fringes");
    const auto mp = marginal_p(w);
    const auto n = static_cast<Eigen::Index>(mp.size());
    Eigen::VectorXd p(n), y(n);
    double m0 = 0.0, m1 = 0.0, m2 = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        p(j) = pa.at(static_cast<std::size_t>(j));
        y(j) = mp[static_cast<std::size_t>(j)];
        m0 += y(j);
        m1 += y(j) * p(j);
        m2 += y(j) * p(j) * p(j);
    }
    const double mu0 = m1 / m0, v0 = std::max(m2 / m0 - mu0 * mu0, pa.step * pa.step);
    detail::BasisFn basis = [&](const Eigen::VectorXd& th) {
        const double mu = th(0), v = std::exp(th(1)), k = th(2);
        const Eigen::ArrayXd g = (-(p.array() - mu).square() / (2.0 * v)).exp();
        const Eigen::ArrayXd ph = k * (p.array() - mu);
        Eigen::MatrixXd b(n, 3);
        b.col(0) = g.matrix();
        b.col(1) = (g * ph.cos()).matrix();
        b.col(2) = (g * ph.sin()).matrix();
        return b;
    };
    Eigen::VectorXd th(3);
    th << mu0, std::log(v0), k0;
    const auto fit = detail::varpro(y, basis, th);
    if (!(fit.coef(0) > 0.0)) throw std::runtime_error("momentum_fringe_contrast: envelope fit failed");
    return std::hypot(fit.coef(1), fit.coef(2)) / fit.coef(0);
}

inline MomentumContrast momentum_space_diagnostic(const std::vector<TrajectoryFrame>& frames, const CatSpec& cat) {
    MomentumContrast out;
    for (const auto& f : frames) {
        out.times.push_back(f.time);
        out.contrast.push_back(momentum_fringe_contrast(f.state, cat));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12e", v);
    return buf;
}

inline void write_attenuation_csv(const AttenuationSeries& s, std::ostream& os,
                                  const std::vector<std::pair<std::string, double>>& params = {}) {
    os << "t,a_simulated,a_closed_form,regime";
    for (const auto& [name, value] : params) os << ',' << name;
    os << '\n';
    std::string tail;
    for (const auto& [name, value] : params) tail += ',' + format_number(value);
    for (std::size_t i = 0; i < s.times.size(); ++i) {
        os << format_number(s.times[i]) << ',' << format_number(s.a[i]) << ','
           << format_number(i < s.a_closed.size() ? s.a_closed[i] : std::numeric_limits<double>::quiet_NaN()) << ','
           << to_string(s.regime) << tail << '\n';
    }
}

}  // namespace qbm
