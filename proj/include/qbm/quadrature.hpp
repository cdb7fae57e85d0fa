// quadrature.hpp — half-line spectral integrals with cos/sin weights
//
// Integrals of the form  int_0^inf f(w) K(w t) dw  where f is smooth on
// (0, inf), possibly sharply peaked near resonances, and decays at least like
// 1/w^2. The half-line is split into panels no wider than a quarter period
// of the weight; each panel is integrated with adaptive Gauss-Kronrod. Beyond
// the cutoff the non-oscillatory part is mapped onto (0, 1] and the
// oscillatory remainder is replaced by its leading asymptotic term.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qbm/bath_models.hpp"

namespace qbm {

enum class Weight { None, Cos, Sin, OneMinusCos };

struct QuadratureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SpectralResult {
    double value{0.0};
    double error{0.0};  // summed panel estimates + tail bound
    std::size_t panels{0};
};

struct SpectralOptions {
    double omega_max{50.0};            // hard panel cutoff before tail treatment
    std::vector<double> features;      // frequencies where f varies rapidly
    double feature_width{0.0};         // resonance half width (e.g. gamma/2)
    double rel_tol{1e-11};
    double lowest_scale{0.0};          // geometric refinement floor near w = 0
    bool include_tail{true};
};

namespace detail {

inline double apply_weight(Weight w, double x) {
    switch (w) {
        case Weight::None: return 1.0;
        case Weight::Cos: return std::cos(x);
        case Weight::Sin: return std::sin(x);
        case Weight::OneMinusCos: {
            const double s = std::sin(0.5 * x);
            return 2.0 * s * s;
        }
    }
    return 1.0;
}

inline std::vector<double> panel_edges(double upper, double t, const SpectralOptions& opt) {
    std::vector<double> pts{0.0, upper};
    double scale = upper;
    for (double f : opt.features)
        if (f > 0.0 && f < upper) scale = std::min(scale, f);
    if (opt.lowest_scale > 0.0) scale = std::min(scale, opt.lowest_scale);
    // geometric ladder towards zero for integrands singular like 1/w
    for (double x = scale; x > scale * 1e-12; x *= 0.1) pts.push_back(x);
    for (double x = 4.0 * scale; x < upper; x *= 4.0) pts.push_back(x);
    for (double f : opt.features) {
        if (!(f > 0.0) || f >= upper) continue;
        pts.push_back(f);
        if (opt.feature_width > 0.0) {
            for (int j = 1; j <= 6; ++j) {
                const double d = opt.feature_width * j * j * 0.5;
                if (f - d > 0.0) pts.push_back(f - d);
                if (f + d < upper) pts.push_back(f + d);
            }
        }
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (!(t > 0.0)) return pts;
    const double max_width = 0.5 * pi / t;
    std::vector<double> out{pts.front()};
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double a = pts[i - 1], b = pts[i];
        const auto n = static_cast<std::size_t>(std::ceil((b - a) / max_width));
        for (std::size_t k = 1; k <= n; ++k) out.push_back(a + (b - a) * static_cast<double>(k) / static_cast<double>(n));
    }
    return out;
}

}  // namespace detail

// int_0^inf f(w) K(w t) dw.
template <class F>
SpectralResult integrate_spectral(F&& f, Weight weight, double t, const SpectralOptions& opt) {
    using boost::math::quadrature::gauss_kronrod;
    if (t == 0.0 && (weight == Weight::Sin || weight == Weight::OneMinusCos)) return {};
    if (t == 0.0 && weight == Weight::Cos) weight = Weight::None;
    const double tt = std::abs(t);
    const bool oscillating = weight != Weight::None;
    double cutoff = opt.omega_max;
    if (oscillating && opt.include_tail) cutoff = std::max(cutoff, 40.0 * pi / tt);

    auto integrand = [&](double w) { return f(w) * detail::apply_weight(weight, w * tt); };
    const auto edges = detail::panel_edges(cutoff, oscillating ? tt : 0.0, opt);

    SpectralResult res;
    double abs_mass = 0.0;
    for (std::size_t i = 1; i < edges.size(); ++i) {
        double err = 0.0, l1 = 0.0;
        const double v = gauss_kronrod<double, 31>::integrate(integrand, edges[i - 1], edges[i], 12, opt.rel_tol, &err, &l1);
        res.value += v;
        // estimate comes back on [-1, 1]
        res.error += err * 0.5 * (edges[i] - edges[i - 1]);
        abs_mass += l1;
    }
    res.panels = edges.size() - 1;

    if (opt.include_tail) {
        // non-oscillatory part of the tail: w = cutoff / u
        auto mapped = [&](double u) {
            if (u <= 0.0) return 0.0;
            const double w = cutoff / u;
            return f(w) * cutoff / (u * u);
        };
        double terr = 0.0;
        const double plain = gauss_kronrod<double, 31>::integrate(mapped, 0.0, 1.0, 12, opt.rel_tol, &terr);
        terr *= 0.5;
        const double fc = f(cutoff);
        const double x = cutoff * tt;
        double tail = 0.0, bound = terr;
        switch (weight) {
            case Weight::None: tail = plain; break;
            // int_c^inf f cos(wt) ~ -f(c) sin(ct)/t ; int_c^inf f sin(wt) ~ f(c) cos(ct)/t
            case Weight::Cos: tail = -fc * std::sin(x) / tt; bound += std::abs(fc) / (tt * tt * cutoff); break;
            case Weight::Sin: tail = fc * std::cos(x) / tt; bound += std::abs(fc) / (tt * tt * cutoff); break;
            case Weight::OneMinusCos:
                tail = plain + fc * std::sin(x) / tt;
                bound += std::abs(fc) / (tt * tt * cutoff);
                break;
        }
        res.value += tail;
        res.error += bound;
        abs_mass += std::abs(plain);
    }
    if (weight == Weight::Sin && t < 0.0) res.value = -res.value;
    if (!std::isfinite(res.value))
        throw QuadratureError("integrate_spectral: non-finite result");
    if (res.error > 1e-6 * abs_mass + 1e-300)
        throw QuadratureError("integrate_spectral: tail/panel integral did not converge (error estimate " +
                              std::to_string(res.error) + ")");
    return res;
}

}  // namespace qbm
