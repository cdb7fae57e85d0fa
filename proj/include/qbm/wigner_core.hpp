// wigner_core.hpp — phase-space grids, Gaussian and cat Wigner functions,
// marginals, moments and the grid dump format

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qbm/bath_models.hpp"

namespace qbm {

struct Axis {
    double min{0.0};
    double step{1.0};
    std::size_t n{1};

    double at(std::size_t i) const noexcept { return min + static_cast<double>(i) * step; }
    double max() const noexcept { return at(n - 1); }

    static Axis symmetric(double extent, std::size_t n) {
        if (!(extent > 0.0) || n < 2) throw std::invalid_argument("Axis: need extent > 0 and at least two points");
        return Axis{-extent, 2.0 * extent / static_cast<double>(n - 1), n};
    }
    bool operator==(const Axis&) const = default;
};

struct GridSpec {
    Axis q;
    Axis p;

    static GridSpec symmetric(double q_extent, double p_extent, std::size_t nq = 256, std::size_t np = 256) {
        return GridSpec{Axis::symmetric(q_extent, nq), Axis::symmetric(p_extent, np)};
    }
    bool operator==(const GridSpec&) const = default;
};

struct GridTooSmallError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct FringeResolutionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Real W(q, p) on a uniform grid, stored q-index major.
struct WignerGrid {
    GridSpec grid;
    std::vector<double> values;
    OscillatorSpec osc;
    ThermalSpec thermal;

    WignerGrid() = default;
    WignerGrid(GridSpec g, OscillatorSpec o = {}, ThermalSpec t = {})
        : grid(g), values(g.q.n * g.p.n, 0.0), osc(o), thermal(t) {}

    std::size_t nq() const noexcept { return grid.q.n; }
    std::size_t np() const noexcept { return grid.p.n; }
    double& operator()(std::size_t i, std::size_t j) { return values[i * grid.p.n + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values[i * grid.p.n + j]; }
    double cell() const noexcept { return grid.q.step * grid.p.step; }
};

// Two-packet superposition with separation d and packet width sigma.
struct CatSpec {
    double d{0.0};
    double sigma{1.0};

    void validate() const {
        if (!(d >= 0.0)) throw std::invalid_argument("CatSpec: d must be >= 0");
        if (!(sigma > 0.0)) throw std::invalid_argument("CatSpec: sigma must be > 0");
    }
    double normalization() const { return 1.0 / (2.0 * (1.0 + std::exp(-d * d / (8.0 * sigma * sigma)))); }
};

namespace detail {

inline double trapezoid_weight(std::size_t i, std::size_t n) { return (i == 0 || i + 1 == n) ? 0.5 : 1.0; }

// minimal-uncertainty packet centred at the origin
inline double packet(double q, double p, double sigma, double hbar) {
    return std::exp(-q * q / (2.0 * sigma * sigma) - 2.0 * sigma * sigma * p * p / (hbar * hbar)) / (pi * hbar);
}

inline void require_cover(const Axis& a, double lo, double hi, const char* what) {
    const double slack = 1e-9 * (std::abs(lo) + std::abs(hi) + a.step);
    if (a.min > lo + slack || a.max() < hi - slack) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s: grid [%g, %g] does not cover [%g, %g]", what, a.min, a.max(), lo, hi);
        throw GridTooSmallError(buf);
    }
}

}  // namespace detail

// Trapezoidal phase-space integral.
inline double normalization(const WignerGrid& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.nq(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < w.np(); ++j) row += detail::trapezoid_weight(j, w.np()) * w(i, j);
        acc += detail::trapezoid_weight(i, w.nq()) * row;
    }
    return acc * w.cell();
}

inline double max_abs(const WignerGrid& w) {
    double m = 0.0;
    for (double v : w.values) m = std::max(m, std::abs(v));
    return m;
}

inline double max_abs_difference(const WignerGrid& a, const WignerGrid& b) {
    if (!(a.grid == b.grid)) throw std::invalid_argument("max_abs_difference: grids differ");
    double m = 0.0;
    for (std::size_t k = 0; k < a.values.size(); ++k) m = std::max(m, std::abs(a.values[k] - b.values[k]));
    return m;
}

inline WignerGrid gaussian_wigner(double q0, double p0, double sigma_q, const GridSpec& grid, const OscillatorSpec& osc = {}) {
    if (!(sigma_q > 0.0)) throw std::invalid_argument("gaussian_wigner: sigma_q must be > 0");
    const double sigma_p = osc.hbar / (2.0 * sigma_q);
    detail::require_cover(grid.q, q0 - 6.0 * sigma_q, q0 + 6.0 * sigma_q, "gaussian_wigner");
    detail::require_cover(grid.p, p0 - 6.0 * sigma_p, p0 + 6.0 * sigma_p, "gaussian_wigner");
    WignerGrid w(grid, osc);
    for (std::size_t i = 0; i < grid.q.n; ++i)
        for (std::size_t j = 0; j < grid.p.n; ++j) w(i, j) = detail::packet(grid.q.at(i) - q0, grid.p.at(j) - p0, sigma_q, osc.hbar);
    return w;
}

inline WignerGrid cat_wigner(const CatSpec& cat, const GridSpec& grid, const OscillatorSpec& osc = {}) {
    cat.validate();
    const double s = cat.sigma, h = osc.hbar;
    const double sp = h / (2.0 * s);
    detail::require_cover(grid.q, -0.5 * cat.d - 6.0 * s, 0.5 * cat.d + 6.0 * s, "cat_wigner");
    detail::require_cover(grid.p, -6.0 * sp, 6.0 * sp, "cat_wigner");
    if (cat.d > 0.0) {
        const double period = 2.0 * pi * h / cat.d;
        if (grid.p.step > period / 8.0) {
            char buf[200];
            std::snprintf(buf, sizeof buf, "cat_wigner: p step %g exceeds 1/8 of the fringe period %g", grid.p.step, period);
            throw FringeResolutionError(buf);
        }
    }
    const double n0 = cat.normalization();
    WignerGrid w(grid, osc);
    for (std::size_t i = 0; i < grid.q.n; ++i) {
        const double q = grid.q.at(i);
        for (std::size_t j = 0; j < grid.p.n; ++j) {
            const double p = grid.p.at(j);
            w(i, j) = n0 * (detail::packet(q + 0.5 * cat.d, p, s, h) + detail::packet(q - 0.5 * cat.d, p, s, h) +
                            2.0 * std::cos(p * cat.d / h) * detail::packet(q, p, s, h));
        }
    }
    return w;
}

// |psi(x, 0)|^2 for the cat wave function.
inline double cat_position_density(const CatSpec& cat, double x) {
    const double s2 = cat.sigma * cat.sigma;
    const double g = 1.0 / std::sqrt(2.0 * pi * s2);
    const double a = std::exp(-(x - 0.5 * cat.d) * (x - 0.5 * cat.d) / (2.0 * s2));
    const double b = std::exp(-(x + 0.5 * cat.d) * (x + 0.5 * cat.d) / (2.0 * s2));
    const double c = 2.0 * std::exp(-cat.d * cat.d / (8.0 * s2)) * std::exp(-x * x / (2.0 * s2));
    return cat.normalization() * g * (a + b + c);
}

inline std::vector<double> marginal_q(const WignerGrid& w) {
    std::vector<double> out(w.nq(), 0.0);
    for (std::size_t i = 0; i < w.nq(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < w.np(); ++j) row += detail::trapezoid_weight(j, w.np()) * w(i, j);
        out[i] = row * w.grid.p.step;
    }
    return out;
}

inline std::vector<double> marginal_p(const WignerGrid& w) {
    std::vector<double> out(w.np(), 0.0);
    for (std::size_t i = 0; i < w.nq(); ++i) {
        const double wi = detail::trapezoid_weight(i, w.nq());
        for (std::size_t j = 0; j < w.np(); ++j) out[j] += wi * w(i, j);
    }
    for (double& v : out) v *= w.grid.q.step;
    return out;
}

struct PhaseMoments {
    double mean_q{0.0}, mean_p{0.0};
    double qq{0.0}, pp{0.0}, qp{0.0};  // raw second moments <q^2>, <p^2>, <qp>_sym

    double var_q() const { return qq - mean_q * mean_q; }
    double var_p() const { return pp - mean_p * mean_p; }
    double cov_qp() const { return qp - mean_q * mean_p; }
    // variance determinant; >= hbar^2/4 for physical states
    double uncertainty_determinant() const { return var_q() * var_p() - cov_qp() * cov_qp(); }
};

inline PhaseMoments moments(const WignerGrid& w) {
    double n = 0.0, mq = 0.0, mp = 0.0, qq = 0.0, pp = 0.0, qp = 0.0;
    for (std::size_t i = 0; i < w.nq(); ++i) {
        const double q = w.grid.q.at(i);
        const double wi = detail::trapezoid_weight(i, w.nq());
        for (std::size_t j = 0; j < w.np(); ++j) {
            const double p = w.grid.p.at(j);
            const double v = wi * detail::trapezoid_weight(j, w.np()) * w(i, j);
            n += v;
            mq += v * q;
            mp += v * p;
            qq += v * q * q;
            pp += v * p * p;
            qp += v * q * p;
        }
    }
    if (n == 0.0) throw std::domain_error("moments: distribution integrates to zero");
    return PhaseMoments{mq / n, mp / n, qq / n, pp / n, qp / n};
}

// W0 = exp{-(p^2 + m^2 w0^2 q^2)/((2N+1) m hbar w0)} / ((2N+1) pi hbar), optionally displaced.
inline WignerGrid equilibrium_wigner(const OscillatorSpec& osc, const ThermalSpec& th, const GridSpec& grid, double q0 = 0.0,
                                     double p0 = 0.0) {
    osc.validate();
    th.validate();
    if (!(osc.spring_constant > 0.0)) throw std::domain_error("equilibrium_wigner: K = 0 has no normalizable equilibrium");
    const double w0 = osc.omega0();
    const double c = occupation_factor(osc, th);  // 2N+1
    const double denom = c * osc.mass * osc.hbar * w0;
    WignerGrid w(grid, osc, th);
    for (std::size_t i = 0; i < grid.q.n; ++i) {
        const double q = grid.q.at(i) - q0;
        for (std::size_t j = 0; j < grid.p.n; ++j) {
            const double p = grid.p.at(j) - p0;
            w(i, j) = std::exp(-(p * p + osc.mass * osc.mass * w0 * w0 * q * q) / denom) / (c * pi * osc.hbar);
        }
    }
    return w;
}

// 256 x 256 grid covering packets, fringes and thermal spread.
inline GridSpec default_grid(const OscillatorSpec& osc, const ThermalSpec& th, double sigma, double d = 0.0,
                             std::size_t nq = 256, std::size_t np = 256) {
    const double q_ext = std::max(6.0 * sigma, 0.5 * d + 6.0 * sigma);
    double thermal_p2 = osc.mass * th.kT;
    if (osc.spring_constant > 0.0) thermal_p2 = occupation_factor(osc, th) * osc.mass * osc.hbar * osc.omega0() / 2.0;
    const double p_ext = std::max(6.0 * osc.hbar / (2.0 * sigma), 4.0 * std::sqrt(thermal_p2));
    return GridSpec::symmetric(q_ext, p_ext, nq, np);
}

// ---------------------------------------------------------------------------
// Dump format: '#' header lines, then one CSV row of W(q_i, p_j) per q index.

inline void write_grid_dump(const WignerGrid& w, std::ostream& os, double time = 0.0) {
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    os << "# qbm-wigner-grid v1\n";
    os << "# time " << num(time) << "\n";
    os << "# q_axis " << num(w.grid.q.min) << " " << num(w.grid.q.step) << " " << w.grid.q.n << "\n";
    os << "# p_axis " << num(w.grid.p.min) << " " << num(w.grid.p.step) << " " << w.grid.p.n << "\n";
    os << "# oscillator mass " << num(w.osc.mass) << " K " << num(w.osc.spring_constant) << " hbar " << num(w.osc.hbar)
       << "\n";
    os << "# thermal kT " << num(w.thermal.kT) << "\n";
    os << "# units q: length, p: momentum, W: 1/action; rows index q, columns index p\n";
    for (std::size_t i = 0; i < w.nq(); ++i) {
        for (std::size_t j = 0; j < w.np(); ++j) {
            if (j) os << ',';
            os << num(w(i, j));
        }
        os << '\n';
    }
}

inline void write_grid_dump(const WignerGrid& w, const std::string& path, double time = 0.0) {
    std::ofstream os(path);
    if (!os) throw std::ios_base::failure("write_grid_dump: cannot open " + path);
    write_grid_dump(w, os, time);
    if (!os) throw std::ios_base::failure("write_grid_dump: write failed for " + path);
}

inline WignerGrid read_grid_dump(std::istream& is, double* time = nullptr) {
    WignerGrid w;
    std::string line;
    bool have_q = false, have_p = false;
    std::size_t row = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ls(line.substr(1));
            std::string key;
            ls >> key;
            if (key == "time" && time) ls >> *time;
            else if (key == "q_axis") { ls >> w.grid.q.min >> w.grid.q.step >> w.grid.q.n; have_q = true; }
            else if (key == "p_axis") { ls >> w.grid.p.min >> w.grid.p.step >> w.grid.p.n; have_p = true; }
            else if (key == "oscillator") {
                std::string k;
                ls >> k >> w.osc.mass >> k >> w.osc.spring_constant >> k >> w.osc.hbar;
            } else if (key == "thermal") {
                std::string k;
                ls >> k >> w.thermal.kT;
            }
            continue;
        }
        if (!have_q || !have_p) throw std::runtime_error("read_grid_dump: data before axis header");
        if (w.values.empty()) w.values.assign(w.nq() * w.np(), 0.0);
        if (row >= w.nq()) throw std::runtime_error("read_grid_dump: too many rows");
        std::istringstream ls(line);
        std::string cell;
        std::size_t j = 0;
        while (std::getline(ls, cell, ',')) {
            if (j >= w.np()) throw std::runtime_error("read_grid_dump: too many columns in row " + std::to_string(row));
            w(row, j++) = std::stod(cell);
        }
        if (j != w.np()) throw std::runtime_error("read_grid_dump: short row " + std::to_string(row));
        ++row;
    }
    if (row != w.nq()) throw std::runtime_error("read_grid_dump: expected " + std::to_string(w.nq()) + " rows");
    return w;
}

inline WignerGrid read_grid_dump(const std::string& path, double* time = nullptr) {
    std::ifstream is(path);
    if (!is) throw std::ios_base::failure("read_grid_dump: cannot open " + path);
    return read_grid_dump(is, time);
}

}  // namespace qbm
