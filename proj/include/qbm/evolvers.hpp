// evolvers.hpp — Wigner evolution under the lambda-family and HPZ equations,
// HPZ coefficient reconstruction, Gaussian transition kernel propagation

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <fftw3.h>
#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "qbm/bath_models.hpp"
#include "qbm/response_quadrature.hpp"
#include "qbm/wigner_core.hpp"

namespace qbm {

struct NumericalAbort : std::runtime_error {
    double time;
    NumericalAbort(const std::string& what, double t) : std::runtime_error(what + " (t = " + std::to_string(t) + ")"), time(t) {}
};

struct KernelDegenerateError : std::domain_error {
    using std::domain_error::domain_error;
};

struct EvolutionConfig {
    int lambda{-1};
    double dt{0.0};  // 0 picks min(0.01/w0, 0.01/gamma)
    double t_final{1.0};
    DriveSpec drive{};
    std::size_t record_every{0};  // keep a frame every n steps; 0 keeps only the final state
    double mass_tolerance{1e-5};  // allowed |mass(t) - mass(0)| per unit time
    double edge_tolerance{1e-7};  // boundary-ring max relative to the global max
    double uncertainty_tolerance{1e-4};
    std::function<void(double, const WignerGrid&)> observer{};  // called whenever the grid is updated

    void validate() const {
        if (lambda < -1 || lambda > 1) throw std::invalid_argument("EvolutionConfig: lambda must be -1, 0 or +1");
        if (dt < 0.0 || !std::isfinite(dt)) throw std::invalid_argument("EvolutionConfig: dt must be >= 0");
        if (!(t_final > 0.0)) throw std::invalid_argument("EvolutionConfig: t_final must be > 0");
        if (drive.kind == DriveKind::DeltaCorrelatedRandom && !(drive.g >= 0.0))
            throw std::invalid_argument("EvolutionConfig: drive strength g must be >= 0");
    }
};

struct TrajectoryFrame {
    double time;
    WignerGrid state;
};

struct UncertaintyReport {
    bool fired{false};
    double first_violation{std::numeric_limits<double>::quiet_NaN()};
    double min_determinant{std::numeric_limits<double>::infinity()};
    double min_time{0.0};
};

struct Trajectory {
    std::vector<double> times;
    std::vector<PhaseMoments> moments;
    std::vector<double> mass;
    std::vector<TrajectoryFrame> frames;
    WignerGrid final_state;
    UncertaintyReport uncertainty;
};

// Affine step z -> phi z + shift followed by Gaussian smoothing with covariance q.
struct StepMap {
    Eigen::Matrix2d phi{Eigen::Matrix2d::Identity()};
    Eigen::Vector2d shift{Eigen::Vector2d::Zero()};
    Eigen::Matrix2d q{Eigen::Matrix2d::Zero()};
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

// Real 2-D transform pair on an nq x np grid (row-major, p fastest).
class SpectralWorkspace {
public:
    SpectralWorkspace(std::size_t nq, std::size_t np) : nq_(nq), np_(np), nc_(np / 2 + 1) {
        real_ = fftw_alloc_real(nq * np);
        spec_ = fftw_alloc_complex(nq * nc_);
        if (!real_ || !spec_) throw std::bad_alloc();
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fwd_ = fftw_plan_dft_r2c_2d(static_cast<int>(nq), static_cast<int>(np), real_, spec_, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_c2r_2d(static_cast<int>(nq), static_cast<int>(np), spec_, real_, FFTW_ESTIMATE);
    }
    ~SpectralWorkspace() {
        {
            std::lock_guard<std::mutex> lock(fftw_planner_mutex());
            fftw_destroy_plan(fwd_);
            fftw_destroy_plan(bwd_);
        }
        fftw_free(real_);
        fftw_free(spec_);
    }
    SpectralWorkspace(const SpectralWorkspace&) = delete;
    SpectralWorkspace& operator=(const SpectralWorkspace&) = delete;

    double* real() { return real_; }
    fftw_complex* spectrum() { return spec_; }
    std::size_t nq() const { return nq_; }
    std::size_t np() const { return np_; }
    std::size_t ncols() const { return nc_; }
    void forward() { fftw_execute(fwd_); }
    void backward() { fftw_execute(bwd_); }

private:
    std::size_t nq_, np_, nc_;
    double* real_{nullptr};
    fftw_complex* spec_{nullptr};
    fftw_plan fwd_{nullptr}, bwd_{nullptr};
};

// angular wavenumber of FFT bin m on an axis of n samples
inline double wavenumber(std::size_t m, const Axis& a) {
    const auto n = static_cast<std::ptrdiff_t>(a.n);
    auto s = static_cast<std::ptrdiff_t>(m);
    if (2 * s >= n) s -= n;
    return 2.0 * pi * static_cast<double>(s) / (static_cast<double>(a.n) * a.step);
}

// W <- W convolved with N(0, cov); cov in (q, p) ordering.
inline void gaussian_smooth(WignerGrid& w, const Eigen::Matrix2d& cov, SpectralWorkspace& ws) {
    if (cov.cwiseAbs().maxCoeff() == 0.0) return;
    const std::size_t nq = w.nq(), np = w.np(), nc = ws.ncols();
    std::copy(w.values.begin(), w.values.end(), ws.real());
    ws.forward();
    const double norm = 1.0 / static_cast<double>(nq * np);
    std::vector<double> kp(nc);
    for (std::size_t j = 0; j < nc; ++j) kp[j] = 2.0 * pi * static_cast<double>(j) / (static_cast<double>(np) * w.grid.p.step);
    for (std::size_t m = 0; m < nq; ++m) {
        const double kq = wavenumber(m, w.grid.q);
        for (std::size_t j = 0; j < nc; ++j) {
            const double e = cov(0, 0) * kq * kq + 2.0 * cov(0, 1) * kq * kp[j] + cov(1, 1) * kp[j] * kp[j];
            const double f = std::exp(-0.5 * e) * norm;
            ws.spectrum()[m * nc + j][0] *= f;
            ws.spectrum()[m * nc + j][1] *= f;
        }
    }
    ws.backward();
    std::copy(ws.real(), ws.real() + nq * np, w.values.begin());
}

// Quintic Lagrange weights on nodes -2..3 at fractional offset s in [0, 1).
inline void lagrange6(double s, double w[6]) {
    for (int k = 0; k < 6; ++k) {
        double v = 1.0;
        for (int m = 0; m < 6; ++m)
            if (m != k) v *= (s - (m - 2)) / static_cast<double>(k - m);
        w[k] = v;
    }
}

// Interpolate samples f[0..n-1] (stride apart) at fractional index u; zero outside.
inline double interp6(const double* f, std::size_t stride, std::size_t n, double u) {
    const double base = std::floor(u);
    if (!(base >= -3.0) || base > static_cast<double>(n) + 1.0) return 0.0;
    const auto b = static_cast<std::ptrdiff_t>(base);
    double w[6];
    lagrange6(u - base, w);
    double acc = 0.0;
    for (int k = 0; k < 6; ++k) {
        const std::ptrdiff_t idx = b + k - 2;
        if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(n)) acc += w[k] * f[static_cast<std::size_t>(idx) * stride];
    }
    return acc;
}

// W_new(z) = W(B (z - shift)) |det B| with B = phi^{-1}, as two 1-D sweeps.
// Maps close to a quarter turn are split into square roots first.
inline void pushforward(WignerGrid& w, const Eigen::Matrix2d& phi, const Eigen::Vector2d& shift, std::vector<double>& scratch,
                        int depth = 0) {
    if (phi.isIdentity(0.0) && shift.isZero(0.0)) return;
    const double det_phi = phi.determinant();
    if (!(std::abs(det_phi) > 0.0) || !std::isfinite(det_phi)) throw std::domain_error("pushforward: singular phase-space map");
    const Eigen::Matrix2d b = phi.inverse();
    {
        const double hq = w.grid.q.step, hp = w.grid.p.step;
        Eigen::Matrix2d bi;
        bi << b(0, 0), b(0, 1) * hp / hq, b(1, 0) * hq / hp, b(1, 1);
        const double diag = std::max(std::abs(bi(0, 0)), std::abs(bi(1, 1)));
        if (diag < 0.6 * bi.cwiseAbs().maxCoeff() && depth < 8) {
            const Eigen::Matrix2d half = phi.sqrt();
            if (half.allFinite() && (half * half - phi).cwiseAbs().maxCoeff() <= 1e-12 * phi.cwiseAbs().maxCoeff()) {
                pushforward(w, half, Eigen::Vector2d::Zero(), scratch, depth + 1);
                pushforward(w, half, shift, scratch, depth + 1);
                return;
            }
        }
    }
    const Eigen::Vector2d c = -b * shift;
    const double det_b = b.determinant(), jac = std::abs(det_b);
    const Axis &qa = w.grid.q, &pa = w.grid.p;
    const std::size_t nq = qa.n, np = pa.n;
    scratch.resize(nq * np);
    // compare diagonal entries in index units to pick the better-conditioned sweep order
    const double b11 = std::abs(b(0, 0)), b22 = std::abs(b(1, 1));
    if (b22 >= b11) {
        // T(q, p') = W(detB/b22 q + b12/b22 p' + c1 - b12 c2/b22, p')
        const double alpha = det_b / b(1, 1), beta = b(0, 1) / b(1, 1), off = c(0) - b(0, 1) * c(1) / b(1, 1);
        for (std::size_t j = 0; j < np; ++j) {
            const double pj = pa.at(j);
            for (std::size_t i = 0; i < nq; ++i) {
                const double x = alpha * qa.at(i) + beta * pj + off;
                scratch[i * np + j] = interp6(w.values.data() + j, np, nq, (x - qa.min) / qa.step);
            }
        }
        // W_new(q, p) = T(q, b21 q + b22 p + c2)
        for (std::size_t i = 0; i < nq; ++i) {
            const double qi = qa.at(i);
            const double* row = scratch.data() + i * np;
            for (std::size_t j = 0; j < np; ++j) {
                const double y = b(1, 0) * qi + b(1, 1) * pa.at(j) + c(1);
                w.values[i * np + j] = jac * interp6(row, 1, np, (y - pa.min) / pa.step);
            }
        }
    } else {
        // T(q', p) = W(q', detB/b11 p + b21/b11 q' + c2 - b21 c1/b11)
        const double alpha = det_b / b(0, 0), beta = b(1, 0) / b(0, 0), off = c(1) - b(1, 0) * c(0) / b(0, 0);
        for (std::size_t i = 0; i < nq; ++i) {
            const double qi = qa.at(i);
            const double* row = w.values.data() + i * np;
            for (std::size_t j = 0; j < np; ++j) {
                const double y = alpha * pa.at(j) + beta * qi + off;
                scratch[i * np + j] = interp6(row, 1, np, (y - pa.min) / pa.step);
            }
        }
        // W_new(q, p) = T(b11 q + b12 p + c1, p)
        for (std::size_t j = 0; j < np; ++j) {
            const double pj = pa.at(j);
            for (std::size_t i = 0; i < nq; ++i) {
                const double x = b(0, 0) * qa.at(i) + b(0, 1) * pj + c(0);
                w.values[i * np + j] = jac * interp6(scratch.data() + j, np, nq, (x - qa.min) / qa.step);
            }
        }
    }
}

inline double min_eigenvalue(const Eigen::Matrix2d& s) {
    const double tr = s(0, 0) + s(1, 1);
    const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
    const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
    return 0.5 * tr - disc;
}

// Exact Ornstein-Uhlenbeck step for dz = (M z + c) dt + noise with rate 2D.
inline StepMap ou_step(const Eigen::Matrix2d& m, const Eigen::Vector2d& c, const Eigen::Matrix2d& d, double dt) {
    StepMap s;
    Eigen::Matrix4d vl = Eigen::Matrix4d::Zero();
    vl.block<2, 2>(0, 0) = -m * dt;
    vl.block<2, 2>(0, 2) = 2.0 * d * dt;
    vl.block<2, 2>(2, 2) = m.transpose() * dt;
    const Eigen::Matrix4d e = vl.exp();
    s.phi = e.block<2, 2>(2, 2).transpose();
    s.q = s.phi * e.block<2, 2>(0, 2);
    s.q = 0.5 * (s.q + s.q.transpose()).eval();
    Eigen::Matrix4d aug = Eigen::Matrix4d::Zero();
    aug.block<2, 2>(0, 0) = m * dt;
    aug.block<2, 2>(0, 2) = Eigen::Matrix2d::Identity() * dt;
    const Eigen::Matrix4d ea = aug.exp();
    s.shift = ea.block<2, 2>(0, 2) * c;
    return s;
}

// Boundary ring (two cells wide) maximum.
inline double edge_max(const WignerGrid& w) {
    const std::size_t nq = w.nq(), np = w.np();
    double m = 0.0;
    for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t j = 0; j < np; ++j) {
            if (i >= 2 && i + 2 < nq && j >= 2 && j + 2 < np) {
                j = np - 3;
                continue;
            }
            m = std::max(m, std::abs(w(i, j)));
        }
    return m;
}

// Shared stepping loop; `step_at(t, dt)` supplies the map for [t, t + dt].
// Step maps are composed until the accumulated covariance is positive
// semidefinite and only then applied to the grid; in between, moments follow
// from the exact linear map of the last applied state.
inline Trajectory run_steps(WignerGrid w, const EvolutionConfig& cfg, double dt, std::size_t steps,
                            const std::function<StepMap(double, double)>& step_at) {
    SpectralWorkspace ws(w.nq(), w.np());
    std::vector<double> scratch;
    Trajectory tr;
    const double hbar = w.osc.hbar;
    const double bound = 0.25 * hbar * hbar;
    const double mass0 = normalization(w);
    double mass = mass0;
    PhaseMoments base = moments(w);
    auto record = [&](double t, const PhaseMoments& mom, bool on_grid) {
        tr.times.push_back(t);
        tr.mass.push_back(mass);
        tr.moments.push_back(mom);
        const double det = mom.uncertainty_determinant();
        if (det < tr.uncertainty.min_determinant) {
            tr.uncertainty.min_determinant = det;
            tr.uncertainty.min_time = t;
        }
        if (det < bound * (1.0 - cfg.uncertainty_tolerance) && !tr.uncertainty.fired) {
            tr.uncertainty.fired = true;
            tr.uncertainty.first_violation = t;
        }
        if (on_grid && cfg.observer) cfg.observer(t, w);
    };
    auto mapped = [](const PhaseMoments& b, const StepMap& s) {
        Eigen::Vector2d mean(b.mean_q, b.mean_p);
        Eigen::Matrix2d c;
        c << b.var_q(), b.cov_qp(), b.cov_qp(), b.var_p();
        mean = s.phi * mean + s.shift;
        c = s.phi * c * s.phi.transpose() + s.q;
        return PhaseMoments{mean(0), mean(1), c(0, 0) + mean(0) * mean(0), c(1, 1) + mean(1) * mean(1), c(0, 1) + mean(0) * mean(1)};
    };
    record(0.0, base, true);
    const double peak0 = max_abs(w);
    const WignerGrid initial = w;
    const PhaseMoments initial_moments = base;
    StepMap acc, total;
    auto compose = [](StepMap& a, const StepMap& s) {
        a.shift = s.phi * a.shift + s.shift;
        a.q = s.phi * a.q * s.phi.transpose() + s.q;
        a.q = 0.5 * (a.q + a.q.transpose()).eval();
        a.phi = s.phi * a.phi;
    };
    auto positive = [](const StepMap& a) {
        const double scale = std::max(std::abs(a.q(0, 0)), std::abs(a.q(1, 1)));
        return min_eigenvalue(a.q) >= -1e-12 * scale;
    };
    bool frame_due = false;
    for (std::size_t n = 0; n < steps; ++n) {
        const double t = static_cast<double>(n) * dt;
        const StepMap s = step_at(t, dt);
        if (!s.phi.allFinite() || !s.shift.allFinite() || !s.q.allFinite())
            throw NumericalAbort("non-finite step map", t);
        compose(acc, s);
        compose(total, s);
        const double tn = static_cast<double>(n + 1) * dt;
        if (cfg.record_every > 0 && (n + 1) % cfg.record_every == 0) frame_due = true;
        if (positive(acc)) {
            pushforward(w, acc.phi, acc.shift, scratch);
            gaussian_smooth(w, acc.q, ws);
        } else if (n + 1 == steps && positive(total)) {
            // increments of a non-Markovian bath need not be positive; restart from t = 0
            w = initial;
            pushforward(w, total.phi, total.shift, scratch);
            gaussian_smooth(w, total.q, ws);
        } else {
            if (n + 1 == steps)
                throw NumericalAbort("accumulated diffusion is not positive semidefinite (negative diffusion)", tn);
            record(tn, mapped(initial_moments, total), false);
            continue;
        }
        acc = StepMap{};
        for (double v : w.values)
            if (!std::isfinite(v)) throw NumericalAbort("non-finite Wigner value", tn);
        const double peak = std::max(max_abs(w), 1e-300);
        if (edge_max(w) > cfg.edge_tolerance * std::max(peak, peak0))
            throw NumericalAbort("distribution reached the grid boundary; enlarge the grid", tn);
        mass = normalization(w);
        if (std::abs(mass - mass0) > cfg.mass_tolerance * tn + 1e-10)
            throw NumericalAbort("normalization drift " + std::to_string(mass - mass0) + " exceeds tolerance", tn);
        base = moments(w);
        record(tn, base, true);
        if (frame_due) {
            tr.frames.push_back({tn, w});
            frame_due = false;
        }
    }
    tr.final_state = std::move(w);
    return tr;
}

inline std::size_t step_count(double t_final, double& dt) {
    const auto n = static_cast<std::size_t>(std::ceil(t_final / dt - 1e-9));
    dt = t_final / static_cast<double>(n);
    return n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// lambda-family constant-coefficient equations

struct LambdaCoefficients {
    Eigen::Matrix2d drift;      // M in dz/dt = M z + (0, f)
    Eigen::Matrix2d diffusion;  // D, covariance rate 2D
};

inline LambdaCoefficients lambda_coefficients(int lambda, const BathSpec& bath, const OscillatorSpec& osc, const ThermalSpec& th,
                                              const DriveSpec& drive = {}) {
    if (lambda < -1 || lambda > 1) throw std::invalid_argument("lambda must be -1, 0 or +1");
    bath.validate();
    osc.validate();
    th.validate();
    const double m = osc.mass, w0 = osc.omega0(), g = bath.gamma, l = static_cast<double>(lambda);
    const double n_half = 0.5 * occupation_factor(osc, th);  // N + 1/2
    LambdaCoefficients c;
    c.drift << -0.5 * g * (1.0 + l), 1.0 / m, -m * w0 * w0, -0.5 * g * (1.0 - l);
    c.diffusion.setZero();
    c.diffusion(0, 0) = g * n_half * (1.0 + l) * osc.hbar / (2.0 * m * w0);
    c.diffusion(1, 1) = g * n_half * (1.0 - l) * m * osc.hbar * w0 / 2.0;
    if (drive.kind == DriveKind::DeltaCorrelatedRandom) c.diffusion(1, 1) += 0.5 * drive.g;
    return c;
}

inline double default_time_step(const BathSpec& bath, const OscillatorSpec& osc) {
    double dt = std::numeric_limits<double>::infinity();
    if (osc.omega0() > 0.0) dt = std::min(dt, 0.01 / osc.omega0());
    if (bath.gamma > 0.0) dt = std::min(dt, 0.01 / bath.gamma);
    return std::isfinite(dt) ? dt : 0.01;
}

inline Trajectory evolve_lambda(const WignerGrid& w0, const EvolutionConfig& cfg, const OscillatorSpec& osc, const ThermalSpec& th,
                                const BathSpec& bath) {
    cfg.validate();
    const auto coef = lambda_coefficients(cfg.lambda, bath, osc, th, cfg.drive);
    double dt = cfg.dt > 0.0 ? cfg.dt : default_time_step(bath, osc);
    const std::size_t steps = detail::step_count(cfg.t_final, dt);
    const StepMap base = detail::ou_step(coef.drift, Eigen::Vector2d::Zero(), coef.diffusion, dt);
    Eigen::Matrix2d integral = Eigen::Matrix2d::Zero();  // int_0^dt exp(M s) ds
    if (cfg.drive.kind == DriveKind::Deterministic) {
        Eigen::Matrix4d aug = Eigen::Matrix4d::Zero();
        aug.block<2, 2>(0, 0) = coef.drift * dt;
        aug.block<2, 2>(0, 2) = Eigen::Matrix2d::Identity() * dt;
        integral = aug.exp().block<2, 2>(0, 2);
    }
    WignerGrid start = w0;
    start.osc = osc;
    start.thermal = th;
    return detail::run_steps(std::move(start), cfg, dt, steps, [&](double t, double h) {
        StepMap s = base;
        if (cfg.drive.kind == DriveKind::Deterministic) s.shift = integral * Eigen::Vector2d(0.0, cfg.drive.force_at(t + 0.5 * h));
        return s;
    });
}

// ---------------------------------------------------------------------------
// HPZ-form equation with time-dependent coefficients

struct HPZCoefficients {
    std::vector<double> times;
    std::vector<double> gamma_t;   // 2 Gamma(t)
    std::vector<double> omega2_t;  // Omega^2(t)
    std::vector<double> d_pp;      // coefficient of d^2/dp^2
    std::vector<double> d_qp;      // coefficient of d^2/dq dp
    double mass{1.0};
    double initial_kick{0.0};  // m^2 Gddot(0+): momentum kick -> p + kick * q at t = 0+

    double step() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }

    // cubic Lagrange interpolation of (2Gamma, Omega^2, d_pp, d_qp)
    std::array<double, 4> at(double t) const {
        if (times.size() < 4) throw std::invalid_argument("HPZCoefficients: need at least four samples");
        const double h = step();
        if (t < -1e-12 * h || t > times.back() + 1e-9 * h)
            throw std::out_of_range("HPZCoefficients: t = " + std::to_string(t) + " outside the coefficient table");
        const double u = std::clamp(t / h, 0.0, static_cast<double>(times.size() - 1));
        auto i0 = static_cast<std::ptrdiff_t>(std::floor(u)) - 1;
        i0 = std::clamp<std::ptrdiff_t>(i0, 0, static_cast<std::ptrdiff_t>(times.size()) - 4);
        const double s = u - static_cast<double>(i0);
        double w[4];
        for (int k = 0; k < 4; ++k) {
            double v = 1.0;
            for (int m = 0; m < 4; ++m)
                if (m != k) v *= (s - m) / static_cast<double>(k - m);
            w[k] = v;
        }
        std::array<double, 4> out{0, 0, 0, 0};
        for (int k = 0; k < 4; ++k) {
            const auto i = static_cast<std::size_t>(i0 + k);
            out[0] += w[k] * gamma_t[i];
            out[1] += w[k] * omega2_t[i];
            out[2] += w[k] * d_pp[i];
            out[3] += w[k] * d_qp[i];
        }
        return out;
    }

    static HPZCoefficients constant(const TimeGrid& grid, double two_gamma, double omega2, double dpp, double dqp, double mass = 1.0) {
        HPZCoefficients c;
        c.times = grid.times();
        c.gamma_t.assign(grid.count, two_gamma);
        c.omega2_t.assign(grid.count, omega2);
        c.d_pp.assign(grid.count, dpp);
        c.d_qp.assign(grid.count, dqp);
        c.mass = mass;
        return c;
    }
};

struct WronskianError : std::runtime_error {
    double time;
    WronskianError(const std::string& what, double t) : std::runtime_error(what), time(t) {}
};

// Initial-value Green function: closed form when the memory is local.
inline GreenTable initial_value_green(const BathSpec& bath, const OscillatorSpec& osc, const TimeGrid& grid) {
    if (bath.kind == BathKind::Ohmic || bath.gamma == 0.0) return green_stationary(bath, osc, grid);
    return green_initial_value(bath, osc, grid);
}

inline HPZCoefficients hpz_coefficients(const BathSpec& bath, const OscillatorSpec& osc, const ThermalSpec& th, const TimeGrid& grid,
                                        const MomentOptions& opt = {}) {
    const auto green = initial_value_green(bath, osc, grid);
    const auto mom = fluctuation_moments(bath, osc, th, grid, opt);
    const double m = osc.mass;
    HPZCoefficients c;
    c.times = grid.times();
    c.mass = m;
    c.initial_kick = m * m * green.gddot[0];
    for (std::size_t i = 0; i < grid.count; ++i) {
        const double u1 = m * green.gdot[i], du1 = m * green.gddot[i], dd1 = m * green.gdddot[i];
        const double u2 = m * green.g[i], du2 = m * green.gdot[i], dd2 = m * green.gddot[i];
        const double det = du1 * u2 - u1 * du2;
        const double scale = (std::abs(u1) + std::abs(du1)) * (std::abs(u2) + std::abs(du2));
        if (!(std::abs(det) > 1e-12 * scale))
            throw WronskianError("hpz_coefficients: Wronskian degenerate at t = " + std::to_string(c.times[i]), c.times[i]);
        // [du1 u1; du2 u2] (2Gamma, Omega^2) = -(dd1, dd2)
        const double two_gamma = (-dd1 * u2 + u1 * dd2) / det;
        const double omega2 = (-du1 * dd2 + dd1 * du2) / det;
        const double aqq = mom.xx[i], aqp = m * mom.xv[i], app = m * m * mom.vv[i];
        const double daqp = m * mom.dxv[i], dapp = m * m * mom.dvv[i];
        c.gamma_t.push_back(two_gamma);
        c.omega2_t.push_back(omega2);
        c.d_qp.push_back(daqp - app / m + m * omega2 * aqq + two_gamma * aqp);
        c.d_pp.push_back(0.5 * (dapp + 2.0 * m * omega2 * aqp + 2.0 * two_gamma * app));
    }
    return c;
}

inline Trajectory evolve_hpz(const WignerGrid& w0, const HPZCoefficients& coeffs, EvolutionConfig cfg) {
    cfg.validate();
    if (coeffs.times.size() < 4) throw std::invalid_argument("evolve_hpz: coefficient table too short");
    if (coeffs.times.back() < cfg.t_final * (1.0 - 1e-12))
        throw std::invalid_argument("evolve_hpz: coefficients cover t <= " + std::to_string(coeffs.times.back()) +
                                    " but t_final = " + std::to_string(cfg.t_final));
    const double m = coeffs.mass;
    double dt = cfg.dt;
    if (!(dt > 0.0)) {
        double rate = 0.0;
        for (std::size_t i = 0; i < coeffs.times.size(); ++i)
            rate = std::max({rate, std::abs(coeffs.gamma_t[i]), std::sqrt(std::abs(coeffs.omega2_t[i]))});
        dt = rate > 0.0 ? 0.01 / rate : 0.01;
    }
    const std::size_t steps = detail::step_count(cfg.t_final, dt);
    auto system = [&](double t, Eigen::Matrix2d& mm, Eigen::Matrix2d& dd, Eigen::Vector2d& cc) {
        const auto k = coeffs.at(std::min(t, coeffs.times.back()));
        mm << 0.0, 1.0 / m, -m * k[1], -k[0];
        dd << 0.0, 0.5 * k[3], 0.5 * k[3], k[2];
        if (cfg.drive.kind == DriveKind::DeltaCorrelatedRandom) dd(1, 1) += 0.5 * cfg.drive.g;
        cc << 0.0, cfg.drive.force_at(t);
    };
    // one RK4 step of (Phi, mu, Q)' = (M Phi, M mu + c, M Q + Q M^T + 2D)
    auto step_at = [&](double t, double h) {
        Eigen::Matrix2d mm[3], dd[3];
        Eigen::Vector2d cc[3];
        for (int k = 0; k < 3; ++k) system(t + 0.5 * h * k, mm[k], dd[k], cc[k]);
        struct State {
            Eigen::Matrix2d phi, q;
            Eigen::Vector2d mu;
        };
        auto rhs = [&](int k, const State& s) {
            return State{mm[k] * s.phi, mm[k] * s.q + s.q * mm[k].transpose() + 2.0 * dd[k], mm[k] * s.mu + cc[k]};
        };
        auto axpy = [](const State& s, double a, const State& d) { return State{s.phi + a * d.phi, s.q + a * d.q, s.mu + a * d.mu}; };
        const State s0{Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Zero(), Eigen::Vector2d::Zero()};
        const State k1 = rhs(0, s0);
        const State k2 = rhs(1, axpy(s0, 0.5 * h, k1));
        const State k3 = rhs(1, axpy(s0, 0.5 * h, k2));
        const State k4 = rhs(2, axpy(s0, h, k3));
        StepMap out;
        out.phi = s0.phi + h / 6.0 * (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi);
        out.q = h / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q);
        out.q = 0.5 * (out.q + out.q.transpose()).eval();
        out.shift = h / 6.0 * (k1.mu + 2.0 * k2.mu + 2.0 * k3.mu + k4.mu);
        return out;
    };
    WignerGrid start = w0;
    if (coeffs.initial_kick != 0.0) {
        Eigen::Matrix2d kick;
        kick << 1.0, 0.0, coeffs.initial_kick, 1.0;
        std::vector<double> scratch;
        detail::pushforward(start, kick, Eigen::Vector2d::Zero(), scratch);
    }
    return detail::run_steps(std::move(start), cfg, dt, steps, step_at);
}

// ---------------------------------------------------------------------------
// Gaussian transition kernel

struct GaussianTransition {
    double time{0.0};
    Eigen::Matrix2d phi{Eigen::Matrix2d::Identity()};  // mean map, (q, p) ordering
    Eigen::Matrix2d a{Eigen::Matrix2d::Zero()};        // fluctuation covariance, (q, p) ordering
};

inline GaussianTransition gaussian_transition(const BathSpec& bath, const OscillatorSpec& osc, const ThermalSpec& th, double t,
                                              const MomentOptions& opt = {}) {
    if (!(t > 0.0)) throw KernelDegenerateError("gaussian_transition: t must be > 0; use evolve_hpz for short times");
    const TimeGrid grid{t, 2};
    const auto green = initial_value_green(bath, osc, grid);
    const auto mom = fluctuation_moments(bath, osc, th, grid, opt);
    const double m = osc.mass;
    GaussianTransition k;
    k.time = t;
    k.phi << m * green.gdot[1], green.g[1], m * m * green.gddot[1], m * green.gdot[1];
    k.a = mom.covariance_qp(1);
    return k;
}

// W_t(k) = W_0(phi^T k) exp(-k^T A k / 2): direct transform of W_0 at the mapped
// wavenumbers where the Gaussian factor is non-negligible, else real-space
// pushforward followed by smoothing.
inline WignerGrid kernel_propagate(const WignerGrid& w0, const GaussianTransition& k, double work_limit = 1e9) {
    const double det_a = k.a.determinant();
    if (!(det_a > 1e-12 * std::abs(k.a(0, 0) * k.a(1, 1))) || !std::isfinite(det_a))
        throw KernelDegenerateError("kernel_propagate: det A(t) = " + std::to_string(det_a) +
                                    " is not positive at t = " + std::to_string(k.time) + "; use evolve_hpz for short times");
    const Axis &qa = w0.grid.q, &pa = w0.grid.p;
    const std::size_t nq = qa.n, np = pa.n, nc = np / 2 + 1;
    const double cutoff = 2.0 * std::log(1e16);
    std::vector<double> kp(nc);
    for (std::size_t j = 0; j < nc; ++j) kp[j] = 2.0 * pi * static_cast<double>(j) / (static_cast<double>(np) * pa.step);
    std::size_t needed = 0;
    for (std::size_t mq = 0; mq < nq; ++mq) {
        const double kq = detail::wavenumber(mq, qa);
        for (std::size_t j = 0; j < nc; ++j)
            if (k.a(0, 0) * kq * kq + 2.0 * k.a(0, 1) * kq * kp[j] + k.a(1, 1) * kp[j] * kp[j] < cutoff) ++needed;
    }
    WignerGrid out(w0.grid, w0.osc, w0.thermal);
    detail::SpectralWorkspace ws(nq, np);
    const bool fourier = static_cast<double>(needed) * static_cast<double>(nq * np) <= work_limit;
    if (!fourier) {
        out.values = w0.values;
        std::vector<double> scratch;
        detail::pushforward(out, k.phi, Eigen::Vector2d::Zero(), scratch);
        detail::gaussian_smooth(out, k.a, ws);
        return out;
    }
    const double nyq_q = pi / qa.step, nyq_p = pi / pa.step;
    const double scale = 1.0 / (static_cast<double>(nq) * qa.step * static_cast<double>(np) * pa.step);
    std::vector<std::complex<double>> eq(nq), ep(np), rows(nq);
    fftw_complex* spec = ws.spectrum();
    for (std::size_t mq = 0; mq < nq; ++mq) {
        const double kq = detail::wavenumber(mq, qa);
        for (std::size_t j = 0; j < nc; ++j) {
            auto& cell = spec[mq * nc + j];
            cell[0] = cell[1] = 0.0;
            const double e = k.a(0, 0) * kq * kq + 2.0 * k.a(0, 1) * kq * kp[j] + k.a(1, 1) * kp[j] * kp[j];
            if (e >= cutoff) continue;
            const double kappa_q = k.phi(0, 0) * kq + k.phi(1, 0) * kp[j];
            const double kappa_p = k.phi(0, 1) * kq + k.phi(1, 1) * kp[j];
            if (std::abs(kappa_q) >= nyq_q || std::abs(kappa_p) >= nyq_p) continue;
            for (std::size_t b = 0; b < np; ++b) ep[b] = std::polar(1.0, -kappa_p * pa.at(b));
            for (std::size_t a = 0; a < nq; ++a) eq[a] = std::polar(1.0, -kappa_q * qa.at(a));
            std::complex<double> acc = 0.0;
            for (std::size_t a = 0; a < nq; ++a) {
                const double* row = w0.values.data() + a * np;
                double re = 0.0, im = 0.0;
                for (std::size_t b = 0; b < np; ++b) {
                    re += row[b] * ep[b].real();
                    im += row[b] * ep[b].imag();
                }
                acc += eq[a] * std::complex<double>(re, im);
            }
            const std::complex<double> v =
                acc * (qa.step * pa.step * std::exp(-0.5 * e) * scale) * std::polar(1.0, kq * qa.min + kp[j] * pa.min);
            cell[0] = v.real();
            cell[1] = v.imag();
        }
    }
    ws.backward();
    std::copy(ws.real(), ws.real() + nq * np, out.values.begin());
    return out;
}

inline WignerGrid kernel_propagate(const WignerGrid& w0, const BathSpec& bath, const OscillatorSpec& osc, const ThermalSpec& th,
                                   double t, const MomentOptions& opt = {}) {
    return kernel_propagate(w0, gaussian_transition(bath, osc, th, t, opt));
}

// ---------------------------------------------------------------------------
// Coordinate density of an evolved cat from the Fourier form
//   P(x) = (1/2 pi hbar) int ds chi(s) exp{-<X^2> s^2 / 2 hbar^2 + i x s / hbar},
// with chi the characteristic function of the initial cat along (mGdot, G).

inline std::vector<double> probability_density_fourier(const CatSpec& cat, const GaussianTransition& k, const OscillatorSpec& osc,
                                                       const std::vector<double>& x, double extra_variance = 0.0) {
    cat.validate();
    const double hbar = osc.hbar, sig = cat.sigma, d = cat.d;
    const double a = k.phi(0, 0), b = k.phi(0, 1);
    const double var = k.a(0, 0) + extra_variance;
    const double env = a * a * sig * sig + var;
    if (!(env > 0.0)) throw std::domain_error("probability_density_fourier: degenerate envelope");
    double xmax = 0.0;
    for (double v : x) xmax = std::max(xmax, std::abs(v));
    const double width = hbar / std::sqrt(env);
    const double s_max = 9.0 * width;
    double h = width / 40.0;
    if (b != 0.0) h = std::min(h, 2.0 * sig / std::abs(b) / 40.0);
    h = std::min(h, 0.3 * hbar / (0.5 * std::abs(a) * d + xmax + 1e-300));
    const auto n = static_cast<std::size_t>(std::ceil(s_max / h));
    h = s_max / static_cast<double>(n);
    const double n0 = cat.normalization();
    std::vector<double> chi(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        const double s = h * static_cast<double>(i);
        const double base = std::exp(-s * s * env / (2.0 * hbar * hbar));
        const double u = s * b;
        const double inner = 2.0 * std::cos(s * a * d / (2.0 * hbar)) * std::exp(-u * u / (8.0 * sig * sig)) +
                             std::exp(-(u - d) * (u - d) / (8.0 * sig * sig)) + std::exp(-(u + d) * (u + d) / (8.0 * sig * sig));
        chi[i] = n0 * base * inner * (i == 0 ? 0.5 : 1.0);
    }
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i <= n; ++i) acc += chi[i] * std::cos(x[j] * h * static_cast<double>(i) / hbar);
        out[j] = acc * h / (pi * hbar);
    }
    return out;
}

inline std::vector<double> probability_density_fourier(const CatSpec& cat, const BathSpec& bath, const OscillatorSpec& osc,
                                                       const ThermalSpec& th, double t, const std::vector<double>& x,
                                                       const MomentOptions& opt = {}) {
    if (t == 0.0) return probability_density_fourier(cat, GaussianTransition{}, osc, x);
    return probability_density_fourier(cat, gaussian_transition(bath, osc, th, t, opt), osc, x);
}

}  // namespace qbm
