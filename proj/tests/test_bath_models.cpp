// test_bath_models.cpp — memory functions, response function, thermal factors

#include <gtest/gtest.h>

#include <cmath>

#include "qbm/bath_models.hpp"

using namespace qbm;

TEST(MemoryFourier, OhmicIsConstantFriction) {
    const auto bath = BathSpec::ohmic(1.0);
    const complex mu = memory_fourier(bath, complex(3.0, 0.0));
    EXPECT_DOUBLE_EQ(mu.real(), 1.0);
    EXPECT_DOUBLE_EQ(mu.imag(), 0.0);
}

TEST(MemoryFourier, RelaxationBathAtImaginaryUnit) {
    // numerical Laplace transform of e^{-t} at s = 1 gives 1/2
    const auto bath = BathSpec::single_relaxation_time(1.0, 1.0);
    const complex mu = memory_fourier(bath, complex(0.0, 1.0));
    EXPECT_NEAR(mu.real(), 0.5, 1e-15);
    EXPECT_NEAR(mu.imag(), 0.0, 1e-15);
}

TEST(MemoryFourier, RelaxationBathConvergesToOhmic) {
    const double gamma = 0.7;
    double prev = 1e300;
    for (double tau : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}) {
        const auto bath = BathSpec::single_relaxation_time(gamma, tau);
        double worst = 0.0;
        for (double w = 0.0; w <= 10.0; w += 0.25)
            worst = std::max(worst, std::abs(memory_fourier(bath, complex(w, 0.0)) - gamma));
        EXPECT_LT(worst, prev);
        prev = worst;
    }
    EXPECT_LT(prev, 1e-4);
}

TEST(MemoryFourier, RejectsLowerHalfPlane) {
    EXPECT_THROW(memory_fourier(BathSpec::ohmic(1.0), complex(1.0, -0.1)), std::domain_error);
}

TEST(MemoryFourier, PositiveRealOnLogSweep) {
    for (const auto& bath : {BathSpec::ohmic(0.3), BathSpec::single_relaxation_time(0.3, 2.0),
                             BathSpec::single_relaxation_time(5.0, 1e-3)}) {
        for (double lw = -6.0; lw <= 6.0; lw += 0.1) {
            const double w = std::pow(10.0, lw);
            EXPECT_GE(memory_fourier(bath, complex(w, 0.0)).real(), 0.0);
            EXPECT_GE(memory_fourier(bath, complex(-w, 0.0)).real(), 0.0);
        }
    }
}

TEST(BathSpec, ValidationRejectsBadParameters) {
    EXPECT_THROW(BathSpec::ohmic(-1.0).validate(), std::invalid_argument);
    EXPECT_THROW(BathSpec::single_relaxation_time(1.0, 0.0).validate(), std::invalid_argument);
    EXPECT_THROW((OscillatorSpec{0.0, 1.0, 1.0}.validate()), std::invalid_argument);
    EXPECT_THROW((OscillatorSpec{1.0, -1.0, 1.0}.validate()), std::invalid_argument);
    EXPECT_THROW((ThermalSpec{-1.0}.validate()), std::invalid_argument);
    EXPECT_NO_THROW(BathSpec::ohmic(0.0).validate());
}

TEST(BathSpec, MemoryFunctionIntegratesToFriction) {
    const auto bath = BathSpec::single_relaxation_time(0.4, 0.5, 2.0);
    double acc = 0.0;
    const double h = 1e-4;
    for (double t = 0.5 * h; t < 20.0; t += h) acc += bath.memory(t) * h;
    EXPECT_NEAR(acc, bath.friction(), 1e-6);
}

TEST(Response, StaticLimit) {
    const auto a = response(BathSpec::ohmic(0.0), OscillatorSpec{1.0, 1.0, 1.0}, 0.0);
    EXPECT_DOUBLE_EQ(a.real(), 1.0);
    EXPECT_DOUBLE_EQ(a.imag(), 0.0);
}

TEST(Response, OhmicAtResonance) {
    const auto a = response(BathSpec::ohmic(0.2), OscillatorSpec{1.0, 1.0, 1.0}, 1.0);
    // independent complex arithmetic: 1/(-i * 0.2)
    const std::complex<long double> ref = 1.0L / std::complex<long double>(0.0L, -0.2L);
    EXPECT_NEAR(a.real(), static_cast<double>(ref.real()), 1e-14);
    EXPECT_NEAR(a.imag(), 5.0, 1e-13);
}

TEST(Response, UndampedPoleIsFlagged) {
    EXPECT_THROW(response(BathSpec::ohmic(0.0), OscillatorSpec{1.0, 4.0, 1.0}, 2.0), ResonanceError);
}

TEST(Response, HighFrequencyDecay) {
    const OscillatorSpec osc{2.0, 1.0, 1.0};
    for (const auto& bath : {BathSpec::ohmic(0.5), BathSpec::single_relaxation_time(0.5, 0.1)}) {
        const double w = 1e5;
        EXPECT_NEAR(std::abs(response(bath, osc, w)) * osc.mass * w * w, 1.0, 1e-4);
    }
}

TEST(Response, KramersKronigSymmetries) {
    const OscillatorSpec osc{1.0, 1.0, 1.0};
    for (const auto& bath : {BathSpec::ohmic(0.2), BathSpec::single_relaxation_time(0.2, 3.0)}) {
        for (double w = 0.0; w < 20.0; w += 0.037) {
            const auto ap = response(bath, osc, w);
            const auto am = response(bath, osc, -w);
            EXPECT_GE(ap.imag(), 0.0);
            EXPECT_NEAR(am.real(), ap.real(), 1e-14 * std::abs(ap));
            EXPECT_NEAR(am.imag(), -ap.imag(), 1e-14 * std::abs(ap));
        }
    }
}

TEST(OccupationFactor, ZeroTemperatureIsExactlyOne) {
    EXPECT_EQ(occupation_factor(OscillatorSpec{}, ThermalSpec{0.0}), 1.0);
}

TEST(OccupationFactor, SeriesOracleAtHalf) {
    // hbar w0 / 2kT = 0.5
    EXPECT_NEAR(occupation_factor(OscillatorSpec{}, ThermalSpec{1.0}), 2.16395341373865284877, 1e-14);
}

TEST(OccupationFactor, HighTemperatureLimit) {
    for (double kT : {1e3, 1e5, 1e8}) {
        const double v = occupation_factor(OscillatorSpec{}, ThermalSpec{kT});
        EXPECT_NEAR(v / (2.0 * kT), 1.0, 1e-6);
        EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(OccupationFactor, MonotoneAndAtLeastOne) {
    double prev = 1.0;
    for (double lk = -4.0; lk <= 6.0; lk += 0.01) {
        const double v = occupation_factor(OscillatorSpec{}, ThermalSpec{std::pow(10.0, lk)});
        EXPECT_GE(v, 1.0);
        EXPECT_GE(v, prev * (1.0 - 1e-15));
        prev = v;
    }
}

TEST(OccupationFactor, RejectsFreeParticle) {
    EXPECT_THROW(occupation_factor(OscillatorSpec{1.0, 0.0, 1.0}, ThermalSpec{1.0}), std::domain_error);
}

TEST(ThermalFactors, EnergyFactorContinuousAcrossSeriesSwitch) {
    const double kT = 2.0;
    const double x = 1e-4 * 2.0 * kT;
    const double below = thermal_energy_factor(x * (1 - 1e-9), kT);
    const double above = thermal_energy_factor(x * (1 + 1e-9), kT);
    EXPECT_NEAR(below, above, 1e-12);
    EXPECT_DOUBLE_EQ(thermal_energy_factor(0.0, kT), 2.0 * kT);
}
