#include "softarm/actuation.hpp"
#include "softarm/arm_generator.hpp"
#include "softarm/validation.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace softarm;

// ---------------------------------------------------------------------------
// pressure_forces

TEST(PressureForces, SingleTriangleSplitsEvenly) {
    // triangle area 0.5, normal +z, P = 6 -> each node (0,0,1) N
    VecX q(9);
    q << 0, 0, 0, 1, 0, 0, 0, 1, 0;
    const std::vector<std::array<int, 3>> tris = {{0, 1, 2}};
    const VecX f = pressure_forces(tris, q, 6.0);
    for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(f[3 * i + 2], 1.0, 1e-15);
        EXPECT_NEAR(f[3 * i + 0], 0.0, 1e-15);
        EXPECT_NEAR(f[3 * i + 1], 0.0, 1e-15);
    }
}

TEST(PressureForces, ClosedCavityNetForceVanishes) {
    const GeneratedArm arm = generate_arm(ArmParams{});
    const VecX rest = arm.spa.rest_positions();
    for (const auto& name : arm.cavity_groups) {
        const auto [rf, rt] = validation::cavity_load_residuals(arm.spa.tri_group(name), rest, 0.8);
        EXPECT_LT(rf, 1e-12) << name;
        EXPECT_LT(rt, 1e-12) << name;
    }
}

TEST(PressureForces, ClosedCavityNetForceVanishesWhenBent) {
    const GeneratedArm arm = generate_arm(ArmParams{});
    const VecX bent = validation::bend_positions(arm.spa.rest_positions(), 5.0);
    for (const auto& name : arm.cavity_groups) {
        const auto [rf, rt] = validation::cavity_load_residuals(arm.spa.tri_group(name), bent, 1.3);
        EXPECT_LT(rf, 1e-12) << name;
        EXPECT_LT(rt, 1e-12) << name;
    }
}

TEST(PressureForces, DegenerateTriangleSkippedAndCounted) {
    VecX q(9);
    q << 0, 0, 0, 1, 0, 0, 2, 0, 0;  // collinear
    const std::vector<std::array<int, 3>> tris = {{0, 1, 2}};
    int skips = 0;
    const VecX f = pressure_forces(tris, q, 5.0, &skips);
    EXPECT_EQ(skips, 1);
    EXPECT_LT(f.norm(), 1e-300);
}

// ---------------------------------------------------------------------------
// periodic signal

TEST(PeriodicPressures, PaperOperatingPoints) {
    PeriodicSignalConfig cfg;  // P0 = A = 0.65 Pa, f = 0.05 Hz
    {
        const auto [pl, pr] = periodic_pressures(0.0, cfg);
        EXPECT_DOUBLE_EQ(pl, 0.65);
        EXPECT_DOUBLE_EQ(pr, 0.65);
    }
    {
        const auto [pl, pr] = periodic_pressures(5.0, cfg);  // quarter period
        EXPECT_DOUBLE_EQ(pl, 1.3);
        EXPECT_DOUBLE_EQ(pr, 0.0);
    }
    {
        const auto [pl, pr] = periodic_pressures(10.0, cfg);  // half period
        EXPECT_DOUBLE_EQ(pl, 0.65);
        EXPECT_DOUBLE_EQ(pr, 0.65);
    }
}

TEST(PeriodicPressures, SumIsExactlyTwoP0) {
    PeriodicSignalConfig cfg;
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int i = 0; i < 2000; ++i) {
        const auto [pl, pr] = periodic_pressures(u(rng), cfg);
        EXPECT_EQ(pl + pr, 2.0 * cfg.offset);
        EXPECT_GE(pl, cfg.offset - cfg.amplitude - 1e-15);
        EXPECT_LE(pl, cfg.offset + cfg.amplitude + 1e-15);
    }
}

TEST(PeriodicPressures, HalfPeriodShiftSwapsSidesExactly) {
    PeriodicSignalConfig cfg;
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    for (int i = 0; i < 1000; ++i) {
        const double phase = u(rng);
        const auto [pl0, pr0] = pressures_at_phase(phase, cfg);
        const auto [pl1, pr1] = pressures_at_phase(phase + 1.0, cfg);
        EXPECT_EQ(pl1, pr0);
        EXPECT_EQ(pr1, pl0);
    }
    // and through t itself at representable half-period multiples
    for (int k = 0; k < 20; ++k) {
        const double t = 10.0 * k;  // half period = 10 s at f = 0.05
        const auto [pl0, pr0] = periodic_pressures(t, cfg);
        const auto [pl1, pr1] = periodic_pressures(t + 10.0, cfg);
        EXPECT_EQ(pl1, pr0);
        EXPECT_EQ(pr1, pl0);
    }
}

TEST(PeriodicPressures, NegativeOffsetConfigRejected) {
    PeriodicSignalConfig cfg;
    cfg.offset = 0.3;
    cfg.amplitude = 0.65;  // P0 - A < 0
    EXPECT_THROW(periodic_pressures(1.0, cfg), Error);
}

// ---------------------------------------------------------------------------
// merge_cavities

TEST(MergeCavities, SplitsSidesEvenly) {
    // (P_left, P_right) = (1.3, 0) -> (0, 0.65, 0, 0.65)
    const auto p = merge_cavities(1.3, 0.0);
    EXPECT_DOUBLE_EQ(p[0], 0.0);
    EXPECT_DOUBLE_EQ(p[1], 0.65);
    EXPECT_DOUBLE_EQ(p[2], 0.0);
    EXPECT_DOUBLE_EQ(p[3], 0.65);
}

TEST(MergeCavities, EqualSidesGiveQuarterEach) {
    const auto p = merge_cavities(0.65, 0.65);
    for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(p[i], 0.325);
}

TEST(MergeCavities, ZeroGivesZero) {
    const auto p = merge_cavities(0.0, 0.0);
    for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(p[i], 0.0);
}

TEST(MergeCavities, PairSumsReconstructSides) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.3);
    for (int i = 0; i < 200; ++i) {
        const double pl = u(rng), pr = u(rng);
        const auto p = merge_cavities(pl, pr);
        EXPECT_EQ(p[1] + p[3], pl);  // left pair
        EXPECT_EQ(p[0] + p[2], pr);  // right pair
    }
}

// ---------------------------------------------------------------------------
// orientation (quadrant convention)

TEST(Orientation, InflatingPlusYPairBendsTowardMinusY) {
    const double tip_y = validation::single_pair_tip_y(0.4, 200);
    EXPECT_LT(tip_y, -1e-5);
}

TEST(Orientation, SignFlippedPressureFailsTheCheck) {
    // fault injection: flipping the pressure sign mimics inverted winding
    const double tip_y = validation::single_pair_tip_y(-0.4, 200);
    EXPECT_GT(tip_y, 1e-5);
}
