// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#include "sidelink/geometry.hpp"
#include <gtest/gtest.h>
#include <random>

using namespace sidelink;

namespace
{
    const Vec3 kTx(-2.0, -4.0, 0.0), kRx(2.0, 3.0, 0.0), kRis1(-4.0, 0.0, 2.0);

    void expect_vec_near(const Vec3 &a, const Vec3 &b, double tol)
    {
        for (int i = 0; i < 3; ++i)
            EXPECT_NEAR(a[i], b[i], tol) << "component " << i;
    }
}

TEST(Rotation, IdentityAndHalfTurn)
{
    EXPECT_TRUE(euler_to_rotation(Vec3::Zero()).isApprox(Mat3::Identity(), 1e-15));
    const Mat3 R = euler_to_rotation(Vec3(kPi, 0.0, 0.0));
    expect_vec_near(R.diagonal(), Vec3(-1.0, -1.0, 1.0), 1e-12);
    EXPECT_NEAR((R - Mat3(R.diagonal().asDiagonal())).norm(), 0.0, 1e-12);
}

TEST(Rotation, QuarterTurnMapsXToY)
{
    expect_vec_near(euler_to_rotation(Vec3(kPi / 2, 0.0, 0.0)) * Vec3::UnitX(), Vec3::UnitY(), 1e-12);
}

TEST(Rotation, AlwaysSpecialOrthogonal)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int i = 0; i < 1000; ++i)
    {
        const Mat3 R = euler_to_rotation(Vec3(u(rng), u(rng), u(rng)));
        EXPECT_LT((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(R.determinant(), 1.0, 1e-12);
    }
}

TEST(LocalDirection, TableOneValues)
{
    expect_vec_near(local_direction(kTx, kRis1, Mat3::Identity()), Vec3(2.0, -4.0, -2.0) / std::sqrt(24.0), 1e-12);
    expect_vec_near(local_direction(kTx, kRis1, Mat3::Identity()), Vec3(0.40825, -0.81650, -0.40825), 1e-5);
    expect_vec_near(local_direction(kRx, kRis1, Mat3::Identity()), Vec3(6.0, 3.0, -2.0) / 7.0, 1e-12);
    expect_vec_near(local_direction(Vec3(3.0, 0.0, 0.0), Vec3::Zero(), Mat3::Identity()), Vec3::UnitX(), 1e-15);
}

TEST(LocalDirection, CoincidentPointsThrow)
{
    EXPECT_THROW(local_direction(kRis1, kRis1, Mat3::Identity()), DomainError);
}

TEST(LocalDirection, FrameConsistency)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 200; ++i)
    {
        const Mat3 R = euler_to_rotation(Vec3(u(rng), u(rng), u(rng)));
        const Vec3 a(u(rng), u(rng), u(rng)), t(u(rng), u(rng), u(rng));
        const Vec3 ref = local_direction(t, a, Mat3::Identity());
        // rotate the whole world by R: the anchor frame rotates with it
        expect_vec_near(local_direction(R * t, R * a, R), ref, 1e-12);
        EXPECT_NEAR(ref.norm(), 1.0, 1e-12);
    }
}

TEST(Angles, ReferenceValues)
{
    const AnglePair a = direction_to_angles(Vec3(2.0, -4.0, -2.0) / std::sqrt(24.0));
    EXPECT_NEAR(a.azimuth, std::atan2(-2.0, 1.0), 1e-12);
    EXPECT_NEAR(a.azimuth, -1.10715, 1e-5);
    EXPECT_NEAR(a.elevation, -0.42053, 1e-5);
    const AnglePair b = direction_to_angles(Vec3(6.0, 3.0, -2.0) / 7.0);
    EXPECT_NEAR(b.azimuth, 0.4636, 1e-4);
    EXPECT_NEAR(b.elevation, -0.2898, 1e-4);
    expect_vec_near(angles_to_direction({0.0, 0.0}), Vec3::UnitX(), 1e-15);
}

TEST(Angles, RoundTrip)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> az(-kPi + 1e-9, kPi), el(-kPi / 2 + 1e-6, kPi / 2 - 1e-6);
    for (int i = 0; i < 10000; ++i)
    {
        const AnglePair a{az(rng), el(rng)};
        const AnglePair b = direction_to_angles(angles_to_direction(a));
        EXPECT_NEAR(a.azimuth, b.azimuth, 1e-12);
        EXPECT_NEAR(a.elevation, b.elevation, 1e-12);
    }
}

TEST(Angles, PoleAzimuthIsZero)
{
    EXPECT_EQ(direction_to_angles(Vec3::UnitZ()).azimuth, 0.0);
}

TEST(SpatialFrequency, FigureFiveAnchor)
{
    const SpatialFreq f = spatial_frequencies(AnglePair{-1.1071, -0.2200}, AnglePair{0.4636, -0.2898});
    EXPECT_NEAR(f.xi, -0.4443, 1e-4);
    EXPECT_NEAR(f.zeta, -0.5039, 1e-4);
    const SpatialFreq z = spatial_frequencies(AnglePair{}, AnglePair{});
    EXPECT_EQ(z.xi, 0.0);
    EXPECT_EQ(z.zeta, 0.0);
}

TEST(SpatialFrequency, TableOneAnchorOne)
{
    const SpatialFreq f = spatial_frequencies(local_direction(kTx, kRis1, Mat3::Identity()),
                                              local_direction(kRx, kRis1, Mat3::Identity()));
    EXPECT_NEAR(f.xi, -0.38793, 1e-5);
    EXPECT_NEAR(f.zeta, -0.69396, 1e-5);
}

TEST(SpatialFrequency, SymmetricAndBounded)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> az(-kPi, kPi), el(-kPi / 2, kPi / 2);
    for (int i = 0; i < 1000; ++i)
    {
        const AnglePair a{az(rng), el(rng)}, b{az(rng), el(rng)};
        const SpatialFreq f = spatial_frequencies(a, b), g = spatial_frequencies(b, a);
        EXPECT_DOUBLE_EQ(f.xi, g.xi);
        EXPECT_DOUBLE_EQ(f.zeta, g.zeta);
        EXPECT_LE(std::abs(f.xi), 2.0);
        EXPECT_LE(std::abs(f.zeta), 2.0);
        // vector form agrees with the angle form
        const SpatialFreq h = spatial_frequencies(angles_to_direction(a), angles_to_direction(b));
        EXPECT_NEAR(f.xi, h.xi, 1e-12);
        EXPECT_NEAR(f.zeta, h.zeta, 1e-12);
    }
}

TEST(PathDelay, TableOneValues)
{
    const PathDelay los = path_delay(PathKind::los, kTx, kRx, 5.0);
    EXPECT_NEAR(los.range, std::sqrt(65.0) + 5.0, 1e-12);
    EXPECT_NEAR(los.range, 13.06226, 1e-5);
    EXPECT_NEAR(los.tau, 4.3571e-8, 1e-12);
    const PathDelay ris = path_delay(PathKind::ris, kTx, kRx, 5.0, kRis1);
    EXPECT_NEAR(ris.range, std::sqrt(24.0) + 7.0 + 5.0, 1e-12);
    EXPECT_NEAR(ris.tau, 5.6369e-8, 1e-12);
    EXPECT_NEAR(path_delay(PathKind::los, Vec3::Zero(), Vec3(3, 0, 0), 0.0).tau, 3.0 / kSpeedOfLight, 1e-20);
}

TEST(PathDelay, MultipathSegments)
{
    const Vec3 sp(0.0, 2.0, 3.0);
    EXPECT_NEAR(path_delay(PathKind::mp_los, kTx, kRx, 0.0, Vec3::Zero(), sp).range,
                (kTx - sp).norm() + (kRx - sp).norm(), 1e-12);
    EXPECT_NEAR(path_delay(PathKind::mp_ris, kTx, kRx, 0.0, kRis1, sp).range,
                (kTx - sp).norm() + (kRis1 - sp).norm() + (kRx - kRis1).norm(), 1e-12);
    EXPECT_NEAR(path_delay(PathKind::mp_ris_mirror, kTx, kRx, 0.0, kRis1, sp).range,
                (kTx - kRis1).norm() + (kRis1 - sp).norm() + (kRx - sp).norm(), 1e-12);
}

TEST(PathDelay, ZeroSegmentThrows)
{
    EXPECT_THROW(path_delay(PathKind::los, kTx, kTx, 0.0), DomainError);
    EXPECT_THROW(path_delay(PathKind::ris, kTx, kRx, 0.0, kTx), DomainError);
}

TEST(PathDelay, SlopeInClockOffset)
{
    for (double B : {-3.0, 0.0, 1.0, 7.5})
    {
        const double t0 = path_delay(PathKind::ris, kTx, kRx, B, kRis1).tau;
        const double t1 = path_delay(PathKind::ris, kTx, kRx, B + 1.0, kRis1).tau;
        EXPECT_GT(t1, t0);
        EXPECT_NEAR(t1 - t0, 1.0 / kSpeedOfLight, 1e-20);
    }
}
