// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#include "sidelink/channel.hpp"
#include "sidelink/estimator.hpp"
#include "support.hpp"
#include <gtest/gtest.h>

using namespace sidelink;

namespace
{
    struct Fixture
    {
        Scenario s;
        Codebook cb;
        RVec delta;
        CVec pilots;
        std::vector<CMat> base; // block-1 profiles per anchor
        std::vector<PathDescriptor> paths;
        CMat Y; // noise-free
    };

    Fixture make_fixture(const Scenario &s)
    {
        Fixture o;
        o.s = s;
        o.cb = build_codebook(s);
        o.delta = RVec::Ones(s.radio.n_transmissions);
        o.pilots = pilot_symbols(s.radio, s.seed);
        for (int l = 0; l < s.n_ris(); ++l)
            o.base.push_back(o.cb.base(l));
        std::mt19937_64 rng(s.seed);
        o.paths = enumerate_paths(s, {}, &rng);
        o.Y = synthesize_paths(o.paths, s, o.cb.profiles, o.delta, o.pilots);
        return o;
    }

    PathContext context(const Fixture &o, int l)
    {
        PathContext c;
        c.radio = o.s.radio;
        c.power_w = o.s.radio.power_w();
        c.pilots = o.pilots;
        c.delta = o.delta.head(o.cb.base_length);
        c.wavelength = o.s.radio.wavelength();
        if (l >= 0)
        {
            c.profiles = &o.base[l];
            c.Z = element_positions(o.s.anchors[l], c.wavelength);
        }
        return c;
    }

    CMat noise(Eigen::Index r, Eigen::Index c, double var, std::mt19937_64 &rng)
    {
        std::normal_distribution<double> n(0.0, std::sqrt(var / 2.0));
        CMat W(r, c);
        for (Eigen::Index i = 0; i < W.size(); ++i)
            W(i) = cd(n(rng), n(rng));
        return W;
    }
}

TEST(Separation, RecoversEachPathExactly)
{
    const Fixture o = make_fixture(table1_scenario());
    const auto sep = separate_paths(o.Y, o.cb.block, o.cb.base_length);
    ASSERT_EQ(sep.size(), 3u);
    for (int p = 0; p < 3; ++p)
    {
        const CMat alone = synthesize_paths({o.paths[p]}, o.s, o.cb.profiles, o.delta, o.pilots);
        const CMat ref = alone.leftCols(o.cb.base_length);
        EXPECT_LT((sep[p] - ref).cwiseAbs().maxCoeff(), 1e-10 * ref.cwiseAbs().maxCoeff()) << "path " << p;
    }
}

TEST(Separation, ZeroCrossTalk)
{
    const Fixture o = make_fixture(table1_scenario());
    for (int p = 0; p < 3; ++p)
    {
        const CMat alone = synthesize_paths({o.paths[p]}, o.s, o.cb.profiles, o.delta, o.pilots);
        const auto sep = separate_paths(alone, o.cb.block, o.cb.base_length);
        for (int q = 0; q < 3; ++q)
            if (q != p)
                EXPECT_LT(sep[q].norm(), 1e-13 * alone.norm()) << p << " into " << q;
        if (p == 0)
            EXPECT_LT((sep[0] - alone.leftCols(o.cb.base_length)).norm(), 1e-13 * alone.norm());
    }
    EXPECT_THROW(separate_paths(o.Y.leftCols(100), o.cb.block, o.cb.base_length), ConfigError);
}

TEST(Separation, NoiseVarianceShrinksByGamma)
{
    std::mt19937_64 rng(3);
    const CMat W = noise(512, 192, 1.0, rng);
    const auto sep = separate_paths(W, orthogonal_block_matrix(3, 2), 64);
    for (const CMat &P : sep)
        EXPECT_NEAR(P.squaredNorm() / P.size(), 1.0 / 3.0, 0.05 / 3.0);
}

TEST(Estimator, OnGridDelayIsExact)
{
    Fixture o = make_fixture(table1_scenario());
    const int nfft = 1024;
    PathDescriptor p;
    p.gain = cd(1e-5, 3e-6);
    p.tau = 37.0 / (nfft * o.s.radio.subcarrier_spacing_hz);
    const CMat Y = synthesize_paths({p}, o.s, o.cb.profiles, o.delta, o.pilots);
    const auto sep = separate_paths(Y, o.cb.block, o.cb.base_length);
    EXPECT_DOUBLE_EQ(coarse_delay(sep[0], o.pilots, o.s.radio, nfft, false), p.tau);
}

TEST(Estimator, CoarseDelayWithinHalfCell)
{
    const Fixture o = make_fixture(test::load("table1_nomp"));
    const auto sep = separate_paths(o.Y, o.cb.block, o.cb.base_length);
    const double half = 1.0 / (2.0 * 1024 * o.s.radio.subcarrier_spacing_hz);
    EXPECT_LE(std::abs(coarse_delay(sep[0], o.pilots, o.s.radio, 1024, false) - o.paths[0].tau), half);
    for (int l = 1; l <= 2; ++l)
        EXPECT_LE(std::abs(coarse_delay(sep[l], o.pilots, o.s.radio, 1024, true) - o.paths[l].tau), half);
}

TEST(Estimator, CoarseSpatialFrequencyWithinHalfStep)
{
    const Fixture o = make_fixture(test::load("table1_nomp"));
    EstimatorOptions opt;
    opt.refine = false;
    const ChannelEstimate e = estimate_channel(o.Y, o.s, o.cb, o.delta, opt);
    for (int l = 1; l <= 2; ++l)
    {
        EXPECT_LE(std::abs(e.coarse[l].sf.xi - o.paths[l].sf.xi), 0.01 + 1e-12);
        EXPECT_LE(std::abs(e.coarse[l].sf.zeta - o.paths[l].sf.zeta), 0.01 + 1e-12);
    }
}

TEST(Estimator, OnGridSpatialFrequencyIsExact)
{
    Fixture o = make_fixture(table1_scenario());
    PathDescriptor p;
    p.kind = PathKind::ris;
    p.ris = 1;
    p.gain = cd(1e-8, 0.0);
    p.tau = 4.0e-8;
    p.sf = {-1.0 + 0.02 * 65, -1.0 + 0.02 * 27};
    const CMat Y = synthesize_paths({p}, o.s, o.cb.profiles, o.delta, o.pilots);
    const auto sep = separate_paths(Y, o.cb.block, o.cb.base_length);
    const SfEstimate e = coarse_spatial_freq(sep[1], o.cb.base(0), o.s.anchors[0], o.s.radio.wavelength(), o.pilots,
                                             o.s.radio, p.tau);
    EXPECT_NEAR(e.sf.xi, p.sf.xi, 1e-12);
    EXPECT_NEAR(e.sf.zeta, p.sf.zeta, 1e-12);
}

TEST(Estimator, AliasedSpatialFrequencyWrapsAndIsFlagged)
{
    Fixture o = make_fixture(table1_scenario());
    PathDescriptor p;
    p.kind = PathKind::ris;
    p.ris = 1;
    p.gain = cd(1e-8, 0.0);
    p.tau = 4.0e-8;
    p.sf = {-1.2, 0.1};
    const CMat Y = synthesize_paths({p}, o.s, o.cb.profiles, o.delta, o.pilots);
    const auto sep = separate_paths(Y, o.cb.block, o.cb.base_length);
    const auto lam = o.s.radio.wavelength();
    const SfEstimate e = coarse_spatial_freq(sep[1], o.cb.base(0), o.s.anchors[0], lam, o.pilots, o.s.radio, p.tau);
    EXPECT_NEAR(e.sf.xi, 0.8, 1e-9);
    EXPECT_NEAR(e.sf.zeta, 0.1, 1e-9);
    EXPECT_TRUE(e.alias_possible);
    // a prior window (clipped to the principal interval) suppresses the flag
    const SfEstimate w = coarse_spatial_freq(sep[1], o.cb.base(0), o.s.anchors[0], lam, o.pilots, o.s.radio, p.tau,
                                             0.02, SfWindow{0.7, 0.9, 0.0, 0.2});
    EXPECT_NEAR(w.sf.xi, 0.8, 1e-9);
    EXPECT_FALSE(w.alias_possible);
}

TEST(Estimator, NoiseFreeRefinementIsExact)
{
    const Fixture o = make_fixture(test::load("table1_nomp"));
    const ChannelEstimate e = estimate_channel(o.Y, o.s, o.cb, o.delta);
    ASSERT_EQ(e.refined.size(), 3u);
    for (int p = 0; p < 3; ++p)
    {
        EXPECT_LT(kSpeedOfLight * std::abs(e.refined[p].tau - o.paths[p].tau), 1e-8) << "path " << p;
        EXPECT_LT(std::abs(e.refined[p].gain - o.paths[p].gain), 1e-8 * std::abs(o.paths[p].gain));
        if (p > 0)
        {
            EXPECT_LT(std::abs(e.refined[p].sf.xi - o.paths[p].sf.xi), 1e-8);
            EXPECT_LT(std::abs(e.refined[p].sf.zeta - o.paths[p].sf.zeta), 1e-8);
        }
    }
}

TEST(Estimator, ConcentratedGainIdentityAndMonotoneRefinement)
{
    Fixture o = make_fixture(table1_scenario());
    std::mt19937_64 rng(12);
    for (double pdbm : {10.0, 20.0, 30.0})
    {
        o.s.radio.power_dbm = pdbm;
        const CMat Y = synthesize_paths(o.paths, o.s, o.cb.profiles, o.delta, o.pilots) +
                       noise(512, 192, noise_variance(o.s.radio), rng);
        const auto sep = separate_paths(Y, o.cb.block, o.cb.base_length);
        for (int l = -1; l < 2; ++l)
        {
            const PathContext c = context(o, l);
            const CMat &P = sep[l + 1];
            const double tau = coarse_delay(P, o.pilots, o.s.radio, 1024, l >= 0);
            SpatialFreq sf;
            if (l >= 0)
                sf = coarse_spatial_freq(P, o.cb.base(l), o.s.anchors[l], c.wavelength, o.pilots, o.s.radio, tau).sf;
            const PathEstimate init = concentrated_fit(P, c, tau, sf);
            const PathEstimate ref = refine_channel_mle(P, c, init);
            EXPECT_LE(ref.residual, init.residual * (1 + 1e-12));
            const CMat mu = path_model(c, ref.tau, ref.sf);
            // closed form in extended precision: the difference cancels ~7 digits at 30 dBm
            using ld = long double;
            std::complex<ld> num = 0;
            ld pp = 0, mm = 0;
            for (Eigen::Index i = 0; i < P.size(); ++i)
            {
                const std::complex<ld> a(mu(i).real(), mu(i).imag()), y(P(i).real(), P(i).imag());
                num += std::conj(a) * y;
                pp += std::norm(y);
                mm += std::norm(a);
            }
            const double closed = static_cast<double>(pp - std::norm(num) / mm);
            EXPECT_NEAR(ref.residual, closed, 1e-9 * ref.residual);
            const cd rho(static_cast<double>(num.real() / mm), static_cast<double>(num.imag() / mm));
            EXPECT_LT(std::abs(ref.gain - rho), 1e-9 * std::abs(ref.gain));
        }
    }
}
