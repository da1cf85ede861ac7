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
#include "sidelink/codebook.hpp"
#include "sidelink/crb.hpp"
#include "support.hpp"
#include <gtest/gtest.h>
#include <cmath>

using namespace sidelink;

namespace
{
    struct Model
    {
        Scenario s;
        Codebook cb;
        std::vector<PathDescriptor> paths;
        ChannelModel m;
        RVec eta;
    };

    Model model_of(const Scenario &s, bool multipath = false)
    {
        Model o;
        o.s = s;
        o.cb = build_codebook(s);
        std::mt19937_64 rng(s.seed);
        o.paths = enumerate_paths(s, multipath ? all_scatterers(s) : std::vector<ScatterPoint>{}, &rng);
        o.m = make_channel_model(s, o.cb, RVec::Ones(s.radio.n_transmissions), o.paths);
        o.eta = eta_from_paths(o.m, o.paths);
        return o;
    }

    // Central difference of the one path that eta_i belongs to. The mean is a sum
    // over paths, so this is the same derivative without the round-off of the
    // strong terms swamping a weak multipath contribution.
    CMat path_difference(const ChannelModel &m, const RVec &eta, Eigen::Index i, double h)
    {
        int p = 0;
        while (i >= m.offset(p) + m.params_of(p))
            ++p;
        ChannelModel one = m;
        one.kinds = {m.kinds[p]};
        one.ris = {m.ris[p]};
        one.n_primary = 0;
        RVec a = eta.segment(m.offset(p), m.params_of(p)), b = a;
        a[i - m.offset(p)] += h;
        b[i - m.offset(p)] -= h;
        return (mean_signal(one, a) - mean_signal(one, b)) / (2.0 * h);
    }

    // 1e-7 relative to the natural scale: delays and amplitudes by value,
    // spatial frequencies and phases (unit scale) by max(|value|, 1)
    double fd_step(const ChannelModel &m, const RVec &eta, Eigen::Index i)
    {
        for (int p = 0; p < static_cast<int>(m.ris.size()); ++p)
        {
            const int k = static_cast<int>(i) - m.offset(p);
            if (k < 0 || k >= m.params_of(p))
                continue;
            const bool unit_scale = m.ris[p] > 0 ? (k < 2 || k == 4) : k == 2;
            return 1e-7 * (unit_scale ? std::max(1.0, std::abs(eta[i])) : std::abs(eta[i]));
        }
        return 1e-7;
    }

    // largest relative deviation between analytic and central-difference partials
    double partials_error(const Model &o)
    {
        const auto P = mean_partials(o.m, o.eta);
        double worst = 0.0;
        for (Eigen::Index i = 0; i < o.eta.size(); ++i)
        {
            const double h = fd_step(o.m, o.eta, i);
            const CMat fd = path_difference(o.m, o.eta, i, h);
            worst = std::max(worst, (fd - P[i]).norm() / P[i].norm());
        }
        return worst;
    }

    bool is_psd(const RMat &F)
    {
        Eigen::SelfAdjointEigenSolver<RMat> es(F);
        return (F - F.transpose()).norm() <= 1e-9 * F.norm() && es.eigenvalues().minCoeff() >= -1e-9 * F.norm();
    }
}

TEST(FimPartials, MatchFiniteDifferencesTable1)
{
    EXPECT_LT(partials_error(model_of(table1_scenario())), 1e-6);
}

TEST(FimPartials, MatchFiniteDifferencesRandomGeometry)
{
    std::mt19937_64 rng(21);
    for (int t = 0; t < 5; ++t)
        EXPECT_LT(partials_error(model_of(test::small(test::random_table1(rng), 64, 24))), 1e-6) << "trial " << t;
}

TEST(FimPartials, MultipathBlock)
{
    EXPECT_LT(partials_error(model_of(test::small(test::load("multipath"), 64, 24), true)), 1e-6);
}

TEST(FimChannel, FactorizedEqualsDirect)
{
    const Model o = model_of(test::small(test::load("table1"), 64, 24), true);
    const double s2 = noise_variance(o.s.radio);
    const RMat a = fim_channel(o.m, o.eta, s2), b = fim_channel_direct(o.m, o.eta, s2);
    EXPECT_LT((a - b).norm() / b.norm(), 1e-10);
    EXPECT_TRUE(is_psd(a));
}

TEST(FimChannel, PowerScaling)
{
    Model o = model_of(table1_scenario());
    const double s2 = noise_variance(o.s.radio);
    const RMat F = fim_channel(o.m, o.eta, s2);
    o.m.power_w *= 4.0;
    EXPECT_LT((fim_channel(o.m, o.eta, s2) - 4.0 * F).norm() / F.norm(), 1e-12);
}

TEST(FimChannel, SlotFimsSumToFull)
{
    const Model o = model_of(test::small(table1_scenario(), 32, 12));
    const double s2 = noise_variance(o.s.radio);
    const auto S = fim_channel_slots(o.m, o.eta, s2, o.cb.base_length);
    RMat sum = RMat::Zero(o.eta.size(), o.eta.size());
    for (const RMat &x : S)
        sum += x;
    const RMat F = fim_channel(o.m, o.eta, s2);
    EXPECT_LT((sum - F).norm() / F.norm(), 1e-10);
}

TEST(Efim, StructuralCases)
{
    RMat F = RMat::Zero(4, 4);
    F.topLeftCorner(2, 2) << 4, 1, 1, 3;
    F.bottomRightCorner(2, 2) << 2, 0.5, 0.5, 1;
    EXPECT_LT((efim(F, {0, 1}) - F.topLeftCorner(2, 2)).norm(), 1e-14);
    EXPECT_LT((efim(F, {0, 1, 2, 3}) - F).norm(), 1e-14);
    RMat S = F;
    S.bottomRightCorner(2, 2).setZero();
    EXPECT_THROW(efim(S, {0, 1}), DomainError);
    EXPECT_FALSE(checked_inverse(RMat::Zero(3, 3)).has_value());
}

TEST(Efim, MultipathOnlyLosesInformation)
{
    Scenario s = test::load("table1");
    const Codebook cb = build_codebook(s);
    const RVec d = RVec::Ones(s.radio.n_transmissions);
    const FimReport with = positioning_bounds(s, cb, d, Knowns::none, true);
    const FimReport without = positioning_bounds(s, cb, d, Knowns::none, false);
    for (Eigen::Index i = 0; i < with.channel.deb.size(); ++i)
        EXPECT_GE(with.channel.deb[i], without.channel.deb[i] * (1 - 1e-12));
    for (Eigen::Index l = 0; l < with.channel.seb_xi.size(); ++l)
    {
        EXPECT_GE(with.channel.seb_xi[l], without.channel.seb_xi[l] * (1 - 1e-12));
        EXPECT_GE(with.channel.seb_zeta[l], without.channel.seb_zeta[l] * (1 - 1e-12));
    }
    EXPECT_GE(with.peb_r, without.peb_r * (1 - 1e-12));
}

TEST(Bounds, Table1Levels)
{
    const Scenario s = test::load("table1");
    const FimReport r = positioning_bounds(s, build_codebook(s), RVec::Ones(s.radio.n_transmissions));
    ASSERT_FALSE(r.singular) << r.diagnostic;
    EXPECT_GT(r.channel.deb[1], 2e-3);
    EXPECT_LT(r.channel.deb[1], 2e-2);
    EXPECT_GT(r.peb_r, 0.042 / 1.5);
    EXPECT_LT(r.peb_r, 0.042 * 1.5);
    EXPECT_TRUE(is_psd(r.fim_eta));
    EXPECT_TRUE(is_psd(r.fim_state));
}

TEST(Bounds, InversePowerLaw)
{
    Scenario s = table1_scenario();
    const Codebook cb = build_codebook(s);
    const RVec d = RVec::Ones(s.radio.n_transmissions);
    s.radio.power_dbm = 10.0;
    const FimReport ref = positioning_bounds(s, cb, d);
    for (double p : {20.0, 30.0})
    {
        s.radio.power_dbm = p;
        const FimReport r = positioning_bounds(s, cb, d);
        const double k = std::sqrt(dbm_to_watt(p) / dbm_to_watt(10.0));
        EXPECT_NEAR(r.peb_r * k, ref.peb_r, 1e-9 * ref.peb_r);
        EXPECT_NEAR(r.peb_t * k, ref.peb_t, 1e-9 * ref.peb_t);
        EXPECT_NEAR(r.ceb * k, ref.ceb, 1e-9 * ref.ceb);
        for (Eigen::Index i = 0; i < r.channel.deb.size(); ++i)
            EXPECT_NEAR(r.channel.deb[i] * k, ref.channel.deb[i], 1e-9 * ref.channel.deb[i]);
    }
}

TEST(Bounds, DoublingTransmissions)
{
    // One random draw fluctuates by ~1/sqrt(G~) in the RIS terms, so compare
    // the CRB (squared bound) averaged over codebook seeds.
    auto bounds = [](const FimReport &r)
    {
        std::vector<double> v{r.peb_r, r.peb_t, r.ceb};
        for (double x : r.channel.deb)
            v.push_back(x);
        for (Eigen::Index l = 0; l < r.channel.seb_xi.size(); ++l)
            v.insert(v.end(), {r.channel.seb_xi[l], r.channel.seb_zeta[l]});
        return v;
    };
    std::vector<double> a(10, 0.0), b(10, 0.0);
    for (std::uint64_t seed = 1; seed <= 32; ++seed)
    {
        Scenario s = table1_scenario();
        s.seed = seed;
        const auto va = bounds(positioning_bounds(s, build_codebook(s), RVec::Ones(192)));
        s.radio.n_transmissions = 384;
        const auto vb = bounds(positioning_bounds(s, build_codebook(s), RVec::Ones(384)));
        for (std::size_t i = 0; i < va.size(); ++i)
        {
            a[i] += va[i] * va[i];
            b[i] += vb[i] * vb[i];
        }
    }
    for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_NEAR(std::sqrt(a[i] / b[i]), std::sqrt(2.0), 0.05 * std::sqrt(2.0)) << "bound " << i;
}

TEST(Bounds, KnownParametersNeverHurt)
{
    std::mt19937_64 rng(8);
    for (int t = 0; t < 10; ++t)
    {
        const Scenario s = test::small(test::random_table1(rng), 64, 24);
        const Codebook cb = build_codebook(s);
        const RVec d = RVec::Ones(24);
        const FimReport none = positioning_bounds(s, cb, d);
        if (none.singular)
            continue;
        for (Knowns k : {Knowns::b, Knowns::height, Knowns::tx})
            EXPECT_LE(positioning_bounds(s, cb, d, k).peb_r, none.peb_r * (1 + 1e-9));
    }
}

TEST(Bounds, UnresolvableMultipathIsFlaggedNotThrown)
{
    // ten unmodulated scatter paths packed into ~1.1 m of delay: the nuisance block is rank deficient
    const Scenario s = test::load("multipath");
    const Codebook cb = build_codebook(s);
    const RVec d = RVec::Ones(s.radio.n_transmissions);
    FimReport r;
    ASSERT_NO_THROW(r = positioning_bounds(s, cb, d));
    EXPECT_TRUE(r.singular);
    EXPECT_NE(r.diagnostic.find("nuisance"), std::string::npos);
    EXPECT_TRUE(std::isinf(r.peb_r));
    EXPECT_TRUE(r.channel.deb.array().isInf().all());
    // the same geometry without multipath stays finite
    EXPECT_FALSE(positioning_bounds(s, cb, d, Knowns::none, false).singular);
}

TEST(Bounds, ExtraAnchorNeverHurts)
{
    // shared anchors keep identical profiles; the Gamma=4 blocks keep the new path orthogonal
    Scenario s3 = test::small(test::load("table1_blocked"), 64, 36);
    s3.los_blocked = false;
    s3.scatterers.clear();
    const Codebook cb3 = build_codebook(s3);
    ASSERT_EQ(cb3.block_count, 4);
    Scenario s2 = s3;
    s2.anchors.pop_back();
    Codebook cb2 = cb3;
    cb2.profiles.pop_back();
    const RVec d = RVec::Ones(36);
    const FimReport a = positioning_bounds(s2, cb2, d), b = positioning_bounds(s3, cb3, d);
    ASSERT_FALSE(a.singular);
    EXPECT_LE(b.peb_r, a.peb_r * (1 + 1e-9));
    EXPECT_LE(b.peb_t, a.peb_t * (1 + 1e-9));
    EXPECT_LE(b.ceb, a.ceb * (1 + 1e-9));
}

TEST(StateJacobian, MatchesFiniteDifferences)
{
    std::mt19937_64 rng(3);
    for (int t = 0; t < 10; ++t)
    {
        const Scenario s = test::random_table1(rng);
        const auto paths = enumerate_paths(s, {}, &rng);
        const StateGeometry g = state_geometry(s);
        const RVec st = state_vector(g, paths);
        const RMat J = state_jacobian(g, st);
        ASSERT_EQ(J.rows(), st.size());
        for (Eigen::Index i = 0; i < st.size(); ++i)
        {
            const double h = 1e-7 * std::max(1.0, std::abs(st[i]));
            RVec a = st, b = st;
            a[i] += h;
            b[i] -= h;
            const RVec fd = (eta_of_state(g, a) - eta_of_state(g, b)) / (2.0 * h);
            const RVec an = J.row(i).transpose();
            // delays are ~1e-8 s, so compare each block on its own scale
            if (an.norm() > 0.0)
                EXPECT_LT((fd - an).norm() / an.norm(), 1e-6) << "state entry " << i;
        }
        // clock offset and LOS delay rows
        for (Eigen::Index p = 0; p < 3; ++p)
            EXPECT_NEAR(J(6, p == 0 ? 0 : 3 + 5 * (p - 1) + 2), 1.0 / kSpeedOfLight, 1e-24);
        const Vec3 u = (s.tx - s.rx).normalized();
        EXPECT_LT((kSpeedOfLight * J.block<3, 1>(0, 0) - u).norm(), 1e-12);
    }
}
