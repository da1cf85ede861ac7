// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#include "support.hpp"
#include <gtest/gtest.h>
#include <cstdio>
#include <json.hpp>

using namespace sidelink;

TEST(ElementPositions, SmallArrays)
{
    RisAnchor a;
    a.n_rows = a.n_cols = 1;
    a.element_spacing_m = 0.005;
    EXPECT_EQ(element_positions(a, 0.01).norm(), 0.0);
    a.n_cols = 2;
    const auto Z = element_positions(a, 0.01);
    ASSERT_EQ(Z.cols(), 2);
    EXPECT_NEAR(Z(1, 0), -0.0025, 1e-15);
    EXPECT_NEAR(Z(1, 1), 0.0025, 1e-15);
    EXPECT_EQ(Z.row(0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ElementPositions, TenByTenAtHalfWavelength)
{
    const double lam = kSpeedOfLight / 30e9;
    RisAnchor a; // spacing <= 0 resolves to lambda / 2
    const auto Z = element_positions(a, lam);
    ASSERT_EQ(Z.cols(), 100);
    EXPECT_NEAR(lam, 9.993e-3, 1e-6);
    EXPECT_NEAR(Z.row(1).maxCoeff() - Z.row(1).minCoeff(), 9 * lam / 2, 1e-15);
    EXPECT_NEAR(Z.row(2).maxCoeff() - Z.row(2).minCoeff(), 0.045, 5e-5);
    EXPECT_EQ(Z.row(0).cwiseAbs().maxCoeff(), 0.0);
    for (int i = 1; i < 3; ++i)
        EXPECT_NEAR(Z.row(i).mean(), 0.0, 1e-16);
}

TEST(PathGain, TableOneMagnitudes)
{
    const double lam = kSpeedOfLight / 30e9;
    EXPECT_NEAR(path_gain_magnitude(PathKind::los, lam, std::sqrt(65.0), 0.0), 9.8635e-5, 1e-9);
    EXPECT_NEAR(path_gain_magnitude(PathKind::ris, lam, std::sqrt(24.0), 7.0), 1.8441e-8, 1e-12);
    EXPECT_NEAR(path_gain_magnitude(PathKind::mp_los, lam, 3.0, 4.0, 0.0, 0.5), 1.32187e-5, 1e-10);
    // amplitude grows as sqrt(RCS)
    EXPECT_NEAR(path_gain_magnitude(PathKind::mp_los, lam, 3.0, 4.0, 0.0, 2.0),
                2.0 * path_gain_magnitude(PathKind::mp_los, lam, 3.0, 4.0, 0.0, 0.5), 1e-18);
    EXPECT_NEAR(path_gain_magnitude(PathKind::mp_ris, lam, 2.0, 3.0, 4.0, 0.5),
                std::sqrt(4 * kPi * 0.5) * lam * lam / (64 * kPi * kPi * kPi * 24.0), 1e-20);
}

TEST(PathGain, RandomPhaseKeepsMagnitude)
{
    std::mt19937_64 rng(1);
    const double lam = 0.01;
    for (int i = 0; i < 100; ++i)
    {
        const cd g = path_gain(PathKind::los, lam, 5.0, 0.0, 0.0, 0.0, &rng);
        EXPECT_NEAR(std::abs(g), path_gain_magnitude(PathKind::los, lam, 5.0, 0.0), 1e-18);
    }
    EXPECT_EQ(path_gain(PathKind::los, lam, 5.0, 0.0, 0.0, 0.0, nullptr).imag(), 0.0);
}

TEST(PathGain, RisWeakerThanLosBeyondThreshold)
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.5, 20.0);
    const double lam = 0.01;
    for (int i = 0; i < 1000; ++i)
    {
        const double d0 = u(rng), dt = u(rng), dr = u(rng);
        if (dt * dr > lam * d0 / (4 * kPi))
            EXPECT_LT(path_gain_magnitude(PathKind::ris, lam, dt, dr), path_gain_magnitude(PathKind::los, lam, d0, 0));
    }
}

TEST(NoiseVariance, TableOneLiteral)
{
    RadioConfig r;
    r.subcarrier_spacing_hz = 120e3;
    r.noise_figure_db = 10.0;
    EXPECT_NEAR(watt_to_dbm(noise_variance(r)), -85.97, 0.01);
    r.noise_figure_db = 0.0;
    r.n_subcarriers = 1;
    r.subcarrier_spacing_hz = 1.0;
    EXPECT_NEAR(noise_variance(r), dbm_to_watt(r.noise_psd_dbm_hz), 1e-30);
    const double one = noise_variance(r);
    r.n_subcarriers = 2;
    EXPECT_NEAR(watt_to_dbm(noise_variance(r)) - watt_to_dbm(one), 3.0103, 1e-4);
}

TEST(ScenarioFile, TableOneDefaults)
{
    const Scenario s = test::load("table1");
    ASSERT_EQ(s.n_ris(), 2);
    EXPECT_TRUE(s.anchors[0].position.isApprox(Vec3(-4, 0, 2)));
    EXPECT_TRUE(s.anchors[1].position.isApprox(Vec3(4, 0, 2)));
    EXPECT_EQ(s.radio.n_subcarriers, 512);
    EXPECT_EQ(s.radio.n_transmissions, 192);
}

TEST(ScenarioFile, RoundTripIsExact)
{
    for (const char *name : {"table1", "multipath", "fig11_4ris", "table1_blocked"})
    {
        const Scenario s = test::load(name);
        const std::string path = testing::TempDir() + "/rt_" + name + ".json";
        save_scenario(s, path);
        const Scenario t = load_scenario(path);
        EXPECT_EQ(dump_scenario(s), dump_scenario(t)) << name;
        EXPECT_EQ(s.tx, t.tx);
        EXPECT_EQ(s.radio.subcarrier_spacing_hz, t.radio.subcarrier_spacing_hz);
        EXPECT_EQ(s.anchors.back().orientation, t.anchors.back().orientation);
        std::remove(path.c_str());
    }
}

TEST(ScenarioFile, OneAnchorRejected)
{
    try
    {
        load_scenario(std::string(SIDELINK_SCENARIO_DIR) + "/../tests/data/one_anchor.json");
        FAIL() << "expected a validation error";
    }
    catch (const ConfigError &e)
    {
        EXPECT_NE(std::string(e.what()).find("L >= 2"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("anchors"), std::string::npos) << e.what();
    }
}

TEST(ScenarioFile, BlockedNeedsThreeAnchors)
{
    Scenario s = table1_scenario();
    s.los_blocked = true;
    EXPECT_THROW(validate(s), ConfigError);
    s.anchors.push_back(s.anchors[0]);
    s.anchors.back().position = Vec3(0, 4, 2);
    EXPECT_NO_THROW(validate(s));
}

TEST(ScenarioFile, DiagnosticsNameTheField)
{
    auto j = nlohmann::json::parse(dump_scenario(table1_scenario()));
    j["radio"]["n_subcarriers"] = -4;
    try
    {
        parse_scenario(j.dump());
        FAIL();
    }
    catch (const ConfigError &e)
    {
        EXPECT_NE(std::string(e.what()).find("radio.n_subcarriers"), std::string::npos) << e.what();
    }
    j = nlohmann::json::parse(dump_scenario(table1_scenario()));
    j["anchors"][1].erase("position_m");
    try
    {
        parse_scenario(j.dump());
        FAIL();
    }
    catch (const ConfigError &e)
    {
        EXPECT_NE(std::string(e.what()).find("anchors[1].position_m"), std::string::npos) << e.what();
    }
}

TEST(ScenarioFile, SyntaxErrorsReportLine)
{
    try
    {
        parse_scenario("{\n  \"name\": \"x\",\n  \"seed\": ,\n}");
        FAIL();
    }
    catch (const ConfigError &e)
    {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(ScenarioFile, CoincidentUesRejected)
{
    Scenario s = table1_scenario();
    s.rx = s.tx;
    EXPECT_THROW(validate(s), ConfigError);
}

TEST(Clusters, DeterministicDiskDraws)
{
    const Scenario s = test::load("multipath");
    const auto a = all_scatterers(s), b = all_scatterers(s);
    ASSERT_EQ(a.size(), 30u); // 2 clusters x 5 points x 3 channels
    for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_EQ(a[i].position, b[i].position);
    for (const auto &p : a)
    {
        const Vec3 c = p.rx_side ? Vec3(0, 2, 3) : Vec3(0, -3, 3);
        EXPECT_LE((p.position - c).norm(), 1.0 + 1e-12);
        EXPECT_EQ(p.position.z(), 3.0);
    }
    Scenario t = s;
    t.seed = s.seed + 1;
    EXPECT_NE(all_scatterers(t)[0].position, a[0].position);
}
