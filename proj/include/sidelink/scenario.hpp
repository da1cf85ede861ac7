// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef SIDELINK_SCENARIO_HPP
#define SIDELINK_SCENARIO_HPP

#include "sidelink/geometry.hpp"
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sidelink
{
    struct RisAnchor
    {
        Vec3 position = Vec3::Zero();
        Vec3 orientation = Vec3::Zero(); // yaw, pitch, roll [rad]
        int n_rows = 10;                 // along local z
        int n_cols = 10;                 // along local y
        double element_spacing_m = 0.0;  // <= 0 means lambda/2, resolved on load

        Mat3 rotation() const { return euler_to_rotation(orientation); }
        int size() const { return n_rows * n_cols; }
    };

    // One multipath component source. ris = 0 attaches it to the LOS channel,
    // ris = l >= 1 to the channel of anchor l. `rx_side` selects TX-RIS-SP-RX
    // instead of TX-SP-RIS-RX for RIS paths.
    struct ScatterPoint
    {
        Vec3 position = Vec3::Zero();
        double rcs_m2 = 1.0;
        int ris = 0;
        bool rx_side = false;
    };

    // Generator directive: `count` points uniform in a horizontal disk,
    // each point attached to every channel listed in `affects`.
    struct ClusterSpec
    {
        Vec3 center = Vec3::Zero();
        double radius_m = 1.0;
        int count = 5;
        double rcs_m2 = 0.5;
        std::vector<int> affects;
        bool rx_side = false;
    };

    struct RadioConfig
    {
        double carrier_freq_hz = 30e9;
        double subcarrier_spacing_hz = 781.25e3;
        int n_subcarriers = 512;
        int n_transmissions = 192;
        double power_dbm = 30.0;
        double noise_psd_dbm_hz = -173.855;
        double noise_figure_db = 0.0;
        double clock_offset_m = 5.0;
        std::string pilots = "ones"; // "ones" or "qpsk"

        double wavelength() const { return kSpeedOfLight / carrier_freq_hz; }
        double power_w() const { return dbm_to_watt(power_dbm); }
    };

    struct CodebookConfig
    {
        std::string kind = "random"; // random | dir | dir_der
        double prior_sigma_m = 0.1;
        int block_count = 0; // 0 selects the smallest divisor of G >= L+1
        double gamma_p = 1.0;
        int prior_samples = 21;
    };

    struct Scenario
    {
        std::string name;
        std::uint64_t seed = 1;
        Vec3 tx = Vec3::Zero();
        Vec3 rx = Vec3::Zero();
        bool los_blocked = false;
        RadioConfig radio;
        std::vector<RisAnchor> anchors;
        std::vector<ScatterPoint> scatterers;
        std::vector<ClusterSpec> clusters;
        CodebookConfig codebook;

        int n_ris() const { return static_cast<int>(anchors.size()); }
        double spacing(int l) const; // resolved element spacing of anchor l (0-based)
    };

    // Local Y-Z element grid, centered, row-major (rows along z, columns along y)
    Eigen::Matrix3Xd element_positions(const RisAnchor &anchor, double wavelength);

    double path_gain_magnitude(PathKind kind, double wavelength, double d1, double d2, double d3 = 0.0,
                               double rcs_m2 = 0.0);

    // rho = |rho| exp(-j beta), beta ~ U[0, 2pi) from rng; beta = 0 when rng is null
    cd path_gain(PathKind kind, double wavelength, double d1, double d2, double d3, double rcs_m2,
                 std::mt19937_64 *rng);

    double noise_variance(const RadioConfig &radio);

    // Throws ConfigError naming the failing field
    void validate(const Scenario &s);

    // Explicit scatterers plus the expansion of every cluster directive.
    // Expansion draws from the scenario seed only, so it is identical in every trial.
    std::vector<ScatterPoint> all_scatterers(const Scenario &s);

    Scenario load_scenario(const std::string &path);
    Scenario parse_scenario(const std::string &text, const std::string &origin = "<string>");
    void save_scenario(const Scenario &s, const std::string &path);
    std::string dump_scenario(const Scenario &s);

    // Reference defaults (2 anchors facing each other, 30 GHz, K=512, G=192)
    Scenario table1_scenario();
}

#endif
