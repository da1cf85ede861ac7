// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef SIDELINK_CHANNEL_HPP
#define SIDELINK_CHANNEL_HPP

#include "sidelink/scenario.hpp"
#include <random>
#include <string>
#include <vector>

namespace sidelink
{
    struct Codebook; // codebook.hpp

    struct PathDescriptor
    {
        PathKind kind = PathKind::los;
        int ris = 0; // 0: unmodulated (LOS channel); l >= 1: modulated by anchor l
        cd gain{0.0, 0.0};
        double tau = 0.0;
        SpatialFreq sf;
        bool modulated() const { return ris > 0; }
    };

    struct RxBlock
    {
        CMat samples; // K x G
    };

    CVec steering_vector(const Eigen::Matrix3Xd &Z, double wavelength, const AnglePair &angles);
    CVec ris_response(const Eigen::Matrix3Xd &Z, double wavelength, const SpatialFreq &sf);

    // exp(j (2pi/lambda) Z^T [0, xi, zeta]) and its derivatives in xi and zeta
    void ris_response_with_derivatives(const Eigen::Matrix3Xd &Z, double wavelength, const SpatialFreq &sf, CVec &a,
                                       CVec &a_xi, CVec &a_zeta);

    // d_k = exp(-j 2pi k df tau), k = 1..K
    CVec delay_vector(double tau, const RadioConfig &radio);

    // Unit-modulus pilot symbols x_k; "qpsk" draws from `seed`
    CVec pilot_symbols(const RadioConfig &radio, std::uint64_t seed);

    // Geometric paths of the scenario. The LOS path (unless blocked) comes first,
    // then one path per anchor, then multipath from `scatterers`. Gain phases are
    // drawn from rng when given, otherwise zero.
    std::vector<PathDescriptor> enumerate_paths(const Scenario &s, const std::vector<ScatterPoint> &scatterers,
                                                std::mt19937_64 *rng);

    // Noise-free mean signal of an explicit path list
    CMat synthesize_paths(const std::vector<PathDescriptor> &paths, const Scenario &s,
                          const std::vector<CMat> &profiles, const RVec &delta, const CVec &pilots);

    // Full synthesis: random gain phases and noise drawn from rng.
    RxBlock synthesize(const Scenario &s, const Codebook &cb, const RVec &delta, std::mt19937_64 &rng,
                       bool with_noise, std::vector<PathDescriptor> *paths_out = nullptr);

    // Little-endian: int32 K, int32 G, then K*G interleaved float32 (re, im), column-major
    void dump_rx_block(const CMat &Y, const std::string &path);
    CMat read_rx_block(const std::string &path);
}

#endif
