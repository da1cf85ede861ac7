// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef SIDELINK_ESTIMATOR_HPP
#define SIDELINK_ESTIMATOR_HPP

#include "sidelink/codebook.hpp"
#include <optional>
#include <string>
#include <vector>

namespace sidelink
{
    // Per-path K x G~ matrices; index 0 is the unmodulated (LOS) path, l the l-th anchor
    std::vector<CMat> separate_paths(const CMat &Y, const CMat &block, int base_length);

    // Delay grid tau_n = n / (nfft df), n = 0..nfft-1. `modulated` selects the
    // per-transmission energy form used for RIS paths.
    double coarse_delay(const CMat &path, const CVec &pilots, const RadioConfig &radio, int nfft, bool modulated);

    struct SfWindow
    {
        double xi_lo, xi_hi, zeta_lo, zeta_hi;
    };

    struct SfEstimate
    {
        SpatialFreq sf;
        double peak = 0.0;
        bool alias_possible = false;
    };

    // Grid maximization over [-1, 1)^2 (or the window) of the matched-filter magnitude
    SfEstimate coarse_spatial_freq(const CMat &path, const CMat &base_profiles, const RisAnchor &anchor,
                                   double wavelength, const CVec &pilots, const RadioConfig &radio, double tau,
                                   double step = 0.02, const std::optional<SfWindow> &window = std::nullopt,
                                   const RVec &delta = RVec(), bool normalized = true);

    // Fixed inputs of the single-path model  y~_{k,g} = rho x_k d_k(tau) sqrt(P) delta_g A_g(xi, zeta)
    struct PathContext
    {
        RadioConfig radio;
        double power_w = 1.0;
        CVec pilots;
        RVec delta;             // length G~ (block 1 of the power vector)
        const CMat *profiles = nullptr; // N x G~ base profiles; null for the LOS path
        Eigen::Matrix3Xd Z;
        double wavelength = 0.0;
    };

    struct PathEstimate
    {
        double tau = 0.0;
        SpatialFreq sf;
        cd gain{0.0, 0.0};
        double residual = 0.0; // ||y - rho mu||^2
        int iterations = 0;
        bool converged = true;
    };

    // Concentrated model column mu(theta) (K x G~) for a path
    CMat path_model(const PathContext &ctx, double tau, const SpatialFreq &sf);

    // Closed-form gain and residual at fixed (tau, xi, zeta)
    PathEstimate concentrated_fit(const CMat &path, const PathContext &ctx, double tau, const SpatialFreq &sf);

    // Levenberg-Marquardt on (c tau, xi, zeta, Re rho, Im rho); stops on step < 1e-10 or 100 iterations
    PathEstimate refine_channel_mle(const CMat &path, const PathContext &ctx, const PathEstimate &init);

    struct EstimatorOptions
    {
        int nfft = 1024;
        double sf_step = 0.02;
        std::vector<std::optional<SfWindow>> windows; // per anchor, optional
        bool refine = true;
        bool sf_normalized = true; // false: unnormalized correlation as literally written
    };

    struct ChannelEstimate
    {
        bool has_los = true;
        std::vector<PathEstimate> coarse;  // primary paths: LOS (if present) then anchors
        std::vector<PathEstimate> refined;
        std::vector<bool> alias_flags;     // per anchor
    };

    ChannelEstimate estimate_channel(const CMat &Y, const Scenario &s, const Codebook &cb, const RVec &delta,
                                   const EstimatorOptions &opt = {});

    // Prior window: +-k sigma box around the prior mean mapped through the spatial frequencies
    SfWindow prior_window(const Scenario &s, int anchor, const Vec3 &tx_mean, const Vec3 &rx_mean, double sigma,
                          double k = 3.0);

    std::string estimate_to_json(const ChannelEstimate &e);
}

#endif
