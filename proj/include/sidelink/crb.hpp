// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef SIDELINK_CRB_HPP
#define SIDELINK_CRB_HPP

#include "sidelink/channel.hpp"
#include "sidelink/codebook.hpp"
#include <optional>
#include <string>
#include <vector>

namespace sidelink
{
    // Everything needed to evaluate the mean signal mu(eta).
    //
    // Parameter layout of eta: paths in order, unmodulated paths contribute
    // (tau, alpha, beta), modulated paths (xi, zeta, tau, alpha, beta).
    // With the LOS path first and one RIS path per anchor this is the
    // length 5L+3 vector [tau0, a0, b0, (xi_l, zeta_l, tau_l, a_l, b_l)...];
    // multipath entries follow.
    struct ChannelModel
    {
        RadioConfig radio;
        double power_w = 1.0;
        double wavelength = 0.0;
        CVec pilots;
        RVec delta;
        std::vector<Eigen::Matrix3Xd> Z;
        std::vector<CMat> profiles;
        std::vector<PathKind> kinds;
        std::vector<int> ris; // per path, 0 for unmodulated
        int n_primary = 0;    // LOS (if present) + one per anchor

        int n_params() const;
        int offset(int path) const;
        int params_of(int path) const { return ris[path] > 0 ? 5 : 3; }
    };

    ChannelModel make_channel_model(const Scenario &s, const Codebook &cb, const RVec &delta,
                                    const std::vector<PathDescriptor> &paths);

    // eta <-> path list (tau seconds, alpha = |rho|, beta = -arg rho)
    RVec eta_from_paths(const ChannelModel &m, const std::vector<PathDescriptor> &paths);

    CMat mean_signal(const ChannelModel &m, const RVec &eta);

    // Analytic d mu / d eta_i as full K x G matrices
    std::vector<CMat> mean_partials(const ChannelModel &m, const RVec &eta);

    // I(eta) from the factorized partials (each partial is c * u (x) w)
    RMat fim_channel(const ChannelModel &m, const RVec &eta, double sigma2);

    // I(eta) by brute force from mean_partials; reference for tests
    RMat fim_channel_direct(const ChannelModel &m, const RVec &eta, double sigma2);

    // Per-slot FIMs for block-periodic power: entry g uses delta^2 = indicator of
    // base slot g in every block. The model's delta is ignored (taken as ones).
    std::vector<RMat> fim_channel_slots(const ChannelModel &m, const RVec &eta, double sigma2, int base_length);

    // Symmetric inverse with Jacobi-scaled conditioning check
    std::optional<RMat> checked_inverse(const RMat &F, double threshold = 1e12, double *cond = nullptr);

    // Schur complement keeping `keep`; throws DomainError with the condition number
    // when the discarded block is singular
    RMat efim(const RMat &F, const std::vector<int> &keep);

    struct ChannelBounds
    {
        RVec deb;      // per primary path, meters (c * sqrt CRB(tau))
        RVec seb_xi;   // per anchor
        RVec seb_zeta; // per anchor
        bool singular = false;
        double cond = 0.0;
    };
    ChannelBounds error_bounds(const RMat &fim_eta, bool has_los, int n_ris);

    // Nuisance-free state s = (p_T, p_R, B) plus gains (alpha, beta) per primary path
    struct StateGeometry
    {
        Vec3 tx, rx;
        double clock_offset_m = 0.0;
        std::vector<Vec3> anchor_pos;
        std::vector<Mat3> anchor_rot;
        bool has_los = true;
        double wavelength = 0.0;
    };
    StateGeometry state_geometry(const Scenario &s);

    // Primary eta as a function of the state (gains from s tail)
    RVec eta_of_state(const StateGeometry &g, const RVec &state);
    RVec state_vector(const StateGeometry &g, const std::vector<PathDescriptor> &primary);

    // d eta / d s, denominator layout: rows = state entries, columns = eta entries
    RMat state_jacobian(const StateGeometry &g, const RVec &state);

    enum class Knowns
    {
        none,
        b,
        height,
        tx
    };
    Knowns parse_knowns(const std::string &s);

    struct FimReport
    {
        RMat fim_eta;   // primary block after marginalizing multipath
        RMat fim_state; // full state FIM (before deleting knowns)
        ChannelBounds channel;
        double peb_t = 0.0, peb_r = 0.0, ceb = 0.0;
        double cond_state = 0.0;
        bool singular = false;
        std::string diagnostic;
    };

    // Bounds at the scenario geometry, deterministic gain phases
    FimReport positioning_bounds(const Scenario &s, const Codebook &cb, const RVec &delta, Knowns knowns = Knowns::none,
                                 bool include_multipath = true);

    // Same, from an already assembled state FIM. `snr` scales the FIM after
    // inversion (fim_state is taken at unit SNR when snr != 1).
    FimReport bounds_from_state_fim(const RMat &fim_state, Knowns knowns, double snr = 1.0);

    struct GridSpec
    {
        std::vector<double> xs, ys;
        double z = 0.0;
    };

    // PEB_R with the RX swept over the grid (rows follow ys, columns xs); +inf flags
    RMat peb_heatmap(const Scenario &s, const Codebook &cb, const RVec &delta, const GridSpec &grid, Knowns knowns,
                     int workers = 1);
}

#endif
