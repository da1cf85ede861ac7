// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef SIDELINK_LOCATOR_HPP
#define SIDELINK_LOCATOR_HPP

#include "sidelink/scenario.hpp"
#include <optional>
#include <string>
#include <vector>

namespace sidelink
{
    struct AnchorPose
    {
        Vec3 position;
        Mat3 rotation;
        double sf_period = 2.0; // lambda / element spacing
    };

    std::vector<AnchorPose> anchor_poses(const Scenario &s);

    // Nuisance-free channel parameters with delays as ranges c*tau [m]
    struct EtaN
    {
        bool has_los = true;
        double range0 = 0.0;
        std::vector<double> range, xi, zeta; // per anchor

        int size() const { return (has_los ? 1 : 0) + 3 * static_cast<int>(range.size()); }
        // [r0, (r_l, xi_l, zeta_l)...]
        RVec vector() const;
    };

    EtaN eta_n_truth(const Scenario &s);

    // Local RX direction from a TX candidate and (xi, zeta); empty when the radicand is negative
    std::optional<Vec3> candidate_rx_direction(const AnchorPose &a, const Vec3 &tx_candidate, double xi, double zeta);

    // Weighted sum of pairwise closest points. `w` is L x L with the pair weights in
    // the upper triangle; empty selects 2/(L(L-1)). Parallel pairs are skipped and
    // the remaining weights renormalized.
    std::optional<Vec3> triangulate_rx(const std::vector<Vec3> &positions, const std::vector<Vec3> &directions,
                                       const RMat &w = RMat());

    // Closest point on line i (p_i + r t_i) to line j
    std::optional<Vec3> closest_point(const Vec3 &pi, const Vec3 &ti, const Vec3 &pj, const Vec3 &tj);

    struct SearchSpec
    {
        Vec3 center = Vec3::Zero();
        double half_extent = 1.0;
        double step = 0.2;
        RMat pair_weights;  // empty: equal
        RVec anchor_weights; // empty: ones
    };

    struct PositionFix
    {
        Vec3 tx = Vec3::Zero(), rx = Vec3::Zero();
        double clock_offset_m = 0.0;
        double cost = 0.0;
        bool refined = false;
        bool ok = false;
        int iterations = 0;
        std::string flags;
    };

    // Cost of one TX candidate; fills rx and B when feasible, returns +inf otherwise
    double candidate_cost(const EtaN &eta, const std::vector<AnchorPose> &anchors, const Vec3 &tx_candidate,
                          const SearchSpec &spec, Vec3 *rx_out = nullptr, double *b_out = nullptr);

    PositionFix coarse_locate(const EtaN &eta, const std::vector<AnchorPose> &anchors, const SearchSpec &spec);

    // eta_N(s) for s = (p_T, p_R, B)
    RVec predict_eta_n(const std::vector<AnchorPose> &anchors, bool has_los, const Vec3 &tx, const Vec3 &rx, double B);

    // Weighted NLS on eta_N with weight Sigma^-1 (empty: identity). A solution that
    // moves either UE farther than `divergence_radius_m` from the coarse fix is
    // treated as divergence: the coarse fix comes back flagged.
    PositionFix refine_locate(const PositionFix &coarse, const EtaN &eta, const std::vector<AnchorPose> &anchors,
                              const RMat &sigma = RMat(), double divergence_radius_m = 5.0);

    // J(p_T) over a horizontal slice of TX candidates; rows follow ys, columns xs; +inf for infeasible
    RMat cost_landscape(const EtaN &eta, const std::vector<AnchorPose> &anchors, const std::vector<double> &xs,
                        const std::vector<double> &ys, double z, const SearchSpec &spec = {});

    std::string fix_to_json(const PositionFix &f);
}

#endif
