// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef SIDELINK_GEOMETRY_HPP
#define SIDELINK_GEOMETRY_HPP

#include "sidelink/types.hpp"
#include <initializer_list>
#include <vector>

namespace sidelink
{
    struct AnglePair
    {
        double azimuth = 0.0;   // (-pi, pi]
        double elevation = 0.0; // [-pi/2, pi/2]
    };

    struct SpatialFreq
    {
        double xi = 0.0;
        double zeta = 0.0;
    };

    struct PathDelay
    {
        double tau = 0.0;   // seconds
        double range = 0.0; // c * tau, meters (includes the clock offset)
    };

    enum class PathKind
    {
        los,
        ris,
        mp_los,
        mp_ris,       // TX-SP-RIS-RX
        mp_ris_mirror // TX-RIS-SP-RX
    };

    // Intrinsic Z-Y-X (yaw, pitch, roll): R = Rz(yaw) * Ry(pitch) * Rx(roll)
    Mat3 euler_to_rotation(const Vec3 &o);

    // R^T (target - anchor) / |target - anchor|; throws DomainError on coincident points
    Vec3 local_direction(const Vec3 &target, const Vec3 &anchor_pos, const Mat3 &anchor_rot);

    AnglePair direction_to_angles(const Vec3 &t);
    Vec3 angles_to_direction(const AnglePair &a);

    SpatialFreq spatial_frequencies(const AnglePair &aoa, const AnglePair &aod);

    // Spatial frequencies straight from the two local unit directions
    inline SpatialFreq spatial_frequencies(const Vec3 &t_a, const Vec3 &t_d)
    {
        return {t_a.y() + t_d.y(), t_a.z() + t_d.z()};
    }

    // Delay along a polyline of waypoints plus clock offset B (meters).
    // Throws DomainError if any segment has zero length.
    PathDelay polyline_delay(std::initializer_list<Vec3> waypoints, double clock_offset_m);

    // Kind-specific wrapper. `anchor` is used by RIS kinds, `sp` by multipath kinds.
    PathDelay path_delay(PathKind kind, const Vec3 &p_tx, const Vec3 &p_rx, double clock_offset_m,
                         const Vec3 &anchor = Vec3::Zero(), const Vec3 &sp = Vec3::Zero());
}

#endif
