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
#include <cmath>

namespace sidelink
{
    Mat3 euler_to_rotation(const Vec3 &o)
    {
        const double ca = std::cos(o[0]), sa = std::sin(o[0]);
        const double cb = std::cos(o[1]), sb = std::sin(o[1]);
        const double cg = std::cos(o[2]), sg = std::sin(o[2]);
        Mat3 rz, ry, rx;
        rz << ca, -sa, 0.0, sa, ca, 0.0, 0.0, 0.0, 1.0;
        ry << cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb;
        rx << 1.0, 0.0, 0.0, 0.0, cg, -sg, 0.0, sg, cg;
        return rz * ry * rx;
    }

    Vec3 local_direction(const Vec3 &target, const Vec3 &anchor_pos, const Mat3 &anchor_rot)
    {
        const Vec3 v = target - anchor_pos;
        const double n = v.norm();
        if (!(n > 0.0))
            throw DomainError("local_direction: target coincides with anchor");
        return anchor_rot.transpose() * (v / n);
    }

    AnglePair direction_to_angles(const Vec3 &t)
    {
        AnglePair a;
        // atan2(0,0) is 0 on every conforming libm, which is the pole convention we want
        a.azimuth = std::atan2(t.y(), t.x());
        if (a.azimuth == -kPi)
            a.azimuth = kPi;
        a.elevation = std::asin(std::clamp(t.z(), -1.0, 1.0));
        return a;
    }

    Vec3 angles_to_direction(const AnglePair &a)
    {
        const double ce = std::cos(a.elevation);
        return {std::cos(a.azimuth) * ce, std::sin(a.azimuth) * ce, std::sin(a.elevation)};
    }

    SpatialFreq spatial_frequencies(const AnglePair &aoa, const AnglePair &aod)
    {
        return spatial_frequencies(angles_to_direction(aoa), angles_to_direction(aod));
    }

    PathDelay polyline_delay(std::initializer_list<Vec3> waypoints, double clock_offset_m)
    {
        double len = 0.0;
        const Vec3 *prev = nullptr;
        for (const Vec3 &p : waypoints)
        {
            if (prev)
            {
                const double d = (p - *prev).norm();
                if (!(d > 0.0))
                    throw DomainError("path_delay: zero-length segment");
                len += d;
            }
            prev = &p;
        }
        const double range = len + clock_offset_m;
        return {range / kSpeedOfLight, range};
    }

    PathDelay path_delay(PathKind kind, const Vec3 &p_tx, const Vec3 &p_rx, double clock_offset_m,
                         const Vec3 &anchor, const Vec3 &sp)
    {
        switch (kind)
        {
        case PathKind::los:
            return polyline_delay({p_tx, p_rx}, clock_offset_m);
        case PathKind::ris:
            return polyline_delay({p_tx, anchor, p_rx}, clock_offset_m);
        case PathKind::mp_los:
            return polyline_delay({p_tx, sp, p_rx}, clock_offset_m);
        case PathKind::mp_ris:
            return polyline_delay({p_tx, sp, anchor, p_rx}, clock_offset_m);
        case PathKind::mp_ris_mirror:
            return polyline_delay({p_tx, anchor, sp, p_rx}, clock_offset_m);
        }
        throw ConfigError("path_delay: unknown path kind");
    }
}
