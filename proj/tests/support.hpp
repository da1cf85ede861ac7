// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------
//
// Shared test fixtures.

#ifndef SIDELINK_TESTS_SUPPORT_HPP
#define SIDELINK_TESTS_SUPPORT_HPP

#include "sidelink/scenario.hpp"
#include <random>
#include <string>

namespace sidelink::test
{
    inline std::string scenario_path(const std::string &name)
    {
        return std::string(SIDELINK_SCENARIO_DIR) + "/" + name + ".json";
    }

    inline Scenario load(const std::string &name) { return load_scenario(scenario_path(name)); }

    // Small problem for property sweeps: K and G shrunk, geometry kept generic
    inline Scenario small(const Scenario &s, int K = 32, int G = 12)
    {
        Scenario c = s;
        c.radio.n_subcarriers = K;
        c.radio.n_transmissions = G;
        c.codebook.block_count = 0;
        return c;
    }

    // Random UE placement in front of both reference anchors, away from the array planes
    inline Scenario random_table1(std::mt19937_64 &rng)
    {
        std::uniform_real_distribution<double> ux(-3.0, 3.0), uy(-4.0, 4.0), uz(-0.5, 1.0);
        Scenario s = table1_scenario();
        do
        {
            s.tx = Vec3(ux(rng), uy(rng), uz(rng));
            s.rx = Vec3(ux(rng), uy(rng), uz(rng));
        } while ((s.tx - s.rx).norm() < 0.5);
        return s;
    }
}

#endif
