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
// Experiment recipes shared by the command-line driver and the acceptance
// harness. Every recipe is deterministic for a fixed seed and worker count;
// per-trial seeds are derived from (seed, trial index) only.

#ifndef SIDELINK_EXPERIMENTS_HPP
#define SIDELINK_EXPERIMENTS_HPP

#include "sidelink/crb.hpp"
#include "sidelink/estimator.hpp"
#include "sidelink/locator.hpp"
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sidelink
{
    std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t index);

    // Codebook and power vector described by the scenario's codebook block
    struct Prepared
    {
        Codebook cb;
        RVec delta;
    };
    Prepared prepare(const Scenario &s);

    struct TrialOptions
    {
        bool with_noise = true;
        bool prior_windows = false; // restrict the 2D search to the +-3 sigma prior box
        double half_extent = 1.0;   // TX search cube around the scenario TX
        double step = 0.2;
        RMat sigma;                 // refine_locate weighting, empty = identity
        int nfft = 1024;
        double sf_step = 0.02;
    };

    struct TrialRecord
    {
        std::uint64_t seed = 0;
        bool ok = false;
        std::string flags;
        EtaN truth, eta_coarse, eta_refined;
        PositionFix coarse, refined;
        Vec3 tx = Vec3::Zero(), rx = Vec3::Zero();
        double clock_offset_m = 0.0;
    };

    EtaN eta_from_estimate(const std::vector<PathEstimate> &paths, bool has_los);

    // synthesize -> channel estimation -> positioning for one realization. The scenario
    // seed is replaced by `seed` so cluster draws and gain phases vary per trial.
    TrialRecord run_trial(const Scenario &s, const Prepared &p, std::uint64_t seed, const TrialOptions &opt = {});

    struct SweepSpec
    {
        std::vector<double> powers_dbm{30.0};
        int trials = 200;
        std::uint64_t seed = 1;
        int workers = 1;
        TrialOptions trial;
    };
    void validate(const SweepSpec &spec);

    struct SweepRow
    {
        double power_dbm = 0.0;
        int trials = 0, successes = 0;
        double rmse_tx[2]{}, rmse_rx[2]{}, rmse_b[2]{}; // [coarse, refined]
        std::vector<double> rmse_range[2], rmse_xi[2], rmse_zeta[2]; // per primary path / anchor
        double peb_t = 0.0, peb_r = 0.0, ceb = 0.0;
        RVec deb, seb_xi, seb_zeta;
        double p90_rx = 0.0;       // refined RX error, successful trials
        double frac_rx_0p1 = 0.0;  // fraction of all trials with refined RX error < 0.1 m
        std::vector<TrialRecord> records;
    };

    std::vector<SweepRow> mc_sweep(const Scenario &s, const SweepSpec &spec);
    void write_sweep_csv(std::ostream &os, const Scenario &s, const SweepSpec &spec, const std::vector<SweepRow> &rows);
    void write_trials_csv(std::ostream &os, const std::vector<SweepRow> &rows);

    struct MapResult
    {
        GridSpec grid;
        RMat peb; // rows follow ys
        Knowns knowns = Knowns::none;
    };
    GridSpec square_grid(double lo, double hi, double step, double z, double offset = 0.0);
    MapResult crb_map(const Scenario &s, const GridSpec &grid, Knowns knowns, int workers = 1);
    void write_map_csv(std::ostream &os, const Scenario &s, const MapResult &m, const std::string &value_name = "peb_m");
    std::string map_to_json(const Scenario &s, const MapResult &m, const std::string &value_name = "peb_m");

    // UE grid positions of the multi-anchor study: x, y in {-3..3} step `step`, z in {0, 0.5}
    std::vector<Vec3> cdf_positions(int subsample = 1);

    struct CdfLayout
    {
        std::string name;
        Scenario scenario;
    };
    std::vector<CdfLayout> cdf_layouts(const Scenario &base);

    struct CdfResult
    {
        std::vector<std::string> layouts;
        std::vector<std::vector<double>> peb_r; // [layout][pair]
        std::size_t pairs = 0;

        double cdf(std::size_t layout, double eps) const;
    };
    CdfResult cdf_study(const std::vector<CdfLayout> &layouts, int subsample = 1, Knowns knowns = Knowns::none,
                        int workers = 1);
    void write_cdf_csv(std::ostream &os, const CdfResult &r, const std::vector<double> &eps);

    struct CodebookEvalSpec
    {
        std::vector<double> sigmas{0.01, 0.0215, 0.0464, 0.1, 0.215, 0.464, 1.0, 2.15, 4.64, 10.0};
        double power_dbm = 20.0;
        std::uint64_t seed = 1;
        int workers = 1;
        bool with_pg = true; // also run projected-gradient allocation
    };
    struct CodebookEvalRow
    {
        double sigma = 0.0;
        double peb_random = 0.0, peb_dir = 0.0, peb_dir_der_unit = 0.0, peb_dir_der_opt = 0.0, peb_dir_der_pg = 0.0;
        double gamma_opt = 0.0;
    };
    std::vector<CodebookEvalRow> codebook_eval(const Scenario &s, const CodebookEvalSpec &spec);
    void write_codebook_csv(std::ostream &os, const Scenario &s, const std::vector<CodebookEvalRow> &rows);

    // J(p_T) with exact eta_N over a horizontal slice through the TX height
    MapResult cost_map(const Scenario &s, const GridSpec &grid);

    std::string header_block(const Scenario &s, const std::string &extra_json);
}

#endif
