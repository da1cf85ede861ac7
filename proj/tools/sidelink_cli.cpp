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
// Command-line experiment driver.

#include "sidelink/experiments.hpp"
#include <CLI11.hpp>
#include <json.hpp>
#include <fstream>
#include <iostream>
#include <optional>

using namespace sidelink;

namespace
{
    struct Common
    {
        std::string scenario;
        std::optional<std::uint64_t> seed;
        int trials = 200;
        std::string out;
        int workers = 1;
        std::string knowns = "none";
        bool fast = false;
    };

    void add_common(CLI::App *c, Common &o, bool scenario_required = true)
    {
        auto *opt = c->add_option("--scenario", o.scenario, "scenario JSON file");
        if (scenario_required)
            opt->required();
        c->add_option("--seed", o.seed, "64-bit seed (overrides the scenario seed)");
        c->add_option("--trials", o.trials, "Monte-Carlo trials")->check(CLI::PositiveNumber);
        c->add_option("--out", o.out, "output file (stdout when omitted)");
        c->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
        c->add_option("--knowns", o.knowns, "known parameters for bounds")
            ->check(CLI::IsMember({"none", "b", "height", "tx"}));
        c->add_flag("--fast", o.fast, "CI profile: K=128, G=48, trials=50, subsampled grids");
    }

    Scenario load(const Common &o)
    {
        Scenario s = load_scenario(o.scenario);
        if (o.seed)
            s.seed = *o.seed;
        if (o.fast)
        {
            s.radio.n_subcarriers = 128;
            s.radio.n_transmissions = 48;
            s.codebook.block_count = 0;
        }
        validate(s);
        return s;
    }

    template <typename F>
    void emit(const std::string &path, F &&writer)
    {
        if (path.empty())
        {
            writer(std::cout);
            return;
        }
        std::ofstream f(path);
        if (!f)
            throw ConfigError("cannot open output file '" + path + "'");
        writer(f);
    }

    std::vector<double> parse_list(const std::string &s)
    {
        std::vector<double> v;
        std::string item;
        std::istringstream in(s);
        while (std::getline(in, item, ','))
        {
            std::size_t used = 0;
            double x;
            try
            {
                x = std::stod(item, &used);
            }
            catch (const std::exception &)
            {
                throw ConfigError("cannot parse number '" + item + "'");
            }
            if (used != item.size())
                throw ConfigError("cannot parse number '" + item + "'");
            v.push_back(x);
        }
        return v;
    }

    GridSpec grid_from(const std::vector<double> &g, double z, double offset)
    {
        if (g.size() != 3)
            throw ConfigError("--grid expects lo,hi,step");
        return square_grid(g[0], g[1], g[2], z, offset);
    }

    std::string with_suffix(const std::string &path, const std::string &suffix)
    {
        const auto dot = path.rfind('.');
        const auto slash = path.rfind('/');
        if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
            return path + suffix;
        return path.substr(0, dot) + suffix;
    }
}

int main(int argc, char **argv)
{
    CLI::App app{"sidelink: multi-RIS 3D sidelink positioning toolkit"};
    app.require_subcommand(1);

    Common c_val, c_loc, c_mc, c_map, c_cdf, c_cb, c_cost;

    auto *val = app.add_subcommand("validate", "load and validate a scenario file");
    add_common(val, c_val);

    auto *loc = app.add_subcommand("localize", "estimate the channel, locate both UEs once and print the fix");
    add_common(loc, c_loc);
    std::string estimate_file, rx_block_file;
    bool noiseless = false;
    loc->add_option("--estimate", estimate_file, "channel-estimate JSON to localize from (skips synthesis)");
    loc->add_option("--rx-block", rx_block_file, "write the synthesized received block to this binary file");
    loc->add_flag("--noiseless", noiseless, "disable receiver noise");

    auto *mc = app.add_subcommand("mc-sweep", "Monte-Carlo RMSE vs bounds over transmit power");
    add_common(mc, c_mc);
    std::string powers = "0,5,10,15,20,25,30,35,40";
    std::string trials_out;
    mc->add_option("--powers", powers, "comma-separated transmit powers in dBm (ascending)");
    mc->add_option("--trials-out", trials_out, "per-trial CSV with errors and flags");

    auto *map = app.add_subcommand("crb-map", "PEB_R heatmap with the RX swept over a grid");
    add_common(map, c_map);
    std::string grid = "-4,4,0.2";
    double z = 0.0, offset = 0.1;
    map->add_option("--grid", grid, "lo,hi,step for both x and y [m]");
    map->add_option("--z", z, "RX height [m]");
    map->add_option("--offset", offset, "grid offset [m]");

    auto *cdf = app.add_subcommand("cdf-study", "PEB_R CDF over all TX-RX grid pairs for the 4/3/2-anchor layouts");
    add_common(cdf, c_cdf);
    std::string eps = "0.01,0.02,0.05,0.1,0.2,0.3,0.5,1,2,5,10";
    cdf->add_option("--eps", eps, "error thresholds [m]");

    auto *cb = app.add_subcommand("codebook-eval", "PEB_R per codebook kind over prior error levels");
    add_common(cb, c_cb);
    double cb_power = 20.0;
    std::string sigmas;
    cb->add_option("--power", cb_power, "transmit power [dBm]");
    cb->add_option("--sigmas", sigmas, "comma-separated prior standard deviations [m]");

    auto *cost = app.add_subcommand("cost-map", "coarse-positioning cost over TX candidates (exact channel parameters)");
    add_common(cost, c_cost);
    std::string cgrid = "-4,4,0.1";
    cost->add_option("--grid", cgrid, "lo,hi,step for both x and y [m]");

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (*val)
        {
            const Scenario s = load(c_val);
            std::cout << "ok: '" << s.name << "' with " << s.n_ris() << " anchors, "
                      << all_scatterers(s).size() << " scatter points, LOS " << (s.los_blocked ? "blocked" : "present")
                      << '\n';
        }
        else if (*loc)
        {
            const Scenario s = load(c_loc);
            const auto anchors = anchor_poses(s);
            nlohmann::json j;
            EtaN eta;
            if (!estimate_file.empty())
            {
                std::ifstream f(estimate_file);
                if (!f)
                    throw ConfigError("cannot open estimate file '" + estimate_file + "'");
                const auto e = nlohmann::json::parse(f);
                std::vector<PathEstimate> paths;
                for (const auto &p : e.at("paths"))
                {
                    PathEstimate pe;
                    pe.tau = p.at("refined").at("tau_s").get<double>();
                    pe.sf = {p.at("refined").at("xi").get<double>(), p.at("refined").at("zeta").get<double>()};
                    paths.push_back(pe);
                }
                eta = eta_from_estimate(paths, e.at("has_los").get<bool>());
            }
            else
            {
                const Prepared p = prepare(s);
                std::mt19937_64 rng(s.seed);
                const RxBlock y = synthesize(s, p.cb, p.delta, rng, !noiseless);
                if (!rx_block_file.empty())
                    dump_rx_block(y.samples, rx_block_file);
                const ChannelEstimate est = estimate_channel(y.samples, s, p.cb, p.delta);
                j["channel_estimate"] = nlohmann::json::parse(estimate_to_json(est));
                eta = eta_from_estimate(est.refined, est.has_los);
            }
            SearchSpec spec;
            spec.center = s.tx;
            const PositionFix coarse = coarse_locate(eta, anchors, spec);
            const PositionFix refined = refine_locate(coarse, eta, anchors);
            j["coarse"] = nlohmann::json::parse(fix_to_json(coarse));
            j["refined"] = nlohmann::json::parse(fix_to_json(refined));
            j["truth"] = {{"tx_m", {s.tx[0], s.tx[1], s.tx[2]}},
                          {"rx_m", {s.rx[0], s.rx[1], s.rx[2]}},
                          {"clock_offset_m", s.radio.clock_offset_m}};
            emit(c_loc.out, [&](std::ostream &os) { os << j.dump(2) << '\n'; });
        }
        else if (*mc)
        {
            const Scenario s = load(c_mc);
            SweepSpec spec;
            spec.powers_dbm = parse_list(powers);
            spec.trials = c_mc.fast && mc->count("--trials") == 0 ? 50 : c_mc.trials;
            spec.seed = c_mc.seed.value_or(s.seed);
            spec.workers = c_mc.workers;
            const auto rows = mc_sweep(s, spec);
            emit(c_mc.out, [&](std::ostream &os) { write_sweep_csv(os, s, spec, rows); });
            if (!trials_out.empty())
                emit(trials_out, [&](std::ostream &os) { write_trials_csv(os, rows); });
        }
        else if (*map)
        {
            const Scenario s = load(c_map);
            GridSpec g = grid_from(parse_list(grid), z, offset);
            if (c_map.fast)
            {
                // every other row and column: 4x fewer cells
                GridSpec h = g;
                h.xs.clear();
                h.ys.clear();
                for (std::size_t i = 0; i < g.xs.size(); i += 2)
                    h.xs.push_back(g.xs[i]);
                for (std::size_t i = 0; i < g.ys.size(); i += 2)
                    h.ys.push_back(g.ys[i]);
                g = h;
            }
            const MapResult m = crb_map(s, g, parse_knowns(c_map.knowns), c_map.workers);
            emit(c_map.out, [&](std::ostream &os) { write_map_csv(os, s, m); });
            if (!c_map.out.empty())
                emit(with_suffix(c_map.out, ".json"), [&](std::ostream &os) { os << map_to_json(s, m) << '\n'; });
        }
        else if (*cdf)
        {
            const Scenario s = load(c_cdf);
            const auto r = cdf_study(cdf_layouts(s), c_cdf.fast ? 4 : 1, parse_knowns(c_cdf.knowns), c_cdf.workers);
            emit(c_cdf.out, [&](std::ostream &os)
                 {
                os << header_block(s, R"({"kind": "cdf_study"})");
                write_cdf_csv(os, r, parse_list(eps)); });
        }
        else if (*cb)
        {
            const Scenario s = load(c_cb);
            CodebookEvalSpec spec;
            spec.power_dbm = cb_power;
            spec.seed = c_cb.seed.value_or(s.seed);
            spec.workers = c_cb.workers;
            if (!sigmas.empty())
                spec.sigmas = parse_list(sigmas);
            const auto rows = codebook_eval(s, spec);
            emit(c_cb.out, [&](std::ostream &os) { write_codebook_csv(os, s, rows); });
        }
        else if (*cost)
        {
            const Scenario s = load(c_cost);
            const MapResult m = cost_map(s, grid_from(parse_list(cgrid), s.tx.z(), 0.0));
            emit(c_cost.out, [&](std::ostream &os) { write_map_csv(os, s, m, "cost"); });
            if (!c_cost.out.empty())
                emit(with_suffix(c_cost.out, ".json"),
                     [&](std::ostream &os) { os << map_to_json(s, m, "cost") << '\n'; });
        }
    }
    catch (const ConfigError &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
