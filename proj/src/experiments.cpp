// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#include "sidelink/experiments.hpp"
#include "sidelink/parallel.hpp"
#include <json.hpp>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace sidelink
{
    namespace
    {
        constexpr double kInf = std::numeric_limits<double>::infinity();

        double rms(const std::vector<double> &v)
        {
            if (v.empty())
                return std::numeric_limits<double>::quiet_NaN();
            double s = 0.0;
            for (double x : v)
                s += x * x;
            return std::sqrt(s / static_cast<double>(v.size()));
        }

        double wrapped(double v, double period)
        {
            return v - period * std::round(v / period);
        }

        void add_flag(std::string &flags, const std::string &f)
        {
            if (f.empty())
                return;
            if (!flags.empty())
                flags += ';';
            flags += f;
        }

        std::string fmt(double v)
        {
            std::ostringstream o;
            o << std::setprecision(10) << v;
            return o.str();
        }
    }

    std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t index)
    {
        return seed ^ index;
    }

    Prepared prepare(const Scenario &s)
    {
        Prepared p;
        p.cb = build_codebook(s);
        if (p.cb.kind == CodebookKind::dir_der)
            p.delta = power_vector_from_gamma(s.codebook.gamma_p, p.cb);
        else
            p.delta = RVec::Ones(s.radio.n_transmissions);
        return p;
    }

    EtaN eta_from_estimate(const std::vector<PathEstimate> &paths, bool has_los)
    {
        EtaN e;
        e.has_los = has_los;
        std::size_t i = 0;
        if (has_los)
            e.range0 = paths.at(i++).tau * kSpeedOfLight;
        for (; i < paths.size(); ++i)
        {
            e.range.push_back(paths[i].tau * kSpeedOfLight);
            e.xi.push_back(paths[i].sf.xi);
            e.zeta.push_back(paths[i].sf.zeta);
        }
        return e;
    }

    TrialRecord run_trial(const Scenario &base, const Prepared &p, std::uint64_t seed, const TrialOptions &opt)
    {
        Scenario s = base;
        s.seed = seed;
        TrialRecord r;
        r.seed = seed;
        r.tx = s.tx;
        r.rx = s.rx;
        r.clock_offset_m = s.radio.clock_offset_m;
        try
        {
            const auto anchors = anchor_poses(s);
            r.truth = eta_n_truth(s);
            std::mt19937_64 rng(seed);
            const RxBlock y = synthesize(s, p.cb, p.delta, rng, opt.with_noise);

            EstimatorOptions a1;
            a1.nfft = opt.nfft;
            a1.sf_step = opt.sf_step;
            if (opt.prior_windows)
                for (int l = 0; l < s.n_ris(); ++l)
                    a1.windows.push_back(prior_window(s, l, s.tx, s.rx, s.codebook.prior_sigma_m));
            const ChannelEstimate est = estimate_channel(y.samples, s, p.cb, p.delta, a1);
            r.eta_coarse = eta_from_estimate(est.coarse, est.has_los);
            r.eta_refined = eta_from_estimate(est.refined, est.has_los);
            for (std::size_t i = 0; i < est.refined.size(); ++i)
                if (!est.refined[i].converged)
                    add_flag(r.flags, "mle_path" + std::to_string(i + (est.has_los ? 0 : 1)) + "_not_converged");

            SearchSpec spec;
            spec.center = s.tx;
            spec.half_extent = opt.half_extent;
            spec.step = opt.step;
            r.coarse = coarse_locate(r.eta_refined, anchors, spec);
            add_flag(r.flags, r.coarse.flags);
            r.refined = refine_locate(r.coarse, r.eta_refined, anchors, opt.sigma);
            if (r.refined.flags != r.coarse.flags)
                add_flag(r.flags, r.refined.flags);
            r.ok = r.coarse.ok && r.refined.ok && r.refined.refined && r.refined.tx.allFinite() &&
                   r.refined.rx.allFinite();
        }
        catch (const std::exception &e)
        {
            r.ok = false;
            add_flag(r.flags, std::string("error:") + e.what());
        }
        return r;
    }

    void validate(const SweepSpec &spec)
    {
        if (spec.trials < 1)
            throw ConfigError("experiment field 'trials': must be >= 1");
        if (spec.powers_dbm.empty())
            throw ConfigError("experiment field 'powers_dbm': must not be empty");
        for (std::size_t i = 0; i < spec.powers_dbm.size(); ++i)
        {
            if (!std::isfinite(spec.powers_dbm[i]))
                throw ConfigError("experiment field 'powers_dbm': values must be finite");
            if (i && !(spec.powers_dbm[i] > spec.powers_dbm[i - 1]))
                throw ConfigError("experiment field 'powers_dbm': values must be sorted ascending");
        }
        if (spec.workers < 1)
            throw ConfigError("experiment field 'workers': must be >= 1");
    }

    std::vector<SweepRow> mc_sweep(const Scenario &s0, const SweepSpec &spec)
    {
        validate(spec);
        validate(s0);
        std::vector<SweepRow> rows;
        for (double P : spec.powers_dbm)
        {
            Scenario s = s0;
            s.radio.power_dbm = P;
            const Prepared prep = prepare(s);
            SweepRow row;
            row.power_dbm = P;
            row.trials = spec.trials;
            row.records.resize(spec.trials);
            // the same trial seeds at every power point (common random numbers)
            parallel_for(spec.trials, spec.workers,
                         [&](int t) { row.records[t] = run_trial(s, prep, trial_seed(spec.seed, t), spec.trial); });

            const FimReport b = positioning_bounds(s, prep.cb, prep.delta);
            row.peb_t = b.peb_t;
            row.peb_r = b.peb_r;
            row.ceb = b.ceb;
            row.deb = b.channel.deb;
            row.seb_xi = b.channel.seb_xi;
            row.seb_zeta = b.channel.seb_zeta;

            const int L = s.n_ris();
            const int np = (s.los_blocked ? 0 : 1) + L;
            std::vector<double> etx[2], erx[2], eb[2];
            std::vector<std::vector<double>> er[2], ex[2], ez[2];
            for (int k = 0; k < 2; ++k)
            {
                er[k].assign(np, {});
                ex[k].assign(L, {});
                ez[k].assign(L, {});
            }
            const auto poses = anchor_poses(s);
            int under = 0;
            for (const TrialRecord &r : row.records)
            {
                if (!r.ok)
                    continue;
                ++row.successes;
                const PositionFix *f[2] = {&r.coarse, &r.refined};
                const EtaN *e[2] = {&r.eta_coarse, &r.eta_refined};
                for (int k = 0; k < 2; ++k)
                {
                    etx[k].push_back((f[k]->tx - r.tx).norm());
                    erx[k].push_back((f[k]->rx - r.rx).norm());
                    eb[k].push_back(f[k]->clock_offset_m - r.clock_offset_m);
                    int o = 0;
                    if (!s.los_blocked)
                        er[k][o++].push_back(e[k]->range0 - r.truth.range0);
                    for (int l = 0; l < L; ++l)
                    {
                        er[k][o++].push_back(e[k]->range[l] - r.truth.range[l]);
                        ex[k][l].push_back(wrapped(e[k]->xi[l] - r.truth.xi[l], poses[l].sf_period));
                        ez[k][l].push_back(wrapped(e[k]->zeta[l] - r.truth.zeta[l], poses[l].sf_period));
                    }
                }
                if (erx[1].back() < 0.1)
                    ++under;
            }
            for (int k = 0; k < 2; ++k)
            {
                row.rmse_tx[k] = rms(etx[k]);
                row.rmse_rx[k] = rms(erx[k]);
                row.rmse_b[k] = rms(eb[k]);
                for (int i = 0; i < np; ++i)
                    row.rmse_range[k].push_back(rms(er[k][i]));
                for (int l = 0; l < L; ++l)
                {
                    row.rmse_xi[k].push_back(rms(ex[k][l]));
                    row.rmse_zeta[k].push_back(rms(ez[k][l]));
                }
            }
            if (!erx[1].empty())
            {
                std::vector<double> v = erx[1];
                std::sort(v.begin(), v.end());
                // nearest-rank percentile
                const std::size_t idx = static_cast<std::size_t>(std::ceil(0.9 * v.size())) - 1;
                row.p90_rx = v[std::min(idx, v.size() - 1)];
            }
            else
                row.p90_rx = kInf;
            row.frac_rx_0p1 = static_cast<double>(under) / spec.trials;
            rows.push_back(std::move(row));
        }
        return rows;
    }

    std::string header_block(const Scenario &s, const std::string &extra_json)
    {
        std::ostringstream o;
        o << "# sidelink experiment output\n# scenario:\n";
        std::istringstream in(dump_scenario(s));
        for (std::string line; std::getline(in, line);)
            o << "#   " << line << '\n';
        if (!extra_json.empty())
        {
            o << "# spec:\n";
            std::istringstream ex(extra_json);
            for (std::string line; std::getline(ex, line);)
                o << "#   " << line << '\n';
        }
        return o.str();
    }

    namespace
    {
        std::string sweep_spec_json(const SweepSpec &spec)
        {
            nlohmann::json j{{"kind", "mc_sweep"},
                             {"powers_dbm", spec.powers_dbm},
                             {"trials", spec.trials},
                             {"seed", spec.seed},
                             {"workers", spec.workers},
                             {"with_noise", spec.trial.with_noise},
                             {"prior_windows", spec.trial.prior_windows},
                             {"search_half_extent_m", spec.trial.half_extent},
                             {"search_step_m", spec.trial.step},
                             {"nfft", spec.trial.nfft},
                             {"sf_step", spec.trial.sf_step}};
            return j.dump(2);
        }
    }

    void write_sweep_csv(std::ostream &os, const Scenario &s, const SweepSpec &spec, const std::vector<SweepRow> &rows)
    {
        os << header_block(s, sweep_spec_json(spec));
        const int L = s.n_ris();
        const bool los = !s.los_blocked;
        os << "power_dbm,trials,success_rate,rmse_tx_coarse,rmse_tx_refined,peb_t,rmse_rx_coarse,rmse_rx_refined,peb_r,"
              "rmse_b_coarse,rmse_b_refined,ceb";
        const int np = (los ? 1 : 0) + L;
        for (int i = 0; i < np; ++i)
        {
            const int idx = los ? i : i + 1;
            os << ",rmse_range" << idx << "_coarse,rmse_range" << idx << "_refined,deb" << idx;
        }
        for (int l = 1; l <= L; ++l)
            os << ",rmse_xi" << l << "_coarse,rmse_xi" << l << "_refined,seb_xi" << l << ",rmse_zeta" << l
               << "_coarse,rmse_zeta" << l << "_refined,seb_zeta" << l;
        os << ",p90_rx_refined,frac_rx_refined_below_0p1\n";
        for (const SweepRow &r : rows)
        {
            os << fmt(r.power_dbm) << ',' << r.trials << ',' << fmt(double(r.successes) / r.trials) << ','
               << fmt(r.rmse_tx[0]) << ',' << fmt(r.rmse_tx[1]) << ',' << fmt(r.peb_t) << ',' << fmt(r.rmse_rx[0])
               << ',' << fmt(r.rmse_rx[1]) << ',' << fmt(r.peb_r) << ',' << fmt(r.rmse_b[0]) << ','
               << fmt(r.rmse_b[1]) << ',' << fmt(r.ceb);
            for (int i = 0; i < np; ++i)
                os << ',' << fmt(r.rmse_range[0][i]) << ',' << fmt(r.rmse_range[1][i]) << ',' << fmt(r.deb[i]);
            for (int l = 0; l < L; ++l)
                os << ',' << fmt(r.rmse_xi[0][l]) << ',' << fmt(r.rmse_xi[1][l]) << ',' << fmt(r.seb_xi[l]) << ','
                   << fmt(r.rmse_zeta[0][l]) << ',' << fmt(r.rmse_zeta[1][l]) << ',' << fmt(r.seb_zeta[l]);
            os << ',' << fmt(r.p90_rx) << ',' << fmt(r.frac_rx_0p1) << '\n';
        }
    }

    void write_trials_csv(std::ostream &os, const std::vector<SweepRow> &rows)
    {
        os << "power_dbm,trial,seed,ok,err_tx_coarse,err_tx_refined,err_rx_coarse,err_rx_refined,err_b_coarse,"
              "err_b_refined,iterations,flags\n";
        for (const SweepRow &row : rows)
            for (std::size_t t = 0; t < row.records.size(); ++t)
            {
                const TrialRecord &r = row.records[t];
                os << fmt(row.power_dbm) << ',' << t << ',' << r.seed << ',' << (r.ok ? 1 : 0) << ','
                   << fmt((r.coarse.tx - r.tx).norm()) << ',' << fmt((r.refined.tx - r.tx).norm()) << ','
                   << fmt((r.coarse.rx - r.rx).norm()) << ',' << fmt((r.refined.rx - r.rx).norm()) << ','
                   << fmt(r.coarse.clock_offset_m - r.clock_offset_m) << ','
                   << fmt(r.refined.clock_offset_m - r.clock_offset_m) << ',' << r.refined.iterations << ",\""
                   << r.flags << "\"\n";
            }
    }

    GridSpec square_grid(double lo, double hi, double step, double z, double offset)
    {
        if (!(step > 0.0) || !(hi >= lo))
            throw ConfigError("grid: need step > 0 and hi >= lo");
        GridSpec g;
        g.z = z;
        // the offset shifts the whole lattice, so the point count does not depend on it
        const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
        for (int i = 0; i <= n; ++i)
            g.xs.push_back(lo + offset + i * step);
        g.ys = g.xs;
        return g;
    }

    MapResult crb_map(const Scenario &s, const GridSpec &grid, Knowns knowns, int workers)
    {
        validate(s);
        const Prepared p = prepare(s);
        MapResult m;
        m.grid = grid;
        m.knowns = knowns;
        m.peb = peb_heatmap(s, p.cb, p.delta, grid, knowns, workers);
        return m;
    }

    namespace
    {
        std::string knowns_name(Knowns k)
        {
            switch (k)
            {
            case Knowns::b:
                return "b";
            case Knowns::height:
                return "height";
            case Knowns::tx:
                return "tx";
            default:
                return "none";
            }
        }
    }

    void write_map_csv(std::ostream &os, const Scenario &s, const MapResult &m, const std::string &value_name)
    {
        nlohmann::json spec{{"kind", value_name == "peb_m" ? "crb_map" : "cost_map"},
                            {"knowns", knowns_name(m.knowns)},
                            {"z_m", m.grid.z},
                            {"nx", m.grid.xs.size()},
                            {"ny", m.grid.ys.size()}};
        os << header_block(s, spec.dump(2));
        os << "x,y," << value_name << '\n';
        for (std::size_t iy = 0; iy < m.grid.ys.size(); ++iy)
            for (std::size_t ix = 0; ix < m.grid.xs.size(); ++ix)
                os << fmt(m.grid.xs[ix]) << ',' << fmt(m.grid.ys[iy]) << ',' << fmt(m.peb(iy, ix)) << '\n';
    }

    std::string map_to_json(const Scenario &s, const MapResult &m, const std::string &value_name)
    {
        using nlohmann::json;
        json j;
        j["scenario"] = json::parse(dump_scenario(s));
        j["knowns"] = knowns_name(m.knowns);
        j["grid"] = {{"xs", m.grid.xs}, {"ys", m.grid.ys}, {"z", m.grid.z}, {"layout", "rows follow ys"}};
        json rows = json::array();
        for (Eigen::Index iy = 0; iy < m.peb.rows(); ++iy)
        {
            json row = json::array();
            for (Eigen::Index ix = 0; ix < m.peb.cols(); ++ix)
            {
                const double v = m.peb(iy, ix);
                row.push_back(std::isfinite(v) ? json(v) : json(nullptr)); // null marks flagged cells
            }
            rows.push_back(row);
        }
        j[value_name] = rows;
        return j.dump(2);
    }

    std::vector<Vec3> cdf_positions(int)
    {
        std::vector<Vec3> out;
        for (int iz = 0; iz < 2; ++iz)
            for (int ix = -3; ix <= 3; ++ix)
                for (int iy = -3; iy <= 3; ++iy)
                    out.emplace_back(ix, iy, 0.5 * iz);
        return out;
    }

    std::vector<CdfLayout> cdf_layouts(const Scenario &base)
    {
        const double tilt = kPi / 6.0;
        struct A
        {
            Vec3 p;
            double yaw;
        };
        const A all[4] = {{Vec3(-4, 0, 2), 0.0}, {Vec3(0, 4, 2), -kPi / 2}, {Vec3(4, 0, 2), kPi}, {Vec3(0, -4, 2), kPi / 2}};
        auto make = [&](const std::string &name, std::initializer_list<int> idx)
        {
            Scenario s = base;
            s.name = name;
            s.los_blocked = false;
            s.scatterers.clear();
            s.clusters.clear();
            RisAnchor tmpl = base.anchors.empty() ? RisAnchor{} : base.anchors.front();
            s.anchors.clear();
            for (int i : idx)
            {
                RisAnchor a = tmpl;
                a.position = all[i].p;
                a.orientation = Vec3(all[i].yaw, tilt, 0.0);
                s.anchors.push_back(a);
            }
            s.codebook.block_count = 0;
            return CdfLayout{name, s};
        };
        return {make("4-RIS", {0, 1, 2, 3}), make("3-RIS", {0, 1, 2}), make("2-RIS (L)", {0, 1})};
    }

    double CdfResult::cdf(std::size_t layout, double eps) const
    {
        const auto &v = peb_r.at(layout);
        if (v.empty())
            return 0.0;
        const auto n = std::count_if(v.begin(), v.end(), [&](double x) { return x <= eps; });
        return static_cast<double>(n) / static_cast<double>(v.size());
    }

    CdfResult cdf_study(const std::vector<CdfLayout> &layouts, int subsample, Knowns knowns, int workers)
    {
        if (subsample < 1)
            throw ConfigError("cdf_study: subsample must be >= 1");
        const auto pos = cdf_positions();
        std::vector<std::pair<int, int>> pairs;
        for (std::size_t i = 0; i < pos.size(); ++i)
            for (std::size_t j = i + 1; j < pos.size(); ++j)
                pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
        std::vector<std::pair<int, int>> used;
        for (std::size_t k = 0; k < pairs.size(); k += subsample)
            used.push_back(pairs[k]);

        CdfResult r;
        r.pairs = used.size();
        for (const CdfLayout &lay : layouts)
        {
            validate(lay.scenario);
            const Prepared p = prepare(lay.scenario);
            std::vector<double> v(used.size());
            parallel_for(static_cast<int>(used.size()), workers, [&](int k)
                         {
                Scenario s = lay.scenario;
                s.tx = pos[used[k].first];
                s.rx = pos[used[k].second];
                try
                {
                    v[k] = positioning_bounds(s, p.cb, p.delta, knowns).peb_r;
                }
                catch (const DomainError &)
                {
                    v[k] = kInf;
                } });
            r.layouts.push_back(lay.name);
            r.peb_r.push_back(std::move(v));
        }
        return r;
    }

    void write_cdf_csv(std::ostream &os, const CdfResult &r, const std::vector<double> &eps)
    {
        os << "# cdf of PEB_R over " << r.pairs << " TX-RX pairs\n";
        os << "eps_m";
        for (const auto &n : r.layouts)
            os << ",\"" << n << '"';
        os << '\n';
        for (double e : eps)
        {
            os << fmt(e);
            for (std::size_t l = 0; l < r.layouts.size(); ++l)
                os << ',' << fmt(r.cdf(l, e));
            os << '\n';
        }
    }

    std::vector<CodebookEvalRow> codebook_eval(const Scenario &s0, const CodebookEvalSpec &spec)
    {
        validate(s0);
        Scenario s = s0;
        s.radio.power_dbm = spec.power_dbm;
        s.seed = spec.seed;
        const int gamma = s.codebook.block_count > 0 ? s.codebook.block_count
                                                     : default_block_count(s.radio.n_transmissions, s.n_ris());
        const RVec ones = RVec::Ones(s.radio.n_transmissions);
        auto peb = [&](const Codebook &cb, const RVec &delta)
        {
            try
            {
                return positioning_bounds(s, cb, delta).peb_r;
            }
            catch (const DomainError &)
            {
                return kInf;
            }
        };
        double peb_random;
        {
            std::mt19937_64 rng(spec.seed);
            peb_random = peb(build_codebook(CodebookKind::random, s, PriorState::isotropic(s, 0.1), gamma, rng), ones);
        }
        std::vector<CodebookEvalRow> rows(spec.sigmas.size());
        parallel_for(static_cast<int>(spec.sigmas.size()), spec.workers, [&](int i)
                     {
            const double sig = spec.sigmas[i];
            CodebookEvalRow &row = rows[i];
            row.sigma = sig;
            row.peb_random = peb_random;
            const PriorState prior = PriorState::isotropic(s, sig);
            {
                std::mt19937_64 rng(trial_seed(spec.seed, 2 * i));
                row.peb_dir = peb(build_codebook(CodebookKind::dir, s, prior, gamma, rng), ones);
            }
            std::mt19937_64 rng(trial_seed(spec.seed, 2 * i + 1));
            const Codebook cb = build_codebook(CodebookKind::dir_der, s, prior, gamma, rng);
            row.peb_dir_der_unit = peb(cb, power_vector_from_gamma(1.0, cb));
            std::mt19937_64 srng(trial_seed(spec.seed ^ 0x5eedULL, i));
            const auto samples = sample_prior(prior, s.codebook.prior_samples, srng);
            const SlotFims sf = slot_fims(s, cb, samples);
            const GammaResult g = optimize_gamma(sf, cb);
            row.gamma_opt = g.gamma_p;
            row.peb_dir_der_opt = peb(cb, power_vector_from_gamma(g.gamma_p, cb));
            if (spec.with_pg)
            {
                const PowerAllocResult pa = optimize_power_allocation(sf, cb);
                row.peb_dir_der_pg = peb(cb, pa.delta);
            }
            else
                row.peb_dir_der_pg = std::numeric_limits<double>::quiet_NaN(); });
        return rows;
    }

    void write_codebook_csv(std::ostream &os, const Scenario &s, const std::vector<CodebookEvalRow> &rows)
    {
        os << header_block(s, R"({"kind": "codebook_eval"})");
        os << "sigma_pri_m,peb_random,peb_dir,peb_dir_der_gamma1,peb_dir_der_opt_gamma,gamma_opt,peb_dir_der_pg\n";
        for (const auto &r : rows)
            os << fmt(r.sigma) << ',' << fmt(r.peb_random) << ',' << fmt(r.peb_dir) << ',' << fmt(r.peb_dir_der_unit)
               << ',' << fmt(r.peb_dir_der_opt) << ',' << fmt(r.gamma_opt) << ',' << fmt(r.peb_dir_der_pg) << '\n';
    }

    MapResult cost_map(const Scenario &s, const GridSpec &grid)
    {
        validate(s);
        MapResult m;
        m.grid = grid;
        m.peb = cost_landscape(eta_n_truth(s), anchor_poses(s), grid.xs, grid.ys, grid.z);
        return m;
    }
}
