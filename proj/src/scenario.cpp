// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#include "sidelink/scenario.hpp"
#include <json.hpp>
#include <cmath>
#include <fstream>
#include <sstream>

using nlohmann::json;

namespace sidelink
{
    double Scenario::spacing(int l) const
    {
        const double s = anchors.at(l).element_spacing_m;
        return s > 0.0 ? s : radio.wavelength() / 2.0;
    }

    Eigen::Matrix3Xd element_positions(const RisAnchor &anchor, double wavelength)
    {
        const double s = anchor.element_spacing_m > 0.0 ? anchor.element_spacing_m : wavelength / 2.0;
        Eigen::Matrix3Xd z(3, anchor.size());
        const double yc = 0.5 * (anchor.n_cols - 1), zc = 0.5 * (anchor.n_rows - 1);
        for (int r = 0; r < anchor.n_rows; ++r)
            for (int c = 0; c < anchor.n_cols; ++c)
                z.col(r * anchor.n_cols + c) = Vec3(0.0, (c - yc) * s, (r - zc) * s);
        return z;
    }

    double path_gain_magnitude(PathKind kind, double lambda, double d1, double d2, double d3, double rcs)
    {
        const double pi2 = kPi * kPi;
        switch (kind)
        {
        case PathKind::los:
            return lambda / (4.0 * kPi * d1);
        case PathKind::ris:
            return lambda * lambda / (16.0 * pi2 * d1 * d2);
        case PathKind::mp_los:
            return std::sqrt(4.0 * kPi * rcs) * lambda / (16.0 * pi2 * d1 * d2);
        case PathKind::mp_ris:
        case PathKind::mp_ris_mirror:
            return std::sqrt(4.0 * kPi * rcs) * lambda * lambda / (64.0 * pi2 * kPi * d1 * d2 * d3);
        }
        return 0.0;
    }

    cd path_gain(PathKind kind, double lambda, double d1, double d2, double d3, double rcs, std::mt19937_64 *rng)
    {
        const double a = path_gain_magnitude(kind, lambda, d1, d2, d3, rcs);
        double beta = 0.0;
        if (rng)
            beta = std::uniform_real_distribution<double>(0.0, 2.0 * kPi)(*rng);
        return std::polar(a, -beta);
    }

    double noise_variance(const RadioConfig &r)
    {
        return dbm_to_watt(r.noise_psd_dbm_hz) * db_to_lin(r.noise_figure_db) * r.n_subcarriers * r.subcarrier_spacing_hz;
    }

    void validate(const Scenario &s)
    {
        auto fail = [](const std::string &field, const std::string &msg)
        { throw ConfigError("scenario field '" + field + "': " + msg); };
        const RadioConfig &r = s.radio;
        if (!(r.carrier_freq_hz > 0.0))
            fail("radio.carrier_freq_hz", "must be positive");
        if (!(r.subcarrier_spacing_hz > 0.0))
            fail("radio.subcarrier_spacing_hz", "must be positive");
        if (r.n_subcarriers < 1)
            fail("radio.n_subcarriers", "must be >= 1");
        if (r.n_transmissions < 1)
            fail("radio.n_transmissions", "must be >= 1");
        if (!std::isfinite(r.power_dbm))
            fail("radio.power_dbm", "must be finite");
        if (!std::isfinite(r.noise_psd_dbm_hz))
            fail("radio.noise_psd_dbm_hz", "must be finite");
        if (!(r.noise_figure_db >= 0.0))
            fail("radio.noise_figure_db", "must be >= 0 dB");
        if (!std::isfinite(r.clock_offset_m))
            fail("radio.clock_offset_m", "must be finite");
        if (r.pilots != "ones" && r.pilots != "qpsk")
            fail("radio.pilots", "expected \"ones\" or \"qpsk\"");
        const std::size_t need = s.los_blocked ? 3 : 2;
        if (s.anchors.size() < need)
            fail("anchors", std::string(s.los_blocked ? "LOS-blocked scenarios need at least 3 RIS anchors (L >= 3)"
                                                      : "LOS scenarios need at least 2 RIS anchors (L >= 2)") +
                                ", found " + std::to_string(s.anchors.size()));
        for (std::size_t l = 0; l < s.anchors.size(); ++l)
        {
            const RisAnchor &a = s.anchors[l];
            const std::string f = "anchors[" + std::to_string(l) + "]";
            if (a.n_rows < 1 || a.n_cols < 1)
                fail(f + ".n_rows/n_cols", "must be >= 1");
            if (!a.position.allFinite() || !a.orientation.allFinite())
                fail(f, "position and orientation must be finite");
        }
        if (!s.tx.allFinite() || !s.rx.allFinite())
            fail("tx_m/rx_m", "must be finite");
        if ((s.tx - s.rx).norm() == 0.0)
            fail("tx_m", "TX and RX must not coincide");
        for (std::size_t i = 0; i < s.scatterers.size(); ++i)
        {
            const ScatterPoint &p = s.scatterers[i];
            const std::string f = "scatterers[" + std::to_string(i) + "]";
            if (!(p.rcs_m2 > 0.0))
                fail(f + ".rcs_m2", "must be positive");
            if (p.ris < 0 || p.ris > s.n_ris())
                fail(f + ".ris", "must be 0 (LOS) or an anchor index 1..L");
        }
        for (std::size_t i = 0; i < s.clusters.size(); ++i)
        {
            const ClusterSpec &c = s.clusters[i];
            const std::string f = "clusters[" + std::to_string(i) + "]";
            if (!(c.rcs_m2 > 0.0))
                fail(f + ".rcs_m2", "must be positive");
            if (c.count < 0 || !(c.radius_m >= 0.0))
                fail(f, "count and radius must be non-negative");
            for (int a : c.affects)
                if (a < 0 || a > s.n_ris())
                    fail(f + ".affects", "entries must be 0 (LOS) or an anchor index 1..L");
        }
        const std::string &k = s.codebook.kind;
        if (k != "random" && k != "dir" && k != "dir_der")
            fail("codebook.kind", "expected random, dir or dir_der");
        if (s.codebook.block_count < 0)
            fail("codebook.block_count", "must be >= 0");
        if (!(s.codebook.gamma_p >= 0.0))
            fail("codebook.gamma_p", "must be >= 0");
        if (!(s.codebook.prior_sigma_m >= 0.0))
            fail("codebook.prior_sigma_m", "must be >= 0");
    }

    std::vector<ScatterPoint> all_scatterers(const Scenario &s)
    {
        std::vector<ScatterPoint> out = s.scatterers;
        std::mt19937_64 rng(s.seed ^ 0x9e3779b97f4a7c15ULL);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (const ClusterSpec &c : s.clusters)
            for (int i = 0; i < c.count; ++i)
            {
                // uniform in the disk: sqrt on the radius
                const double r = c.radius_m * std::sqrt(u(rng));
                const double phi = 2.0 * kPi * u(rng);
                const Vec3 p = c.center + Vec3(r * std::cos(phi), r * std::sin(phi), 0.0);
                for (int a : c.affects)
                    out.push_back({p, c.rcs_m2, a, c.rx_side});
            }
        return out;
    }

    // ---- persistence ----------------------------------------------------

    namespace
    {
        struct Reader
        {
            const json &j;
            std::string path;

            [[noreturn]] void fail(const std::string &key, const std::string &msg) const
            {
                throw ConfigError("scenario field '" + (path.empty() ? key : path + "." + key) + "': " + msg);
            }
            bool has(const std::string &key) const { return j.contains(key); }
            const json &at(const std::string &key) const
            {
                if (!j.contains(key))
                    fail(key, "missing");
                return j.at(key);
            }
            double num(const std::string &key) const
            {
                const json &v = at(key);
                if (!v.is_number())
                    fail(key, "expected a number");
                return v.get<double>();
            }
            double num(const std::string &key, double dflt) const { return has(key) ? num(key) : dflt; }
            int integer(const std::string &key) const
            {
                const json &v = at(key);
                if (!v.is_number_integer())
                    fail(key, "expected an integer");
                return v.get<int>();
            }
            int integer(const std::string &key, int dflt) const { return has(key) ? integer(key) : dflt; }
            bool boolean(const std::string &key, bool dflt) const
            {
                if (!has(key))
                    return dflt;
                if (!j.at(key).is_boolean())
                    fail(key, "expected true/false");
                return j.at(key).get<bool>();
            }
            std::string str(const std::string &key, const std::string &dflt) const
            {
                if (!has(key))
                    return dflt;
                if (!j.at(key).is_string())
                    fail(key, "expected a string");
                return j.at(key).get<std::string>();
            }
            Vec3 vec3(const std::string &key) const
            {
                const json &v = at(key);
                if (!v.is_array() || v.size() != 3)
                    fail(key, "expected an array of 3 numbers");
                Vec3 out;
                for (int i = 0; i < 3; ++i)
                {
                    if (!v[i].is_number())
                        fail(key, "expected an array of 3 numbers");
                    out[i] = v[i].get<double>();
                }
                return out;
            }
            Vec3 vec3(const std::string &key, const Vec3 &dflt) const { return has(key) ? vec3(key) : dflt; }
            Reader sub(const std::string &key) const
            {
                const json &v = at(key);
                if (!v.is_object())
                    fail(key, "expected an object");
                return {v, path.empty() ? key : path + "." + key};
            }
            std::vector<Reader> list(const std::string &key) const
            {
                std::vector<Reader> out;
                if (!has(key))
                    return out;
                const json &v = j.at(key);
                if (!v.is_array())
                    fail(key, "expected an array");
                for (std::size_t i = 0; i < v.size(); ++i)
                {
                    const std::string p = (path.empty() ? key : path + "." + key) + "[" + std::to_string(i) + "]";
                    if (!v[i].is_object())
                        throw ConfigError("scenario field '" + p + "': expected an object");
                    out.push_back({v[i], p});
                }
                return out;
            }
        };

        json vec_json(const Vec3 &v) { return json::array({v[0], v[1], v[2]}); }

        std::string line_col(const std::string &text, std::size_t byte)
        {
            std::size_t line = 1, col = 1;
            for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i)
            {
                if (text[i] == '\n')
                {
                    ++line;
                    col = 1;
                }
                else
                    ++col;
            }
            return "line " + std::to_string(line) + ", column " + std::to_string(col);
        }
    }

    Scenario parse_scenario(const std::string &text, const std::string &origin)
    {
        json j;
        try
        {
            j = json::parse(text);
        }
        catch (const json::parse_error &e)
        {
            throw ConfigError(origin + ": parse error at " + line_col(text, e.byte) + ": " + e.what());
        }
        if (!j.is_object())
            throw ConfigError(origin + ": top level must be an object");

        const Reader r{j, ""};
        Scenario s;
        s.name = r.str("name", "");
        if (r.has("seed"))
        {
            if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
                r.fail("seed", "expected an unsigned integer");
            s.seed = j.at("seed").get<std::uint64_t>();
        }
        s.tx = r.vec3("tx_m");
        s.rx = r.vec3("rx_m");
        s.los_blocked = r.boolean("los_blocked", false);

        const Reader rr = r.sub("radio");
        s.radio.carrier_freq_hz = rr.num("carrier_freq_hz");
        s.radio.subcarrier_spacing_hz = rr.num("subcarrier_spacing_hz");
        s.radio.n_subcarriers = rr.integer("n_subcarriers");
        s.radio.n_transmissions = rr.integer("n_transmissions");
        s.radio.power_dbm = rr.num("power_dbm");
        s.radio.noise_psd_dbm_hz = rr.num("noise_psd_dbm_hz");
        s.radio.noise_figure_db = rr.num("noise_figure_db", 0.0);
        s.radio.clock_offset_m = rr.num("clock_offset_m");
        s.radio.pilots = rr.str("pilots", "ones");

        for (const Reader &a : r.list("anchors"))
        {
            RisAnchor x;
            x.position = a.vec3("position_m");
            x.orientation = a.vec3("orientation_rad", Vec3::Zero());
            x.n_rows = a.integer("n_rows", 10);
            x.n_cols = a.integer("n_cols", 10);
            x.element_spacing_m = a.num("element_spacing_m", 0.0);
            if (!(x.element_spacing_m > 0.0))
                x.element_spacing_m = s.radio.wavelength() / 2.0;
            s.anchors.push_back(x);
        }
        for (const Reader &a : r.list("scatterers"))
        {
            ScatterPoint p;
            p.position = a.vec3("position_m");
            p.rcs_m2 = a.num("rcs_m2");
            p.ris = a.integer("ris", 0);
            const std::string side = a.str("side", "tx");
            if (side != "tx" && side != "rx")
                a.fail("side", "expected \"tx\" or \"rx\"");
            p.rx_side = side == "rx";
            s.scatterers.push_back(p);
        }
        for (const Reader &a : r.list("clusters"))
        {
            ClusterSpec c;
            c.center = a.vec3("center_m");
            c.radius_m = a.num("radius_m");
            c.count = a.integer("count");
            c.rcs_m2 = a.num("rcs_m2");
            const json &af = a.at("affects");
            if (!af.is_array())
                a.fail("affects", "expected an array of channel indices");
            for (const json &v : af)
            {
                if (!v.is_number_integer())
                    a.fail("affects", "expected an array of channel indices");
                c.affects.push_back(v.get<int>());
            }
            const std::string side = a.str("side", "tx");
            if (side != "tx" && side != "rx")
                a.fail("side", "expected \"tx\" or \"rx\"");
            c.rx_side = side == "rx";
            s.clusters.push_back(c);
        }
        if (r.has("codebook"))
        {
            const Reader c = r.sub("codebook");
            s.codebook.kind = c.str("kind", "random");
            s.codebook.prior_sigma_m = c.num("prior_sigma_m", 0.1);
            s.codebook.block_count = c.integer("block_count", 0);
            s.codebook.gamma_p = c.num("gamma_p", 1.0);
            s.codebook.prior_samples = c.integer("prior_samples", 21);
        }
        validate(s);
        return s;
    }

    Scenario load_scenario(const std::string &path)
    {
        std::ifstream f(path);
        if (!f)
            throw ConfigError("cannot open scenario file '" + path + "'");
        std::stringstream ss;
        ss << f.rdbuf();
        return parse_scenario(ss.str(), path);
    }

    std::string dump_scenario(const Scenario &s)
    {
        json j;
        j["name"] = s.name;
        j["seed"] = s.seed;
        j["tx_m"] = vec_json(s.tx);
        j["rx_m"] = vec_json(s.rx);
        j["los_blocked"] = s.los_blocked;
        j["radio"] = {{"carrier_freq_hz", s.radio.carrier_freq_hz},
                      {"subcarrier_spacing_hz", s.radio.subcarrier_spacing_hz},
                      {"n_subcarriers", s.radio.n_subcarriers},
                      {"n_transmissions", s.radio.n_transmissions},
                      {"power_dbm", s.radio.power_dbm},
                      {"noise_psd_dbm_hz", s.radio.noise_psd_dbm_hz},
                      {"noise_figure_db", s.radio.noise_figure_db},
                      {"clock_offset_m", s.radio.clock_offset_m},
                      {"pilots", s.radio.pilots}};
        j["anchors"] = json::array();
        for (const RisAnchor &a : s.anchors)
            j["anchors"].push_back({{"position_m", vec_json(a.position)},
                                    {"orientation_rad", vec_json(a.orientation)},
                                    {"n_rows", a.n_rows},
                                    {"n_cols", a.n_cols},
                                    {"element_spacing_m", a.element_spacing_m}});
        j["scatterers"] = json::array();
        for (const ScatterPoint &p : s.scatterers)
            j["scatterers"].push_back({{"position_m", vec_json(p.position)},
                                       {"rcs_m2", p.rcs_m2},
                                       {"ris", p.ris},
                                       {"side", p.rx_side ? "rx" : "tx"}});
        j["clusters"] = json::array();
        for (const ClusterSpec &c : s.clusters)
            j["clusters"].push_back({{"center_m", vec_json(c.center)},
                                     {"radius_m", c.radius_m},
                                     {"count", c.count},
                                     {"rcs_m2", c.rcs_m2},
                                     {"affects", c.affects},
                                     {"side", c.rx_side ? "rx" : "tx"}});
        j["codebook"] = {{"kind", s.codebook.kind},
                         {"prior_sigma_m", s.codebook.prior_sigma_m},
                         {"block_count", s.codebook.block_count},
                         {"gamma_p", s.codebook.gamma_p},
                         {"prior_samples", s.codebook.prior_samples}};
        return j.dump(2);
    }

    void save_scenario(const Scenario &s, const std::string &path)
    {
        std::ofstream f(path);
        if (!f)
            throw ConfigError("cannot write scenario file '" + path + "'");
        f << dump_scenario(s) << "\n";
    }

    Scenario table1_scenario()
    {
        Scenario s;
        s.name = "table1";
        s.seed = 1;
        s.tx = Vec3(-2.0, -4.0, 0.0);
        s.rx = Vec3(2.0, 3.0, 0.0);
        RisAnchor a1, a2;
        a1.position = Vec3(-4.0, 0.0, 2.0);
        a2.position = Vec3(4.0, 0.0, 2.0);
        a2.orientation = Vec3(kPi, 0.0, 0.0);
        a1.element_spacing_m = a2.element_spacing_m = s.radio.wavelength() / 2.0;
        s.anchors = {a1, a2};
        return s;
    }
}
