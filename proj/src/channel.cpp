// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#include "sidelink/channel.hpp"
#include "sidelink/codebook.hpp"
#include "sidelink/kernels.hpp"
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace sidelink
{
    CVec steering_vector(const Eigen::Matrix3Xd &Z, double lambda, const AnglePair &angles)
    {
        const Vec3 t = angles_to_direction(angles);
        const double k = 2.0 * kPi / lambda;
        CVec a(Z.cols());
        for (Eigen::Index n = 0; n < Z.cols(); ++n)
            a[n] = std::polar(1.0, k * Z.col(n).dot(t));
        return a;
    }

    CVec ris_response(const Eigen::Matrix3Xd &Z, double lambda, const SpatialFreq &sf)
    {
        const double k = 2.0 * kPi / lambda;
        CVec a(Z.cols());
        for (Eigen::Index n = 0; n < Z.cols(); ++n)
            a[n] = std::polar(1.0, k * (Z(1, n) * sf.xi + Z(2, n) * sf.zeta));
        return a;
    }

    void ris_response_with_derivatives(const Eigen::Matrix3Xd &Z, double lambda, const SpatialFreq &sf, CVec &a,
                                       CVec &a_xi, CVec &a_zeta)
    {
        const double k = 2.0 * kPi / lambda;
        a = ris_response(Z, lambda, sf);
        a_xi.resize(Z.cols());
        a_zeta.resize(Z.cols());
        for (Eigen::Index n = 0; n < Z.cols(); ++n)
        {
            a_xi[n] = a[n] * cd(0.0, k * Z(1, n));
            a_zeta[n] = a[n] * cd(0.0, k * Z(2, n));
        }
    }

    CVec delay_vector(double tau, const RadioConfig &radio)
    {
        CVec d(radio.n_subcarriers);
        const double w = -2.0 * kPi * radio.subcarrier_spacing_hz * tau;
        for (int k = 0; k < radio.n_subcarriers; ++k)
            d[k] = std::polar(1.0, w * (k + 1));
        return d;
    }

    CVec pilot_symbols(const RadioConfig &radio, std::uint64_t seed)
    {
        CVec x = CVec::Ones(radio.n_subcarriers);
        if (radio.pilots == "qpsk")
        {
            std::mt19937_64 rng(seed ^ 0x51a7e5eedULL);
            std::uniform_int_distribution<int> q(0, 3);
            for (auto &v : x)
                v = std::polar(1.0, kPi / 4.0 + kPi / 2.0 * q(rng));
        }
        return x;
    }

    std::vector<PathDescriptor> enumerate_paths(const Scenario &s, const std::vector<ScatterPoint> &sps,
                                                std::mt19937_64 *rng)
    {
        const double lam = s.radio.wavelength();
        const double B = s.radio.clock_offset_m;
        std::vector<PathDescriptor> out;
        if (!s.los_blocked)
        {
            PathDescriptor p;
            p.kind = PathKind::los;
            const double d0 = (s.tx - s.rx).norm();
            p.tau = path_delay(PathKind::los, s.tx, s.rx, B).tau;
            p.gain = path_gain(PathKind::los, lam, d0, 0.0, 0.0, 0.0, rng);
            out.push_back(p);
        }
        for (int l = 0; l < s.n_ris(); ++l)
        {
            const RisAnchor &a = s.anchors[l];
            const Mat3 R = a.rotation();
            PathDescriptor p;
            p.kind = PathKind::ris;
            p.ris = l + 1;
            const double dT = (s.tx - a.position).norm(), dR = (s.rx - a.position).norm();
            p.tau = path_delay(PathKind::ris, s.tx, s.rx, B, a.position).tau;
            p.sf = spatial_frequencies(local_direction(s.tx, a.position, R), local_direction(s.rx, a.position, R));
            p.gain = path_gain(PathKind::ris, lam, dT, dR, 0.0, 0.0, rng);
            out.push_back(p);
        }
        for (const ScatterPoint &sp : sps)
        {
            PathDescriptor p;
            p.ris = sp.ris;
            if (sp.ris == 0)
            {
                p.kind = PathKind::mp_los;
                p.tau = path_delay(PathKind::mp_los, s.tx, s.rx, B, Vec3::Zero(), sp.position).tau;
                p.gain = path_gain(PathKind::mp_los, lam, (s.tx - sp.position).norm(), (s.rx - sp.position).norm(),
                                   0.0, sp.rcs_m2, rng);
            }
            else
            {
                const RisAnchor &a = s.anchors.at(sp.ris - 1);
                const Mat3 R = a.rotation();
                const double dSl = (sp.position - a.position).norm();
                if (!sp.rx_side)
                {
                    // TX -> SP -> RIS -> RX: the RIS sees the wave arriving from the SP
                    p.kind = PathKind::mp_ris;
                    p.tau = path_delay(PathKind::mp_ris, s.tx, s.rx, B, a.position, sp.position).tau;
                    p.sf = spatial_frequencies(local_direction(sp.position, a.position, R),
                                               local_direction(s.rx, a.position, R));
                    p.gain = path_gain(PathKind::mp_ris, lam, (s.tx - sp.position).norm(), dSl,
                                       (s.rx - a.position).norm(), sp.rcs_m2, rng);
                }
                else
                {
                    p.kind = PathKind::mp_ris_mirror;
                    p.tau = path_delay(PathKind::mp_ris_mirror, s.tx, s.rx, B, a.position, sp.position).tau;
                    p.sf = spatial_frequencies(local_direction(s.tx, a.position, R),
                                               local_direction(sp.position, a.position, R));
                    p.gain = path_gain(PathKind::mp_ris_mirror, lam, (s.tx - a.position).norm(), dSl,
                                       (s.rx - sp.position).norm(), sp.rcs_m2, rng);
                }
            }
            out.push_back(p);
        }
        return out;
    }

    CMat synthesize_paths(const std::vector<PathDescriptor> &paths, const Scenario &s,
                          const std::vector<CMat> &profiles, const RVec &delta, const CVec &pilots)
    {
        const int K = s.radio.n_subcarriers, G = s.radio.n_transmissions;
        if (delta.size() != G || pilots.size() != K)
            throw ConfigError("synthesize: delta must have length G and pilots length K");
        const double period = 1.0 / s.radio.subcarrier_spacing_hz;
        const double lam = s.radio.wavelength();
        const double sqp = std::sqrt(s.radio.power_w());
        std::vector<Eigen::Matrix3Xd> Z;
        for (const RisAnchor &a : s.anchors)
            Z.push_back(element_positions(a, lam));

        CMat Y = CMat::Zero(K, G);
        CVec u(K), w(G), A;
        for (const PathDescriptor &p : paths)
        {
            if (!(p.tau >= 0.0 && p.tau < period))
                throw ConfigError("synthesize: path delay outside the unambiguous window [0, 1/df)");
            const CVec d = delay_vector(p.tau, s.radio);
            for (int k = 0; k < K; ++k)
                u[k] = p.gain * pilots[k] * d[k];
            if (p.modulated())
            {
                const int l = p.ris - 1;
                if (l >= static_cast<int>(profiles.size()) || profiles[l].cols() != G || profiles[l].rows() != Z[l].cols())
                    throw ConfigError("synthesize: codebook does not match anchors / G");
                kernels::gemv_t(profiles[l], ris_response(Z[l], lam, p.sf), A);
                for (int g = 0; g < G; ++g)
                    w[g] = sqp * delta[g] * A[g];
            }
            else
                for (int g = 0; g < G; ++g)
                    w[g] = sqp * delta[g];
            kernels::rank1(Y, u, w);
        }
        return Y;
    }

    RxBlock synthesize(const Scenario &s, const Codebook &cb, const RVec &delta, std::mt19937_64 &rng, bool with_noise,
                       std::vector<PathDescriptor> *paths_out)
    {
        if (static_cast<int>(cb.profiles.size()) != s.n_ris())
            throw ConfigError("synthesize: codebook count must equal the number of anchors");
        const double G = s.radio.n_transmissions;
        if (std::abs(delta.squaredNorm() - G) > 1e-9 * G)
            throw ConfigError("synthesize: power vector must satisfy ||delta||^2 = G");
        const auto paths = enumerate_paths(s, all_scatterers(s), &rng);
        RxBlock out;
        out.samples = synthesize_paths(paths, s, cb.profiles, delta, pilot_symbols(s.radio, s.seed));
        if (with_noise)
        {
            const double sd = std::sqrt(noise_variance(s.radio) / 2.0);
            std::normal_distribution<double> n(0.0, sd);
            for (Eigen::Index i = 0; i < out.samples.size(); ++i)
            {
                const double re = n(rng);
                const double im = n(rng);
                out.samples.data()[i] += cd(re, im);
            }
        }
        if (paths_out)
            *paths_out = paths;
        return out;
    }

    namespace
    {
        template <typename T>
        void put_le(std::ofstream &f, T v)
        {
            static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
            unsigned char b[sizeof(T)];
            std::memcpy(b, &v, sizeof(T));
            if constexpr (std::endian::native == std::endian::big)
                std::reverse(b, b + sizeof(T));
            f.write(reinterpret_cast<const char *>(b), sizeof(T));
        }
        template <typename T>
        T get_le(std::ifstream &f)
        {
            unsigned char b[sizeof(T)];
            f.read(reinterpret_cast<char *>(b), sizeof(T));
            if (!f)
                throw ConfigError("read_rx_block: truncated file");
            if constexpr (std::endian::native == std::endian::big)
                std::reverse(b, b + sizeof(T));
            T v;
            std::memcpy(&v, b, sizeof(T));
            return v;
        }
    }

    void dump_rx_block(const CMat &Y, const std::string &path)
    {
        std::ofstream f(path, std::ios::binary);
        if (!f)
            throw ConfigError("cannot write '" + path + "'");
        put_le<std::int32_t>(f, static_cast<std::int32_t>(Y.rows()));
        put_le<std::int32_t>(f, static_cast<std::int32_t>(Y.cols()));
        for (Eigen::Index i = 0; i < Y.size(); ++i)
        {
            put_le<float>(f, static_cast<float>(Y.data()[i].real()));
            put_le<float>(f, static_cast<float>(Y.data()[i].imag()));
        }
    }

    CMat read_rx_block(const std::string &path)
    {
        std::ifstream f(path, std::ios::binary);
        if (!f)
            throw ConfigError("cannot open '" + path + "'");
        const auto K = get_le<std::int32_t>(f), G = get_le<std::int32_t>(f);
        if (K < 0 || G < 0)
            throw ConfigError("read_rx_block: bad header");
        CMat Y(K, G);
        for (Eigen::Index i = 0; i < Y.size(); ++i)
        {
            const float re = get_le<float>(f), im = get_le<float>(f);
            Y.data()[i] = cd(re, im);
        }
        return Y;
    }
}
