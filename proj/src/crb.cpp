// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#include "sidelink/crb.hpp"
#include "sidelink/kernels.hpp"
#include "sidelink/parallel.hpp"
#include <cmath>
#include <limits>

namespace sidelink
{
    int ChannelModel::n_params() const
    {
        int n = 0;
        for (std::size_t p = 0; p < ris.size(); ++p)
            n += params_of(static_cast<int>(p));
        return n;
    }

    int ChannelModel::offset(int path) const
    {
        int n = 0;
        for (int p = 0; p < path; ++p)
            n += params_of(p);
        return n;
    }

    ChannelModel make_channel_model(const Scenario &s, const Codebook &cb, const RVec &delta,
                                    const std::vector<PathDescriptor> &paths)
    {
        ChannelModel m;
        m.radio = s.radio;
        m.power_w = s.radio.power_w();
        m.wavelength = s.radio.wavelength();
        m.pilots = pilot_symbols(s.radio, s.seed);
        m.delta = delta;
        for (const RisAnchor &a : s.anchors)
            m.Z.push_back(element_positions(a, m.wavelength));
        m.profiles = cb.profiles;
        for (const PathDescriptor &p : paths)
        {
            m.kinds.push_back(p.kind);
            m.ris.push_back(p.ris);
            if (p.kind == PathKind::los || p.kind == PathKind::ris)
                ++m.n_primary;
        }
        return m;
    }

    RVec eta_from_paths(const ChannelModel &m, const std::vector<PathDescriptor> &paths)
    {
        RVec eta(m.n_params());
        int o = 0;
        for (const PathDescriptor &p : paths)
        {
            if (p.modulated())
            {
                eta[o++] = p.sf.xi;
                eta[o++] = p.sf.zeta;
            }
            eta[o++] = p.tau;
            eta[o++] = std::abs(p.gain);
            eta[o++] = -std::arg(p.gain);
        }
        return eta;
    }

    namespace
    {
        // mu = sum_p rho_p u_p (x) w_p; every partial is c * u[iu] (x) w[iw]
        struct Factored
        {
            std::vector<CVec> u, w;
            std::vector<cd> c;
            std::vector<int> iu, iw;
            std::vector<cd> rho; // per path
            std::vector<int> u0, w0; // per path: index of the undifferentiated factors
        };

        Factored factor(const ChannelModel &m, const RVec &eta, bool unit_delta)
        {
            const int K = m.radio.n_subcarriers, G = m.radio.n_transmissions;
            const double sqp = std::sqrt(m.power_w);
            const double wdf = -2.0 * kPi * m.radio.subcarrier_spacing_hz;
            Factored f;
            CVec A, Ax, Az, a, ax, az;
            int o = 0;
            for (std::size_t p = 0; p < m.ris.size(); ++p)
            {
                const bool mod = m.ris[p] > 0;
                double xi = 0.0, zeta = 0.0;
                if (mod)
                {
                    xi = eta[o];
                    zeta = eta[o + 1];
                }
                const int ob = o + (mod ? 2 : 0);
                const double tau = eta[ob], alpha = eta[ob + 1], beta = eta[ob + 2];
                o = ob + 3;
                const cd phase = std::polar(1.0, -beta);
                const cd rho = alpha * phase;

                CVec d = delay_vector(tau, m.radio);
                CVec u0(K), u1(K);
                for (int k = 0; k < K; ++k)
                {
                    u0[k] = m.pilots[k] * d[k];
                    u1[k] = u0[k] * cd(0.0, wdf * (k + 1));
                }
                const int iu0 = static_cast<int>(f.u.size());
                f.u.push_back(std::move(u0));
                f.u.push_back(std::move(u1));

                auto scaled = [&](const CVec *src)
                {
                    CVec w(G);
                    for (int g = 0; g < G; ++g)
                        w[g] = sqp * (unit_delta ? 1.0 : m.delta[g]) * (src ? (*src)[g] : cd(1.0, 0.0));
                    return w;
                };
                const int iw0 = static_cast<int>(f.w.size());
                if (mod)
                {
                    const int l = m.ris[p] - 1;
                    ris_response_with_derivatives(m.Z[l], m.wavelength, {xi, zeta}, a, ax, az);
                    kernels::gemv_t(m.profiles[l], a, A);
                    kernels::gemv_t(m.profiles[l], ax, Ax);
                    kernels::gemv_t(m.profiles[l], az, Az);
                    f.w.push_back(scaled(&A));
                    f.w.push_back(scaled(&Ax));
                    f.w.push_back(scaled(&Az));
                    f.c.push_back(rho), f.iu.push_back(iu0), f.iw.push_back(iw0 + 1);
                    f.c.push_back(rho), f.iu.push_back(iu0), f.iw.push_back(iw0 + 2);
                }
                else
                    f.w.push_back(scaled(nullptr));
                f.c.push_back(rho), f.iu.push_back(iu0 + 1), f.iw.push_back(iw0);
                f.c.push_back(phase), f.iu.push_back(iu0), f.iw.push_back(iw0);
                f.c.push_back(cd(0.0, -1.0) * rho), f.iu.push_back(iu0), f.iw.push_back(iw0);
                f.rho.push_back(rho);
                f.u0.push_back(iu0);
                f.w0.push_back(iw0);
            }
            return f;
        }

        RMat gram_fim(const Factored &f, const CMat &UU, const CMat &WW, double scale)
        {
            const int n = static_cast<int>(f.c.size());
            RMat F(n, n);
            for (int a = 0; a < n; ++a)
                for (int b = a; b < n; ++b)
                {
                    const cd v = std::conj(f.c[a]) * f.c[b] * UU(f.iu[a], f.iu[b]) * WW(f.iw[a], f.iw[b]);
                    F(a, b) = F(b, a) = scale * v.real();
                }
            return F;
        }

        CMat gram(const std::vector<CVec> &v)
        {
            const int n = static_cast<int>(v.size());
            CMat M(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j)
                {
                    M(i, j) = kernels::dotc(v[i].data(), v[j].data(), v[i].size());
                    M(j, i) = std::conj(M(i, j));
                }
            return M;
        }
    }

    CMat mean_signal(const ChannelModel &m, const RVec &eta)
    {
        const Factored f = factor(m, eta, false);
        CMat Y = CMat::Zero(m.radio.n_subcarriers, m.radio.n_transmissions);
        for (std::size_t p = 0; p < f.rho.size(); ++p)
            kernels::rank1(Y, f.rho[p] * f.u[f.u0[p]], f.w[f.w0[p]]);
        return Y;
    }

    std::vector<CMat> mean_partials(const ChannelModel &m, const RVec &eta)
    {
        const Factored f = factor(m, eta, false);
        std::vector<CMat> out;
        for (std::size_t i = 0; i < f.c.size(); ++i)
        {
            CMat D = CMat::Zero(m.radio.n_subcarriers, m.radio.n_transmissions);
            kernels::rank1(D, f.c[i] * f.u[f.iu[i]], f.w[f.iw[i]]);
            out.push_back(std::move(D));
        }
        return out;
    }

    RMat fim_channel(const ChannelModel &m, const RVec &eta, double sigma2)
    {
        const Factored f = factor(m, eta, false);
        return gram_fim(f, gram(f.u), gram(f.w), 2.0 / sigma2);
    }

    RMat fim_channel_direct(const ChannelModel &m, const RVec &eta, double sigma2)
    {
        const auto D = mean_partials(m, eta);
        const int n = static_cast<int>(D.size());
        RMat F(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = a; b < n; ++b)
                F(a, b) = F(b, a) = 2.0 / sigma2 * (D[a].conjugate().cwiseProduct(D[b])).sum().real();
        return F;
    }

    std::vector<RMat> fim_channel_slots(const ChannelModel &m, const RVec &eta, double sigma2, int base_length)
    {
        const int G = m.radio.n_transmissions;
        if (base_length < 1 || G % base_length)
            throw ConfigError("fim_channel_slots: base length must divide G");
        const Factored f = factor(m, eta, true);
        const CMat UU = gram(f.u);
        const int nw = static_cast<int>(f.w.size());
        std::vector<RMat> out;
        for (int g = 0; g < base_length; ++g)
        {
            CMat WW = CMat::Zero(nw, nw);
            for (int i = 0; i < nw; ++i)
                for (int j = i; j < nw; ++j)
                {
                    cd acc = 0.0;
                    for (int b = g; b < G; b += base_length)
                        acc += std::conj(f.w[i][b]) * f.w[j][b];
                    WW(i, j) = acc;
                    WW(j, i) = std::conj(acc);
                }
            out.push_back(gram_fim(f, UU, WW, 2.0 / sigma2));
        }
        return out;
    }

    std::optional<RMat> checked_inverse(const RMat &F, double threshold, double *cond)
    {
        const Eigen::Index n = F.rows();
        if (cond)
            *cond = std::numeric_limits<double>::infinity();
        if (n == 0)
            return RMat(0, 0);
        RVec d(n);
        for (Eigen::Index i = 0; i < n; ++i)
        {
            if (!(F(i, i) > 0.0) || !std::isfinite(F(i, i)))
                return std::nullopt;
            d[i] = 1.0 / std::sqrt(F(i, i));
        }
        const RMat S = d.asDiagonal() * F * d.asDiagonal();
        Eigen::SelfAdjointEigenSolver<RMat> es(0.5 * (S + S.transpose()));
        if (es.info() != Eigen::Success)
            return std::nullopt;
        const RVec ev = es.eigenvalues();
        const double c = ev[0] > 0.0 ? ev[n - 1] / ev[0] : std::numeric_limits<double>::infinity();
        if (cond)
            *cond = c;
        if (!(c <= threshold))
            return std::nullopt;
        const RMat V = es.eigenvectors();
        const RMat Sinv = V * ev.cwiseInverse().asDiagonal() * V.transpose();
        return RMat(d.asDiagonal() * Sinv * d.asDiagonal());
    }

    RMat efim(const RMat &F, const std::vector<int> &keep)
    {
        const int n = static_cast<int>(F.rows());
        std::vector<char> kept(n, 0);
        for (int k : keep)
        {
            if (k < 0 || k >= n)
                throw ConfigError("efim: keep index out of range");
            kept[k] = 1;
        }
        std::vector<int> drop;
        for (int i = 0; i < n; ++i)
            if (!kept[i])
                drop.push_back(i);
        const int nk = static_cast<int>(keep.size()), nd = static_cast<int>(drop.size());
        RMat A(nk, nk), Bm(nk, nd), D(nd, nd);
        for (int i = 0; i < nk; ++i)
        {
            for (int j = 0; j < nk; ++j)
                A(i, j) = F(keep[i], keep[j]);
            for (int j = 0; j < nd; ++j)
                Bm(i, j) = F(keep[i], drop[j]);
        }
        for (int i = 0; i < nd; ++i)
            for (int j = 0; j < nd; ++j)
                D(i, j) = F(drop[i], drop[j]);
        if (nd == 0)
            return A;
        double cond = 0.0;
        const auto Dinv = checked_inverse(D, 1e12, &cond);
        if (!Dinv)
            throw DomainError("efim: nuisance block is singular (condition number " + std::to_string(cond) + ")");
        RMat E = A - Bm * (*Dinv) * Bm.transpose();
        return 0.5 * (E + E.transpose());
    }

    ChannelBounds error_bounds(const RMat &fim_eta, bool has_los, int n_ris)
    {
        ChannelBounds b;
        const int np = n_ris + (has_los ? 1 : 0);
        b.deb = RVec::Constant(np, std::numeric_limits<double>::infinity());
        b.seb_xi = RVec::Constant(n_ris, std::numeric_limits<double>::infinity());
        b.seb_zeta = b.seb_xi;
        const auto C = checked_inverse(fim_eta, 1e12, &b.cond);
        if (!C)
        {
            b.singular = true;
            return b;
        }
        int p = 0;
        if (has_los)
            b.deb[p++] = kSpeedOfLight * std::sqrt((*C)(0, 0));
        const int base = has_los ? 3 : 0;
        for (int l = 0; l < n_ris; ++l)
        {
            const int o = base + 5 * l;
            b.seb_xi[l] = std::sqrt((*C)(o, o));
            b.seb_zeta[l] = std::sqrt((*C)(o + 1, o + 1));
            b.deb[p++] = kSpeedOfLight * std::sqrt((*C)(o + 2, o + 2));
        }
        return b;
    }

    // ---- state mapping --------------------------------------------------

    StateGeometry state_geometry(const Scenario &s)
    {
        StateGeometry g;
        g.tx = s.tx;
        g.rx = s.rx;
        g.clock_offset_m = s.radio.clock_offset_m;
        for (const RisAnchor &a : s.anchors)
        {
            g.anchor_pos.push_back(a.position);
            g.anchor_rot.push_back(a.rotation());
        }
        g.has_los = !s.los_blocked;
        g.wavelength = s.radio.wavelength();
        return g;
    }

    RVec state_vector(const StateGeometry &g, const std::vector<PathDescriptor> &primary)
    {
        const int np = static_cast<int>(g.anchor_pos.size()) + (g.has_los ? 1 : 0);
        RVec s(7 + 2 * np);
        s.segment<3>(0) = g.tx;
        s.segment<3>(3) = g.rx;
        s[6] = g.clock_offset_m;
        for (int p = 0; p < np; ++p)
        {
            s[7 + 2 * p] = std::abs(primary.at(p).gain);
            s[8 + 2 * p] = -std::arg(primary.at(p).gain);
        }
        return s;
    }

    RVec eta_of_state(const StateGeometry &g, const RVec &s)
    {
        const int L = static_cast<int>(g.anchor_pos.size());
        const Vec3 pT = s.segment<3>(0), pR = s.segment<3>(3);
        const double B = s[6];
        RVec eta((g.has_los ? 3 : 0) + 5 * L);
        int o = 0, p = 0;
        if (g.has_los)
        {
            eta[o++] = ((pT - pR).norm() + B) / kSpeedOfLight;
            eta[o++] = s[7];
            eta[o++] = s[8];
            ++p;
        }
        for (int l = 0; l < L; ++l, ++p)
        {
            const Vec3 tT = local_direction(pT, g.anchor_pos[l], g.anchor_rot[l]);
            const Vec3 tR = local_direction(pR, g.anchor_pos[l], g.anchor_rot[l]);
            eta[o++] = tT.y() + tR.y();
            eta[o++] = tT.z() + tR.z();
            eta[o++] = ((pT - g.anchor_pos[l]).norm() + (pR - g.anchor_pos[l]).norm() + B) / kSpeedOfLight;
            eta[o++] = s[7 + 2 * p];
            eta[o++] = s[8 + 2 * p];
        }
        return eta;
    }

    RMat state_jacobian(const StateGeometry &g, const RVec &s)
    {
        const int L = static_cast<int>(g.anchor_pos.size());
        const int np = L + (g.has_los ? 1 : 0);
        const Vec3 pT = s.segment<3>(0), pR = s.segment<3>(3);
        RMat J = RMat::Zero(7 + 2 * np, (g.has_los ? 3 : 0) + 5 * L);
        int o = 0, p = 0;
        if (g.has_los)
        {
            const Vec3 d = pT - pR;
            const double n = d.norm();
            if (!(n > 0.0))
                throw DomainError("state_jacobian: TX and RX coincide");
            const Vec3 u = d / n;
            J.block<3, 1>(0, 0) = u / kSpeedOfLight;
            J.block<3, 1>(3, 0) = -u / kSpeedOfLight;
            J(6, 0) = 1.0 / kSpeedOfLight;
            J(7, 1) = 1.0;
            J(8, 2) = 1.0;
            o = 3;
            p = 1;
        }
        for (int l = 0; l < L; ++l, ++p, o += 5)
        {
            const Vec3 vT = pT - g.anchor_pos[l], vR = pR - g.anchor_pos[l];
            const double dT = vT.norm(), dR = vR.norm();
            if (!(dT > 0.0) || !(dR > 0.0))
                throw DomainError("state_jacobian: UE coincides with an anchor");
            const Vec3 uT = vT / dT, uR = vR / dR;
            const Mat3 &R = g.anchor_rot[l];
            // d t / d p = R^T (I - u u^T) / d
            const Mat3 MT = R.transpose() * (Mat3::Identity() - uT * uT.transpose()) / dT;
            const Mat3 MR = R.transpose() * (Mat3::Identity() - uR * uR.transpose()) / dR;
            J.block<3, 1>(0, o) = MT.row(1).transpose();
            J.block<3, 1>(3, o) = MR.row(1).transpose();
            J.block<3, 1>(0, o + 1) = MT.row(2).transpose();
            J.block<3, 1>(3, o + 1) = MR.row(2).transpose();
            J.block<3, 1>(0, o + 2) = uT / kSpeedOfLight;
            J.block<3, 1>(3, o + 2) = uR / kSpeedOfLight;
            J(6, o + 2) = 1.0 / kSpeedOfLight;
            J(7 + 2 * p, o + 3) = 1.0;
            J(8 + 2 * p, o + 4) = 1.0;
        }
        return J;
    }

    Knowns parse_knowns(const std::string &s)
    {
        if (s == "none")
            return Knowns::none;
        if (s == "b")
            return Knowns::b;
        if (s == "height")
            return Knowns::height;
        if (s == "tx")
            return Knowns::tx;
        throw ConfigError("knowns: expected none, b, height or tx");
    }

    FimReport bounds_from_state_fim(const RMat &Fs, Knowns knowns, double snr)
    {
        FimReport r;
        r.fim_state = snr * Fs;
        std::vector<int> keep;
        for (int i = 0; i < Fs.rows(); ++i)
        {
            if (knowns == Knowns::b && i == 6)
                continue;
            if (knowns == Knowns::height && (i == 2 || i == 5))
                continue;
            if (knowns == Knowns::tx && i < 3)
                continue;
            keep.push_back(i);
        }
        RMat Fk(keep.size(), keep.size());
        for (std::size_t i = 0; i < keep.size(); ++i)
            for (std::size_t j = 0; j < keep.size(); ++j)
                Fk(i, j) = Fs(keep[i], keep[j]);
        const auto C = checked_inverse(Fk, 1e12, &r.cond_state);
        const double inf = std::numeric_limits<double>::infinity();
        if (!C)
        {
            r.singular = true;
            r.peb_t = r.peb_r = r.ceb = inf;
            r.diagnostic = "state FIM singular or ill-conditioned (scaled condition " + std::to_string(r.cond_state) + ")";
            return r;
        }
        double vt = 0.0, vr = 0.0, vb = 0.0;
        for (std::size_t i = 0; i < keep.size(); ++i)
        {
            const int k = keep[i];
            if (k < 3)
                vt += (*C)(i, i);
            else if (k < 6)
                vr += (*C)(i, i);
            else if (k == 6)
                vb += (*C)(i, i);
        }
        const double k = 1.0 / std::sqrt(snr);
        r.peb_t = k * std::sqrt(vt);
        r.peb_r = k * std::sqrt(vr);
        r.ceb = k * std::sqrt(vb);
        return r;
    }

    FimReport positioning_bounds(const Scenario &s, const Codebook &cb, const RVec &delta, Knowns knowns,
                                 bool include_multipath)
    {
        const std::vector<ScatterPoint> sps = include_multipath ? all_scatterers(s) : std::vector<ScatterPoint>{};
        const auto paths = enumerate_paths(s, sps, nullptr);
        // FIM at unit SNR; P / sigma^2 is applied after inversion so the bounds
        // follow P^-1/2 without the inverse's round-off depending on P
        ChannelModel m = make_channel_model(s, cb, delta, paths);
        const double snr = m.power_w / noise_variance(s.radio);
        m.power_w = 1.0;
        const RVec eta = eta_from_paths(m, paths);
        RMat F = fim_channel(m, eta, 1.0);
        const int n_primary_params = m.offset(m.n_primary);
        if (F.rows() > n_primary_params)
        {
            std::vector<int> keep(n_primary_params);
            for (int i = 0; i < n_primary_params; ++i)
                keep[i] = i;
            try
            {
                F = efim(F, keep);
            }
            catch (const DomainError &e)
            {
                // multipath that cannot be resolved leaves no finite bound
                const double inf = std::numeric_limits<double>::infinity();
                FimReport r;
                r.singular = true;
                r.diagnostic = e.what();
                r.peb_t = r.peb_r = r.ceb = inf;
                r.channel.deb = RVec::Constant(m.n_primary, inf);
                r.channel.seb_xi = r.channel.seb_zeta = RVec::Constant(s.n_ris(), inf);
                r.channel.singular = true;
                r.channel.cond = inf;
                r.cond_state = inf;
                return r;
            }
        }
        const StateGeometry g = state_geometry(s);
        const std::vector<PathDescriptor> primary(paths.begin(), paths.begin() + m.n_primary);
        const RVec st = state_vector(g, primary);
        const RMat J = state_jacobian(g, st);
        FimReport r = bounds_from_state_fim(J * F * J.transpose(), knowns, snr);
        r.fim_eta = snr * F;
        r.channel = error_bounds(F, g.has_los, s.n_ris());
        const double k = 1.0 / std::sqrt(snr);
        r.channel.deb *= k;
        r.channel.seb_xi *= k;
        r.channel.seb_zeta *= k;
        return r;
    }

    RMat peb_heatmap(const Scenario &s, const Codebook &cb, const RVec &delta, const GridSpec &grid, Knowns knowns,
                     int workers)
    {
        const int nx = static_cast<int>(grid.xs.size()), ny = static_cast<int>(grid.ys.size());
        RMat out(ny, nx);
        parallel_for(nx * ny, workers, [&](int i)
                     {
            const int iy = i / nx, ix = i % nx;
            Scenario c = s;
            c.rx = Vec3(grid.xs[ix], grid.ys[iy], grid.z);
            try
            {
                out(iy, ix) = positioning_bounds(c, cb, delta, knowns).peb_r;
            }
            catch (const DomainError &)
            {
                out(iy, ix) = std::numeric_limits<double>::infinity();
            } });
        return out;
    }
}
