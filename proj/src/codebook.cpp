// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#include "sidelink/codebook.hpp"
#include "sidelink/crb.hpp"
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace sidelink
{
    CodebookKind parse_codebook_kind(const std::string &s)
    {
        if (s == "random")
            return CodebookKind::random;
        if (s == "dir")
            return CodebookKind::dir;
        if (s == "dir_der")
            return CodebookKind::dir_der;
        throw ConfigError("codebook kind: expected random, dir or dir_der");
    }

    std::string to_string(CodebookKind k)
    {
        switch (k)
        {
        case CodebookKind::random:
            return "random";
        case CodebookKind::dir:
            return "dir";
        case CodebookKind::dir_der:
            return "dir_der";
        }
        return "?";
    }

    PriorState PriorState::isotropic(const Scenario &s, double sigma)
    {
        PriorState p;
        p.mean.resize(7);
        p.mean << s.tx, s.rx, s.radio.clock_offset_m;
        p.cov = RMat::Identity(7, 7) * (sigma * sigma);
        return p;
    }

    std::vector<RVec> sample_prior(const PriorState &prior, int count, std::mt19937_64 &rng)
    {
        const Eigen::Index n = prior.mean.size();
        if (prior.cov.rows() != n || prior.cov.cols() != n)
            throw ConfigError("prior: covariance size does not match the mean");
        if (!prior.cov.isApprox(prior.cov.transpose(), 1e-12))
            throw ConfigError("prior: covariance must be symmetric");
        RMat Lc = RMat::Zero(n, n);
        if (prior.cov.norm() > 0.0)
        {
            Eigen::LLT<RMat> llt(prior.cov);
            if (llt.info() != Eigen::Success)
                throw ConfigError("prior: covariance is not positive definite");
            Lc = llt.matrixL();
        }
        std::normal_distribution<double> nd(0.0, 1.0);
        std::vector<RVec> out;
        for (int i = 0; i < count; ++i)
        {
            RVec z(n);
            for (Eigen::Index j = 0; j < n; ++j)
                z[j] = nd(rng);
            out.push_back(prior.mean + Lc * z);
        }
        return out;
    }

    int default_block_count(int G, int L)
    {
        for (int g = L + 1; g <= G; ++g)
            if (G % g == 0)
                return g;
        throw ConfigError("no divisor of G is >= L+1");
    }

    CMat orthogonal_block_matrix(int gamma, int L)
    {
        if (gamma < L + 1)
            throw ConfigError("orthogonal_block_matrix: need Gamma >= L+1");
        CMat B(gamma, L + 1);
        for (int i = 0; i < gamma; ++i)
            for (int l = 0; l <= L; ++l)
                B(i, l) = std::polar(1.0, -2.0 * kPi * i * l / gamma);
        return B;
    }

    Codebook expand_orthogonal(const std::vector<CMat> &base, const CMat &block, CodebookKind kind,
                               std::vector<SlotKind> slots)
    {
        Codebook cb;
        cb.kind = kind;
        cb.block = block;
        cb.block_count = static_cast<int>(block.rows());
        if (static_cast<Eigen::Index>(base.size()) + 1 > block.cols())
            throw ConfigError("expand_orthogonal: block matrix has fewer than L+1 columns");
        cb.base_length = base.empty() ? 0 : static_cast<int>(base[0].cols());
        for (std::size_t l = 0; l < base.size(); ++l)
        {
            if (base[l].cols() != cb.base_length)
                throw ConfigError("expand_orthogonal: base profiles differ in length");
            const Eigen::Index N = base[l].rows();
            CMat W(N, cb.base_length * cb.block_count);
            for (int i = 0; i < cb.block_count; ++i)
                W.middleCols(i * cb.base_length, cb.base_length) = std::conj(block(i, l + 1)) * base[l];
            cb.profiles.push_back(std::move(W));
        }
        if (slots.empty())
            slots.assign(cb.base_length, kind == CodebookKind::random ? SlotKind::random : SlotKind::dir);
        if (static_cast<int>(slots.size()) != cb.base_length)
            throw ConfigError("expand_orthogonal: slot list length must equal the base length");
        cb.slots = std::move(slots);
        return cb;
    }

    CMat random_codebook(const RisAnchor &anchor, int base_len, std::mt19937_64 &rng)
    {
        std::uniform_real_distribution<double> u(0.0, 2.0 * kPi);
        CMat W(anchor.size(), base_len);
        for (int g = 0; g < base_len; ++g)
            for (int n = 0; n < anchor.size(); ++n)
                W(n, g) = std::polar(1.0, u(rng));
        return W;
    }

    CVec dir_beam(const RisAnchor &anchor, double lambda, const Vec3 &p_tx, const Vec3 &p_rx)
    {
        const Mat3 R = anchor.rotation();
        const Vec3 t = local_direction(p_tx, anchor.position, R) + local_direction(p_rx, anchor.position, R);
        const Eigen::Matrix3Xd Z = element_positions(anchor, lambda);
        const double k = 2.0 * kPi / lambda;
        CVec w(Z.cols());
        for (Eigen::Index n = 0; n < Z.cols(); ++n)
            w[n] = std::polar(1.0, -k * Z.col(n).dot(t));
        return w;
    }

    std::pair<CVec, CVec> der_beams(const RisAnchor &anchor, double lambda, const Vec3 &p_tx, const Vec3 &p_rx)
    {
        const CVec w = dir_beam(anchor, lambda, p_tx, p_rx);
        const Eigen::Matrix3Xd Z = element_positions(anchor, lambda);
        const double k = 2.0 * kPi / lambda;
        CVec wy(w.size()), wz(w.size());
        auto project = [](cd v)
        { return std::abs(v) < 1e-12 ? cd(1.0, 0.0) : v / std::abs(v); };
        for (Eigen::Index n = 0; n < w.size(); ++n)
        {
            wy[n] = project(w[n] * cd(0.0, -k * Z(1, n)));
            wz[n] = project(w[n] * cd(0.0, -k * Z(2, n)));
        }
        return {wy, wz};
    }

    Codebook build_codebook(CodebookKind kind, const Scenario &s, const PriorState &prior, int gamma,
                            std::mt19937_64 &rng)
    {
        const int L = s.n_ris();
        const int G = s.radio.n_transmissions;
        if (gamma < L + 1)
            throw ConfigError("build_codebook: need Gamma >= L+1");
        if (G % gamma)
            throw ConfigError("build_codebook: G = " + std::to_string(G) + " is not divisible by Gamma = " +
                              std::to_string(gamma));
        const int Gt = G / gamma;
        const double lam = s.radio.wavelength();
        std::vector<CMat> base(L);
        std::vector<SlotKind> slots;
        if (kind == CodebookKind::random)
        {
            for (int l = 0; l < L; ++l)
                base[l] = random_codebook(s.anchors[l], Gt, rng);
            slots.assign(Gt, SlotKind::random);
        }
        else if (kind == CodebookKind::dir)
        {
            const auto smp = sample_prior(prior, Gt, rng);
            for (int l = 0; l < L; ++l)
            {
                base[l].resize(s.anchors[l].size(), Gt);
                for (int g = 0; g < Gt; ++g)
                    base[l].col(g) = dir_beam(s.anchors[l], lam, smp[g].segment<3>(0), smp[g].segment<3>(3));
            }
            slots.assign(Gt, SlotKind::dir);
        }
        else
        {
            const int trip = Gt / 3, rem = Gt - 3 * trip;
            const auto smp = sample_prior(prior, trip + rem, rng);
            for (int i = 0; i < trip; ++i)
                slots.insert(slots.end(), {SlotKind::dir, SlotKind::der_y, SlotKind::der_z});
            for (int i = 0; i < rem; ++i)
                slots.push_back(SlotKind::dir);
            for (int l = 0; l < L; ++l)
            {
                base[l].resize(s.anchors[l].size(), Gt);
                for (int i = 0; i < trip; ++i)
                {
                    const Vec3 pt = smp[i].segment<3>(0), pr = smp[i].segment<3>(3);
                    base[l].col(3 * i) = dir_beam(s.anchors[l], lam, pt, pr);
                    const auto d = der_beams(s.anchors[l], lam, pt, pr);
                    base[l].col(3 * i + 1) = d.first;
                    base[l].col(3 * i + 2) = d.second;
                }
                for (int i = 0; i < rem; ++i)
                    base[l].col(3 * trip + i) =
                        dir_beam(s.anchors[l], lam, smp[trip + i].segment<3>(0), smp[trip + i].segment<3>(3));
            }
        }
        return expand_orthogonal(base, orthogonal_block_matrix(gamma, L), kind, slots);
    }

    Codebook build_codebook(const Scenario &s)
    {
        std::mt19937_64 rng(s.seed);
        const int gamma = s.codebook.block_count > 0 ? s.codebook.block_count
                                                     : default_block_count(s.radio.n_transmissions, s.n_ris());
        return build_codebook(parse_codebook_kind(s.codebook.kind), s, PriorState::isotropic(s, s.codebook.prior_sigma_m),
                              gamma, rng);
    }

    RVec power_vector_from_gamma(double gp, const Codebook &cb)
    {
        if (!(gp >= 0.0))
            throw ConfigError("power_vector_from_gamma: gamma_P must be >= 0");
        const double den = std::sqrt(1.0 + 2.0 * gp * gp);
        const double dir = std::sqrt(3.0) / den, der = std::sqrt(3.0) * gp / den;
        const bool has_der = std::find(cb.slots.begin(), cb.slots.end(), SlotKind::der_y) != cb.slots.end();
        RVec d(cb.base_length * cb.block_count);
        for (int i = 0; i < cb.block_count; ++i)
            for (int g = 0; g < cb.base_length; ++g)
            {
                double v = 1.0;
                const SlotKind k = cb.slots[g];
                // remainder DIR slots (outside a triplet) keep unit power
                const bool in_triplet = has_der && g < 3 * (cb.base_length / 3);
                if (k == SlotKind::der_y || k == SlotKind::der_z)
                    v = der;
                else if (k == SlotKind::dir && in_triplet)
                    v = dir;
                d[i * cb.base_length + g] = v;
            }
        return d;
    }

    // ---- optimization ---------------------------------------------------

    SlotFims slot_fims(const Scenario &s, const Codebook &cb, const std::vector<RVec> &samples)
    {
        SlotFims out;
        const double sigma2 = noise_variance(s.radio);
        for (std::size_t i = 0; i < samples.size(); ++i)
        {
            Scenario c = s;
            c.tx = samples[i].segment<3>(0);
            c.rx = samples[i].segment<3>(3);
            if (samples[i].size() > 6)
                c.radio.clock_offset_m = samples[i][6];
            try
            {
                const auto paths = enumerate_paths(c, {}, nullptr);
                const ChannelModel m = make_channel_model(c, cb, RVec::Ones(c.radio.n_transmissions), paths);
                const RVec eta = eta_from_paths(m, paths);
                const auto Se = fim_channel_slots(m, eta, sigma2, cb.base_length);
                const StateGeometry g = state_geometry(c);
                const RMat J = state_jacobian(g, state_vector(g, paths));
                std::vector<RMat> Ss;
                RMat total = RMat::Zero(J.rows(), J.rows());
                for (const RMat &Sg : Se)
                {
                    Ss.push_back(J * Sg * J.transpose());
                    total += Ss.back();
                }
                if (!checked_inverse(total))
                {
                    ++out.dropped;
                    continue;
                }
                out.S.push_back(std::move(Ss));
                out.kept.push_back(static_cast<int>(i));
            }
            catch (const DomainError &)
            {
                ++out.dropped;
            }
        }
        if (out.S.empty())
            throw DomainError("power optimization: every prior sample gives a singular FIM (degenerate geometry around "
                              "TX/RX mean)");
        return out;
    }

    double allocation_objective(const SlotFims &sf, const RVec &gamma, RVec *grad)
    {
        const int Gt = static_cast<int>(gamma.size());
        double f = 0.0;
        if (grad)
            grad->setZero(Gt);
        for (const auto &S : sf.S)
        {
            RMat F = RMat::Zero(S[0].rows(), S[0].cols());
            for (int g = 0; g < Gt; ++g)
                if (gamma[g] != 0.0)
                    F += gamma[g] * S[g];
            // gain entries sit many decades away from positions: solve the Jacobi-scaled system
            const RVec d = F.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
            Eigen::LLT<RMat> llt(d.asDiagonal() * F * d.asDiagonal());
            if (llt.info() != Eigen::Success)
                return std::numeric_limits<double>::infinity();
            const RMat C = d.asDiagonal() * llt.solve(RMat::Identity(F.rows(), F.cols())) * d.asDiagonal();
            const RMat Cr = C.middleCols(3, 3);
            const double tr = C.block<3, 3>(3, 3).trace();
            if (!(tr > 0.0) || !std::isfinite(tr))
                return std::numeric_limits<double>::infinity();
            f += tr;
            if (grad)
            {
                const RMat M = Cr * Cr.transpose();
                for (int g = 0; g < Gt; ++g)
                    (*grad)[g] -= (M.cwiseProduct(S[g])).sum();
            }
        }
        const double n = static_cast<double>(sf.S.size());
        if (grad)
            *grad /= n;
        return f / n;
    }

    namespace
    {
        RVec base_gamma(double gp, const Codebook &cb)
        {
            const RVec d = power_vector_from_gamma(gp, cb);
            return d.head(cb.base_length).array().square();
        }
    }

    GammaResult optimize_gamma(const SlotFims &sf, const Codebook &cb, double lo, double hi)
    {
        GammaResult r;
        auto obj = [&](double g)
        {
            ++r.evaluations;
            return allocation_objective(sf, base_gamma(g, cb));
        };
        // golden section on log10(gamma)
        const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
        double a = std::log10(lo), b = std::log10(hi);
        double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
        double f1 = obj(std::pow(10.0, x1)), f2 = obj(std::pow(10.0, x2));
        while (b - a > 1e-6)
        {
            if (f1 <= f2)
            {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = obj(std::pow(10.0, x1));
            }
            else
            {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = obj(std::pow(10.0, x2));
            }
        }
        r.gamma_p = std::pow(10.0, f1 <= f2 ? x1 : x2);
        r.objective = std::min(f1, f2);
        // the bracket may miss the reference points; keep the best of them too
        for (double g : {0.0, 1.0})
        {
            const double f = obj(g);
            if (f < r.objective)
            {
                r.objective = f;
                r.gamma_p = g;
            }
        }
        return r;
    }

    GammaResult optimize_gamma(const Scenario &s, const Codebook &cb, const std::vector<RVec> &samples, double lo,
                               double hi)
    {
        return optimize_gamma(slot_fims(s, cb, samples), cb, lo, hi);
    }

    RVec project_simplex(const RVec &v, double z)
    {
        const Eigen::Index n = v.size();
        std::vector<double> u(v.data(), v.data() + n);
        std::sort(u.begin(), u.end(), std::greater<double>());
        double cs = 0.0, theta = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
        {
            cs += u[j];
            const double t = (cs - z) / static_cast<double>(j + 1);
            if (u[j] - t > 0.0)
                theta = t;
        }
        RVec out = (v.array() - theta).max(0.0);
        // remove rounding drift so 1^T x = z holds to machine precision
        const double s = out.sum();
        if (s > 0.0)
            out *= z / s;
        return out;
    }

    PowerAllocResult optimize_power_allocation(const SlotFims &sf, const Codebook &cb, const PowerAllocOptions &opt)
    {
        const int Gt = cb.base_length;
        const double z = Gt;
        PowerAllocResult r;

        // warm start: better of uniform and the best scalar gamma_P
        RVec x = RVec::Ones(Gt);
        double f = allocation_objective(sf, x);
        if (std::find(cb.slots.begin(), cb.slots.end(), SlotKind::der_y) != cb.slots.end())
        {
            const GammaResult g = optimize_gamma(sf, cb);
            const RVec xg = base_gamma(g.gamma_p, cb);
            const double fg = allocation_objective(sf, xg);
            if (fg < f)
            {
                x = xg;
                f = fg;
            }
        }
        r.start_objective = f;
        auto record = [&](const RVec &b, double fv)
        {
            if (!opt.keep_history)
                return;
            RVec full(Gt * cb.block_count);
            for (int i = 0; i < cb.block_count; ++i)
                full.segment(i * Gt, Gt) = b;
            r.history.push_back(full);
            r.objective_history.push_back(fv);
        };
        record(x, f);

        RVec grad;
        allocation_objective(sf, x, &grad);
        double step = 1.0 / std::max(grad.cwiseAbs().maxCoeff(), 1e-300);
        int it = 0;
        for (; it < opt.max_iterations; ++it)
        {
            bool accepted = false;
            RVec xn;
            double fn = f;
            for (int bt = 0; bt < 60; ++bt)
            {
                xn = project_simplex(x - step * grad, z);
                const RVec dx = xn - x;
                fn = allocation_objective(sf, xn);
                // sufficient decrease for the projected step
                if (std::isfinite(fn) && fn <= f + grad.dot(dx) + dx.squaredNorm() / (2.0 * step))
                {
                    accepted = fn <= f;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted)
            {
                r.converged = true;
                break;
            }
            const double rel = (f - fn) / std::max(std::abs(f), 1e-300);
            const double move = (xn - x).norm();
            x = xn;
            f = fn;
            record(x, f);
            allocation_objective(sf, x, &grad);
            step *= 2.0;
            if (rel < opt.tolerance && move < 1e-9 * z)
            {
                r.converged = true;
                ++it;
                break;
            }
        }
        r.iterations = it;
        r.objective = f;
        r.gamma.resize(Gt * cb.block_count);
        for (int i = 0; i < cb.block_count; ++i)
            r.gamma.segment(i * Gt, Gt) = x;
        r.delta = r.gamma.cwiseSqrt();
        return r;
    }

    PowerAllocResult optimize_power_allocation(const Scenario &s, const Codebook &cb, const std::vector<RVec> &samples,
                                               const PowerAllocOptions &opt)
    {
        return optimize_power_allocation(slot_fims(s, cb, samples), cb, opt);
    }

    void save_codebook(const Codebook &cb, const std::string &path)
    {
        std::ofstream f(path);
        if (!f)
            throw ConfigError("cannot write codebook file '" + path + "'");
        f.precision(17);
        f << "# sidelink codebook: per-anchor N x G phases [rad]\n";
        for (std::size_t l = 0; l < cb.profiles.size(); ++l)
        {
            const CMat &W = cb.profiles[l];
            f << "anchor " << l + 1 << " " << W.rows() << " " << W.cols() << "\n";
            for (Eigen::Index n = 0; n < W.rows(); ++n)
            {
                for (Eigen::Index g = 0; g < W.cols(); ++g)
                    f << (g ? " " : "") << std::arg(W(n, g));
                f << "\n";
            }
        }
    }

    std::vector<CMat> load_codebook_profiles(const std::string &path)
    {
        std::ifstream f(path);
        if (!f)
            throw ConfigError("cannot open codebook file '" + path + "'");
        std::vector<CMat> out;
        std::string line;
        while (std::getline(f, line))
        {
            if (line.empty() || line[0] == '#')
                continue;
            std::istringstream hs(line);
            std::string tag;
            int l = 0;
            Eigen::Index N = 0, G = 0;
            if (!(hs >> tag >> l >> N >> G) || tag != "anchor")
                throw ConfigError("codebook file: expected 'anchor l N G' header");
            CMat W(N, G);
            for (Eigen::Index n = 0; n < N; ++n)
                for (Eigen::Index g = 0; g < G; ++g)
                {
                    double ph;
                    if (!(f >> ph))
                        throw ConfigError("codebook file: truncated phase block");
                    W(n, g) = std::polar(1.0, ph);
                }
            out.push_back(std::move(W));
        }
        return out;
    }
}
