// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#include "sidelink/estimator.hpp"
#include "sidelink/channel.hpp"
#include "sidelink/kernels.hpp"
#include <fftw3.h>
#include <json.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>

namespace sidelink
{
    std::vector<CMat> separate_paths(const CMat &Y, const CMat &block, int base_length)
    {
        const int gamma = static_cast<int>(block.rows());
        if (base_length < 1 || Y.cols() != static_cast<Eigen::Index>(gamma) * base_length)
            throw ConfigError("separate_paths: G must equal Gamma * G~");
        std::vector<CMat> out;
        for (Eigen::Index l = 0; l < block.cols(); ++l)
        {
            CMat P = CMat::Zero(Y.rows(), base_length);
            for (int i = 0; i < gamma; ++i)
                P += block(i, l) * Y.middleCols(static_cast<Eigen::Index>(i) * base_length, base_length);
            out.push_back(P / static_cast<double>(gamma));
        }
        return out;
    }

    namespace
    {
        // FFTW plans are created once per size; planning is not thread-safe,
        // execution on fresh aligned buffers via fftw_execute_dft is.
        struct Plan
        {
            fftw_plan plan;
            int n;
        };

        const Plan &backward_plan(int n)
        {
            static std::mutex mu;
            static std::map<int, std::unique_ptr<Plan>> cache;
            std::lock_guard<std::mutex> lk(mu);
            auto it = cache.find(n);
            if (it != cache.end())
                return *it->second;
            fftw_complex *buf = fftw_alloc_complex(n);
            auto p = std::make_unique<Plan>();
            p->n = n;
            p->plan = fftw_plan_dft_1d(n, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
            fftw_free(buf);
            return *(cache[n] = std::move(p));
        }

        struct FftBuffer
        {
            fftw_complex *p;
            explicit FftBuffer(int n) : p(fftw_alloc_complex(n)) {}
            ~FftBuffer() { fftw_free(p); }
            FftBuffer(const FftBuffer &) = delete;
            FftBuffer &operator=(const FftBuffer &) = delete;
        };

        // |d(tau_n)^H h|^2 for every grid point: sum_k h_k exp(+j 2pi k n / nfft), k = 1..K
        void delay_spectrum(const CVec &h, int nfft, const Plan &plan, FftBuffer &buf, RVec &acc)
        {
            for (int i = 0; i < nfft; ++i)
                buf.p[i][0] = buf.p[i][1] = 0.0;
            for (Eigen::Index k = 0; k < h.size(); ++k)
            {
                const int idx = static_cast<int>((k + 1) % nfft);
                buf.p[idx][0] += h[k].real();
                buf.p[idx][1] += h[k].imag();
            }
            fftw_execute_dft(plan.plan, buf.p, buf.p);
            for (int i = 0; i < nfft; ++i)
                acc[i] += buf.p[i][0] * buf.p[i][0] + buf.p[i][1] * buf.p[i][1];
        }
    }

    double coarse_delay(const CMat &path, const CVec &pilots, const RadioConfig &radio, int nfft, bool modulated)
    {
        const Eigen::Index K = path.rows();
        if (nfft < K)
            throw ConfigError("coarse_delay: N_F must be >= K");
        const Plan &plan = backward_plan(nfft);
        FftBuffer buf(nfft);
        RVec acc = RVec::Zero(nfft);
        CVec h(K);
        if (!modulated)
        {
            // de-pilot and sum over transmissions
            for (Eigen::Index k = 0; k < K; ++k)
                h[k] = path.row(k).sum() / pilots[k];
            delay_spectrum(h, nfft, plan, buf, acc);
        }
        else
        {
            for (Eigen::Index g = 0; g < path.cols(); ++g)
            {
                for (Eigen::Index k = 0; k < K; ++k)
                    h[k] = path(k, g) / pilots[k];
                delay_spectrum(h, nfft, plan, buf, acc);
            }
        }
        Eigen::Index best = 0;
        acc.maxCoeff(&best);
        return static_cast<double>(best) / (nfft * radio.subcarrier_spacing_hz);
    }

    SfEstimate coarse_spatial_freq(const CMat &path, const CMat &W, const RisAnchor &anchor, double lambda,
                                   const CVec &pilots, const RadioConfig &radio, double tau, double step,
                                   const std::optional<SfWindow> &window, const RVec &delta, bool normalized)
    {
        const Eigen::Index K = path.rows(), Gt = path.cols();
        if (W.cols() != Gt)
            throw ConfigError("coarse_spatial_freq: profile count does not match the path matrix");
        if (delta.size() && delta.size() != Gt)
            throw ConfigError("coarse_spatial_freq: power vector does not match the path matrix");
        if (!(step > 0.0))
            throw ConfigError("coarse_spatial_freq: step must be positive");
        // c_g = sum_k conj(x_k d_k(tau)) y_{k,g}; the path model for c is delta_g A_g with A_g = w_g^T a_R
        const CVec d = delay_vector(tau, radio);
        CVec xd(K);
        for (Eigen::Index k = 0; k < K; ++k)
            xd[k] = pilots[k] * d[k];
        CVec c(Gt);
        for (Eigen::Index g = 0; g < Gt; ++g)
            c[g] = kernels::dotc(xd.data(), path.data() + g * K, K);
        // literal form weights every slot equally
        const RVec wgt = normalized && delta.size() ? delta : RVec::Ones(Gt);
        const CVec cw = (c.array() * wgt.array()).conjugate().matrix();

        const double s = anchor.element_spacing_m > 0.0 ? anchor.element_spacing_m : lambda / 2.0;
        const double k = 2.0 * kPi / lambda;
        const int nr = anchor.n_rows, nc = anchor.n_cols;
        const double yc = 0.5 * (nc - 1), zc = 0.5 * (nr - 1);

        const double xlo = window ? std::max(-1.0, window->xi_lo) : -1.0;
        const double xhi = window ? std::min(1.0, window->xi_hi) : 1.0;
        const double zlo = window ? std::max(-1.0, window->zeta_lo) : -1.0;
        const double zhi = window ? std::min(1.0, window->zeta_hi) : 1.0;
        // grid points are the multiples of `step` inside [lo, hi)
        auto grid = [step](double lo, double hi)
        {
            std::vector<double> g;
            for (long i = static_cast<long>(std::ceil(lo / step - 1e-9)); i * step < hi - 1e-12; ++i)
                g.push_back(i * step);
            if (g.empty())
                g.push_back(std::round(0.5 * (lo + hi) / step) * step);
            return g;
        };
        const auto xs = grid(xlo, xhi), zs = grid(zlo, zhi);

        CVec py(nc);
        std::vector<CVec> pzs(zs.size(), CVec(nr));
        for (std::size_t j = 0; j < zs.size(); ++j)
            for (int r = 0; r < nr; ++r)
                pzs[j][r] = std::polar(1.0, k * (r - zc) * s * zs[j]);
        SfEstimate best;
        best.peak = -1.0;
        if (!normalized)
        {
            // |a^T W conj(c)| factors over rows and columns
            CVec v;
            kernels::gemv_n(W, cw, v);
            CVec rowsum(nr);
            for (double xi : xs)
            {
                for (int cc = 0; cc < nc; ++cc)
                    py[cc] = std::polar(1.0, k * (cc - yc) * s * xi);
                for (int r = 0; r < nr; ++r)
                    rowsum[r] = kernels::dotu(py.data(), v.data() + r * nc, nc);
                for (std::size_t j = 0; j < zs.size(); ++j)
                {
                    const double m = std::abs(kernels::dotu(pzs[j].data(), rowsum.data(), nr));
                    if (m > best.peak)
                    {
                        best.peak = m;
                        best.sf = {xi, zs[j]};
                    }
                }
            }
        }
        else
        {
            // per slot partial sums over columns, then rows: A_g(xi, zeta) for all g
            CMat part(nr, Gt); // part(r, g) = sum_c e^{jk y_c xi} w_{g, r*nc+c}
            CVec A(Gt);
            for (double xi : xs)
            {
                for (int cc = 0; cc < nc; ++cc)
                    py[cc] = std::polar(1.0, k * (cc - yc) * s * xi);
                for (Eigen::Index g = 0; g < Gt; ++g)
                    for (int r = 0; r < nr; ++r)
                        part(r, g) = kernels::dotu(py.data(), W.data() + g * W.rows() + r * nc, nc);
                for (std::size_t j = 0; j < zs.size(); ++j)
                {
                    kernels::gemv_t(part, pzs[j], A);
                    double nrm = 0.0;
                    for (Eigen::Index g = 0; g < Gt; ++g)
                        nrm += wgt[g] * wgt[g] * std::norm(A[g]);
                    if (!(nrm > 0.0))
                        continue;
                    const double m = std::abs(kernels::dotu(A.data(), cw.data(), Gt)) / std::sqrt(nrm);
                    if (m > best.peak)
                    {
                        best.peak = m;
                        best.sf = {xi, zs[j]};
                    }
                }
            }
        }
        // period of xi/zeta is lambda/s; below the physical span of 4 a wrapped alias may exist
        best.alias_possible = !window && lambda / s < 4.0;
        return best;
    }

    CMat path_model(const PathContext &ctx, double tau, const SpatialFreq &sf)
    {
        const int K = ctx.radio.n_subcarriers;
        const Eigen::Index Gt = ctx.delta.size();
        const CVec d = delay_vector(tau, ctx.radio);
        CVec u(K);
        for (int k = 0; k < K; ++k)
            u[k] = ctx.pilots[k] * d[k];
        CVec w(Gt);
        const double sqp = std::sqrt(ctx.power_w);
        if (ctx.profiles)
        {
            CVec A;
            kernels::gemv_t(*ctx.profiles, ris_response(ctx.Z, ctx.wavelength, sf), A);
            for (Eigen::Index g = 0; g < Gt; ++g)
                w[g] = sqp * ctx.delta[g] * A[g];
        }
        else
            for (Eigen::Index g = 0; g < Gt; ++g)
                w[g] = sqp * ctx.delta[g];
        return u * w.transpose();
    }

    PathEstimate concentrated_fit(const CMat &path, const PathContext &ctx, double tau, const SpatialFreq &sf)
    {
        const CMat mu = path_model(ctx, tau, sf);
        const double mm = mu.squaredNorm();
        const cd my = (mu.conjugate().cwiseProduct(path)).sum();
        PathEstimate e;
        e.tau = tau;
        e.sf = sf;
        e.gain = mm > 0.0 ? my / mm : cd(0.0, 0.0);
        e.residual = (path - e.gain * mu).squaredNorm();
        return e;
    }

    namespace
    {
        // Factors of the path model and its derivatives for the LM step
        struct PathFactors
        {
            CVec u, ut;       // x d(tau), d/d(c tau)
            CVec w, wx, wz;   // sqrt(P) delta A, derivatives in xi, zeta
        };

        PathFactors path_factors(const PathContext &ctx, double range, const SpatialFreq &sf)
        {
            const int K = ctx.radio.n_subcarriers;
            const Eigen::Index Gt = ctx.delta.size();
            PathFactors f;
            const CVec d = delay_vector(range / kSpeedOfLight, ctx.radio);
            f.u.resize(K);
            f.ut.resize(K);
            const double wr = -2.0 * kPi * ctx.radio.subcarrier_spacing_hz / kSpeedOfLight;
            for (int k = 0; k < K; ++k)
            {
                f.u[k] = ctx.pilots[k] * d[k];
                f.ut[k] = f.u[k] * cd(0.0, wr * (k + 1));
            }
            const double sqp = std::sqrt(ctx.power_w);
            f.w.resize(Gt);
            if (ctx.profiles)
            {
                CVec a, ax, az, A, Ax, Az;
                ris_response_with_derivatives(ctx.Z, ctx.wavelength, sf, a, ax, az);
                kernels::gemv_t(*ctx.profiles, a, A);
                kernels::gemv_t(*ctx.profiles, ax, Ax);
                kernels::gemv_t(*ctx.profiles, az, Az);
                f.wx.resize(Gt);
                f.wz.resize(Gt);
                for (Eigen::Index g = 0; g < Gt; ++g)
                {
                    const double s = sqp * ctx.delta[g];
                    f.w[g] = s * A[g];
                    f.wx[g] = s * Ax[g];
                    f.wz[g] = s * Az[g];
                }
            }
            else
                for (Eigen::Index g = 0; g < Gt; ++g)
                    f.w[g] = sqp * ctx.delta[g];
            return f;
        }

        // ||Y - rho u w^T||^2, evaluated directly: the expanded form cancels
        // catastrophically next to a zero-residual optimum
        double residual(double, const CMat &Y, const PathFactors &f, cd rho)
        {
            const Eigen::Index K = Y.rows();
            CVec ru = rho * f.u;
            double acc = 0.0;
            for (Eigen::Index g = 0; g < Y.cols(); ++g)
            {
                const cd wg = f.w[g];
                const cd *y = Y.data() + g * K;
                for (Eigen::Index k = 0; k < K; ++k)
                {
                    const cd r = y[k] - ru[k] * wg;
                    acc += r.real() * r.real() + r.imag() * r.imag();
                }
            }
            return acc;
        }
    }

    namespace
    {
        // smallest nonzero coordinate gap of the element grid
        double spacing_of(const Eigen::Matrix3Xd &Z)
        {
            double s = std::numeric_limits<double>::infinity();
            for (Eigen::Index n = 1; n < Z.cols(); ++n)
                for (int i = 1; i < 3; ++i)
                {
                    const double d = std::abs(Z(i, n) - Z(i, 0));
                    if (d > 1e-12)
                        s = std::min(s, d);
                }
            return s;
        }
    }

    PathEstimate refine_channel_mle(const CMat &Y, const PathContext &ctx, const PathEstimate &init)
    {
        const bool mod = ctx.profiles != nullptr;
        const int np = mod ? 5 : 3; // (range, [xi, zeta], Re rho, Im rho)
        const double yy = Y.squaredNorm();

        PathEstimate start = concentrated_fit(Y, ctx, init.tau, init.sf);
        double range = start.tau * kSpeedOfLight;
        SpatialFreq sf = start.sf;
        cd rho = start.gain;
        PathFactors f = path_factors(ctx, range, sf);
        double cost = residual(yy, Y, f, rho);
        const double cost0 = cost;
        double lambda = 1e-3;
        int it = 0;
        bool converged = false;
        for (; it < 100; ++it)
        {
            // Jacobian columns are c_i * u_i (x) w_i; assemble J^H J and J^H r in factored form
            std::vector<CVec *> U, W;
            std::vector<cd> C;
            U.push_back(&f.ut), W.push_back(&f.w), C.push_back(rho);
            if (mod)
            {
                U.push_back(&f.u), W.push_back(&f.wx), C.push_back(rho);
                U.push_back(&f.u), W.push_back(&f.wz), C.push_back(rho);
            }
            // d mu / d Re rho = u w, d / d Im rho = j u w
            U.push_back(&f.u), W.push_back(&f.w), C.push_back(1.0);
            U.push_back(&f.u), W.push_back(&f.w), C.push_back(cd(0.0, 1.0));

            // r = Y - rho u w^T; J^H r needs u_i^H Y conj(w_i) and the model overlap
            RMat H(np, np);
            RVec g(np);
            for (int a = 0; a < np; ++a)
            {
                for (int b = a; b < np; ++b)
                {
                    const cd v = std::conj(C[a]) * C[b] * kernels::dotc(U[a]->data(), U[b]->data(), U[a]->size()) *
                                 kernels::dotc(W[a]->data(), W[b]->data(), W[a]->size());
                    H(a, b) = H(b, a) = v.real();
                }
                CVec q;
                kernels::gemv_n(Y, W[a]->conjugate(), q);
                const cd uyw = kernels::dotc(U[a]->data(), q.data(), q.size());
                const cd umw = kernels::dotc(U[a]->data(), f.u.data(), f.u.size()) *
                               kernels::dotc(W[a]->data(), f.w.data(), f.w.size()) * rho;
                g[a] = (std::conj(C[a]) * (uyw - umw)).real();
            }
            // LM loop on the damping factor
            bool improved = false;
            RVec step;
            for (int tries = 0; tries < 30; ++tries)
            {
                RMat Hd = H;
                for (int i = 0; i < np; ++i)
                    Hd(i, i) += lambda * std::max(H(i, i), 1e-300);
                step = Hd.ldlt().solve(g);
                const double nr = range + step[0];
                SpatialFreq nsf = sf;
                int o = 1;
                if (mod)
                {
                    nsf.xi += step[1];
                    nsf.zeta += step[2];
                    o = 3;
                }
                const cd nrho = rho + cd(step[o], step[o + 1]);
                PathFactors nf = path_factors(ctx, nr, nsf);
                const double nc = residual(yy, Y, nf, nrho);
                if (nc <= cost)
                {
                    range = nr;
                    sf = nsf;
                    rho = nrho;
                    f = std::move(nf);
                    cost = nc;
                    lambda = std::max(lambda / 10.0, 1e-12);
                    improved = true;
                    break;
                }
                lambda *= 10.0;
            }
            // scaled step size: meters, unitless spatial frequency, gain relative to |rho|
            double sn = std::abs(step[0]);
            if (mod)
                sn = std::max({sn, std::abs(step[1]), std::abs(step[2])});
            const int o = mod ? 3 : 1;
            sn = std::max(sn, std::hypot(step[o], step[o + 1]) / std::max(std::abs(rho), 1e-300));
            if (!improved || sn < 1e-10)
            {
                converged = true;
                ++it;
                break;
            }
        }
        // the model is periodic in tau (1/df) and, up to a gain sign, in xi/zeta (lambda/s):
        // report the representative inside the search domain
        const double period = kSpeedOfLight / ctx.radio.subcarrier_spacing_hz;
        range -= period * std::floor(range / period);
        if (mod)
        {
            const double s = ctx.Z.cols() > 1 ? spacing_of(ctx.Z) : ctx.wavelength / 2.0;
            const double P = ctx.wavelength / s;
            sf.xi -= P * std::floor((sf.xi + 0.5 * P) / P);
            sf.zeta -= P * std::floor((sf.zeta + 0.5 * P) / P);
        }
        PathEstimate e = concentrated_fit(Y, ctx, range / kSpeedOfLight, sf);
        e.iterations = it;
        e.converged = converged && std::isfinite(e.residual);
        if (!(e.residual <= cost0 * (1.0 + 1e-12) + 1e-300) || !std::isfinite(e.tau))
        {
            // divergence guard: fall back to the initialization
            start.converged = false;
            start.iterations = it;
            return start;
        }
        return e;
    }

    SfWindow prior_window(const Scenario &s, int l, const Vec3 &tx, const Vec3 &rx, double sigma, double k)
    {
        const RisAnchor &a = s.anchors.at(l);
        const Mat3 R = a.rotation();
        SfWindow w{1e9, -1e9, 1e9, -1e9};
        // corners of the +-k sigma boxes around both UEs
        for (int ct = 0; ct < 8; ++ct)
            for (int cr = 0; cr < 8; ++cr)
            {
                Vec3 pt = tx, pr = rx;
                for (int i = 0; i < 3; ++i)
                {
                    pt[i] += ((ct >> i) & 1 ? 1.0 : -1.0) * k * sigma;
                    pr[i] += ((cr >> i) & 1 ? 1.0 : -1.0) * k * sigma;
                }
                const SpatialFreq f =
                    spatial_frequencies(local_direction(pt, a.position, R), local_direction(pr, a.position, R));
                w.xi_lo = std::min(w.xi_lo, f.xi);
                w.xi_hi = std::max(w.xi_hi, f.xi);
                w.zeta_lo = std::min(w.zeta_lo, f.zeta);
                w.zeta_hi = std::max(w.zeta_hi, f.zeta);
            }
        return w;
    }

    ChannelEstimate estimate_channel(const CMat &Y, const Scenario &s, const Codebook &cb, const RVec &delta,
                                   const EstimatorOptions &opt)
    {
        ChannelEstimate out;
        out.has_los = !s.los_blocked;
        const auto sep = separate_paths(Y, cb.block, cb.base_length);
        const CVec pilots = pilot_symbols(s.radio, s.seed);
        const double lam = s.radio.wavelength();
        const RVec d1 = delta.head(cb.base_length);
        std::vector<CMat> base(s.n_ris());
        for (int l = 0; l < s.n_ris(); ++l)
            base[l] = cb.base(l);

        auto ctx_for = [&](int l)
        {
            PathContext c;
            c.radio = s.radio;
            c.power_w = s.radio.power_w();
            c.pilots = pilots;
            c.delta = d1;
            if (l >= 0)
            {
                c.profiles = &base[l];
                c.Z = element_positions(s.anchors[l], lam);
            }
            c.wavelength = lam;
            return c;
        };

        if (out.has_los)
        {
            const PathContext c = ctx_for(-1);
            const double tau = coarse_delay(sep[0], pilots, s.radio, opt.nfft, false);
            out.coarse.push_back(concentrated_fit(sep[0], c, tau, {}));
            out.refined.push_back(opt.refine ? refine_channel_mle(sep[0], c, out.coarse.back()) : out.coarse.back());
        }
        for (int l = 0; l < s.n_ris(); ++l)
        {
            const PathContext c = ctx_for(l);
            const CMat &P = sep[l + 1];
            const double tau = coarse_delay(P, pilots, s.radio, opt.nfft, true);
            std::optional<SfWindow> win;
            if (l < static_cast<int>(opt.windows.size()))
                win = opt.windows[l];
            const SfEstimate sfe =
                coarse_spatial_freq(P, base[l], s.anchors[l], lam, pilots, s.radio, tau, opt.sf_step, win, d1,
                                    opt.sf_normalized);
            out.alias_flags.push_back(sfe.alias_possible);
            out.coarse.push_back(concentrated_fit(P, c, tau, sfe.sf));
            out.refined.push_back(opt.refine ? refine_channel_mle(P, c, out.coarse.back()) : out.coarse.back());
        }
        return out;
    }

    std::string estimate_to_json(const ChannelEstimate &e)
    {
        using nlohmann::json;
        auto one = [](const PathEstimate &p)
        {
            return json{{"tau_s", p.tau},
                        {"range_m", p.tau * kSpeedOfLight},
                        {"xi", p.sf.xi},
                        {"zeta", p.sf.zeta},
                        {"gain_re", p.gain.real()},
                        {"gain_im", p.gain.imag()},
                        {"residual", p.residual},
                        {"iterations", p.iterations},
                        {"converged", p.converged}};
        };
        json j;
        j["has_los"] = e.has_los;
        j["paths"] = json::array();
        for (std::size_t i = 0; i < e.coarse.size(); ++i)
        {
            json p;
            p["index"] = e.has_los ? i : i + 1;
            p["coarse"] = one(e.coarse[i]);
            p["refined"] = one(e.refined[i]);
            const int l = static_cast<int>(i) - (e.has_los ? 1 : 0);
            p["alias_possible"] = l >= 0 ? static_cast<bool>(e.alias_flags[l]) : false;
            j["paths"].push_back(p);
        }
        return j.dump(2);
    }
}
