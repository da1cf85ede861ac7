// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#include "sidelink/locator.hpp"
#include <json.hpp>
#include <cmath>
#include <limits>

namespace sidelink
{
    namespace
    {
        constexpr double kInf = std::numeric_limits<double>::infinity();

        double wrap(double v, double period)
        {
            return v - period * std::round(v / period);
        }
    }

    std::vector<AnchorPose> anchor_poses(const Scenario &s)
    {
        std::vector<AnchorPose> out;
        for (int l = 0; l < s.n_ris(); ++l)
            out.push_back({s.anchors[l].position, s.anchors[l].rotation(), s.radio.wavelength() / s.spacing(l)});
        return out;
    }

    RVec EtaN::vector() const
    {
        RVec v(size());
        int o = 0;
        if (has_los)
            v[o++] = range0;
        for (std::size_t l = 0; l < range.size(); ++l)
        {
            v[o++] = range[l];
            v[o++] = xi[l];
            v[o++] = zeta[l];
        }
        return v;
    }

    EtaN eta_n_truth(const Scenario &s)
    {
        const auto a = anchor_poses(s);
        const RVec v = predict_eta_n(a, !s.los_blocked, s.tx, s.rx, s.radio.clock_offset_m);
        EtaN e;
        e.has_los = !s.los_blocked;
        int o = 0;
        if (e.has_los)
            e.range0 = v[o++];
        for (std::size_t l = 0; l < a.size(); ++l)
        {
            e.range.push_back(v[o++]);
            e.xi.push_back(v[o++]);
            e.zeta.push_back(v[o++]);
        }
        return e;
    }

    std::optional<Vec3> candidate_rx_direction(const AnchorPose &a, const Vec3 &ptx, double xi, double zeta)
    {
        const Vec3 tt = local_direction(ptx, a.position, a.rotation);
        const double t2 = xi - tt.y(), t3 = zeta - tt.z();
        const double rad = 1.0 - t2 * t2 - t3 * t3;
        if (rad < 0.0)
            return std::nullopt;
        return Vec3(std::sqrt(rad), t2, t3);
    }

    std::optional<Vec3> closest_point(const Vec3 &pi, const Vec3 &ti, const Vec3 &pj, const Vec3 &tj)
    {
        const Vec3 n = tj.cross(ti);
        const double nn = n.norm();
        if (nn < 1e-9)
            return std::nullopt;
        // [t_i, -t_j] [r_ij, r_ji]^T = p_j - p_i - d (t_j x t_i), solved in least squares
        Eigen::Matrix<double, 3, 2> Q;
        Q.col(0) = ti;
        Q.col(1) = -tj;
        const double d = n.dot(pj - pi) / nn;
        const Vec3 rhs = pj - pi - d * n / nn;
        const Eigen::Vector2d r = (Q.transpose() * Q).ldlt().solve(Q.transpose() * rhs);
        return Vec3(pi + r[0] * ti);
    }

    std::optional<Vec3> triangulate_rx(const std::vector<Vec3> &pos, const std::vector<Vec3> &dir, const RMat &w)
    {
        const int L = static_cast<int>(pos.size());
        Vec3 acc = Vec3::Zero();
        double wsum = 0.0;
        for (int i = 0; i < L; ++i)
            for (int j = i + 1; j < L; ++j)
            {
                const double wij = w.size() ? w(i, j) : 2.0 / (L * (L - 1.0));
                if (wij == 0.0)
                    continue;
                const auto p = closest_point(pos[i], dir[i], pos[j], dir[j]);
                if (!p)
                    continue;
                acc += wij * *p;
                wsum += wij;
            }
        if (!(wsum > 0.0))
            return std::nullopt;
        return Vec3(acc / wsum);
    }

    double candidate_cost(const EtaN &eta, const std::vector<AnchorPose> &anchors, const Vec3 &ptx,
                          const SearchSpec &spec, Vec3 *rx_out, double *b_out)
    {
        const int L = static_cast<int>(anchors.size());
        std::vector<Vec3> pos(L), dir(L);
        for (int l = 0; l < L; ++l)
        {
            if ((ptx - anchors[l].position).norm() == 0.0)
                return kInf;
            // unwrapped value first, then the aliases one period away
            std::optional<Vec3> t;
            const double P = anchors[l].sf_period;
            for (int mx : {0, -1, 1})
            {
                for (int mz : {0, -1, 1})
                {
                    t = candidate_rx_direction(anchors[l], ptx, eta.xi[l] + mx * P, eta.zeta[l] + mz * P);
                    if (t)
                        break;
                }
                if (t)
                    break;
            }
            if (!t)
                return kInf;
            pos[l] = anchors[l].position;
            dir[l] = anchors[l].rotation * *t;
        }
        const auto prx = triangulate_rx(pos, dir, spec.pair_weights);
        if (!prx)
            return kInf;
        double B;
        int skip = -1;
        if (eta.has_los)
            B = eta.range0 - (*prx - ptx).norm();
        else
        {
            // clock offset from the shortest RIS path; that path is left out of the cost
            skip = 0;
            for (int l = 1; l < L; ++l)
                if (eta.range[l] < eta.range[skip])
                    skip = l;
            B = eta.range[skip] - (ptx - anchors[skip].position).norm() - (*prx - anchors[skip].position).norm();
        }
        double J = 0.0;
        for (int l = 0; l < L; ++l)
        {
            if (l == skip)
                continue;
            const double wl = spec.anchor_weights.size() ? spec.anchor_weights[l] : 1.0;
            J += wl * std::abs(B + (ptx - anchors[l].position).norm() + (*prx - anchors[l].position).norm() -
                               eta.range[l]);
        }
        if (rx_out)
            *rx_out = *prx;
        if (b_out)
            *b_out = B;
        return J;
    }

    PositionFix coarse_locate(const EtaN &eta, const std::vector<AnchorPose> &anchors, const SearchSpec &spec)
    {
        if (!(spec.step > 0.0))
            throw ConfigError("coarse_locate: step must be positive");
        const int n = static_cast<int>(std::floor(spec.half_extent / spec.step + 1e-9));
        PositionFix best;
        best.cost = kInf;
        // linear scan in x-major order; strict < keeps the lowest index on ties
        for (int ix = -n; ix <= n; ++ix)
            for (int iy = -n; iy <= n; ++iy)
                for (int iz = -n; iz <= n; ++iz)
                {
                    const Vec3 c = spec.center + spec.step * Vec3(ix, iy, iz);
                    Vec3 rx;
                    double B;
                    const double J = candidate_cost(eta, anchors, c, spec, &rx, &B);
                    if (J < best.cost)
                    {
                        best.cost = J;
                        best.tx = c;
                        best.rx = rx;
                        best.clock_offset_m = B;
                        best.ok = true;
                    }
                }
        if (!best.ok)
            best.flags = "no_feasible_candidate";
        return best;
    }

    RVec predict_eta_n(const std::vector<AnchorPose> &anchors, bool has_los, const Vec3 &tx, const Vec3 &rx, double B)
    {
        const int L = static_cast<int>(anchors.size());
        RVec v((has_los ? 1 : 0) + 3 * L);
        int o = 0;
        if (has_los)
            v[o++] = (tx - rx).norm() + B;
        for (int l = 0; l < L; ++l)
        {
            const Vec3 tT = local_direction(tx, anchors[l].position, anchors[l].rotation);
            const Vec3 tR = local_direction(rx, anchors[l].position, anchors[l].rotation);
            v[o++] = (tx - anchors[l].position).norm() + (rx - anchors[l].position).norm() + B;
            v[o++] = tT.y() + tR.y();
            v[o++] = tT.z() + tR.z();
        }
        return v;
    }

    namespace
    {
        // d eta_N / d s as a (size x 7) matrix (numerator layout for the solver)
        RMat eta_n_jacobian(const std::vector<AnchorPose> &anchors, bool has_los, const Vec3 &tx, const Vec3 &rx)
        {
            const int L = static_cast<int>(anchors.size());
            RMat J = RMat::Zero((has_los ? 1 : 0) + 3 * L, 7);
            int o = 0;
            if (has_los)
            {
                const Vec3 u = (tx - rx).normalized();
                J.block<1, 3>(o, 0) = u.transpose();
                J.block<1, 3>(o, 3) = -u.transpose();
                J(o, 6) = 1.0;
                ++o;
            }
            for (int l = 0; l < L; ++l, o += 3)
            {
                const Vec3 vT = tx - anchors[l].position, vR = rx - anchors[l].position;
                const double dT = vT.norm(), dR = vR.norm();
                const Vec3 uT = vT / dT, uR = vR / dR;
                const Mat3 Rt = anchors[l].rotation.transpose();
                const Mat3 MT = Rt * (Mat3::Identity() - uT * uT.transpose()) / dT;
                const Mat3 MR = Rt * (Mat3::Identity() - uR * uR.transpose()) / dR;
                J.block<1, 3>(o, 0) = uT.transpose();
                J.block<1, 3>(o, 3) = uR.transpose();
                J(o, 6) = 1.0;
                J.block<1, 3>(o + 1, 0) = MT.row(1);
                J.block<1, 3>(o + 1, 3) = MR.row(1);
                J.block<1, 3>(o + 2, 0) = MT.row(2);
                J.block<1, 3>(o + 2, 3) = MR.row(2);
            }
            return J;
        }
    }

    PositionFix refine_locate(const PositionFix &coarse, const EtaN &eta, const std::vector<AnchorPose> &anchors,
                              const RMat &sigma, double divergence_radius_m)
    {
        PositionFix out = coarse;
        out.refined = true;
        if (!coarse.ok || !coarse.tx.allFinite() || !coarse.rx.allFinite() || !std::isfinite(coarse.clock_offset_m))
        {
            out.ok = false;
            out.flags = "coarse_fix_invalid";
            return out;
        }
        const RVec meas = eta.vector();
        const int m = static_cast<int>(meas.size());
        // whitening W with W^T W = Sigma^-1
        RMat Wt = RMat::Identity(m, m);
        if (sigma.size())
        {
            if (sigma.rows() != m || sigma.cols() != m)
                throw ConfigError("refine_locate: Sigma must be " + std::to_string(m) + " x " + std::to_string(m));
            Eigen::LLT<RMat> llt(sigma);
            if (llt.info() != Eigen::Success)
                throw ConfigError("refine_locate: Sigma must be positive definite");
            Wt = llt.matrixL().solve(RMat::Identity(m, m));
        }
        auto periods = [&](int i) -> double
        {
            const int o = i - (eta.has_los ? 1 : 0);
            if (o < 0 || o % 3 == 0)
                return 0.0;
            return anchors[o / 3].sf_period;
        };
        auto resid = [&](const RVec &s, RVec &r) -> bool
        {
            try
            {
                const RVec pred = predict_eta_n(anchors, eta.has_los, s.segment<3>(0), s.segment<3>(3), s[6]);
                r = meas - pred;
                for (int i = 0; i < m; ++i)
                    if (const double P = periods(i); P > 0.0)
                        r[i] = wrap(r[i], P);
                r = Wt * r;
                return r.allFinite();
            }
            catch (const DomainError &)
            {
                return false;
            }
        };

        RVec s(7);
        s << coarse.tx, coarse.rx, coarse.clock_offset_m;
        RVec r;
        if (!resid(s, r))
        {
            out.ok = false;
            out.flags = "coarse_fix_degenerate";
            return out;
        }
        double cost = r.squaredNorm();
        double lambda = 1e-3;
        int it = 0;
        bool converged = false;
        for (; it < 100; ++it)
        {
            const RMat J = Wt * eta_n_jacobian(anchors, eta.has_los, s.segment<3>(0), s.segment<3>(3));
            const RMat H = J.transpose() * J;
            const RVec g = J.transpose() * r;
            bool improved = false;
            RVec step = RVec::Zero(7);
            for (int tries = 0; tries < 40; ++tries)
            {
                RMat Hd = H;
                for (int i = 0; i < 7; ++i)
                    Hd(i, i) += lambda * std::max(H(i, i), 1e-12);
                step = Hd.ldlt().solve(g);
                const RVec sn = s + step;
                RVec rn;
                if (resid(sn, rn) && rn.squaredNorm() <= cost)
                {
                    s = sn;
                    r = rn;
                    cost = rn.squaredNorm();
                    lambda = std::max(lambda / 10.0, 1e-15);
                    improved = true;
                    break;
                }
                lambda *= 10.0;
            }
            if (!improved || step.cwiseAbs().maxCoeff() < 1e-10)
            {
                converged = true;
                ++it;
                break;
            }
        }
        out.tx = s.segment<3>(0);
        out.rx = s.segment<3>(3);
        out.clock_offset_m = s[6];
        out.cost = cost;
        out.iterations = it;
        out.ok = s.allFinite();
        if (!converged)
            out.flags = "max_iterations";
        if (!out.ok || (out.tx - coarse.tx).norm() > divergence_radius_m ||
            (out.rx - coarse.rx).norm() > divergence_radius_m)
        {
            const int iters = out.iterations;
            out = coarse;
            out.refined = true;
            out.ok = false;
            out.iterations = iters;
            out.flags = "refinement_diverged";
        }
        return out;
    }

    RMat cost_landscape(const EtaN &eta, const std::vector<AnchorPose> &anchors, const std::vector<double> &xs,
                        const std::vector<double> &ys, double z, const SearchSpec &spec)
    {
        RMat out(ys.size(), xs.size());
        for (std::size_t iy = 0; iy < ys.size(); ++iy)
            for (std::size_t ix = 0; ix < xs.size(); ++ix)
            {
                try
                {
                    out(iy, ix) = candidate_cost(eta, anchors, Vec3(xs[ix], ys[iy], z), spec);
                }
                catch (const DomainError &)
                {
                    out(iy, ix) = kInf;
                }
            }
        return out;
    }

    std::string fix_to_json(const PositionFix &f)
    {
        using nlohmann::json;
        json j{{"tx_m", {f.tx[0], f.tx[1], f.tx[2]}},
               {"rx_m", {f.rx[0], f.rx[1], f.rx[2]}},
               {"clock_offset_m", f.clock_offset_m},
               {"cost", f.cost},
               {"stage", f.refined ? "refined" : "coarse"},
               {"ok", f.ok},
               {"iterations", f.iterations},
               {"flags", f.flags}};
        return j.dump(2);
    }
}
