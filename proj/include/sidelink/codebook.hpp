// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef SIDELINK_CODEBOOK_HPP
#define SIDELINK_CODEBOOK_HPP

#include "sidelink/scenario.hpp"
#include <random>
#include <string>
#include <vector>

namespace sidelink
{
    enum class CodebookKind
    {
        random,
        dir,
        dir_der
    };

    enum class SlotKind
    {
        random,
        dir,
        der_y,
        der_z
    };

    CodebookKind parse_codebook_kind(const std::string &s);
    std::string to_string(CodebookKind k);

    struct Codebook
    {
        CodebookKind kind = CodebookKind::random;
        std::vector<CMat> profiles; // per anchor, N x G, unit modulus
        CMat block;                 // Gamma x (L+1)
        int block_count = 1;        // Gamma
        int base_length = 0;        // G~ = G / Gamma
        std::vector<SlotKind> slots; // length G~

        // Block 1 of anchor l (0-based): the base profiles, since b_{l,1} = 1
        CMat base(int l) const { return profiles.at(l).leftCols(base_length); }
    };

    struct PriorState
    {
        RVec mean; // 7: p_T, p_R, B
        RMat cov;  // 7 x 7, SPD

        static PriorState isotropic(const Scenario &s, double sigma_m);
    };

    // Draws `count` states from the prior; throws ConfigError on a non-SPD covariance
    std::vector<RVec> sample_prior(const PriorState &prior, int count, std::mt19937_64 &rng);

    // Smallest divisor of G that is >= L+1
    int default_block_count(int G, int L);

    CMat orthogonal_block_matrix(int gamma, int L);

    Codebook expand_orthogonal(const std::vector<CMat> &base, const CMat &block, CodebookKind kind = CodebookKind::random,
                               std::vector<SlotKind> slots = {});

    CMat random_codebook(const RisAnchor &anchor, int base_len, std::mt19937_64 &rng);

    CVec dir_beam(const RisAnchor &anchor, double wavelength, const Vec3 &p_tx, const Vec3 &p_rx);

    // DIR beam times -j k z_y (first) or -j k z_z (second), projected to unit modulus
    std::pair<CVec, CVec> der_beams(const RisAnchor &anchor, double wavelength, const Vec3 &p_tx, const Vec3 &p_rx);

    Codebook build_codebook(CodebookKind kind, const Scenario &s, const PriorState &prior, int gamma,
                            std::mt19937_64 &rng);

    // Codebook described by s.codebook, drawn from the scenario seed
    Codebook build_codebook(const Scenario &s);

    // DIR slots sqrt(3)/sqrt(1+2g^2), DER slots sqrt(3) g/sqrt(1+2g^2); other slots 1
    RVec power_vector_from_gamma(double gamma_p, const Codebook &cb);

    // ---- power-control optimization -------------------------------------

    // Per-slot state FIMs at each prior sample: S[s][g] for base slot g.
    // Samples whose uniform-power FIM is singular are dropped.
    struct SlotFims
    {
        std::vector<std::vector<RMat>> S;
        std::vector<int> kept; // indices into the sample list
        int dropped = 0;
    };
    SlotFims slot_fims(const Scenario &s, const Codebook &cb, const std::vector<RVec> &samples);

    // Mean PEB_R^2 over the kept samples for base-slot powers gamma (length G~, sum G~)
    double allocation_objective(const SlotFims &sf, const RVec &gamma_base, RVec *grad = nullptr);

    struct GammaResult
    {
        double gamma_p = 1.0;
        double objective = 0.0;
        int evaluations = 0;
    };
    GammaResult optimize_gamma(const Scenario &s, const Codebook &cb, const std::vector<RVec> &samples,
                               double lo = 1e-2, double hi = 1e2);
    GammaResult optimize_gamma(const SlotFims &sf, const Codebook &cb, double lo = 1e-2, double hi = 1e2);

    struct PowerAllocOptions
    {
        int max_iterations = 3000;
        double tolerance = 1e-12;
        bool keep_history = false;
    };

    struct PowerAllocResult
    {
        RVec gamma;          // length G, block-periodic, sums to G
        RVec delta;          // sqrt(gamma)
        double objective = 0.0;
        double start_objective = 0.0;
        int iterations = 0;
        bool converged = false;
        std::vector<RVec> history; // full-length gamma iterates when requested
        std::vector<double> objective_history;
    };
    PowerAllocResult optimize_power_allocation(const Scenario &s, const Codebook &cb, const std::vector<RVec> &samples,
                                               const PowerAllocOptions &opt = {});
    PowerAllocResult optimize_power_allocation(const SlotFims &sf, const Codebook &cb, const PowerAllocOptions &opt = {});

    // Euclidean projection onto {x >= 0, sum x = z} (sort-based)
    RVec project_simplex(const RVec &v, double z);

    // Text export: one block per anchor, "anchor l N G" header then N rows of G phases [rad]
    void save_codebook(const Codebook &cb, const std::string &path);
    std::vector<CMat> load_codebook_profiles(const std::string &path);
}

#endif
