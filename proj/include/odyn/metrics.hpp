// Recovery metrics for synthetic experiments (opinion/placement errors,
// sign classification, action-arc ranking) and likelihood-based selection
// among candidate macro-parameter scenarios.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "odyn/generator.hpp"
#include "odyn/inference.hpp"
#include "odyn/model.hpp"

namespace odyn {

struct MaeResult {
    double mae_x0 = 0.0;
    double mae_w = 0.0;
    bool flipped = false;  // whether the mirrored orientation was used
};

/// Mean absolute errors of initial opinions and action centers. The
/// estimate is mirror-symmetric, so both orientations are tried and the
/// one with the lower opinion error is reported; the same flip is applied
/// jointly to the centers.
MaeResult mae_opinions(const LatentState& estimated, const GroundTruth& truth);

/// F1 of the recovered interaction signs, with +1 as the positive class.
/// Both vectors must cover the same arc multiset.
double sign_f1(std::span<const std::int8_t> estimated,
               std::span<const std::int8_t> truth);

/// Average precision of separating the observed action arcs from an
/// equal-size uniform sample of non-occurring (actor, action, timestep)
/// triples, both scored by the action probability under the estimated
/// latent state. Ties rank negatives first. Sampling is seeded and
/// draws with replacement; throws DataError when no negative triples
/// exist.
double action_link_ap(const Trace& trace, const LatentState& estimated,
                      const MacroParams& p, std::uint64_t seed);

struct EvalReport {
    double mae_x0 = 0.0;
    double mae_w = 0.0;
    double sign_f1 = 0.0;
    double action_ap = 0.0;
    bool sign_flipped = false;
};

EvalReport evaluate(const Trace& trace, const LatentState& estimated,
                    const GroundTruth& truth, const MacroParams& p,
                    std::uint64_t seed);

struct CandidateResult {
    Scenario scenario;
    double log_likelihood = 0.0;
    bool failed = false;
    int rank = 0;  // 1 = best; 0 for failed candidates
};

struct SelectionReport {
    std::vector<CandidateResult> candidates;  // in input order
    int chosen = -1;                          // index into candidates
    bool tie = false;                         // best likelihood shared
    std::vector<FitResult> fits;              // aligned with candidates
};

/// Fits the trace once per candidate scenario with the same restart
/// budget and ranks candidates by best-restart log-likelihood. Exact
/// likelihood ties keep candidate order and set the tie flag; failed
/// candidates are excluded from the ranking.
SelectionReport model_select(const Trace& trace,
                             std::span<const Scenario> candidates,
                             const FitConfig& config);

}  // namespace odyn
