// Synthetic trace generation: draws a ground-truth latent state and the
// observable interaction/action multigraphs from the stochastic process,
// recording everything the evaluation harness needs.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "odyn/model.hpp"

namespace odyn {

struct GenConfig {
    int num_actors = 30;
    int num_actions = 20;
    int num_timesteps = 10;
    int interactions_per_actor = 3;  // out-arcs per actor per step
    int actions_per_actor = 15;      // action arcs per actor per step
    Scenario scenario = scenario_preset("balanced");
    std::uint64_t seed = 0;

    void validate() const;  // throws std::invalid_argument
};

/// What the generator knows and the estimator has to recover.
struct GroundTruth {
    LatentState latent;
    std::vector<std::vector<double>> trajectory;  // rows x_0 .. x_{T-1}
    std::vector<double> positive_fraction_series;
};

/// Deterministic RNG wrapper. All draws go through hand-rolled
/// transformations of mt19937_64 output so that identical seeds give
/// identical streams on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
    int uniform_int(int n) {  // [0, n)
        return static_cast<int>(uniform01() * n) % n;
    }
    bool bernoulli(double p) { return uniform01() < p; }

    /// Index draw proportional to weights; uniform fallback when the
    /// total weight underflows to zero.
    int pick_weighted(std::span<const double> weights);

private:
    std::mt19937_64 engine_;
};

/// Draws initial opinions and action placements; signs start empty.
LatentState init_latent(const GenConfig& config, Rng& rng);

struct StepInteractions {
    std::vector<SignedArc> arcs;
    double positive_fraction = 0.0;
};

/// One timestep of interaction generation: per actor, per out-arc, draw a
/// sign (positive with the population-level positive fraction) and then a
/// target among the active actors, weighted by the sign's kernel.
/// An empty `active` mask means every actor is eligible; self-loops are
/// always excluded.
StepInteractions generate_step_interactions(
    std::span<const double> opinions, const GenConfig& config, Rng& rng,
    std::span<const std::uint8_t> active = {});

/// One timestep of action generation: per actor, `actions_per_actor`
/// independent draws from the action-affinity distribution.
std::vector<std::pair<int, int>> generate_step_actions(
    std::span<const double> opinions, std::span<const double> centers,
    std::span<const double> half_widths, const GenConfig& config, Rng& rng);

/// Full generative run: ground truth plus the observable trace, bit
/// reproducible for a fixed config.
std::pair<Trace, GroundTruth> generate_trace(const GenConfig& config);

}  // namespace odyn
