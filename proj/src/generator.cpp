#include "odyn/generator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace odyn {

void GenConfig::validate() const {
    if (num_actors < 2) throw std::invalid_argument("need at least 2 actors");
    if (num_actions < 1) throw std::invalid_argument("need at least 1 action");
    if (num_timesteps < 1) throw std::invalid_argument("need at least 1 timestep");
    if (interactions_per_actor < 1 || actions_per_actor < 1)
        throw std::invalid_argument("per-actor arc counts must be >= 1");
    scenario.params.validate();
}

int Rng::pick_weighted(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) return uniform_int(static_cast<int>(weights.size()));
    double r = uniform01() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        r -= weights[i];
        if (r < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;  // r landed on the total
}

LatentState init_latent(const GenConfig& config, Rng& rng) {
    LatentState latent;
    latent.initial_opinions.resize(config.num_actors);
    for (auto& x : latent.initial_opinions) x = rng.uniform(-1.0, 1.0);
    latent.action_centers.resize(config.num_actions);
    for (auto& w : latent.action_centers) w = rng.uniform(-1.0, 1.0);
    // half-widths centered on 0.5, matching the mode of the beta(8,8)
    // prior the estimator can apply
    latent.action_half_widths.resize(config.num_actions);
    for (auto& s : latent.action_half_widths) s = rng.uniform(0.3, 0.7);
    return latent;
}

StepInteractions generate_step_interactions(
    std::span<const double> opinions, const GenConfig& config, Rng& rng,
    std::span<const std::uint8_t> active) {
    const int n = static_cast<int>(opinions.size());
    const MacroParams& p = config.scenario.params;

    // population-level positive fraction over all ordered pairs, since no
    // arcs exist yet at draw time
    std::vector<OpinionPair> pairs;
    pairs.reserve(static_cast<std::size_t>(n) * (n - 1));
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
            if (u != v) pairs.push_back({u, v});
    const double alpha = positive_fraction(opinions, pairs, p);

    StepInteractions out;
    out.positive_fraction = alpha;
    out.arcs.reserve(static_cast<std::size_t>(n) * config.interactions_per_actor);
    std::vector<int> candidates;
    std::vector<double> weights;
    for (int u = 0; u < n; ++u) {
        candidates.clear();
        for (int v = 0; v < n; ++v) {
            if (v == u) continue;
            if (!active.empty() && !active[v]) continue;
            candidates.push_back(v);
        }
        if (candidates.empty()) continue;
        auto total_weight = [&](std::int8_t sign) {
            weights.clear();
            double total = 0.0;
            for (int v : candidates) {
                weights.push_back(kernel(opinions[u], opinions[v], sign, p));
                total += weights.back();
            }
            return total;
        };
        for (int k = 0; k < config.interactions_per_actor; ++k) {
            std::int8_t sign = rng.bernoulli(alpha) ? 1 : -1;
            double total = total_weight(sign);
            if (!(total > 0.0)) {
                // every kernel value underflowed: no candidate admissible
                // for this sign under a near-hard latitude. The target
                // rule is undefined there, so the draw is conditioned on
                // admissibility: take the other sign if it has weight,
                // otherwise keep the sign and use the least-violating
                // target (which lies in the neutral band).
                const double flipped = total_weight(static_cast<std::int8_t>(-sign));
                if (flipped > 0.0) {
                    sign = static_cast<std::int8_t>(-sign);
                    total = flipped;
                }
            }
            int choice;
            if (total > 0.0) {
                choice = rng.pick_weighted(weights);
            } else {
                choice = 0;
                for (std::size_t c = 1; c < candidates.size(); ++c) {
                    const double best =
                        std::abs(opinions[u] - opinions[candidates[choice]]);
                    const double d =
                        std::abs(opinions[u] - opinions[candidates[c]]);
                    if (sign > 0 ? d < best : d > best)
                        choice = static_cast<int>(c);
                }
            }
            out.arcs.push_back({u, candidates[choice], sign});
        }
    }
    return out;
}

std::vector<std::pair<int, int>> generate_step_actions(
    std::span<const double> opinions, std::span<const double> centers,
    std::span<const double> half_widths, const GenConfig& config, Rng& rng) {
    const int n = static_cast<int>(opinions.size());
    const MacroParams& p = config.scenario.params;
    std::vector<std::pair<int, int>> arcs;
    arcs.reserve(static_cast<std::size_t>(n) * config.actions_per_actor);
    std::vector<double> weights(centers.size());
    for (int v = 0; v < n; ++v) {
        for (std::size_t a = 0; a < centers.size(); ++a)
            weights[a] = action_kernel(opinions[v], centers[a], half_widths[a], p);
        for (int k = 0; k < config.actions_per_actor; ++k)
            arcs.emplace_back(v, rng.pick_weighted(weights));
    }
    return arcs;
}

namespace {

std::string padded_id(char prefix, int index, int count) {
    int width = 1;
    for (int c = count - 1; c >= 10; c /= 10) ++width;
    std::string digits = std::to_string(index);
    return prefix + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

std::pair<Trace, GroundTruth> generate_trace(const GenConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const MacroParams& p = config.scenario.params;

    Trace trace;
    trace.num_timesteps = config.num_timesteps;
    trace.actors.reserve(config.num_actors);
    for (int i = 0; i < config.num_actors; ++i)
        trace.actors.push_back(padded_id('u', i, config.num_actors));
    trace.actions.reserve(config.num_actions);
    for (int i = 0; i < config.num_actions; ++i)
        trace.actions.push_back(padded_id('a', i, config.num_actions));

    GroundTruth truth;
    truth.latent = init_latent(config, rng);

    std::vector<double> x = truth.latent.initial_opinions;
    for (int t = 0; t < config.num_timesteps; ++t) {
        truth.trajectory.push_back(x);

        StepInteractions step = generate_step_interactions(x, config, rng);
        truth.positive_fraction_series.push_back(step.positive_fraction);
        for (const auto& arc : step.arcs) {
            trace.interactions.push_back({t, arc.u, arc.v});
            truth.latent.signs.push_back(arc.sign);
        }

        for (auto [v, a] : generate_step_actions(x, truth.latent.action_centers,
                                                 truth.latent.action_half_widths,
                                                 config, rng))
            trace.actor_actions.push_back({t, v, a});

        x = update_opinions(x, step.arcs, p);
    }
    return {std::move(trace), std::move(truth)};
}

}  // namespace odyn
