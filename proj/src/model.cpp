#include "odyn/model.hpp"

#include <algorithm>
#include <cmath>

namespace odyn {

void MacroParams::validate() const {
    if (!(0.0 <= eps_plus && eps_plus < eps_minus && eps_minus <= 2.0)) {
        throw std::invalid_argument(
            "macro params require 0 <= eps_plus < eps_minus <= 2, got eps_plus=" +
            std::to_string(eps_plus) + " eps_minus=" + std::to_string(eps_minus));
    }
    if (!(mu_plus > 0.0) || !(mu_minus > 0.0)) {
        throw std::invalid_argument("influence speeds mu_plus, mu_minus must be > 0");
    }
    if (!(rho_interactions > 0.0) || !(rho_actions > 0.0)) {
        throw std::invalid_argument("sigmoid steepnesses must be > 0");
    }
}

namespace {

MacroParams preset_params(double eps_plus, double eps_minus) {
    MacroParams p;
    p.eps_plus = eps_plus;
    p.eps_minus = eps_minus;
    return p;  // mu and rho keep the shared defaults
}

}  // namespace

const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names = {
        "balanced", "high_contrast", "high_acceptance", "non_commitment"};
    return names;
}

Scenario scenario_preset(const std::string& name) {
    if (name == "balanced") return {name, preset_params(0.6, 1.2)};
    if (name == "high_contrast") return {name, preset_params(0.4, 0.6)};
    if (name == "high_acceptance") return {name, preset_params(1.2, 1.6)};
    if (name == "non_commitment") return {name, preset_params(0.2, 1.6)};
    std::string valid;
    for (const auto& n : scenario_names()) {
        if (!valid.empty()) valid += ", ";
        valid += n;
    }
    throw DataError("unknown scenario '" + name + "' (valid: " + valid + ")");
}

void Trace::validate() const {
    for (std::size_t i = 0; i < interactions.size(); ++i) {
        const auto& arc = interactions[i];
        if (arc.t < 0 || arc.t >= num_timesteps)
            throw DataError("interaction arc " + std::to_string(i) +
                            ": timestep " + std::to_string(arc.t) +
                            " outside [0, " + std::to_string(num_timesteps) + ")");
        if (arc.u < 0 || arc.u >= num_actors() || arc.v < 0 || arc.v >= num_actors())
            throw DataError("interaction arc " + std::to_string(i) +
                            ": actor index out of range");
    }
    for (std::size_t i = 0; i < actor_actions.size(); ++i) {
        const auto& arc = actor_actions[i];
        if (arc.t < 0 || arc.t >= num_timesteps)
            throw DataError("action arc " + std::to_string(i) + ": timestep " +
                            std::to_string(arc.t) + " outside [0, " +
                            std::to_string(num_timesteps) + ")");
        if (arc.v < 0 || arc.v >= num_actors())
            throw DataError("action arc " + std::to_string(i) +
                            ": actor index out of range");
        if (arc.a < 0 || arc.a >= num_actions())
            throw DataError("action arc " + std::to_string(i) +
                            ": action index out of range");
    }
}

TraceView::TraceView(const Trace& trace)
    : interactions_at(trace.num_timesteps), actions_at(trace.num_timesteps) {
    for (std::size_t i = 0; i < trace.interactions.size(); ++i)
        interactions_at[trace.interactions[i].t].push_back(static_cast<int>(i));
    for (std::size_t i = 0; i < trace.actor_actions.size(); ++i)
        actions_at[trace.actor_actions[i].t].push_back(static_cast<int>(i));
}

double sigmoid(double x, double rho) { return 1.0 / (1.0 + std::exp(-rho * x)); }

double log_sigmoid(double x, double rho) {
    const double z = rho * x;
    // -softplus(-z), split to avoid overflow on either side
    if (z >= 0.0) return -std::log1p(std::exp(-z));
    return z - std::log1p(std::exp(z));
}

double acceptance_kernel(double x_u, double x_v, const MacroParams& p) {
    ++instrumentation::kernel_evals;
    return sigmoid(p.eps_plus - std::abs(x_u - x_v), p.rho_interactions);
}

double contrast_kernel(double x_u, double x_v, const MacroParams& p) {
    ++instrumentation::kernel_evals;
    return sigmoid(std::abs(x_u - x_v) - p.eps_minus, p.rho_interactions);
}

double action_kernel(double x, double center, double half_width,
                     const MacroParams& p) {
    ++instrumentation::kernel_evals;
    return sigmoid(half_width - std::abs(x - center), p.rho_actions);
}

double kernel(double x_u, double x_v, std::int8_t sign, const MacroParams& p) {
    return sign > 0 ? acceptance_kernel(x_u, x_v, p) : contrast_kernel(x_u, x_v, p);
}

double positive_fraction(std::span<const double> opinions,
                         std::span<const OpinionPair> pairs,
                         const MacroParams& p) {
    std::size_t accept = 0;
    std::size_t contrast = 0;
    for (const auto& pair : pairs) {
        const double d = std::abs(opinions[pair.u] - opinions[pair.v]);
        if (d < p.eps_plus)
            ++accept;
        else if (d > p.eps_minus)
            ++contrast;
    }
    if (accept + contrast == 0) return 0.5;  // all pairs neutral
    return static_cast<double>(accept) / static_cast<double>(accept + contrast);
}

SignedUpdateMatrix build_update_matrix(int num_actors,
                                       std::span<const SignedArc> arcs,
                                       const MacroParams& p) {
    std::vector<SignedArc> sorted(arcs.begin(), arcs.end());
    for (const auto& arc : sorted) {
        if (arc.sign != 1 && arc.sign != -1)
            throw DataError("arc (" + std::to_string(arc.u) + ", " +
                            std::to_string(arc.v) + ") has no sign assigned");
        if (arc.u < 0 || arc.u >= num_actors || arc.v < 0 || arc.v >= num_actors)
            throw DataError("arc references unknown actor index " +
                            std::to_string(arc.u < 0 || arc.u >= num_actors
                                               ? arc.u
                                               : arc.v));
    }
    std::sort(sorted.begin(), sorted.end(), [](const SignedArc& a, const SignedArc& b) {
        if (a.u != b.u) return a.u < b.u;
        if (a.v != b.v) return a.v < b.v;
        return a.sign < b.sign;
    });

    SignedUpdateMatrix m;
    m.num_actors = num_actors;
    for (const auto& arc : sorted) {
        const double rate = arc.sign > 0 ? p.mu_plus : -p.mu_minus;
        if (!m.entries.empty()) {
            auto& last = m.entries.back();
            if (last.src == arc.u && last.dst == arc.v && last.rate == rate) {
                ++last.multiplicity;
                continue;
            }
        }
        m.entries.push_back({arc.u, arc.v, rate, 1});
    }
    return m;
}

std::vector<double> apply_update_step(std::span<const double> opinions,
                                      const SignedUpdateMatrix& m) {
    if (static_cast<int>(opinions.size()) != m.num_actors)
        throw std::invalid_argument("opinion vector size " +
                                    std::to_string(opinions.size()) +
                                    " does not match matrix dimension " +
                                    std::to_string(m.num_actors));
    std::vector<double> delta(opinions.size(), 0.0);
    for (const auto& e : m.entries) {
        // applied once per occurrence so the accumulation sequence is
        // bit-identical to the per-arc update loop in canonical order
        const double contribution = e.rate * (opinions[e.src] - opinions[e.dst]);
        for (int k = 0; k < e.multiplicity; ++k) delta[e.dst] += contribution;
    }
    std::vector<double> next(opinions.size());
    for (std::size_t v = 0; v < opinions.size(); ++v)
        next[v] = clip_opinion(opinions[v] + delta[v]);
    return next;
}

std::vector<double> update_opinions(std::span<const double> opinions,
                                    std::span<const SignedArc> arcs,
                                    const MacroParams& p) {
    return apply_update_step(opinions,
                             build_update_matrix(static_cast<int>(opinions.size()),
                                                 arcs, p));
}

std::vector<double> propagate(std::vector<double> initial_opinions,
                              std::span<const SignedUpdateMatrix> matrices) {
    std::vector<double> x = std::move(initial_opinions);
    for (const auto& m : matrices) x = apply_update_step(x, m);
    return x;
}

Propagation propagate_trajectory(std::vector<double> initial_opinions,
                                 std::span<const SignedUpdateMatrix> matrices) {
    Propagation out;
    out.states.reserve(matrices.size() + 1);
    out.states.push_back(std::move(initial_opinions));
    for (const auto& m : matrices) {
        const auto& x = out.states.back();
        if (static_cast<int>(x.size()) != m.num_actors)
            throw std::invalid_argument("opinion vector size does not match matrix");
        std::vector<double> delta(x.size(), 0.0);
        for (const auto& e : m.entries) {
            const double contribution = e.rate * (x[e.src] - x[e.dst]);
            for (int k = 0; k < e.multiplicity; ++k) delta[e.dst] += contribution;
        }
        std::vector<double> next(x.size());
        std::vector<std::uint8_t> clipped(x.size(), 0);
        for (std::size_t v = 0; v < x.size(); ++v) {
            const double raw = x[v] + delta[v];
            next[v] = clip_opinion(raw);
            clipped[v] = (raw < kOpinionMin || raw > kOpinionMax) ? 1 : 0;
        }
        out.states.push_back(std::move(next));
        out.clipped.push_back(std::move(clipped));
    }
    return out;
}

std::vector<double> backpropagate_opinion_gradient(
    std::span<const SignedUpdateMatrix> matrices, const Propagation& forward,
    std::vector<double> grad_final) {
    std::vector<double> g = std::move(grad_final);
    for (std::size_t step = matrices.size(); step-- > 0;) {
        const auto& mask = forward.clipped[step];
        for (std::size_t v = 0; v < g.size(); ++v)
            if (mask[v]) g[v] = 0.0;  // clamp subgradient
        // multiply by the transposed step Jacobian:
        // x'_v = x_v + sum_u M[u][v] (x_u - x_v)
        std::vector<double> prev = g;
        for (const auto& e : matrices[step].entries) {
            const double w = SignedUpdateMatrix::value(e);
            prev[e.src] += w * g[e.dst];
            prev[e.dst] -= w * g[e.dst];
        }
        g = std::move(prev);
    }
    return g;
}

double link_probability(int u, int v, std::span<const double> opinions,
                        std::int8_t sign, std::span<const int> eligible,
                        const MacroParams& p) {
    if (eligible.empty()) throw DataError("link_probability: empty eligible set");
    double total = 0.0;
    for (int cand : eligible) total += kernel(opinions[u], opinions[cand], sign, p);
    return kernel(opinions[u], opinions[v], sign, p) / total;
}

double action_probability(int v, int a, std::span<const double> opinions,
                          std::span<const double> centers,
                          std::span<const double> half_widths,
                          const MacroParams& p) {
    if (centers.empty()) throw DataError("action_probability: empty action set");
    double total = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i)
        total += action_kernel(opinions[v], centers[i], half_widths[i], p);
    return action_kernel(opinions[v], centers[a], half_widths[a], p) / total;
}

}  // namespace odyn
