// Core opinion-dynamics kernel: bounded-confidence/backfire interaction
// kernels, opinion updates, and the signed-influence propagation used by
// both the trace generator and the EM estimator.

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace odyn {

// Error taxonomy, mapped to CLI exit codes (3 = data, 4 = numerical).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double kOpinionMin = -1.0;
inline constexpr double kOpinionMax = 1.0;

inline double clip_opinion(double x) {
    if (x < kOpinionMin) return kOpinionMin;
    if (x > kOpinionMax) return kOpinionMax;
    return x;
}

/// Rule constants of one interaction regime. eps_plus is the latitude of
/// acceptance (opinion distances below it make interactions persuasive),
/// eps_minus the latitude of contrast (distances above it backfire).
/// mu_plus / mu_minus are the attraction / repulsion speeds, and the rho
/// values are the sigmoid steepnesses of the soft latitude boundaries.
struct MacroParams {
    double eps_plus = 0.6;
    double eps_minus = 1.2;
    double mu_plus = 0.04;
    double mu_minus = 0.04;
    double rho_interactions = 8.0;
    double rho_actions = 16.0;

    void validate() const;  // throws std::invalid_argument
};

/// A named macro-parameter regime.
struct Scenario {
    std::string name;
    MacroParams params;
};

/// Preset registry: balanced, high_contrast, high_acceptance,
/// non_commitment. Throws DataError for unknown names, listing the valid
/// ones.
Scenario scenario_preset(const std::string& name);
const std::vector<std::string>& scenario_names();

struct InteractionArc {
    int t;  // timestep
    int u;  // source (influencer)
    int v;  // target (influenced)
    bool operator==(const InteractionArc&) const = default;
};

struct ActionArc {
    int t;  // timestep
    int v;  // actor
    int a;  // action
    bool operator==(const ActionArc&) const = default;
};

/// Observed data: two temporal multigraphs over discrete timesteps
/// [0, num_timesteps). Arcs are stored one entry per occurrence, so
/// repeated entries encode multiplicities.
struct Trace {
    int num_timesteps = 0;
    std::vector<std::string> actors;   // index -> id
    std::vector<std::string> actions;  // index -> id
    std::vector<InteractionArc> interactions;
    std::vector<ActionArc> actor_actions;

    int num_actors() const { return static_cast<int>(actors.size()); }
    int num_actions() const { return static_cast<int>(actions.size()); }

    void validate() const;  // endpoint/timestep range checks, throws DataError

    bool operator==(const Trace&) const = default;
};

/// Per-timestep indices into Trace::interactions / Trace::actor_actions,
/// in file/generation order.
struct TraceView {
    std::vector<std::vector<int>> interactions_at;
    std::vector<std::vector<int>> actions_at;

    explicit TraceView(const Trace& trace);
};

/// Latent variables: initial opinions per actor, center/half-width per
/// action, and one sign per interaction occurrence (aligned with
/// Trace::interactions; 0 = not yet assigned).
struct LatentState {
    std::vector<double> initial_opinions;
    std::vector<double> action_centers;
    std::vector<double> action_half_widths;
    std::vector<std::int8_t> signs;
};

/// One interaction occurrence with its resolved sign.
struct SignedArc {
    int u;
    int v;
    std::int8_t sign;  // +1 or -1
};

/// Sparse per-timestep influence matrix. Entry (src, dst) holds the
/// per-occurrence rate (+mu_plus or -mu_minus) and the occurrence count,
/// so value() is the matrix coefficient rate * multiplicity. Entries are
/// sorted by (src, dst, rate) and unique under that key; a pair that
/// carries both signs yields two entries whose influence adds.
struct SignedUpdateMatrix {
    struct Entry {
        int src;
        int dst;
        double rate;
        int multiplicity;
    };

    int num_actors = 0;
    std::vector<Entry> entries;

    static double value(const Entry& e) { return e.rate * e.multiplicity; }
};

namespace instrumentation {
// Thread-local count of kernel evaluations, used by complexity tests.
inline thread_local std::uint64_t kernel_evals = 0;
inline void reset_kernel_evals() { kernel_evals = 0; }
inline std::uint64_t kernel_eval_count() { return kernel_evals; }
}  // namespace instrumentation

/// 1 / (1 + exp(-rho * x)). Total function, strictly increasing in x.
double sigmoid(double x, double rho);

/// log(sigmoid(x, rho)) computed without underflow.
double log_sigmoid(double x, double rho);

/// Affinity for a positive (persuasive) interaction between opinions:
/// sigmoid(eps_plus - |x_u - x_v|, rho_interactions).
double acceptance_kernel(double x_u, double x_v, const MacroParams& p);

/// Affinity for a negative (backfire) interaction:
/// sigmoid(|x_u - x_v| - eps_minus, rho_interactions).
double contrast_kernel(double x_u, double x_v, const MacroParams& p);

/// Affinity of an opinion for an action with the given center and
/// half-width: sigmoid(half_width - |x - center|, rho_actions).
double action_kernel(double x, double center, double half_width,
                     const MacroParams& p);

double kernel(double x_u, double x_v, std::int8_t sign, const MacroParams& p);

struct OpinionPair {
    int u;
    int v;
};

/// Fraction of candidate pairs in the acceptance regime among those in
/// either decided regime: #{|d| < eps_plus} / (#{|d| < eps_plus} +
/// #{|d| > eps_minus}). Pairs in the neutral band count in neither sum.
/// Returns 0.5 when no pair is decided.
double positive_fraction(std::span<const double> opinions,
                         std::span<const OpinionPair> pairs,
                         const MacroParams& p);

/// Applies all signed arcs of one timestep against the frozen snapshot
/// `opinions`, then clips. Positive arcs pull the target toward the
/// source by mu_plus, negative arcs push it away by mu_minus.
std::vector<double> update_opinions(std::span<const double> opinions,
                                    std::span<const SignedArc> arcs,
                                    const MacroParams& p);

/// Folds the signed arcs of one timestep into the sparse influence
/// matrix. Every arc must carry sign +1 or -1; anything else throws
/// DataError.
SignedUpdateMatrix build_update_matrix(int num_actors,
                                       std::span<const SignedArc> arcs,
                                       const MacroParams& p);

/// One influence step: x'_v = clip(x_v + sum_entries m * rate * (x_src - x_v)).
std::vector<double> apply_update_step(std::span<const double> opinions,
                                      const SignedUpdateMatrix& m);

/// Repeated application of apply_update_step over the matrix sequence;
/// with an empty sequence this is the identity.
std::vector<double> propagate(std::vector<double> initial_opinions,
                              std::span<const SignedUpdateMatrix> matrices);

/// Forward pass that keeps every intermediate state plus the per-step
/// clip masks, for gradient backpropagation. states[t] is the opinion
/// vector after t steps; clipped[t] marks coordinates of states[t+1]
/// whose pre-clip value fell outside [-1, 1].
struct Propagation {
    std::vector<std::vector<double>> states;
    std::vector<std::vector<std::uint8_t>> clipped;
};

Propagation propagate_trajectory(std::vector<double> initial_opinions,
                                 std::span<const SignedUpdateMatrix> matrices);

/// Pulls a gradient w.r.t. the final state of `forward` back to the
/// initial opinions. Clipped coordinates have zero pass-through
/// derivative.
std::vector<double> backpropagate_opinion_gradient(
    std::span<const SignedUpdateMatrix> matrices, const Propagation& forward,
    std::vector<double> grad_final);

/// P(target = v | source = u, sign) over the eligible candidate set:
/// kernel(u, v) / sum over eligible kernel(u, v'). Throws DataError on an
/// empty eligible set.
double link_probability(int u, int v, std::span<const double> opinions,
                        std::int8_t sign, std::span<const int> eligible,
                        const MacroParams& p);

/// P(action = a | actor = v), normalized over the full action set.
/// Throws DataError on an empty action set.
double action_probability(int v, int a, std::span<const double> opinions,
                          std::span<const double> centers,
                          std::span<const double> half_widths,
                          const MacroParams& p);

}  // namespace odyn
