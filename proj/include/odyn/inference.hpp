// Online EM estimator: recovers initial opinions, action placements and
// per-arc interaction signs from an observed trace, one timestep at a
// time. Each timestep alternates a responsibility computation over the
// two possible arc signs with gradient-ascent parameter updates, chaining
// opinion gradients back to the initial vector through the signed-update
// recursion.

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "odyn/model.hpp"

namespace odyn {

/// Fixed action placements (action index -> center value). Anchored
/// centers are set at initialization and never moved by gradient steps.
struct AnchorSet {
    std::map<int, double> pinned;

    bool contains(int action) const { return pinned.count(action) > 0; }
};

struct FitConfig {
    int epochs = 2;
    int restarts = 4;
    double lr_actions = 1e-3;
    double lr_interactions = 1e-4;
    int inner_iterations = 30;      // cap on the per-timestep EM loop
    double convergence_tol = 1e-4;  // absolute objective change
    double max_step = 0.05;         // per-coordinate cap on a single update
    std::uint64_t seed = 0;
    AnchorSet anchors;
    bool sigma_prior_enabled = false;
    double sigma_prior_a = 8.0;
    double sigma_prior_b = 8.0;
    bool normalized_posterior = false;  // Bayes-normalized responsibilities
    int threads = 1;

    void validate() const;  // throws std::invalid_argument
};

/// One timestep of a trace, unpacked for the estimator: arc endpoint
/// pairs in occurrence order, their indices into Trace::interactions, and
/// the eligible target set (sorted actors that receive at least one arc
/// at this timestep).
struct StepData {
    int tau = 0;
    std::vector<std::pair<int, int>> interactions;  // (u, v) occurrences
    std::vector<int> interaction_indices;
    std::vector<std::pair<int, int>> actions;  // (v, a) occurrences
    std::vector<int> eligible;
};

StepData make_step_data(const Trace& trace, const TraceView& view, int tau);

/// Per-occurrence posterior weights of the two signs. These follow the
/// unnormalized form q+ = alpha p+ / (p+ + p-), q- = (1-alpha) p- /
/// (p+ + p-); they need not sum to one.
struct Responsibilities {
    std::vector<double> q_plus;
    std::vector<double> q_minus;
    bool numerical_warning = false;
};

Responsibilities e_step(const StepData& step, std::span<const double> x_tau,
                        double alpha_tau, const MacroParams& p,
                        bool normalized_posterior = false);

/// Objective value and gradients of one M-step evaluation, split by term
/// so the two learning rates can be applied separately. The action
/// objective includes the half-width prior when enabled.
struct MStepEval {
    double interaction_objective = 0.0;
    double action_objective = 0.0;
    std::vector<double> x0_grad_interactions;
    std::vector<double> x0_grad_actions;
    std::vector<double> center_grad;
    std::vector<double> half_width_grad;

    double objective() const { return interaction_objective + action_objective; }
};

/// Builds the signed-update matrices for timesteps 0..tau-1 from the
/// currently assigned signs.
std::vector<SignedUpdateMatrix> build_past_matrices(const Trace& trace,
                                                    const TraceView& view, int tau,
                                                    std::span<const std::int8_t> signs,
                                                    const MacroParams& p);

MStepEval m_step_eval(const StepData& step, const Responsibilities& resp,
                      std::span<const double> initial_opinions,
                      std::span<const double> centers,
                      std::span<const double> half_widths,
                      std::span<const SignedUpdateMatrix> past,
                      const MacroParams& p, const FitConfig& config);

double m_step_objective(const StepData& step, const Responsibilities& resp,
                        std::span<const double> initial_opinions,
                        std::span<const double> centers,
                        std::span<const double> half_widths,
                        std::span<const SignedUpdateMatrix> past,
                        const MacroParams& p, const FitConfig& config);

/// Mutable estimator state threaded through the timestep loop.
struct EmState {
    std::vector<double> initial_opinions;
    std::vector<double> action_centers;
    std::vector<double> action_half_widths;
    std::vector<std::int8_t> signs;  // full trace length, 0 = unassigned
    int numerical_warnings = 0;
};

struct EmStepResult {
    int iterations = 0;
    double final_objective = 0.0;
    double alpha_tau = 0.5;
};

/// One online EM step: recomputes the positive fraction from the current
/// opinion estimate, alternates E and M until the objective change drops
/// below convergence_tol (or the iteration cap), then commits hard signs
/// for the arcs of this timestep (ties go to +1).
EmStepResult em_timestep(const Trace& trace, const TraceView& view, int tau,
                         EmState& state, const MacroParams& p,
                         const FitConfig& config);

struct FitResult {
    LatentState latent;
    std::vector<std::vector<double>> trajectory;  // rows x_0 .. x_{T-1}
    double log_likelihood = 0.0;
    std::vector<double> positive_fraction_series;
    int restart_index = 0;
    // diagnostics
    std::vector<double> epoch_log_likelihoods;  // of the winning restart
    int monotonicity_violations = 0;            // across all restarts
    int numerical_warnings = 0;
};

/// Full estimation run: multiple restarts of (epochs x timestep sweeps),
/// keeping the restart with the highest complete-data log-likelihood.
/// Restarts are independent (seeded seed + index) and may run in
/// parallel; results do not depend on thread count.
FitResult fit(const Trace& trace, const MacroParams& p, const FitConfig& config);

/// log P(interactions | opinions) + log P(actions | opinions, placements),
/// with opinions propagated from the latent initial vector under the
/// latent signs and the sign prior taken from the per-timestep positive
/// fraction of the arcs themselves.
double complete_log_likelihood(const Trace& trace, const LatentState& latent,
                               const MacroParams& p);

/// Positive fraction per timestep over the arcs of that timestep, under
/// the trajectory implied by the latent state.
std::vector<double> positive_fraction_series(const Trace& trace,
                                             const LatentState& latent,
                                             const MacroParams& p);

}  // namespace odyn
