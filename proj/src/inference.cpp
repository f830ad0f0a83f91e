#include "odyn/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "odyn/generator.hpp"

namespace odyn {

void FitConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (restarts < 1) throw std::invalid_argument("restarts must be >= 1");
    if (!(lr_actions > 0.0) || !(lr_interactions > 0.0))
        throw std::invalid_argument("learning rates must be > 0");
    if (inner_iterations < 1)
        throw std::invalid_argument("inner_iterations must be >= 1");
    if (!(convergence_tol >= 0.0))
        throw std::invalid_argument("convergence_tol must be >= 0");
    if (!(max_step > 0.0)) throw std::invalid_argument("max_step must be > 0");
    if (!(sigma_prior_a > 0.0) || !(sigma_prior_b > 0.0))
        throw std::invalid_argument("half-width prior shape must be > 0");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
    for (const auto& [action, value] : anchors.pinned)
        if (value < -1.0 || value > 1.0)
            throw std::invalid_argument("anchor value outside [-1, 1]");
}

StepData make_step_data(const Trace& trace, const TraceView& view, int tau) {
    StepData step;
    step.tau = tau;
    for (int idx : view.interactions_at[tau]) {
        const auto& arc = trace.interactions[idx];
        step.interactions.emplace_back(arc.u, arc.v);
        step.interaction_indices.push_back(idx);
        step.eligible.push_back(arc.v);
    }
    for (int idx : view.actions_at[tau]) {
        const auto& arc = trace.actor_actions[idx];
        step.actions.emplace_back(arc.v, arc.a);
    }
    std::sort(step.eligible.begin(), step.eligible.end());
    step.eligible.erase(std::unique(step.eligible.begin(), step.eligible.end()),
                        step.eligible.end());
    return step;
}

namespace {

inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Per-source kernel sums over the eligible set, filled on demand. A sum
// that underflows to zero (possible under extreme steepness) is clamped
// to 1e-300 and flagged.
struct DenominatorCache {
    const StepData& step;
    std::span<const double> x;
    const MacroParams& p;
    std::vector<double> accept, contrast;
    std::vector<char> ready;
    bool underflow = false;

    DenominatorCache(const StepData& s, std::span<const double> opinions,
                     const MacroParams& params)
        : step(s),
          x(opinions),
          p(params),
          accept(opinions.size(), 0.0),
          contrast(opinions.size(), 0.0),
          ready(opinions.size(), 0) {}

    void ensure(int u) {
        if (ready[u]) return;
        double da = 0.0, dc = 0.0;
        for (int v : step.eligible) {
            da += acceptance_kernel(x[u], x[v], p);
            dc += contrast_kernel(x[u], x[v], p);
        }
        if (da < 1e-300 || dc < 1e-300) underflow = true;
        accept[u] = std::max(da, 1e-300);
        contrast[u] = std::max(dc, 1e-300);
        ready[u] = 1;
    }
};

double positive_fraction_of_step(const StepData& step, std::span<const double> x,
                                 const MacroParams& p) {
    std::vector<OpinionPair> pairs;
    pairs.reserve(step.interactions.size());
    for (auto [u, v] : step.interactions) pairs.push_back({u, v});
    return positive_fraction(x, pairs, p);
}

}  // namespace

Responsibilities e_step(const StepData& step, std::span<const double> x_tau,
                        double alpha_tau, const MacroParams& p,
                        bool normalized_posterior) {
    if (step.eligible.empty() && !step.interactions.empty())
        throw DataError("e_step: no eligible targets at timestep " +
                        std::to_string(step.tau));
    Responsibilities resp;
    resp.q_plus.resize(step.interactions.size());
    resp.q_minus.resize(step.interactions.size());
    DenominatorCache den(step, x_tau, p);
    for (std::size_t i = 0; i < step.interactions.size(); ++i) {
        const auto [u, v] = step.interactions[i];
        den.ensure(u);
        const double p_plus = acceptance_kernel(x_tau[u], x_tau[v], p) / den.accept[u];
        const double p_minus = contrast_kernel(x_tau[u], x_tau[v], p) / den.contrast[u];
        double d = normalized_posterior
                       ? alpha_tau * p_plus + (1.0 - alpha_tau) * p_minus
                       : p_plus + p_minus;
        if (d < 1e-300) {
            d = 1e-300;
            resp.numerical_warning = true;
        }
        resp.q_plus[i] = alpha_tau * p_plus / d;
        resp.q_minus[i] = (1.0 - alpha_tau) * p_minus / d;
    }
    if (den.underflow) resp.numerical_warning = true;
    return resp;
}

std::vector<SignedUpdateMatrix> build_past_matrices(const Trace& trace,
                                                    const TraceView& view, int tau,
                                                    std::span<const std::int8_t> signs,
                                                    const MacroParams& p) {
    std::vector<SignedUpdateMatrix> matrices;
    matrices.reserve(tau);
    std::vector<SignedArc> arcs;
    for (int t = 0; t < tau; ++t) {
        arcs.clear();
        for (int idx : view.interactions_at[t]) {
            const auto& arc = trace.interactions[idx];
            arcs.push_back({arc.u, arc.v, signs[idx]});
        }
        matrices.push_back(build_update_matrix(trace.num_actors(), arcs, p));
    }
    return matrices;
}

MStepEval m_step_eval(const StepData& step, const Responsibilities& resp,
                      std::span<const double> initial_opinions,
                      std::span<const double> centers,
                      std::span<const double> half_widths,
                      std::span<const SignedUpdateMatrix> past,
                      const MacroParams& p, const FitConfig& config) {
    const int n = static_cast<int>(initial_opinions.size());
    const int num_actions = static_cast<int>(centers.size());

    Propagation forward = propagate_trajectory(
        std::vector<double>(initial_opinions.begin(), initial_opinions.end()), past);
    const std::vector<double>& x = forward.states.back();

    MStepEval eval;
    eval.center_grad.assign(num_actions, 0.0);
    eval.half_width_grad.assign(num_actions, 0.0);
    std::vector<double> gx_int(n, 0.0);
    std::vector<double> gx_act(n, 0.0);

    // interaction term: sum_i sum_s q_s [log k_s(u,v) - log D_s(u)]
    if (!step.interactions.empty()) {
        DenominatorCache den(step, x, p);
        std::vector<double> weight_plus(n, 0.0), weight_minus(n, 0.0);
        for (std::size_t i = 0; i < step.interactions.size(); ++i) {
            const auto [u, v] = step.interactions[i];
            const double qp = resp.q_plus[i];
            const double qm = resp.q_minus[i];
            den.ensure(u);
            const double dist_sign = sgn(x[u] - x[v]);
            if (qp != 0.0) {
                const double k = acceptance_kernel(x[u], x[v], p);
                eval.interaction_objective +=
                    qp * (log_sigmoid(p.eps_plus - std::abs(x[u] - x[v]),
                                      p.rho_interactions) -
                          std::log(den.accept[u]));
                const double f = qp * p.rho_interactions * (1.0 - k);
                gx_int[u] -= f * dist_sign;
                gx_int[v] += f * dist_sign;
                weight_plus[u] += qp;
            }
            if (qm != 0.0) {
                const double k = contrast_kernel(x[u], x[v], p);
                eval.interaction_objective +=
                    qm * (log_sigmoid(std::abs(x[u] - x[v]) - p.eps_minus,
                                      p.rho_interactions) -
                          std::log(den.contrast[u]));
                const double f = qm * p.rho_interactions * (1.0 - k);
                gx_int[u] += f * dist_sign;
                gx_int[v] -= f * dist_sign;
                weight_minus[u] += qm;
            }
        }
        // log-denominator gradients, grouped by source
        for (int u = 0; u < n; ++u) {
            if (weight_plus[u] == 0.0 && weight_minus[u] == 0.0) continue;
            for (int v : step.eligible) {
                const double dist_sign = sgn(x[u] - x[v]);
                if (weight_plus[u] != 0.0) {
                    const double k = acceptance_kernel(x[u], x[v], p);
                    const double dk = p.rho_interactions * k * (1.0 - k) * dist_sign;
                    const double c = weight_plus[u] / den.accept[u];
                    gx_int[u] -= c * (-dk);
                    gx_int[v] -= c * dk;
                }
                if (weight_minus[u] != 0.0) {
                    const double k = contrast_kernel(x[u], x[v], p);
                    const double dk = p.rho_interactions * k * (1.0 - k) * dist_sign;
                    const double c = weight_minus[u] / den.contrast[u];
                    gx_int[u] -= c * dk;
                    gx_int[v] -= c * (-dk);
                }
            }
        }
    }

    // action term: sum_occ [log k_sigma(x_v, w_a) - log D_v]
    if (!step.actions.empty()) {
        std::vector<double> action_den(n, 0.0);
        std::vector<int> action_count(n, 0);
        for (auto [v, a] : step.actions) ++action_count[v];
        for (int v = 0; v < n; ++v) {
            if (action_count[v] == 0) continue;
            double d = 0.0;
            for (int a = 0; a < num_actions; ++a)
                d += action_kernel(x[v], centers[a], half_widths[a], p);
            action_den[v] = d;
        }
        for (auto [v, a] : step.actions) {
            const double k = action_kernel(x[v], centers[a], half_widths[a], p);
            eval.action_objective +=
                log_sigmoid(half_widths[a] - std::abs(x[v] - centers[a]),
                            p.rho_actions) -
                std::log(action_den[v]);
            const double f = p.rho_actions * (1.0 - k);
            const double dist_sign = sgn(x[v] - centers[a]);
            gx_act[v] -= f * dist_sign;
            eval.center_grad[a] += f * dist_sign;
            eval.half_width_grad[a] += f;
        }
        for (int v = 0; v < n; ++v) {
            if (action_count[v] == 0) continue;
            const double c = action_count[v] / action_den[v];
            for (int a = 0; a < num_actions; ++a) {
                const double k = action_kernel(x[v], centers[a], half_widths[a], p);
                const double dk = p.rho_actions * k * (1.0 - k);
                const double dist_sign = sgn(x[v] - centers[a]);
                gx_act[v] -= c * (-dk * dist_sign);
                eval.center_grad[a] -= c * (dk * dist_sign);
                eval.half_width_grad[a] -= c * dk;
            }
        }
    }

    if (config.sigma_prior_enabled) {
        const double a = config.sigma_prior_a;
        const double b = config.sigma_prior_b;
        const double log_norm =
            std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
        for (int i = 0; i < num_actions; ++i) {
            const double s = half_widths[i];
            eval.action_objective +=
                log_norm + (a - 1.0) * std::log(s) + (b - 1.0) * std::log1p(-s);
            eval.half_width_grad[i] += (a - 1.0) / s - (b - 1.0) / (1.0 - s);
        }
    }

    for (const auto& [action, value] : config.anchors.pinned)
        eval.center_grad[action] = 0.0;

    eval.x0_grad_interactions =
        backpropagate_opinion_gradient(past, forward, std::move(gx_int));
    eval.x0_grad_actions =
        backpropagate_opinion_gradient(past, forward, std::move(gx_act));
    return eval;
}

double m_step_objective(const StepData& step, const Responsibilities& resp,
                        std::span<const double> initial_opinions,
                        std::span<const double> centers,
                        std::span<const double> half_widths,
                        std::span<const SignedUpdateMatrix> past,
                        const MacroParams& p, const FitConfig& config) {
    return m_step_eval(step, resp, initial_opinions, centers, half_widths, past, p,
                       config)
        .objective();
}

EmStepResult em_timestep(const Trace& trace, const TraceView& view, int tau,
                         EmState& state, const MacroParams& p,
                         const FitConfig& config) {
    StepData step = make_step_data(trace, view, tau);
    EmStepResult result;
    if (step.interactions.empty() && step.actions.empty()) return result;

    const auto past = build_past_matrices(trace, view, tau, state.signs, p);
    {
        const auto x_tau = propagate(state.initial_opinions, past);
        result.alpha_tau = positive_fraction_of_step(step, x_tau, p);
    }

    Responsibilities resp;
    double prev_objective = 0.0;
    const double clamp_lo = 1e-3, clamp_hi = 1.0 - 1e-3;
    // fixed-rate ascent on the summed objective overshoots near optima,
    // so each coordinate moves at most max_step per iteration
    const auto capped = [&config](double step_value) {
        return std::clamp(step_value, -config.max_step, config.max_step);
    };
    for (int iter = 0; iter < config.inner_iterations; ++iter) {
        const auto x_tau = propagate(state.initial_opinions, past);
        if (!step.interactions.empty())
            resp = e_step(step, x_tau, result.alpha_tau, p,
                          config.normalized_posterior);
        if (resp.numerical_warning) ++state.numerical_warnings;

        MStepEval eval =
            m_step_eval(step, resp, state.initial_opinions, state.action_centers,
                        state.action_half_widths, past, p, config);
        const double objective = eval.objective();
        if (!std::isfinite(objective))
            throw NumericalError("non-finite objective at timestep " +
                                 std::to_string(tau) + ", iteration " +
                                 std::to_string(iter));
        result.final_objective = objective;
        result.iterations = iter + 1;
        if (iter > 0 && std::abs(objective - prev_objective) < config.convergence_tol)
            break;
        prev_objective = objective;

        for (int v = 0; v < trace.num_actors(); ++v)
            state.initial_opinions[v] = clip_opinion(
                state.initial_opinions[v] +
                capped(config.lr_interactions * eval.x0_grad_interactions[v]) +
                capped(config.lr_actions * eval.x0_grad_actions[v]));
        for (int a = 0; a < trace.num_actions(); ++a) {
            if (!config.anchors.contains(a))
                state.action_centers[a] =
                    std::clamp(state.action_centers[a] +
                                   capped(config.lr_actions * eval.center_grad[a]),
                               -1.0, 1.0);
            state.action_half_widths[a] =
                std::clamp(state.action_half_widths[a] +
                               capped(config.lr_actions * eval.half_width_grad[a]),
                           clamp_lo, clamp_hi);
        }
    }

    for (std::size_t i = 0; i < step.interactions.size(); ++i)
        state.signs[step.interaction_indices[i]] =
            resp.q_plus[i] >= resp.q_minus[i] ? 1 : -1;
    return result;
}

namespace {

struct RestartOutcome {
    LatentState latent;
    double log_likelihood = 0.0;
    std::vector<double> epoch_log_likelihoods;
    int numerical_warnings = 0;
    bool aborted = false;
    std::string abort_reason;
};

LatentState latent_from(const EmState& state) {
    return {state.initial_opinions, state.action_centers,
            state.action_half_widths, state.signs};
}

void parallel_for_index(int count, int threads, const auto& body) {
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1))
                body(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace

FitResult fit(const Trace& trace, const MacroParams& p, const FitConfig& config) {
    p.validate();
    config.validate();
    trace.validate();
    for (const auto& [action, value] : config.anchors.pinned)
        if (action < 0 || action >= trace.num_actions())
            throw DataError("anchor references unknown action index " +
                            std::to_string(action));

    const TraceView view(trace);
    std::vector<RestartOutcome> outcomes(config.restarts);

    parallel_for_index(config.restarts, config.threads, [&](int r) {
        RestartOutcome& out = outcomes[r];
        Rng rng(config.seed + static_cast<std::uint64_t>(r));
        EmState state;
        state.initial_opinions.resize(trace.num_actors());
        for (auto& x : state.initial_opinions) x = rng.uniform(-1.0, 1.0);
        state.action_centers.resize(trace.num_actions());
        for (auto& w : state.action_centers) w = rng.uniform(-1.0, 1.0);
        for (const auto& [action, value] : config.anchors.pinned)
            state.action_centers[action] = value;
        state.action_half_widths.resize(trace.num_actions());
        for (auto& s : state.action_half_widths) s = rng.uniform(0.3, 0.7);
        state.signs.assign(trace.interactions.size(), 0);

        try {
            for (int epoch = 0; epoch < config.epochs; ++epoch) {
                for (int tau = 0; tau < trace.num_timesteps; ++tau)
                    em_timestep(trace, view, tau, state, p, config);
                out.epoch_log_likelihoods.push_back(
                    complete_log_likelihood(trace, latent_from(state), p));
            }
            out.latent = latent_from(state);
            out.log_likelihood = out.epoch_log_likelihoods.empty()
                                     ? 0.0
                                     : out.epoch_log_likelihoods.back();
            out.numerical_warnings = state.numerical_warnings;
        } catch (const NumericalError& e) {
            out.aborted = true;
            out.abort_reason = e.what();
        }
    });

    int best = -1;
    int monotonicity_violations = 0;
    int warnings = 0;
    for (int r = 0; r < config.restarts; ++r) {
        const auto& out = outcomes[r];
        if (out.aborted) continue;
        warnings += out.numerical_warnings;
        for (std::size_t k = 1; k < out.epoch_log_likelihoods.size(); ++k)
            if (out.epoch_log_likelihoods[k] <
                out.epoch_log_likelihoods[k - 1] - 1e-6)
                ++monotonicity_violations;
        if (best < 0 || out.log_likelihood > outcomes[best].log_likelihood)
            best = r;
    }
    if (best < 0) {
        std::string reasons;
        for (const auto& out : outcomes) {
            if (!reasons.empty()) reasons += "; ";
            reasons += out.abort_reason;
        }
        throw NumericalError("all restarts aborted: " + reasons);
    }

    FitResult result;
    result.latent = outcomes[best].latent;
    result.log_likelihood = outcomes[best].log_likelihood;
    result.restart_index = best;
    result.epoch_log_likelihoods = outcomes[best].epoch_log_likelihoods;
    result.monotonicity_violations = monotonicity_violations;
    result.numerical_warnings = warnings;
    const auto matrices = build_past_matrices(trace, view, trace.num_timesteps,
                                              result.latent.signs, p);
    Propagation forward =
        propagate_trajectory(result.latent.initial_opinions, matrices);
    for (int t = 0; t < trace.num_timesteps; ++t)
        result.trajectory.push_back(forward.states[t]);
    result.positive_fraction_series =
        positive_fraction_series(trace, result.latent, p);
    return result;
}

double complete_log_likelihood(const Trace& trace, const LatentState& latent,
                               const MacroParams& p) {
    if (latent.signs.size() != trace.interactions.size())
        throw DataError("latent signs do not cover the interaction multiset");
    const TraceView view(trace);
    const auto matrices = build_past_matrices(trace, view, trace.num_timesteps,
                                              latent.signs, p);
    Propagation forward =
        propagate_trajectory(latent.initial_opinions, matrices);

    double ll = 0.0;
    for (int t = 0; t < trace.num_timesteps; ++t) {
        StepData step = make_step_data(trace, view, t);
        const auto& x = forward.states[t];
        if (!step.interactions.empty()) {
            const double alpha = positive_fraction_of_step(step, x, p);
            DenominatorCache den(step, x, p);
            for (auto [u, v] : step.interactions) {
                den.ensure(u);
                const double p_plus =
                    acceptance_kernel(x[u], x[v], p) / den.accept[u];
                const double p_minus =
                    contrast_kernel(x[u], x[v], p) / den.contrast[u];
                ll += std::log(alpha * p_plus + (1.0 - alpha) * p_minus);
            }
        }
        if (!step.actions.empty()) {
            std::vector<double> action_den(trace.num_actors(), -1.0);
            for (auto [v, a] : step.actions) {
                if (action_den[v] < 0.0) {
                    double d = 0.0;
                    for (int b = 0; b < trace.num_actions(); ++b)
                        d += action_kernel(x[v], latent.action_centers[b],
                                           latent.action_half_widths[b], p);
                    action_den[v] = d;
                }
                ll += log_sigmoid(latent.action_half_widths[a] -
                                      std::abs(x[v] - latent.action_centers[a]),
                                  p.rho_actions) -
                      std::log(action_den[v]);
            }
        }
    }
    return ll;
}

std::vector<double> positive_fraction_series(const Trace& trace,
                                             const LatentState& latent,
                                             const MacroParams& p) {
    const TraceView view(trace);
    const auto matrices = build_past_matrices(trace, view, trace.num_timesteps,
                                              latent.signs, p);
    Propagation forward =
        propagate_trajectory(latent.initial_opinions, matrices);
    std::vector<double> series(trace.num_timesteps, 0.5);
    for (int t = 0; t < trace.num_timesteps; ++t) {
        StepData step = make_step_data(trace, view, t);
        if (!step.interactions.empty())
            series[t] = positive_fraction_of_step(step, forward.states[t], p);
    }
    return series;
}

}  // namespace odyn
