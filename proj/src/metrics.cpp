#include "odyn/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

namespace odyn {

namespace {

double mean_abs_error(std::span<const double> a, std::span<const double> b,
                      double flip) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        total += std::abs(flip * a[i] - b[i]);
    return a.empty() ? 0.0 : total / static_cast<double>(a.size());
}

}  // namespace

MaeResult mae_opinions(const LatentState& estimated, const GroundTruth& truth) {
    if (estimated.initial_opinions.size() !=
            truth.latent.initial_opinions.size() ||
        estimated.action_centers.size() != truth.latent.action_centers.size())
        throw DataError("estimated and ground-truth index sets do not match");
    const double mae_id = mean_abs_error(estimated.initial_opinions,
                                         truth.latent.initial_opinions, 1.0);
    const double mae_fl = mean_abs_error(estimated.initial_opinions,
                                         truth.latent.initial_opinions, -1.0);
    MaeResult result;
    result.flipped = mae_fl < mae_id;
    const double flip = result.flipped ? -1.0 : 1.0;
    result.mae_x0 = result.flipped ? mae_fl : mae_id;
    result.mae_w = mean_abs_error(estimated.action_centers,
                                  truth.latent.action_centers, flip);
    return result;
}

double sign_f1(std::span<const std::int8_t> estimated,
               std::span<const std::int8_t> truth) {
    if (estimated.size() != truth.size())
        throw DataError("sign vectors do not cover the same arc multiset");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < estimated.size(); ++i) {
        if (estimated[i] == 1 && truth[i] == 1) ++tp;
        if (estimated[i] == 1 && truth[i] != 1) ++fp;
        if (estimated[i] != 1 && truth[i] == 1) ++fn;
    }
    if (2 * tp + fp + fn == 0) return 1.0;  // no positives anywhere, agree trivially
    return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
}

double action_link_ap(const Trace& trace, const LatentState& estimated,
                      const MacroParams& p, std::uint64_t seed) {
    if (trace.num_actions() < 2)
        throw DataError("action ranking needs at least 2 actions");
    if (trace.actor_actions.empty())
        throw DataError("action ranking needs at least one observed arc");

    const TraceView view(trace);
    const auto matrices = build_past_matrices(trace, view, trace.num_timesteps,
                                              estimated.signs, p);
    Propagation forward =
        propagate_trajectory(estimated.initial_opinions, matrices);

    auto score = [&](int t, int v, int a) {
        return action_probability(v, a, forward.states[t],
                                  estimated.action_centers,
                                  estimated.action_half_widths, p);
    };

    struct Scored {
        double value;
        bool positive;
    };
    std::vector<Scored> scored;
    scored.reserve(2 * trace.actor_actions.size());
    std::set<std::tuple<int, int, int>> present;
    for (const auto& arc : trace.actor_actions) {
        present.insert({arc.t, arc.v, arc.a});
        scored.push_back({score(arc.t, arc.v, arc.a), true});
    }

    // enumerate candidates in id order so the seeded sample does not
    // depend on how actors happen to be indexed
    std::vector<int> actor_order(trace.num_actors());
    std::vector<int> action_order(trace.num_actions());
    std::iota(actor_order.begin(), actor_order.end(), 0);
    std::iota(action_order.begin(), action_order.end(), 0);
    std::sort(actor_order.begin(), actor_order.end(),
              [&](int a, int b) { return trace.actors[a] < trace.actors[b]; });
    std::sort(action_order.begin(), action_order.end(),
              [&](int a, int b) { return trace.actions[a] < trace.actions[b]; });

    std::vector<std::tuple<int, int, int>> absent;
    for (int t = 0; t < trace.num_timesteps; ++t)
        for (int v : actor_order)
            for (int a : action_order)
                if (!present.count({t, v, a})) absent.push_back({t, v, a});
    if (absent.empty())
        throw DataError("no non-occurring action arcs available to sample");

    Rng rng(seed);
    for (std::size_t i = 0; i < trace.actor_actions.size(); ++i) {
        const auto [t, v, a] = absent[rng.uniform_int(static_cast<int>(absent.size()))];
        scored.push_back({score(t, v, a), false});
    }

    // rank by score; at equal scores put negatives first
    std::stable_sort(scored.begin(), scored.end(),
                     [](const Scored& a, const Scored& b) {
                         if (a.value != b.value) return a.value > b.value;
                         return a.positive < b.positive;
                     });
    double ap = 0.0;
    std::size_t positives_seen = 0;
    for (std::size_t rank = 0; rank < scored.size(); ++rank) {
        if (!scored[rank].positive) continue;
        ++positives_seen;
        ap += static_cast<double>(positives_seen) / static_cast<double>(rank + 1);
    }
    return ap / static_cast<double>(positives_seen);
}

EvalReport evaluate(const Trace& trace, const LatentState& estimated,
                    const GroundTruth& truth, const MacroParams& p,
                    std::uint64_t seed) {
    if (estimated.signs.size() != truth.latent.signs.size())
        throw DataError("estimated and ground-truth sign coverage differs");
    const MaeResult mae = mae_opinions(estimated, truth);
    EvalReport report;
    report.mae_x0 = mae.mae_x0;
    report.mae_w = mae.mae_w;
    report.sign_flipped = mae.flipped;
    report.sign_f1 = sign_f1(estimated.signs, truth.latent.signs);
    report.action_ap = action_link_ap(trace, estimated, p, seed);
    return report;
}

SelectionReport model_select(const Trace& trace,
                             std::span<const Scenario> candidates,
                             const FitConfig& config) {
    if (candidates.empty())
        throw DataError("model selection needs at least one candidate");

    SelectionReport report;
    report.candidates.resize(candidates.size());
    report.fits.resize(candidates.size());

    FitConfig inner = config;
    inner.threads = 1;  // candidates carry the parallelism
    const int count = static_cast<int>(candidates.size());
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
            report.candidates[i].scenario = candidates[i];
            try {
                report.fits[i] = fit(trace, candidates[i].params, inner);
                report.candidates[i].log_likelihood = report.fits[i].log_likelihood;
            } catch (const NumericalError&) {
                report.candidates[i].failed = true;
            }
        }
    };
    const int threads = std::min(config.threads, count);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::vector<int> order;
    for (int i = 0; i < count; ++i)
        if (!report.candidates[i].failed) order.push_back(i);
    if (order.empty()) throw NumericalError("every candidate fit failed");
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return report.candidates[a].log_likelihood >
               report.candidates[b].log_likelihood;
    });
    for (std::size_t r = 0; r < order.size(); ++r)
        report.candidates[order[r]].rank = static_cast<int>(r + 1);
    report.chosen = order.front();
    report.tie = order.size() > 1 &&
                 report.candidates[order[0]].log_likelihood ==
                     report.candidates[order[1]].log_likelihood;
    return report;
}

}  // namespace odyn
