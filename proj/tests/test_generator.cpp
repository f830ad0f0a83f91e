#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "odyn/generator.hpp"
#include "odyn/model.hpp"
#include "oracles.hpp"

using namespace odyn;

namespace {

double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double stddev(const std::vector<double>& v) {
    const double m = mean(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / v.size());
}

}  // namespace

TEST_CASE("init_latent ranges and determinism") {
    GenConfig config;
    config.seed = 42;

    Rng rng_a(config.seed), rng_b(config.seed);
    const LatentState a = init_latent(config, rng_a);
    const LatentState b = init_latent(config, rng_b);
    CHECK(a.initial_opinions == b.initial_opinions);
    CHECK(a.action_centers == b.action_centers);
    CHECK(a.action_half_widths == b.action_half_widths);

    CHECK(a.initial_opinions.size() == 30);
    for (double x : a.initial_opinions) {
        CHECK(x >= -1.0);
        CHECK(x <= 1.0);
    }
    for (double w : a.action_centers) {
        CHECK(w >= -1.0);
        CHECK(w <= 1.0);
    }
    for (double s : a.action_half_widths) {
        CHECK(s >= 0.3);
        CHECK(s <= 0.7);
    }

    Rng rng_c(config.seed + 1);
    const LatentState c = init_latent(config, rng_c);
    CHECK(a.initial_opinions != c.initial_opinions);
}

TEST_CASE("generate_step_interactions honors the arc budget") {
    GenConfig config;  // 30 actors, 3 arcs each
    Rng rng(5);
    std::vector<double> x(30);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);

    const auto step = generate_step_interactions(x, config, rng);
    CHECK(step.arcs.size() == 90);
    for (const auto& arc : step.arcs) {
        CHECK(arc.u != arc.v);
        CHECK((arc.sign == 1 || arc.sign == -1));
    }
}

TEST_CASE("activity mask restricts the eligible targets") {
    GenConfig config;
    config.num_actors = 10;
    Rng rng(55);
    std::vector<double> x(10);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    std::vector<std::uint8_t> active(10, 1);
    active[3] = 0;
    active[7] = 0;
    const auto step = generate_step_interactions(x, config, rng, active);
    for (const auto& arc : step.arcs) {
        CHECK(arc.v != 3);
        CHECK(arc.v != 7);
    }
}

TEST_CASE("identical opinions make every interaction positive") {
    GenConfig config;
    Rng rng(6);
    std::vector<double> x(30, 0.37);
    const auto step = generate_step_interactions(x, config, rng);
    CHECK(step.positive_fraction == 1.0);
    for (const auto& arc : step.arcs) CHECK(arc.sign == 1);
}

TEST_CASE("empirical sign frequency matches the positive fraction") {
    GenConfig config;
    Rng rng(7);
    std::vector<double> x(30);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);

    std::size_t draws = 0, positives = 0;
    double alpha = 0.0;
    while (draws < 10000) {
        const auto step = generate_step_interactions(x, config, rng);
        alpha = step.positive_fraction;
        for (const auto& arc : step.arcs) {
            ++draws;
            if (arc.sign == 1) ++positives;
        }
    }
    const double freq = static_cast<double>(positives) / draws;
    const double se = std::sqrt(alpha * (1.0 - alpha) / draws);
    CHECK(std::fabs(freq - alpha) <= 3.0 * se);
}

TEST_CASE("positive arcs prefer high-affinity targets") {
    GenConfig config;
    config.scenario = scenario_preset("balanced");
    Rng rng(8);
    std::vector<double> x(30);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    const MacroParams& p = config.scenario.params;

    double selected_total = 0.0, uniform_total = 0.0;
    std::size_t count = 0;
    while (count < 1000) {
        const auto step = generate_step_interactions(x, config, rng);
        for (const auto& arc : step.arcs) {
            if (arc.sign != 1) continue;
            selected_total += acceptance_kernel(x[arc.u], x[arc.v], p);
            int r = rng.uniform_int(30);
            if (r == arc.u) r = (r + 1) % 30;
            uniform_total += acceptance_kernel(x[arc.u], x[r], p);
            ++count;
        }
    }
    CHECK(selected_total / count > uniform_total / count);
}

TEST_CASE("generate_step_actions honors the budget and the distribution") {
    GenConfig config;
    Rng rng(9);

    SUBCASE("count contract") {
        std::vector<double> x(30);
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        std::vector<double> centers(20), widths(20, 0.5);
        for (auto& c : centers) c = rng.uniform(-1.0, 1.0);
        const auto arcs = generate_step_actions(x, centers, widths, config, rng);
        CHECK(arcs.size() == 450);
    }
    SUBCASE("single action takes everything") {
        std::vector<double> x = {0.4, -0.4};
        std::vector<double> centers = {0.9}, widths = {0.2};
        GenConfig small;
        small.num_actors = 2;
        small.num_actions = 1;
        const auto arcs = generate_step_actions(x, centers, widths, small, rng);
        for (auto [v, a] : arcs) CHECK(a == 0);
    }
    SUBCASE("empirical frequencies match the exact probabilities") {
        GenConfig one;
        one.num_actors = 2;
        one.num_actions = 5;
        one.actions_per_actor = 5000;  // 10^4 draws across both actors
        std::vector<double> x = {0.3, 0.3};
        std::vector<double> centers = {-0.9, -0.4, 0.1, 0.5, 0.8};
        std::vector<double> widths = {0.4, 0.5, 0.6, 0.3, 0.5};
        const auto arcs = generate_step_actions(x, centers, widths, one, rng);
        std::vector<std::size_t> hits(5, 0);
        for (auto [v, a] : arcs) ++hits[a];
        const std::size_t draws = arcs.size();
        for (int a = 0; a < 5; ++a) {
            const double expected = action_probability(
                0, a, x, centers, widths, one.scenario.params);
            const double freq = static_cast<double>(hits[a]) / draws;
            const double se = std::sqrt(expected * (1.0 - expected) / draws);
            CHECK(std::fabs(freq - expected) <= 3.0 * se);
        }
    }
}

TEST_CASE("generate_trace counts, determinism and reproducibility") {
    GenConfig config;
    config.seed = 17;

    auto [trace, truth] = generate_trace(config);

    SUBCASE("arc counts follow the budgets") {
        CHECK(trace.interactions.size() == 900);
        CHECK(trace.actor_actions.size() == 4500);
        CHECK(trace.num_timesteps == 10);
        std::vector<int> per_step(10, 0);
        for (const auto& arc : trace.interactions) ++per_step[arc.t];
        for (int c : per_step) CHECK(c == 90);
    }
    SUBCASE("identical seeds give identical output") {
        auto [trace2, truth2] = generate_trace(config);
        CHECK(trace == trace2);
        CHECK(truth.latent.initial_opinions == truth2.latent.initial_opinions);
        CHECK(truth.latent.signs == truth2.latent.signs);
        CHECK(truth.trajectory == truth2.trajectory);
        CHECK(truth.positive_fraction_series == truth2.positive_fraction_series);
    }
    SUBCASE("trajectory is reproducible through the matrix propagation") {
        const TraceView view(trace);
        const auto matrices =
            build_past_matrices(trace, view, trace.num_timesteps,
                                truth.latent.signs, config.scenario.params);
        Propagation forward =
            propagate_trajectory(truth.latent.initial_opinions, matrices);
        REQUIRE(truth.trajectory.size() == 10);
        for (int t = 0; t < 10; ++t) CHECK(forward.states[t] == truth.trajectory[t]);
    }
    SUBCASE("trajectory starts at the latent initial opinions") {
        CHECK(truth.trajectory[0] == truth.latent.initial_opinions);
    }
}

TEST_CASE("high acceptance contracts toward consensus") {
    GenConfig config;
    config.scenario = scenario_preset("high_acceptance");
    config.scenario.params.mu_plus = 0.1;
    config.num_timesteps = 50;
    config.seed = 3;
    auto [trace, truth] = generate_trace(config);
    CHECK(stddev(truth.trajectory.back()) < stddev(truth.trajectory.front()));
}

TEST_CASE("non-commitment drifts less than balanced") {
    double drift_nc = 0.0, drift_bal = 0.0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        for (const char* name : {"non_commitment", "balanced"}) {
            GenConfig config;
            config.scenario = scenario_preset(name);
            config.seed = seed;
            auto [trace, truth] = generate_trace(config);
            double drift = 0.0;
            for (int v = 0; v < config.num_actors; ++v)
                drift += std::fabs(truth.trajectory.back()[v] -
                                   truth.trajectory.front()[v]);
            drift /= config.num_actors;
            (std::string(name) == "non_commitment" ? drift_nc : drift_bal) += drift;
        }
    }
    CHECK(drift_nc < drift_bal);
}

TEST_CASE("rng uniform01 stays in the half-open unit interval") {
    Rng rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}
