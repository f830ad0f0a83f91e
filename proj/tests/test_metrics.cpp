#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "odyn/generator.hpp"
#include "odyn/metrics.hpp"
#include "odyn/model.hpp"
#include "oracles.hpp"

using namespace odyn;

namespace {

GroundTruth simple_truth() {
    GroundTruth truth;
    truth.latent.initial_opinions = {0.2, -0.4, 0.9};
    truth.latent.action_centers = {0.5, -0.5};
    truth.latent.action_half_widths = {0.4, 0.4};
    return truth;
}

}  // namespace

TEST_CASE("mae_opinions and the mirror flip") {
    const GroundTruth truth = simple_truth();

    SUBCASE("exact estimate") {
        LatentState est = truth.latent;
        const auto r = mae_opinions(est, truth);
        CHECK(r.mae_x0 == 0.0);
        CHECK(r.mae_w == 0.0);
        CHECK_FALSE(r.flipped);
    }
    SUBCASE("mirrored estimate") {
        LatentState est = truth.latent;
        for (auto& x : est.initial_opinions) x = -x;
        for (auto& w : est.action_centers) w = -w;
        const auto r = mae_opinions(est, truth);
        CHECK(r.mae_x0 == 0.0);
        CHECK(r.mae_w == 0.0);
        CHECK(r.flipped);
    }
    SUBCASE("constant offset") {
        LatentState est = truth.latent;
        for (auto& x : est.initial_opinions) x += 0.1;
        const auto r = mae_opinions(est, truth);
        CHECK(r.mae_x0 == doctest::Approx(0.1).epsilon(1e-12));
        CHECK_FALSE(r.flipped);
    }
    SUBCASE("flipping ground truth changes the flag, not the errors") {
        LatentState est = truth.latent;
        est.initial_opinions[0] += 0.05;
        est.action_centers[1] -= 0.02;
        const auto r = mae_opinions(est, truth);

        GroundTruth mirrored = truth;
        for (auto& x : mirrored.latent.initial_opinions) x = -x;
        for (auto& w : mirrored.latent.action_centers) w = -w;
        const auto rm = mae_opinions(est, mirrored);
        CHECK(rm.mae_x0 == doctest::Approx(r.mae_x0).epsilon(1e-12));
        CHECK(rm.mae_w == doctest::Approx(r.mae_w).epsilon(1e-12));
        CHECK(rm.flipped != r.flipped);
    }
    SUBCASE("index mismatch") {
        LatentState est = truth.latent;
        est.initial_opinions.pop_back();
        CHECK_THROWS_AS(mae_opinions(est, truth), DataError);
    }
}

TEST_CASE("sign_f1") {
    SUBCASE("identical maps") {
        std::vector<std::int8_t> s = {1, -1, 1, -1};
        CHECK(sign_f1(s, s) == 1.0);
    }
    SUBCASE("all inverted on a balanced set") {
        std::vector<std::int8_t> truth = {1, 1, -1, -1};
        std::vector<std::int8_t> est = {-1, -1, 1, 1};
        CHECK(sign_f1(est, truth) == 0.0);
    }
    SUBCASE("hand-built confusion with TP=1, FP=1, FN=1") {
        std::vector<std::int8_t> truth = {1, -1, 1, -1};
        std::vector<std::int8_t> est = {1, 1, -1, -1};
        CHECK(sign_f1(est, truth) == 0.5);
    }
    SUBCASE("coverage mismatch") {
        std::vector<std::int8_t> a = {1, 1};
        std::vector<std::int8_t> b = {1};
        CHECK_THROWS_AS(sign_f1(a, b), DataError);
    }
}

TEST_CASE("action_link_ap") {
    MacroParams p;

    SUBCASE("positives scored above all negatives") {
        // both actors sit on action a0; every (v, a0, t) pair occurs, so
        // sampled negatives all involve the far action a1
        Trace trace;
        trace.num_timesteps = 2;
        trace.actors = {"u0", "u1"};
        trace.actions = {"a0", "a1"};
        for (int t = 0; t < 2; ++t)
            for (int v = 0; v < 2; ++v) trace.actor_actions.push_back({t, v, 0});
        LatentState est;
        est.initial_opinions = {-0.8, -0.8};
        est.action_centers = {-0.8, 0.8};
        est.action_half_widths = {0.3, 0.3};
        CHECK(action_link_ap(trace, est, p, 7) == 1.0);
    }
    SUBCASE("uninformative estimate on a uniform trace is near one half") {
        // positives drawn uniformly over a grid much larger than |F|, so
        // positive and sampled-negative scores are exchangeable under a
        // random estimate
        Rng rng(13);
        Trace trace;
        trace.num_timesteps = 10;
        for (int i = 0; i < 20; ++i) trace.actors.push_back("u" + std::to_string(i));
        for (int i = 0; i < 10; ++i) trace.actions.push_back("a" + std::to_string(i));
        for (int k = 0; k < 1000; ++k)
            trace.actor_actions.push_back(
                {rng.uniform_int(10), rng.uniform_int(20), rng.uniform_int(10)});
        LatentState est;
        for (int i = 0; i < 20; ++i)
            est.initial_opinions.push_back(rng.uniform(-1.0, 1.0));
        for (int i = 0; i < 10; ++i) {
            est.action_centers.push_back(rng.uniform(-1.0, 1.0));
            est.action_half_widths.push_back(rng.uniform(0.2, 0.8));
        }
        const double ap = action_link_ap(trace, est, p, 99);
        CHECK(ap > 0.45);
        CHECK(ap < 0.55);
    }
    SUBCASE("seeded sampling is deterministic") {
        Rng rng(14);
        Trace trace;
        trace.num_timesteps = 2;
        trace.actors = {"u0", "u1", "u2"};
        trace.actions = {"a0", "a1", "a2"};
        for (int k = 0; k < 6; ++k)
            trace.actor_actions.push_back(
                {rng.uniform_int(2), rng.uniform_int(3), rng.uniform_int(3)});
        LatentState est;
        est.initial_opinions = {0.1, -0.5, 0.8};
        est.action_centers = {0.0, 0.6, -0.7};
        est.action_half_widths = {0.5, 0.4, 0.3};
        CHECK(action_link_ap(trace, est, p, 123) ==
              action_link_ap(trace, est, p, 123));
    }
    SUBCASE("actor relabeling leaves the value unchanged") {
        Rng rng(15);
        Trace trace;
        trace.num_timesteps = 2;
        trace.actors = {"alice", "bob", "carol"};
        trace.actions = {"x", "y"};
        for (int k = 0; k < 8; ++k)
            trace.actor_actions.push_back(
                {rng.uniform_int(2), rng.uniform_int(3), rng.uniform_int(2)});
        trace.interactions = {{0, 0, 1}, {1, 2, 0}};
        LatentState est;
        est.initial_opinions = {0.3, -0.2, 0.7};
        est.action_centers = {0.1, -0.6};
        est.action_half_widths = {0.5, 0.4};
        est.signs = {1, -1};
        const double ap = action_link_ap(trace, est, p, 77);

        // swap actor indices 0 and 2 everywhere, ids included
        Trace relabeled = trace;
        relabeled.actors = {"carol", "bob", "alice"};
        auto swap02 = [](int v) { return v == 0 ? 2 : (v == 2 ? 0 : v); };
        for (auto& arc : relabeled.actor_actions) arc.v = swap02(arc.v);
        for (auto& arc : relabeled.interactions) {
            arc.u = swap02(arc.u);
            arc.v = swap02(arc.v);
        }
        LatentState est2 = est;
        std::swap(est2.initial_opinions[0], est2.initial_opinions[2]);
        CHECK(action_link_ap(relabeled, est2, p, 77) == ap);
    }
    SUBCASE("too few actions") {
        Trace trace;
        trace.num_timesteps = 1;
        trace.actors = {"u0"};
        trace.actions = {"a0"};
        trace.actor_actions = {{0, 0, 0}};
        LatentState est;
        est.initial_opinions = {0.0};
        est.action_centers = {0.0};
        est.action_half_widths = {0.5};
        CHECK_THROWS_AS(action_link_ap(trace, est, p, 1), DataError);
    }
}

TEST_CASE("average precision arithmetic") {
    SUBCASE("single positive ranked last") {
        // 1 positive scored lowest among 1 sampled negative: AP = 1/2
        Trace trace;
        trace.num_timesteps = 1;
        trace.actors = {"u0", "u1"};
        trace.actions = {"a0", "a1"};
        trace.actor_actions = {{0, 0, 0}};  // u0 performs a0, far from it
        LatentState est;
        est.initial_opinions = {-0.9, 0.9};
        est.action_centers = {0.9, -0.9};
        est.action_half_widths = {0.3, 0.3};
        MacroParams p;
        CHECK(action_link_ap(trace, est, p, 3) == doctest::Approx(0.5));
    }
}

TEST_CASE("evaluate bundles all metrics") {
    GenConfig gen;
    gen.num_actors = 12;
    gen.num_actions = 6;
    gen.num_timesteps = 4;
    gen.interactions_per_actor = 2;
    gen.actions_per_actor = 5;
    gen.seed = 23;
    auto [trace, truth] = generate_trace(gen);

    const auto report = evaluate(trace, truth.latent, truth,
                                 gen.scenario.params, 55);
    CHECK(report.mae_x0 == 0.0);
    CHECK(report.mae_w == 0.0);
    CHECK(report.sign_f1 == 1.0);
    CHECK(report.action_ap > 0.5);
    CHECK_FALSE(report.sign_flipped);
}

TEST_CASE("model_select") {
    GenConfig gen;
    gen.num_actors = 8;
    gen.num_actions = 4;
    gen.num_timesteps = 2;
    gen.interactions_per_actor = 2;
    gen.actions_per_actor = 3;
    gen.seed = 31;
    auto [trace, truth] = generate_trace(gen);

    FitConfig config;
    config.restarts = 1;
    config.epochs = 1;
    config.inner_iterations = 5;
    config.seed = 2;

    SUBCASE("single candidate is chosen") {
        std::vector<Scenario> candidates = {scenario_preset("balanced")};
        const auto report = model_select(trace, candidates, config);
        CHECK(report.chosen == 0);
        CHECK(report.candidates[0].rank == 1);
        CHECK_FALSE(report.tie);
    }
    SUBCASE("identical candidates tie and keep list order") {
        std::vector<Scenario> candidates = {scenario_preset("balanced"),
                                            scenario_preset("balanced")};
        const auto report = model_select(trace, candidates, config);
        CHECK(report.chosen == 0);
        CHECK(report.tie);
        CHECK(report.candidates[0].log_likelihood ==
              report.candidates[1].log_likelihood);
    }
    SUBCASE("ranking does not depend on candidate order") {
        std::vector<Scenario> fwd = {scenario_preset("balanced"),
                                     scenario_preset("high_contrast"),
                                     scenario_preset("non_commitment")};
        std::vector<Scenario> rev(fwd.rbegin(), fwd.rend());
        const auto a = model_select(trace, fwd, config);
        const auto b = model_select(trace, rev, config);
        CHECK(a.candidates[a.chosen].scenario.name ==
              b.candidates[b.chosen].scenario.name);
        for (int i = 0; i < 3; ++i)
            CHECK(a.candidates[i].log_likelihood ==
                  b.candidates[2 - i].log_likelihood);
    }
}
