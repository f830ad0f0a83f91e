#include "odyn/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "odyn/generator.hpp"
#include "odyn/inference.hpp"
#include "odyn/metrics.hpp"
#include "odyn/model.hpp"
#include "odyn/trace_io.hpp"

namespace odyn::cli {

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::string format_real(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

int default_threads() {
    if (const char* env = std::getenv("ODYN_THREADS")) {
        const int value = std::atoi(env);
        if (value >= 1) return value;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

struct MacroOptions {
    std::string scenario = "balanced";
    std::optional<double> eps_plus, eps_minus, mu_plus, mu_minus;
    std::optional<double> rho_interactions, rho_actions;
    bool hard_latitudes = false;

    void attach(CLI::App& app) {
        app.add_option("--scenario", scenario, "Macro-parameter preset")
            ->check(CLI::IsMember(scenario_names()));
        app.add_option("--eps-plus", eps_plus, "Latitude of acceptance")
            ->check(CLI::Range(0.0, 2.0));
        app.add_option("--eps-minus", eps_minus, "Latitude of contrast")
            ->check(CLI::Range(0.0, 2.0));
        app.add_option("--mu-plus", mu_plus, "Positive influence speed")
            ->check(CLI::PositiveNumber);
        app.add_option("--mu-minus", mu_minus, "Negative influence speed")
            ->check(CLI::PositiveNumber);
        app.add_option("--rho-interactions", rho_interactions,
                       "Interaction sigmoid steepness")
            ->check(CLI::PositiveNumber);
        app.add_option("--rho-actions", rho_actions, "Action sigmoid steepness")
            ->check(CLI::PositiveNumber);
        app.add_flag("--hard-latitudes", hard_latitudes,
                     "Set both steepnesses to 1e4 (near-deterministic latitudes)");
    }

    Scenario resolve() const {
        Scenario s = scenario_preset(scenario);
        if (eps_plus) s.params.eps_plus = *eps_plus;
        if (eps_minus) s.params.eps_minus = *eps_minus;
        if (mu_plus) s.params.mu_plus = *mu_plus;
        if (mu_minus) s.params.mu_minus = *mu_minus;
        if (rho_interactions) s.params.rho_interactions = *rho_interactions;
        if (rho_actions) s.params.rho_actions = *rho_actions;
        if (hard_latitudes) {
            s.params.rho_interactions = 1e4;
            s.params.rho_actions = 1e4;
        }
        s.params.validate();
        return s;
    }

    void describe(std::map<std::string, std::string>& config,
                  const MacroParams& p) const {
        config["scenario"] = scenario;
        config["eps_plus"] = format_real(p.eps_plus);
        config["eps_minus"] = format_real(p.eps_minus);
        config["mu_plus"] = format_real(p.mu_plus);
        config["mu_minus"] = format_real(p.mu_minus);
        config["rho_interactions"] = format_real(p.rho_interactions);
        config["rho_actions"] = format_real(p.rho_actions);
    }
};

struct FitOptions {
    FitConfig config;
    std::string anchors_path;

    void attach(CLI::App& app) {
        config.threads = default_threads();
        app.add_option("--epochs", config.epochs, "Timestep sweeps per restart")
            ->check(CLI::PositiveNumber);
        app.add_option("--restarts", config.restarts, "Random restarts")
            ->check(CLI::PositiveNumber);
        app.add_option("--lr-actions", config.lr_actions, "Action learning rate")
            ->check(CLI::PositiveNumber);
        app.add_option("--lr-interactions", config.lr_interactions,
                       "Interaction learning rate")
            ->check(CLI::PositiveNumber);
        app.add_option("--inner-iterations", config.inner_iterations,
                       "Per-timestep EM iteration cap")
            ->check(CLI::PositiveNumber);
        app.add_option("--convergence-tol", config.convergence_tol,
                       "Objective change below which the EM loop stops")
            ->check(CLI::NonNegativeNumber);
        app.add_option("--max-step", config.max_step,
                       "Per-coordinate cap on one gradient update")
            ->check(CLI::PositiveNumber);
        app.add_option("--seed", config.seed, "Base RNG seed");
        app.add_option("--anchors", anchors_path,
                       "TSV of pinned action centers (a <TAB> w)");
        app.add_flag("--sigma-prior", config.sigma_prior_enabled,
                     "Apply the beta(8,8) prior on action half-widths");
        app.add_flag("--normalized-posterior", config.normalized_posterior,
                     "Bayes-normalized sign responsibilities");
        app.add_option("--threads", config.threads, "Worker threads")
            ->check(CLI::PositiveNumber);
    }

    void describe(std::map<std::string, std::string>& out) const {
        out["epochs"] = std::to_string(config.epochs);
        out["restarts"] = std::to_string(config.restarts);
        out["lr_actions"] = format_real(config.lr_actions);
        out["lr_interactions"] = format_real(config.lr_interactions);
        out["inner_iterations"] = std::to_string(config.inner_iterations);
        out["convergence_tol"] = format_real(config.convergence_tol);
        out["max_step"] = format_real(config.max_step);
        out["sigma_prior"] = config.sigma_prior_enabled ? "true" : "false";
        out["normalized_posterior"] = config.normalized_posterior ? "true" : "false";
        out["threads"] = std::to_string(config.threads);
        if (!anchors_path.empty()) out["anchors"] = anchors_path;
    }
};

Trace load_trace(const std::string& trace_dir) {
    const fs::path dir(trace_dir);
    return io::read_trace(dir / "interactions.tsv", dir / "actions.tsv");
}

int run_generate(const std::string& out_dir, const MacroOptions& macro,
                 GenConfig config) {
    config.scenario = macro.resolve();
    config.validate();
    fs::create_directories(out_dir);
    const fs::path out(out_dir);

    auto [trace, truth] = generate_trace(config);
    io::write_trace(trace, out / "interactions.tsv", out / "actions.tsv");
    io::write_ground_truth(out / "ground_truth.json", truth, trace,
                           config.scenario);

    io::RunManifest manifest;
    manifest.command = "generate";
    manifest.seed = config.seed;
    macro.describe(manifest.config, config.scenario.params);
    manifest.config["num_actors"] = std::to_string(config.num_actors);
    manifest.config["num_actions"] = std::to_string(config.num_actions);
    manifest.config["num_timesteps"] = std::to_string(config.num_timesteps);
    manifest.config["interactions_per_actor"] =
        std::to_string(config.interactions_per_actor);
    manifest.config["actions_per_actor"] = std::to_string(config.actions_per_actor);
    manifest.config["seed"] = std::to_string(config.seed);
    manifest.outputs["interactions"] = "interactions.tsv";
    manifest.outputs["actions"] = "actions.tsv";
    manifest.outputs["ground_truth"] = "ground_truth.json";
    io::write_manifest(out / "manifest.json", manifest);
    return kExitOk;
}

int run_fit(const std::string& trace_dir, const std::string& out_dir,
            const MacroOptions& macro, FitOptions fit_opts) {
    const Scenario scenario = macro.resolve();
    const Trace trace = load_trace(trace_dir);
    if (!fit_opts.anchors_path.empty())
        fit_opts.config.anchors = io::read_anchors(fit_opts.anchors_path, trace);
    fit_opts.config.validate();

    const FitResult result = fit(trace, scenario.params, fit_opts.config);

    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    io::write_fit(out / "fit.json", result, trace, scenario.params);

    io::RunManifest manifest;
    manifest.command = "fit";
    manifest.seed = fit_opts.config.seed;
    macro.describe(manifest.config, scenario.params);
    fit_opts.describe(manifest.config);
    manifest.config["seed"] = std::to_string(fit_opts.config.seed);
    manifest.inputs["trace_dir"] = trace_dir;
    manifest.outputs["fit"] = "fit.json";
    io::write_manifest(out / "manifest.json", manifest);
    return kExitOk;
}

int run_select(const std::string& trace_dir, const std::string& out_dir,
               const std::string& candidate_list, const MacroOptions& macro,
               FitOptions fit_opts) {
    std::vector<Scenario> candidates;
    std::string names = candidate_list;
    while (!names.empty()) {
        const std::size_t comma = names.find(',');
        const std::string name = names.substr(0, comma);
        names = comma == std::string::npos ? "" : names.substr(comma + 1);
        if (name.empty()) throw DataError("empty candidate name in list");
        Scenario s = scenario_preset(name);
        // non-latitude settings (mu, rho) follow the shared flags
        const Scenario base = macro.resolve();
        s.params.mu_plus = base.params.mu_plus;
        s.params.mu_minus = base.params.mu_minus;
        s.params.rho_interactions = base.params.rho_interactions;
        s.params.rho_actions = base.params.rho_actions;
        candidates.push_back(std::move(s));
    }

    const Trace trace = load_trace(trace_dir);
    if (!fit_opts.anchors_path.empty())
        fit_opts.config.anchors = io::read_anchors(fit_opts.anchors_path, trace);
    fit_opts.config.validate();

    const SelectionReport report = model_select(trace, candidates, fit_opts.config);
    for (const auto& c : report.candidates)
        if (c.failed)
            std::cerr << "warning: candidate '" << c.scenario.name
                      << "' failed and was excluded from the ranking\n";

    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    io::write_selection(out / "selection.json", report);

    io::RunManifest manifest;
    manifest.command = "select";
    manifest.seed = fit_opts.config.seed;
    manifest.config["candidates"] = candidate_list;
    fit_opts.describe(manifest.config);
    manifest.config["seed"] = std::to_string(fit_opts.config.seed);
    manifest.inputs["trace_dir"] = trace_dir;
    manifest.outputs["selection"] = "selection.json";
    io::write_manifest(out / "manifest.json", manifest);
    return kExitOk;
}

int run_evaluate(const std::string& trace_dir, const std::string& fit_path,
                 const std::string& truth_path, const std::string& out_dir,
                 std::uint64_t seed) {
    const Trace trace = load_trace(trace_dir);
    const io::FitFile fitted = io::read_fit(fit_path, trace);
    const GroundTruth truth = io::read_ground_truth(truth_path, trace);

    const EvalReport report =
        evaluate(trace, fitted.latent, truth, fitted.params, seed);

    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    io::write_eval(out / "eval.json", report);

    io::RunManifest manifest;
    manifest.command = "evaluate";
    manifest.seed = seed;
    manifest.config["seed"] = std::to_string(seed);
    manifest.inputs["trace_dir"] = trace_dir;
    manifest.inputs["fit"] = fit_path;
    manifest.inputs["ground_truth"] = truth_path;
    manifest.outputs["eval"] = "eval.json";
    io::write_manifest(out / "manifest.json", manifest);
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Opinion-dynamics trace generation, estimation and evaluation"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a synthetic trace");
    MacroOptions gen_macro;
    gen_macro.attach(*gen);
    GenConfig gen_config;
    std::string gen_out;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--actors", gen_config.num_actors, "Number of actors")
        ->check(CLI::Range(2, 1000000));
    gen->add_option("--actions", gen_config.num_actions, "Number of actions")
        ->check(CLI::PositiveNumber);
    gen->add_option("--timesteps", gen_config.num_timesteps, "Number of timesteps")
        ->check(CLI::PositiveNumber);
    gen->add_option("--interactions-per-step", gen_config.interactions_per_actor,
                    "Interaction arcs per actor per step")
        ->check(CLI::PositiveNumber);
    gen->add_option("--actions-per-step", gen_config.actions_per_actor,
                    "Action arcs per actor per step")
        ->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_config.seed, "RNG seed");

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "Estimate the latent state of a trace");
    MacroOptions fit_macro;
    fit_macro.attach(*fit_cmd);
    FitOptions fit_opts;
    fit_opts.attach(*fit_cmd);
    std::string fit_trace_dir, fit_out;
    fit_cmd->add_option("--trace-dir", fit_trace_dir,
                        "Directory with interactions.tsv and actions.tsv")
        ->required();
    fit_cmd->add_option("--out", fit_out, "Output directory")->required();

    // select
    auto* sel = app.add_subcommand("select",
                                   "Rank candidate scenarios by likelihood");
    MacroOptions sel_macro;
    sel_macro.attach(*sel);
    FitOptions sel_opts;
    sel_opts.attach(*sel);
    std::string sel_trace_dir, sel_out;
    std::string sel_candidates =
        "balanced,high_contrast,high_acceptance,non_commitment";
    sel->add_option("--trace-dir", sel_trace_dir,
                    "Directory with interactions.tsv and actions.tsv")
        ->required();
    sel->add_option("--out", sel_out, "Output directory")->required();
    sel->add_option("--candidates", sel_candidates,
                    "Comma-separated scenario names");

    // evaluate
    auto* ev = app.add_subcommand("evaluate",
                                  "Score a fit against the generator ground truth");
    std::string ev_trace_dir, ev_fit, ev_truth, ev_out;
    std::uint64_t ev_seed = 0;
    ev->add_option("--trace-dir", ev_trace_dir,
                   "Directory with interactions.tsv and actions.tsv")
        ->required();
    ev->add_option("--fit", ev_fit, "fit.json produced by the fit command")
        ->required();
    ev->add_option("--truth", ev_truth, "ground_truth.json from the generator")
        ->required();
    ev->add_option("--out", ev_out, "Output directory")->required();
    ev->add_option("--seed", ev_seed, "Negative-sampling seed");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return run_generate(gen_out, gen_macro, gen_config);
        if (fit_cmd->parsed())
            return run_fit(fit_trace_dir, fit_out, fit_macro, fit_opts);
        if (sel->parsed())
            return run_select(sel_trace_dir, sel_out, sel_candidates, sel_macro,
                              sel_opts);
        if (ev->parsed())
            return run_evaluate(ev_trace_dir, ev_fit, ev_truth, ev_out, ev_seed);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
    return kExitUsage;
}

}  // namespace odyn::cli
