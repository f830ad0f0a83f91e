#include "odyn/trace_io.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

namespace odyn::io {

namespace {

using nlohmann::json;

std::string location(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line);
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

int parse_timestep(const std::string& text, const std::filesystem::path& path,
                   std::size_t line) {
    try {
        std::size_t consumed = 0;
        const int value = std::stoi(text, &consumed);
        if (consumed != text.size() || value < 0) throw std::invalid_argument("");
        return value;
    } catch (const std::exception&) {
        throw DataError(location(path, line) + ": invalid timestep '" + text + "'");
    }
}

double parse_real(const std::string& text, const std::filesystem::path& path,
                  std::size_t line) {
    try {
        std::size_t consumed = 0;
        const double value = std::stod(text, &consumed);
        if (consumed != text.size()) throw std::invalid_argument("");
        return value;
    } catch (const std::exception&) {
        throw DataError(location(path, line) + ": invalid number '" + text + "'");
    }
}

struct RawArcs {
    // (t, id1, id2) rows in file order
    std::vector<std::tuple<int, std::string, std::string>> rows;
};

RawArcs read_arc_file(const std::filesystem::path& path, const char* header) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    RawArcs raw;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != header)
                throw DataError(location(path, line_no) + ": expected header '" +
                                header + "', got '" + line + "'");
            continue;
        }
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 3)
            throw DataError(location(path, line_no) +
                            ": expected 3 tab-separated fields, got " +
                            std::to_string(fields.size()));
        if (fields[1].empty() || fields[2].empty())
            throw DataError(location(path, line_no) + ": empty id");
        raw.rows.emplace_back(parse_timestep(fields[0], path, line_no), fields[1],
                              fields[2]);
    }
    return raw;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

void dump_json(const std::filesystem::path& path, const json& value) {
    auto out = open_output(path);
    out << value.dump(2) << '\n';
    if (!out) throw DataError("failed while writing " + path.string());
}

json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

json params_to_json(const MacroParams& p) {
    return {{"eps_plus", p.eps_plus},         {"eps_minus", p.eps_minus},
            {"mu_plus", p.mu_plus},           {"mu_minus", p.mu_minus},
            {"rho_interactions", p.rho_interactions},
            {"rho_actions", p.rho_actions}};
}

MacroParams params_from_json(const json& j) {
    MacroParams p;
    p.eps_plus = j.at("eps_plus").get<double>();
    p.eps_minus = j.at("eps_minus").get<double>();
    p.mu_plus = j.at("mu_plus").get<double>();
    p.mu_minus = j.at("mu_minus").get<double>();
    p.rho_interactions = j.at("rho_interactions").get<double>();
    p.rho_actions = j.at("rho_actions").get<double>();
    return p;
}

json latent_to_json(const LatentState& latent, const Trace& trace) {
    json j;
    j["actors"] = trace.actors;
    j["actions"] = trace.actions;
    j["initial_opinions"] = latent.initial_opinions;
    j["action_centers"] = latent.action_centers;
    j["action_half_widths"] = latent.action_half_widths;
    j["signs"] = latent.signs;  // aligned with interactions.tsv rows
    return j;
}

void check_id_list(const json& j, const char* key,
                   const std::vector<std::string>& expected,
                   const std::filesystem::path& path) {
    const auto listed = j.at(key).get<std::vector<std::string>>();
    if (listed.size() != expected.size())
        throw DataError(path.string() + ": " + key + " count " +
                        std::to_string(listed.size()) + " does not match trace (" +
                        std::to_string(expected.size()) + ")");
    for (std::size_t i = 0; i < listed.size(); ++i)
        if (listed[i] != expected[i])
            throw DataError(path.string() + ": " + key + " mismatch at index " +
                            std::to_string(i) + ": '" + listed[i] +
                            "' vs trace '" + expected[i] + "'");
}

LatentState latent_from_json(const json& j, const Trace& trace,
                             const std::filesystem::path& path) {
    check_id_list(j, "actors", trace.actors, path);
    check_id_list(j, "actions", trace.actions, path);
    LatentState latent;
    latent.initial_opinions = j.at("initial_opinions").get<std::vector<double>>();
    latent.action_centers = j.at("action_centers").get<std::vector<double>>();
    latent.action_half_widths =
        j.at("action_half_widths").get<std::vector<double>>();
    latent.signs = j.at("signs").get<std::vector<std::int8_t>>();
    if (latent.signs.size() != trace.interactions.size())
        throw DataError(path.string() + ": sign count " +
                        std::to_string(latent.signs.size()) +
                        " does not cover the interaction arcs (" +
                        std::to_string(trace.interactions.size()) + ")");
    return latent;
}

}  // namespace

void write_trace(const Trace& trace, const std::filesystem::path& interactions,
                 const std::filesystem::path& actions) {
    auto out = open_output(interactions);
    out << "t\tu\tv\n";
    for (const auto& arc : trace.interactions)
        out << arc.t << '\t' << trace.actors[arc.u] << '\t' << trace.actors[arc.v]
            << '\n';
    if (!out) throw DataError("failed while writing " + interactions.string());

    auto out2 = open_output(actions);
    out2 << "t\tv\ta\n";
    for (const auto& arc : trace.actor_actions)
        out2 << arc.t << '\t' << trace.actors[arc.v] << '\t'
             << trace.actions[arc.a] << '\n';
    if (!out2) throw DataError("failed while writing " + actions.string());
}

Trace read_trace(const std::filesystem::path& interactions,
                 const std::filesystem::path& actions) {
    const RawArcs raw_inter = read_arc_file(interactions, "t\tu\tv");
    const RawArcs raw_act = read_arc_file(actions, "t\tv\ta");

    std::set<std::string> actor_ids;
    std::set<std::string> action_ids;
    int max_t = -1;
    for (const auto& [t, u, v] : raw_inter.rows) {
        actor_ids.insert(u);
        actor_ids.insert(v);
        max_t = std::max(max_t, t);
    }
    for (const auto& [t, v, a] : raw_act.rows) {
        actor_ids.insert(v);
        action_ids.insert(a);
        max_t = std::max(max_t, t);
    }

    Trace trace;
    trace.num_timesteps = max_t + 1;
    trace.actors.assign(actor_ids.begin(), actor_ids.end());
    trace.actions.assign(action_ids.begin(), action_ids.end());
    std::map<std::string, int> actor_index, action_index;
    for (std::size_t i = 0; i < trace.actors.size(); ++i)
        actor_index[trace.actors[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < trace.actions.size(); ++i)
        action_index[trace.actions[i]] = static_cast<int>(i);

    for (const auto& [t, u, v] : raw_inter.rows)
        trace.interactions.push_back({t, actor_index.at(u), actor_index.at(v)});
    for (const auto& [t, v, a] : raw_act.rows)
        trace.actor_actions.push_back({t, actor_index.at(v), action_index.at(a)});
    trace.validate();
    return trace;
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth,
                        const Trace& trace, const Scenario& scenario) {
    json j = latent_to_json(truth.latent, trace);
    j["trajectory"] = truth.trajectory;
    j["positive_fractions"] = truth.positive_fraction_series;
    j["scenario"] = scenario.name;
    j["params"] = params_to_json(scenario.params);
    dump_json(path, j);
}

GroundTruth read_ground_truth(const std::filesystem::path& path,
                              const Trace& trace) {
    const json j = load_json(path);
    GroundTruth truth;
    truth.latent = latent_from_json(j, trace, path);
    truth.trajectory = j.at("trajectory").get<std::vector<std::vector<double>>>();
    truth.positive_fraction_series =
        j.at("positive_fractions").get<std::vector<double>>();
    return truth;
}

void write_fit(const std::filesystem::path& path, const FitResult& result,
               const Trace& trace, const MacroParams& params) {
    json j = latent_to_json(result.latent, trace);
    j["trajectory"] = result.trajectory;
    j["positive_fractions"] = result.positive_fraction_series;
    j["log_likelihood"] = result.log_likelihood;
    j["restart_index"] = result.restart_index;
    j["params"] = params_to_json(params);
    j["diagnostics"] = {
        {"epoch_log_likelihoods", result.epoch_log_likelihoods},
        {"monotonicity_violations", result.monotonicity_violations},
        {"numerical_warnings", result.numerical_warnings}};
    dump_json(path, j);
}

FitFile read_fit(const std::filesystem::path& path, const Trace& trace) {
    const json j = load_json(path);
    FitFile file;
    file.latent = latent_from_json(j, trace, path);
    file.log_likelihood = j.at("log_likelihood").get<double>();
    file.params = params_from_json(j.at("params"));
    file.restart_index = j.at("restart_index").get<int>();
    return file;
}

void write_eval(const std::filesystem::path& path, const EvalReport& report) {
    dump_json(path, json{{"mae_x0", report.mae_x0},
                         {"mae_w", report.mae_w},
                         {"sign_f1", report.sign_f1},
                         {"action_ap", report.action_ap},
                         {"sign_flipped", report.sign_flipped}});
}

void write_selection(const std::filesystem::path& path,
                     const SelectionReport& report) {
    json candidates = json::array();
    for (const auto& c : report.candidates)
        candidates.push_back({{"scenario", c.scenario.name},
                              {"params", params_to_json(c.scenario.params)},
                              {"log_likelihood", c.log_likelihood},
                              {"rank", c.rank},
                              {"failed", c.failed}});
    dump_json(path, json{{"candidates", candidates},
                         {"chosen", report.candidates[report.chosen].scenario.name},
                         {"tie", report.tie}});
}

AnchorSet read_anchors(const std::filesystem::path& path, const Trace& trace) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::map<std::string, int> action_index;
    for (std::size_t i = 0; i < trace.actions.size(); ++i)
        action_index[trace.actions[i]] = static_cast<int>(i);

    AnchorSet anchors;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != "a\tw")
                throw DataError(location(path, line_no) +
                                ": expected header 'a\tw', got '" + line + "'");
            continue;
        }
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 2)
            throw DataError(location(path, line_no) +
                            ": expected 2 tab-separated fields, got " +
                            std::to_string(fields.size()));
        const auto it = action_index.find(fields[0]);
        if (it == action_index.end())
            throw DataError(location(path, line_no) +
                            ": anchor references unknown action '" + fields[0] +
                            "'");
        const double value = parse_real(fields[1], path, line_no);
        if (value < -1.0 || value > 1.0)
            throw DataError(location(path, line_no) + ": anchor value " +
                            fields[1] + " outside [-1, 1]");
        anchors.pinned[it->second] = value;
    }
    return anchors;
}

void write_manifest(const std::filesystem::path& path,
                    const RunManifest& manifest) {
    dump_json(path, json{{"command", manifest.command},
                         {"config", manifest.config},
                         {"inputs", manifest.inputs},
                         {"outputs", manifest.outputs},
                         {"seed", manifest.seed},
                         {"version", kToolVersion}});
}

}  // namespace odyn::io
