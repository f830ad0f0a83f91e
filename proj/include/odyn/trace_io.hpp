// File formats: TSV trace files (one row per arc occurrence), JSON result
// files with sorted keys, and the anchors table.
//
//   interactions.tsv   t <TAB> u <TAB> v
//   actions.tsv        t <TAB> v <TAB> a
//   anchors.tsv        a <TAB> w
//
// IDs are arbitrary non-empty strings without tabs; actor/action indices
// are assigned by sorting the distinct IDs, and timesteps run from 0 to
// the largest value seen.

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "odyn/generator.hpp"
#include "odyn/inference.hpp"
#include "odyn/metrics.hpp"
#include "odyn/model.hpp"

namespace odyn::io {

void write_trace(const Trace& trace, const std::filesystem::path& interactions,
                 const std::filesystem::path& actions);

Trace read_trace(const std::filesystem::path& interactions,
                 const std::filesystem::path& actions);

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth,
                        const Trace& trace, const Scenario& scenario);

GroundTruth read_ground_truth(const std::filesystem::path& path, const Trace& trace);

void write_fit(const std::filesystem::path& path, const FitResult& result,
               const Trace& trace, const MacroParams& params);

struct FitFile {
    LatentState latent;
    double log_likelihood = 0.0;
    MacroParams params;
    int restart_index = 0;
};

FitFile read_fit(const std::filesystem::path& path, const Trace& trace);

void write_eval(const std::filesystem::path& path, const EvalReport& report);

void write_selection(const std::filesystem::path& path,
                     const SelectionReport& report);

/// Parses the anchors table (action id -> pinned center) and resolves
/// ids against the trace's action set.
AnchorSet read_anchors(const std::filesystem::path& path, const Trace& trace);

/// Resolved run description, written next to every command's outputs.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> config;  // resolved parameter values
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;
    std::uint64_t seed = 0;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace odyn::io
