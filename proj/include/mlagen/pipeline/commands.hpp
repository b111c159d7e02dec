#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mlagen/pipeline/run_config.hpp"

namespace mlagen::pipeline {

// Artifact locations inside a run directory.
struct RunLayout {
    std::filesystem::path root;

    std::filesystem::path data() const { return root / "data"; }
    std::filesystem::path ae() const { return root / "ae.tsr"; }
    std::filesystem::path flow() const { return root / "flow.tsr"; }
    std::filesystem::path evaluator() const { return root / "evaluator.tsr"; }
    std::filesystem::path samples(const std::string& variant) const { return root / "samples" / variant; }
    std::filesystem::path eval(const std::string& variant) const { return root / "eval" / variant; }
    std::filesystem::path sink_report() const { return root / "sink_report"; }
    std::filesystem::path ablate(const std::string& grid) const { return root / "ablate" / grid; }
    std::filesystem::path manifest(const std::string& command) const { return root / "manifests" / (command + ".json"); }
    std::filesystem::path snapshot(const std::string& command) const { return root / "snapshots" / (command + ".json"); }
};

struct CommandResult {
    std::string command;
    std::vector<std::filesystem::path> outputs;
    std::vector<std::string> messages;  // human-readable lines for the console
    bool warning = false;               // e.g. sink-report found no traces
};

using Logger = std::function<void(const std::string&)>;

// Names accepted by run_command.
const std::vector<std::string>& command_names();

// Validates the config, runs the command, and writes its outputs, the
// resolved config snapshot and a manifest with content hashes.
CommandResult run_command(const std::string& name, const json& cfg, const Logger& log = {});

// Cells of an ablation grid: name plus the dotted-path overrides it applies.
struct GridCell {
    std::string name;
    std::vector<std::pair<std::string, std::string>> overrides;
};
std::vector<GridCell> grid_cells(const std::string& grid);

}  // namespace mlagen::pipeline
