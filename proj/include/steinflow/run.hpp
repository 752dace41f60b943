#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "steinflow/config.hpp"

namespace steinflow::run {

inline constexpr const char* kSoftware = "steinflow 0.1.0";

/// Output directory: explicit > config output.dir > $STEINFLOW_OUTPUT_ROOT/NAME > runs/NAME,
/// with NAME = COMMAND-HASH12-sSEED.
std::filesystem::path output_dir(const std::string& command, const cfg::RunConfig& config,
                                 const std::string& explicit_dir = {});

/// JSON form of a step record; NaN becomes null.
nlohmann::json record_json(const StepRecord& r);

/// Writes sample tensors, metrics stream and manifest; returns the manifest.
nlohmann::json cmd_sample(const cfg::RunConfig& config, const std::filesystem::path& dir);
/// Segmented run: per-segment manifests, concatenated sequence, top manifest.
nlohmann::json cmd_extend(const cfg::RunConfig& config, const std::filesystem::path& dir);
/// Inversion of the configured reference: context_tNNN.sft for t = 0..T.
nlohmann::json cmd_invert(const cfg::RunConfig& config, const std::filesystem::path& dir);
/// Summary and density-trajectory CSVs over completed runs.
nlohmann::json cmd_metrics(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& dir);

/// Manifest of a run directory; NotARunError if absent or unreadable.
nlohmann::json read_manifest(const std::filesystem::path& run_dir);

/// A config file, or a manifest whose embedded config is reused.
cfg::RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

}  // namespace steinflow::run
