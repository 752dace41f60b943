#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "steinflow/extension.hpp"
#include "steinflow/svgd.hpp"

namespace steinflow::cfg {

/// Full default tree. A user config may only use keys present here (plus
/// the free-form expert, field and per-segment entries).
const nlohmann::json& defaults();

/// A validated run configuration with every default filled in.
struct RunConfig {
  nlohmann::json tree;
  std::filesystem::path base_dir;

  LatticeShape shape() const;
  NoiseSchedule<double> schedule() const;
  AnnealLadder ladder() const;
  AnnealConfig anneal() const;
  std::uint64_t seed() const;
  int segment_count() const;

  /// sha256 of the canonical (sorted-key, compact) JSON dump.
  std::string hash() const;
};

/// Merge `user` over the defaults, reject unknown keys and check types and
/// ranges. Throws ConfigError.
RunConfig parse_config(const nlohmann::json& user, std::filesystem::path base_dir = {});

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// "a.b.c=VALUE": VALUE is parsed as JSON, falling back to a plain string.
void apply_override(nlohmann::json& tree, const std::string& assignment);

/// A field given as a number, a flat array, {"file": PATH} or
/// {"box": {"lo": [h, w, n], "hi": [h, w, n], "value": v, "background": b}}.
LatticeField resolve_field(const nlohmann::json& spec, const LatticeShape& shape, const std::filesystem::path& base_dir,
                           const std::string& where);

/// Composite target of segment `segment` (0-based), including context
/// conditionals computed from the context section. `particles` sizes the
/// per-particle noise of direct context.
CompositeTarget build_target(const RunConfig& config, int segment = 0);

/// Velocity field used to invert the context reference: the named
/// context.expert, or the masked sum of all expert scores.
VelocityField context_velocity_field(const RunConfig& config, const CompositeTarget& target);

SegmentPlan build_plan(const RunConfig& config);
OverlapContext overlap_context(const RunConfig& config);

/// Context tensors written by `invert`: DIR/context_tNNN.sft for t = 0..T.
std::filesystem::path context_file(const std::filesystem::path& dir, int t);

}  // namespace steinflow::cfg
