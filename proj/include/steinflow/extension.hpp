#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "steinflow/composite.hpp"
#include "steinflow/svgd.hpp"

namespace steinflow {

/// How context tensors are produced for the pinned overlap frames.
struct OverlapContext {
  ContextSource source = ContextSource::inversion;
  /// Velocity field used for inversion; defaults to the sum of the
  /// segment's expert velocities when empty.
  VelocityField field;
};

/// Per-segment inputs. `target` must have frames_per_segment frames; its
/// own context (if any) covers segment 1 or frames outside the overlap.
struct SegmentSpec {
  CompositeTarget target;
};

struct SegmentPlan {
  int frames_per_segment = 8;
  int overlap = 3;
  std::vector<SegmentSpec> segments;

  int count() const { return int(segments.size()); }
  /// N + (S - 1)(N - K)
  int total_frames() const;
  void validate() const;
};

int extended_length(int segments, int frames_per_segment, int overlap);

struct SegmentResult {
  AnnealResult run;
  /// Relative L2 gap between this segment's first K frames and the previous
  /// segment's last K frames (0 for segment 1).
  double overlap_error = 0.0;
};

struct ExtensionResult {
  std::vector<SegmentResult> segments;
  /// Particle-0 trajectory with overlaps de-duplicated (earlier copy kept).
  LatticeField sequence;
};

using SegmentObserver = std::function<void(int segment, const StepRecord&)>;

/// Segmented generation: segment s > 1 pins its first K frames to the last
/// K frames of segment s - 1 (particle 0) through context conditionals.
ExtensionResult extend(SegmentPlan plan, const AnnealConfig& config, const OverlapContext& overlap = {},
                       const SegmentObserver& observer = {});

/// ||a - b|| / ||b||, or ||a - b|| when b = 0.
double relative_l2(const LatticeField& a, const LatticeField& b);

}  // namespace steinflow
