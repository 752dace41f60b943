#pragma once

#include <optional>

#include "steinflow/mask.hpp"

namespace steinflow {

/// M_context = (1 - M_fg) * (1 - M_sim)
Mask derive_context_mask(const Mask& fg, const Mask& sim);

/// Grey dilation over a (2r+1)^3 box in (H, W, N), then a separable Gaussian
/// blur with edge replication, clamped to [0, 1].
Mask smooth_mask(const Mask& m, int dilation_radius, double blur_sigma);

struct SmoothingParams {
  int dilation_radius = 1;
  double blur_sigma = 0.5;
};

/// The fg/sim/context masks of a composite target. `raw_fg` and `raw_sim`
/// are the unsmoothed state that refinement edits; `fg`, `sim` and
/// `context` are what the score sees.
class MaskSet {
 public:
  MaskSet() = default;
  MaskSet(Mask raw_fg, Mask raw_sim, std::optional<SmoothingParams> smoothing = std::nullopt);

  /// Replace the derived context mask with an explicit one (refinement then
  /// no longer recomputes it).
  void override_context(Mask context);
  /// Force context to 1 on the given frames, on top of whatever it was.
  void pin_frames(int first, int count);

  const Mask& fg() const { return fg_; }
  const Mask& sim() const { return sim_; }
  const Mask& context() const { return context_; }
  const Mask& raw_fg() const { return raw_fg_; }
  const Mask& prior_fg() const { return prior_fg_; }
  bool context_derived() const { return !context_override_; }
  const LatticeShape& shape() const { return fg_.shape(); }

  void set_raw_fg(Mask raw_fg);

 private:
  void rebuild();

  Mask raw_fg_;
  Mask raw_sim_;
  Mask prior_fg_;
  Mask fg_;
  Mask sim_;
  Mask context_;
  std::optional<SmoothingParams> smoothing_;
  std::optional<Mask> context_override_;
  std::optional<std::pair<int, int>> pinned_frames_;
};

struct RefineParams {
  double threshold = 0.0;
  /// Fraction of the gap to the prior retained per call.
  double decay = 0.8;
};

struct RefinedMasks {
  Mask fg;
  Mask context;
};

/// Threshold rule: fg becomes 1 where max_c |x0_hat - z0| > threshold and the
/// cell is outside sim (sim < 0.5); elsewhere fg decays toward `prior_fg`.
/// The context mask is recomputed from the new fg.
RefinedMasks refine_masks(const LatticeField& clean, const LatticeField& reference, const Mask& fg, const Mask& prior_fg,
                  const Mask& sim, const RefineParams& params);

/// Default threshold: half the per-cell RMS of the reference.
double default_refine_threshold(const LatticeField& reference);

}  // namespace steinflow
