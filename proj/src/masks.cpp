#include "steinflow/masks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace steinflow {

Mask derive_context_mask(const Mask& fg, const Mask& sim) {
  require_same_shape(fg.shape(), sim.shape(), "derive_context_mask");
  return {LatticeField(fg.shape(), (1.0 - fg.values.array()) * (1.0 - sim.values.array())), MaskRole::context};
}

namespace {

// One 1-D pass along axis (0 = h, 1 = w, 2 = n) with clamp-to-edge reads.
template <typename Op>
LatticeField sweep_axis(const LatticeField& in, int axis, int radius, Op&& op) {
  const auto& s = in.shape();
  LatticeField out(s);
  const int extent = axis == 0 ? s.h : (axis == 1 ? s.w : s.n);
  for (int h = 0; h < s.h; ++h)
    for (int w = 0; w < s.w; ++w)
      for (int n = 0; n < s.n; ++n) {
        const int pos = axis == 0 ? h : (axis == 1 ? w : n);
        auto read = [&](int offset) {
          const int p = std::clamp(pos + offset, 0, extent - 1);
          return axis == 0 ? in(p, w, n) : (axis == 1 ? in(h, p, n) : in(h, w, p));
        };
        out(h, w, n) = op(read, radius);
      }
  return out;
}

}  // namespace

Mask smooth_mask(const Mask& m, int dilation_radius, double blur_sigma) {
  if (dilation_radius < 0 || blur_sigma < 0.0) throw DomainError("smoothing parameters must be nonnegative");
  if (m.shape().c != 1) throw ContractViolation("mask must have a single channel");
  LatticeField field = m.values;

  if (dilation_radius > 0) {
    // Box max-filter is separable; edge replication never adds mass.
    auto dilate = [](auto&& read, int r) {
      double v = -std::numeric_limits<double>::infinity();
      for (int o = -r; o <= r; ++o) v = std::max(v, read(o));
      return v;
    };
    for (int axis = 0; axis < 3; ++axis) field = sweep_axis(field, axis, dilation_radius, dilate);
  }

  if (blur_sigma > 0.0) {
    const int r = std::max(1, int(std::ceil(3.0 * blur_sigma)));
    std::vector<double> taps(2 * r + 1);
    double total = 0.0;
    for (int o = -r; o <= r; ++o) total += taps[o + r] = std::exp(-0.5 * o * o / (blur_sigma * blur_sigma));
    for (auto& t : taps) t /= total;
    auto blur = [&taps](auto&& read, int rr) {
      double v = 0.0;
      for (int o = -rr; o <= rr; ++o) v += taps[o + rr] * read(o);
      return v;
    };
    for (int axis = 0; axis < 3; ++axis) field = sweep_axis(field, axis, r, blur);
  }

  field.array() = field.array().min(1.0).max(0.0);
  return {std::move(field), m.role};
}

MaskSet::MaskSet(Mask raw_fg, Mask raw_sim, std::optional<SmoothingParams> smoothing)
    : raw_fg_(std::move(raw_fg)), raw_sim_(std::move(raw_sim)), smoothing_(smoothing) {
  require_same_shape(raw_fg_.shape(), raw_sim_.shape(), "MaskSet");
  raw_fg_.validate();
  raw_sim_.validate();
  raw_fg_.role = MaskRole::fg;
  raw_sim_.role = MaskRole::sim;
  prior_fg_ = raw_fg_;
  rebuild();
}

void MaskSet::override_context(Mask context) {
  require_same_shape(context.shape(), fg_.shape(), "context override");
  context.validate();
  context.role = MaskRole::context;
  context_override_ = std::move(context);
  rebuild();
}

void MaskSet::pin_frames(int first, int count) {
  if (first < 0 || count < 0 || first + count > fg_.shape().n) throw ContractViolation("pinned frames out of range");
  pinned_frames_ = {first, count};
  rebuild();
}

void MaskSet::set_raw_fg(Mask raw_fg) {
  require_same_shape(raw_fg.shape(), raw_fg_.shape(), "refined fg");
  raw_fg.role = MaskRole::fg;
  raw_fg_ = std::move(raw_fg);
  rebuild();
}

void MaskSet::rebuild() {
  if (smoothing_) {
    fg_ = smooth_mask(raw_fg_, smoothing_->dilation_radius, smoothing_->blur_sigma);
    sim_ = smooth_mask(raw_sim_, smoothing_->dilation_radius, smoothing_->blur_sigma);
  } else {
    fg_ = raw_fg_;
    sim_ = raw_sim_;
  }
  context_ = context_override_ ? *context_override_ : derive_context_mask(fg_, sim_);
  if (pinned_frames_) {
    const auto& s = context_.shape();
    for (int h = 0; h < s.h; ++h)
      for (int w = 0; w < s.w; ++w)
        for (int n = pinned_frames_->first; n < pinned_frames_->first + pinned_frames_->second; ++n)
          context_.values(h, w, n) = 1.0;
  }
}

RefinedMasks refine_masks(const LatticeField& clean, const LatticeField& reference, const Mask& fg,
                          const Mask& prior_fg, const Mask& sim, const RefineParams& params) {
  require_same_shape(clean.shape(), reference.shape(), "refine_masks");
  require_same_shape(fg.shape(), sim.shape(), "refine_masks masks");
  require_same_shape(fg.shape(), prior_fg.shape(), "refine_masks prior");
  if (!(params.threshold >= 0.0)) throw DomainError("refinement threshold must be nonnegative");
  const auto& fs = clean.shape();
  if (fs.h != fg.shape().h || fs.w != fg.shape().w || fs.n != fg.shape().n) {
    throw ContractViolation("refine_masks: masks do not cover field");
  }
  Mask out = fg;
  out.role = MaskRole::fg;
  const auto dev = (clean.array() - reference.array()).abs().eval();
  for (Eigen::Index cell = 0; cell < fs.cells(); ++cell) {
    const double worst = dev.segment(cell * fs.c, fs.c).maxCoeff();
    const double prior = prior_fg.values.array()[cell];
    double& v = out.values.array()[cell];
    if (worst > params.threshold && sim.values.array()[cell] < 0.5) {
      v = 1.0;
    } else {
      v = prior + params.decay * (v - prior);
    }
  }
  return {out, derive_context_mask(out, sim)};
}

double default_refine_threshold(const LatticeField& reference) {
  const auto& s = reference.shape();
  if (s.cells() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index cell = 0; cell < s.cells(); ++cell) {
    total += std::sqrt(reference.array().segment(cell * s.c, s.c).square().mean());
  }
  return 0.5 * total / double(s.cells());
}

}  // namespace steinflow
