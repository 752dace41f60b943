#include "steinflow/extension.hpp"

#include "steinflow/flow.hpp"

namespace steinflow {

int extended_length(int segments, int frames_per_segment, int overlap) {
  if (segments < 1) throw ContractViolation("at least one segment required");
  if (!(overlap > 0 && overlap < frames_per_segment)) {
    throw ContractViolation("overlap K=" + std::to_string(overlap) + " must satisfy 0 < K < N=" +
                            std::to_string(frames_per_segment));
  }
  return frames_per_segment + (segments - 1) * (frames_per_segment - overlap);
}

int SegmentPlan::total_frames() const { return extended_length(count(), frames_per_segment, overlap); }

void SegmentPlan::validate() const {
  total_frames();
  const auto& first = segments.front().target.shape;
  for (int s = 0; s < count(); ++s) {
    const auto& shape = segments[std::size_t(s)].target.shape;
    if (shape.n != frames_per_segment) {
      throw SegmentError(s + 1, "target has " + std::to_string(shape.n) + " frames, plan expects " +
                                    std::to_string(frames_per_segment));
    }
    if (shape.h != first.h || shape.w != first.w || shape.c != first.c) {
      throw ContractViolation("segment " + std::to_string(s + 1) + " shape " + shape.str() + " differs from " +
                              first.str());
    }
  }
}

double relative_l2(const LatticeField& a, const LatticeField& b) {
  require_same_shape(a.shape(), b.shape(), "relative_l2");
  const double diff = (a.array() - b.array()).matrix().norm();
  const double ref = b.array().matrix().norm();
  return ref > 0.0 ? diff / ref : diff;
}

namespace {

VelocityField composed_velocity_field(const CompositeTarget& target) {
  return [&target](const LatticeField& x, double tau) {
    LatticeField s(x.shape());
    for (std::size_t i = 0; i < target.experts.size(); ++i) {
      const auto& slot = target.experts[i];
      s.array() += slot.weight * target.expert_mask(i).broadcast(x.shape()) *
                   slot.model->score(x, tau, target.sched).array();
    }
    return velocity_from_score(x, s, tau, target.sched);
  };
}

}  // namespace

ExtensionResult extend(SegmentPlan plan, const AnnealConfig& config, const OverlapContext& overlap,
                       const SegmentObserver& observer) {
  if (plan.segments.empty()) throw ContractViolation("segment plan is empty");
  plan.validate();
  const int N = plan.frames_per_segment;
  const int K = plan.overlap;

  ExtensionResult out;
  LatticeField previous;
  for (int s = 0; s < plan.count(); ++s) {
    CompositeTarget& target = plan.segments[std::size_t(s)].target;
    AnnealConfig seg_config = config;
    seg_config.seed = config.seed + 1000003ULL * std::uint64_t(s);
    LatticeField pinned;
    try {
      for (const auto& slot : target.experts) {
        if (!slot.model) throw ContractViolation("expert '" + slot.name + "' has no model");
      }
      if (s > 0) {
        pinned = previous.frames(N - K, K);
        // without a context of its own only the overlap is context
        if (!target.context) target.masks.override_context(Mask::zeros(target.shape, MaskRole::context));
        LatticeField reference = target.context ? target.context->reference() : LatticeField(target.shape);
        reference.set_frames(0, pinned);
        if (overlap.source == ContextSource::inversion) {
          const VelocityField field = overlap.field ? overlap.field : composed_velocity_field(target);
          target.context = rf_invert(reference, field, target.ladder);
        } else {
          auto noise = standard_normal_fields(target.shape, config.particles, seg_config.seed, 1);
          target.context = ContextConditionals::direct(std::move(reference), std::move(noise), target.ladder,
                                                       target.sched);
        }
        target.masks.pin_frames(0, K);
      }
      StepObserver step_observer;
      if (observer) step_observer = [&observer, s](const StepRecord& r) { observer(s + 1, r); };
      SegmentResult seg{anneal_sample(target, seg_config, step_observer), 0.0};
      const LatticeField head = seg.run.ensemble.particle(0);
      if (s > 0) {
        seg.overlap_error = relative_l2(head.frames(0, K), pinned);
        out.sequence = concat_frames(out.sequence, head.frames(K, N - K));
      } else {
        out.sequence = head;
      }
      previous = head;
      out.segments.push_back(std::move(seg));
    } catch (const SegmentError&) {
      throw;
    } catch (const Error& e) {
      throw SegmentError(s + 1, e.what());
    }
  }
  return out;
}

}  // namespace steinflow
