#include "steinflow/composite.hpp"

#include <cmath>

#include "steinflow/flow.hpp"

namespace steinflow {

MaskBinding parse_mask_binding(std::string_view name) {
  if (name == "full") return MaskBinding::full;
  if (name == "fg") return MaskBinding::fg;
  if (name == "sim") return MaskBinding::sim;
  if (name == "custom") return MaskBinding::custom;
  throw DomainError("unknown mask binding '" + std::string(name) + "'");
}

std::string_view to_string(MaskBinding binding) {
  switch (binding) {
    case MaskBinding::full: return "full";
    case MaskBinding::fg: return "fg";
    case MaskBinding::sim: return "sim";
    case MaskBinding::custom: return "custom";
  }
  return "?";
}

LambdaPolicy LambdaPolicy::soft(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be finite and nonnegative");
  return {Kind::soft, lambda};
}

Mask CompositeTarget::expert_mask(std::size_t i) const {
  const auto& slot = experts.at(i);
  switch (slot.binding) {
    case MaskBinding::fg: return masks.fg();
    case MaskBinding::sim: return masks.sim();
    case MaskBinding::custom:
      if (!slot.custom_mask) throw ContractViolation("expert '" + slot.name + "' has no custom mask");
      return *slot.custom_mask;
    case MaskBinding::full: break;
  }
  return Mask::ones(shape);
}

void CompositeTarget::validate() const {
  if (!shape.valid()) throw ContractViolation("invalid lattice shape " + shape.str());
  if (experts.empty()) throw ContractViolation("composite target needs at least one expert");
  require_same_shape(masks.shape(), shape.single_channel(), "mask set");
  if (context) {
    require_same_shape(context->shape(), shape, "context conditionals");
    if (context->steps() != ladder.steps()) {
      throw ContractViolation("context has " + std::to_string(context->steps()) + " steps, ladder has " +
                              std::to_string(ladder.steps()));
    }
  }
  Eigen::ArrayXd coverage = Eigen::ArrayXd::Zero(shape.cells());
  for (std::size_t i = 0; i < experts.size(); ++i) {
    const auto& slot = experts[i];
    if (!slot.model) throw ContractViolation("expert slot " + std::to_string(i) + " has no model");
    if (!(slot.weight >= 0.0) || !std::isfinite(slot.weight)) {
      throw DomainError("expert '" + slot.name + "' weight must be finite and nonnegative");
    }
    const Mask m = expert_mask(i);
    require_same_shape(m.shape(), shape.single_channel(), "expert mask");
    m.validate();
    coverage += slot.weight * m.values.array();
  }
  if (context) coverage += masks.context().values.array();
  for (Eigen::Index cell = 0; cell < coverage.size(); ++cell) {
    if (!(coverage[cell] > 0.0)) {
      throw ContractViolation("lattice cell " + std::to_string(cell) + " is scored by no expert and no context");
    }
  }
}

LatticeField composed_score(const LatticeField& x, int t, const CompositeTarget& target, int particle) {
  require_same_shape(x.shape(), target.shape, "composed_score");
  const double tau = target.ladder.tau(t);
  LatticeField out(x.shape());
  for (std::size_t i = 0; i < target.experts.size(); ++i) {
    const auto& slot = target.experts[i];
    LatticeField s;
    try {
      s = slot.model->score(x, tau, target.sched);
    } catch (const ExpertError&) {
      throw;
    } catch (const std::exception& e) {
      throw ExpertError(slot.name.empty() ? std::to_string(i) : slot.name, e.what());
    }
    if (!(s.shape() == x.shape())) {
      throw ExpertError(slot.name, "score shape " + s.shape().str() + " does not match " + x.shape().str());
    }
    out.array() += slot.weight * target.expert_mask(i).broadcast(x.shape()) * s.array();
  }
  if (!target.lambda.hard() && target.context && target.lambda.lambda > 0.0) {
    const LatticeField z = target.context->at(t, particle);
    out.array() -= target.lambda.lambda * target.masks.context().broadcast(x.shape()) * (x.array() - z.array());
  }
  return out;
}

LatticeField context_project(const LatticeField& x, int t, const CompositeTarget& target, int particle) {
  if (!target.context) throw ContractViolation("context_project without context conditionals");
  require_same_shape(x.shape(), target.shape, "context_project");
  const LatticeField z = target.context->at(t, particle);
  const Eigen::ArrayXd m = target.masks.context().broadcast(x.shape());
  LatticeField out = x;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (m[i] == 1.0) {
      out.array()[i] = z.array()[i];
    } else if (m[i] != 0.0) {
      out.array()[i] = (1.0 - m[i]) * x.array()[i] + m[i] * z.array()[i];
    }
  }
  return out;
}

LatticeField recon_grad_step(const LatticeField& x, const LatticeField& score, int t, const CompositeTarget& target,
                             int particle) {
  if (!target.recon || !target.context) return x;
  require_same_shape(x.shape(), score.shape(), "recon_grad_step");
  const double tau = target.ladder.tau(t);
  const LatticeField v = velocity_from_score(x, score, tau, target.sched);
  const LatticeField x0 = clean_prediction(x, v, tau, target.sched);
  const double jac = clean_prediction_jacobian(tau, target.sched);
  const Eigen::ArrayXd m = target.masks.context().broadcast(x.shape());
  const LatticeField z0 = target.context->at(0, particle);
  LatticeField out = x;
  out.array() -= target.recon->step_size * 2.0 * jac * m.square() * (x0.array() - z0.array());
  return out;
}

}  // namespace steinflow
