#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "steinflow/context.hpp"
#include "steinflow/expert.hpp"
#include "steinflow/masks.hpp"
#include "steinflow/schedule.hpp"

namespace steinflow {

/// Which mask an expert's score is routed through.
enum class MaskBinding { full, fg, sim, custom };

MaskBinding parse_mask_binding(std::string_view name);
std::string_view to_string(MaskBinding binding);

struct ExpertSlot {
  std::shared_ptr<const ExpertModel> model;
  MaskBinding binding = MaskBinding::full;
  std::optional<Mask> custom_mask;
  double weight = 1.0;
  std::string name;
};

struct LambdaPolicy {
  enum class Kind { project_hard, soft };
  Kind kind = Kind::project_hard;
  double lambda = 0.0;

  static LambdaPolicy project_hard() { return {}; }
  static LambdaPolicy soft(double lambda);
  bool hard() const { return kind == Kind::project_hard; }
};

struct ReconStep {
  double step_size = 0.1;
  int every = 1;
};

/// Experts, masks, context conditionals and the lambda policy that define
/// the composed target of one sampling run.
struct CompositeTarget {
  LatticeShape shape;
  NoiseSchedule<double> sched;
  AnnealLadder ladder{1};
  std::vector<ExpertSlot> experts;
  MaskSet masks;
  std::optional<ContextConditionals> context;
  LambdaPolicy lambda;
  std::optional<ReconStep> recon;

  /// Mask of expert i under the current MaskSet.
  Mask expert_mask(std::size_t i) const;

  /// Shapes agree, weights are finite and nonnegative, and every cell is
  /// covered by an expert mask or by the context mask.
  void validate() const;

  bool has_context() const { return context.has_value(); }
};

/// sum_i w_i M_i * s_i(x, tau(t)); under soft(lambda) also
/// M_context * (-lambda (x - z_t)). Expert failures become ExpertError.
LatticeField composed_score(const LatticeField& x, int t, const CompositeTarget& target, int particle = 0);

/// (1 - M_context) x + M_context z_t; cells with M_context exactly 0 or 1
/// copy x or z_t bitwise.
LatticeField context_project(const LatticeField& x, int t, const CompositeTarget& target, int particle = 0);

/// One gradient step on ||M_context (x0_hat(x) - z_0)||^2 with the score in
/// x0_hat held fixed at `score`. Returns x unchanged without a recon policy.
LatticeField recon_grad_step(const LatticeField& x, const LatticeField& score, int t, const CompositeTarget& target,
                             int particle = 0);

}  // namespace steinflow
