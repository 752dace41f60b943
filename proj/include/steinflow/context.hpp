#pragma once

#include <functional>
#include <memory>
#include <string_view>
#include <vector>

#include "steinflow/expert.hpp"
#include "steinflow/lattice.hpp"
#include "steinflow/schedule.hpp"

namespace steinflow {

/// v(x, tau); must be pure.
using VelocityField = std::function<LatticeField(const LatticeField&, double)>;

/// Velocity field of one expert, via velocity_from_score.
VelocityField expert_velocity_field(std::shared_ptr<const ExpertModel> expert, NoiseSchedule<double> sched);

enum class ContextSource { inversion, direct };

ContextSource parse_context_source(std::string_view name);
std::string_view to_string(ContextSource source);

/// Per-step context tensors z_t, t = 0..T, with z_0 the clean reference.
///
/// In inversion mode z_t is stored explicitly and shared by every particle.
/// In direct mode z_t = alpha(tau_t) z_0 + sigma(tau_t) eps_l is built on the
/// fly from a fixed noise draw per particle (z_0 is the reference itself).
class ContextConditionals {
 public:
  static ContextConditionals from_sequence(std::vector<LatticeField> z);
  static ContextConditionals direct(LatticeField reference, std::vector<LatticeField> particle_noise,
                                    AnnealLadder ladder, NoiseSchedule<double> sched);

  ContextSource source() const { return source_; }
  int steps() const { return steps_; }
  const LatticeField& reference() const { return reference_; }
  const LatticeShape& shape() const { return reference_.shape(); }

  /// z_t for particle l.
  LatticeField at(int t, int particle = 0) const;

  /// Stored sequence (inversion mode only).
  const std::vector<LatticeField>& sequence() const { return z_; }

 private:
  ContextConditionals() = default;

  ContextSource source_ = ContextSource::inversion;
  int steps_ = 0;
  LatticeField reference_;
  std::vector<LatticeField> z_;
  std::vector<LatticeField> noise_;
  std::vector<double> alpha_;
  std::vector<double> sigma_;
};

/// Second-order step z + d v + d^2 / 2 v', with v' from one extra velocity
/// evaluation at the half step: v' ~ (v(z + d/2 v, tau + d/2) - v(z, tau)) / (d/2).
LatticeField rf_solver_step(const LatticeField& z, double tau, double dtau, const VelocityField& field);

/// Integrate from the clean reference (t = 0) toward noise (t = T), storing
/// every intermediate. Throws InversionDiverged on a non-finite state.
ContextConditionals rf_invert(const LatticeField& reference, const VelocityField& field, const AnnealLadder& ladder);

enum class SolverOrder { euler, second };

/// Integrate from noise (t = T) back to data (t = 0); returns z at t = 0.
LatticeField rf_generate(const LatticeField& noise, const VelocityField& field, const AnnealLadder& ladder,
                         SolverOrder order = SolverOrder::second);

}  // namespace steinflow
