#include "steinflow/context.hpp"

#include "steinflow/flow.hpp"

namespace steinflow {

VelocityField expert_velocity_field(std::shared_ptr<const ExpertModel> expert, NoiseSchedule<double> sched) {
  return [expert = std::move(expert), sched](const LatticeField& x, double tau) {
    return velocity_from_score(x, expert->score(x, tau, sched), tau, sched);
  };
}

ContextSource parse_context_source(std::string_view name) {
  if (name == "inversion") return ContextSource::inversion;
  if (name == "direct") return ContextSource::direct;
  throw DomainError("unknown context source '" + std::string(name) + "'");
}

std::string_view to_string(ContextSource source) {
  return source == ContextSource::inversion ? "inversion" : "direct";
}

ContextConditionals ContextConditionals::from_sequence(std::vector<LatticeField> z) {
  if (z.size() < 2) throw ContractViolation("context sequence needs at least two entries (t = 0..T)");
  for (const auto& f : z) require_same_shape(f.shape(), z.front().shape(), "context sequence");
  ContextConditionals out;
  out.source_ = ContextSource::inversion;
  out.steps_ = int(z.size()) - 1;
  out.reference_ = z.front();
  out.z_ = std::move(z);
  return out;
}

ContextConditionals ContextConditionals::direct(LatticeField reference, std::vector<LatticeField> particle_noise,
                                                AnnealLadder ladder, NoiseSchedule<double> sched) {
  if (particle_noise.empty()) throw ContractViolation("direct context needs at least one noise draw");
  for (const auto& e : particle_noise) require_same_shape(e.shape(), reference.shape(), "direct context noise");
  ContextConditionals out;
  out.source_ = ContextSource::direct;
  out.steps_ = ladder.steps();
  out.reference_ = std::move(reference);
  out.noise_ = std::move(particle_noise);
  for (int t = 0; t <= ladder.steps(); ++t) {
    out.alpha_.push_back(sched.alpha(ladder.tau(t)));
    out.sigma_.push_back(sched.sigma(ladder.tau(t)));
  }
  return out;
}

LatticeField ContextConditionals::at(int t, int particle) const {
  if (t < 0 || t > steps_) throw ContractViolation("context conditional for t=" + std::to_string(t) + " missing");
  if (source_ == ContextSource::inversion) return z_[std::size_t(t)];
  if (t == 0) return reference_;
  const auto& eps = noise_[std::size_t(particle) % noise_.size()];
  return LatticeField(reference_.shape(), alpha_[t] * reference_.array() + sigma_[t] * eps.array());
}

LatticeField rf_solver_step(const LatticeField& z, double tau, double dtau, const VelocityField& field) {
  const LatticeField v = field(z, tau);
  const double half = 0.5 * dtau;
  const LatticeField probe(z.shape(), z.array() + half * v.array());
  const LatticeField v_half = field(probe, tau + half);
  const Eigen::ArrayXd v_prime = (v_half.array() - v.array()) / half;
  return LatticeField(z.shape(), z.array() + dtau * v.array() + 0.5 * dtau * dtau * v_prime);
}

ContextConditionals rf_invert(const LatticeField& reference, const VelocityField& field, const AnnealLadder& ladder) {
  std::vector<LatticeField> z;
  z.reserve(std::size_t(ladder.steps()) + 1);
  z.push_back(reference);
  for (int t = 0; t < ladder.steps(); ++t) {
    const double tau = ladder.tau(t);
    const double dtau = ladder.tau(t + 1) - tau;
    LatticeField next = rf_solver_step(z.back(), tau, dtau, field);
    if (!next.all_finite()) throw InversionDiverged(t + 1, "non-finite latent");
    z.push_back(std::move(next));
  }
  return ContextConditionals::from_sequence(std::move(z));
}

LatticeField rf_generate(const LatticeField& noise, const VelocityField& field, const AnnealLadder& ladder,
                         SolverOrder order) {
  LatticeField z = noise;
  for (int t = ladder.steps(); t >= 1; --t) {
    const double tau = ladder.tau(t);
    const double dtau = ladder.step(t);
    if (order == SolverOrder::second) {
      z = rf_solver_step(z, tau, dtau, field);
    } else {
      const LatticeField v = field(z, tau);
      z.array() += dtau * v.array();
    }
    if (!z.all_finite()) throw InversionDiverged(t, "non-finite state during generation");
  }
  return z;
}

}  // namespace steinflow
