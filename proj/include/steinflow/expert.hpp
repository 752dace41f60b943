#pragma once

#include <optional>
#include <string>

#include "steinflow/gmm.hpp"
#include "steinflow/lattice.hpp"
#include "steinflow/schedule.hpp"

namespace steinflow {

/// A score backend p_tau(x | y). Implementations must be reentrant: the
/// sampler calls score() concurrently from several workers.
class ExpertModel {
 public:
  virtual ~ExpertModel() = default;

  virtual LatticeField score(const LatticeField& x, double tau, const NoiseSchedule<double>& sched) const = 0;

  /// Marginal log-density, if the backend can provide it.
  virtual std::optional<double> log_density(const LatticeField& /*x*/, double /*tau*/,
                                            const NoiseSchedule<double>& /*sched*/) const {
    return std::nullopt;
  }

  virtual std::string describe() const = 0;
};

class GmmScoreModel final : public ExpertModel {
 public:
  explicit GmmScoreModel(GmmExpert expert) : expert_(std::move(expert)) {}

  LatticeField score(const LatticeField& x, double tau, const NoiseSchedule<double>& sched) const override {
    return gmm_marginal_score(x, tau, expert_, sched);
  }
  std::optional<double> log_density(const LatticeField& x, double tau,
                                    const NoiseSchedule<double>& sched) const override {
    return gmm_marginal_log_density(x, tau, expert_, sched);
  }
  std::string describe() const override {
    return "gmm(" + std::to_string(expert_.components().size()) + " components)";
  }

  const GmmExpert& expert() const { return expert_; }

 private:
  GmmExpert expert_;
};

}  // namespace steinflow
