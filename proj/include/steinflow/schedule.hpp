#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include "steinflow/errors.hpp"

namespace steinflow {

enum class ScheduleKind { rectified_linear, variance_preserving };

ScheduleKind parse_schedule_kind(std::string_view name);
std::string_view to_string(ScheduleKind kind);

/// alpha, sigma and their tau-derivatives at one point of the path.
template <typename Scalar>
struct PathCoefficients {
  Scalar alpha;
  Scalar sigma;
  Scalar alpha_dot;
  Scalar sigma_dot;
};

/// Gaussian probability path x_tau = alpha(tau) x_1 + sigma(tau) eps with
/// alpha(0) = 0, sigma(0) = 1 (pure noise) and alpha(1) = 1, sigma(1) = 0 (data).
template <typename Scalar = double>
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  explicit NoiseSchedule(ScheduleKind kind, Scalar eps_clamp = Scalar(1e-3)) : kind_(kind), eps_(eps_clamp) {
    if (!(eps_clamp > 0 && eps_clamp < Scalar(0.5))) {
      throw DomainError("eps_clamp must lie in (0, 0.5)");
    }
  }

  ScheduleKind kind() const { return kind_; }
  Scalar eps_clamp() const { return eps_; }

  Scalar alpha(Scalar tau) const {
    return kind_ == ScheduleKind::rectified_linear ? tau : std::sin(half_pi() * tau);
  }
  Scalar sigma(Scalar tau) const {
    return kind_ == ScheduleKind::rectified_linear ? Scalar(1) - tau : std::cos(half_pi() * tau);
  }
  Scalar alpha_dot(Scalar tau) const {
    return kind_ == ScheduleKind::rectified_linear ? Scalar(1) : half_pi() * std::cos(half_pi() * tau);
  }
  Scalar sigma_dot(Scalar tau) const {
    return kind_ == ScheduleKind::rectified_linear ? Scalar(-1) : -half_pi() * std::sin(half_pi() * tau);
  }

  PathCoefficients<Scalar> at(Scalar tau) const {
    return {alpha(tau), sigma(tau), alpha_dot(tau), sigma_dot(tau)};
  }

  /// Clamp used before any score formula: never evaluate at sigma = 0.
  Scalar clamp_for_score(Scalar tau) const { return std::clamp(tau, Scalar(0), Scalar(1) - eps_); }

  /// Clamp used where 1/alpha appears: both ends are pulled in by eps.
  Scalar clamp_interior(Scalar tau) const { return std::clamp(tau, eps_, Scalar(1) - eps_); }

  static void check_domain(Scalar tau) {
    if (!(tau >= Scalar(0) && tau <= Scalar(1))) {
      throw DomainError("tau=" + std::to_string(double(tau)) + " outside [0, 1]");
    }
  }

 private:
  static constexpr Scalar half_pi() { return std::numbers::pi_v<Scalar> / Scalar(2); }

  ScheduleKind kind_ = ScheduleKind::rectified_linear;
  Scalar eps_ = Scalar(1e-3);
};

enum class LadderMapping {
  /// tau(t) = (1 - eps) (T - t) / T
  uniform,
  /// tau(t) = (T - t) / (T + 1) for t >= 1, tau(0) = 1 - eps
  plus_one,
};

LadderMapping parse_ladder_mapping(std::string_view name);
std::string_view to_string(LadderMapping mapping);

/// Discrete annealing indices t = T..0 mapped onto tau in [0, 1 - eps].
class AnnealLadder {
 public:
  AnnealLadder(int steps, double eps_clamp = 1e-3, LadderMapping mapping = LadderMapping::uniform);

  int steps() const { return steps_; }
  double eps_clamp() const { return eps_; }
  LadderMapping mapping() const { return mapping_; }

  double tau(int t) const;
  /// tau(t - 1) - tau(t), defined for t in 1..T.
  double step(int t) const;

 private:
  int steps_;
  double eps_;
  LadderMapping mapping_;
};

}  // namespace steinflow
