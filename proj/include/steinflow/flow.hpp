#pragma once

// Exact conversions between score, velocity and clean prediction for
// Gaussian probability paths. All functions are elementwise and pure.

#include <cmath>

#include "steinflow/lattice.hpp"
#include "steinflow/schedule.hpp"

namespace steinflow {

/// Coefficients of v = a x + b s at tau.
template <typename Scalar>
struct VelocityCoefficients {
  Scalar x_coef;
  Scalar s_coef;
};

template <typename Scalar>
VelocityCoefficients<Scalar> velocity_coefficients(Scalar tau, const NoiseSchedule<Scalar>& sched) {
  NoiseSchedule<Scalar>::check_domain(tau);
  const auto p = sched.at(sched.clamp_interior(tau));
  return {p.alpha_dot / p.alpha,
          -(p.sigma_dot * p.sigma * p.alpha - p.alpha_dot * p.sigma * p.sigma) / p.alpha};
}

/// Coefficients of x0_hat = a v + b x at tau.
template <typename Scalar>
struct CleanCoefficients {
  Scalar v_coef;
  Scalar x_coef;
};

template <typename Scalar>
CleanCoefficients<Scalar> clean_coefficients(Scalar tau, const NoiseSchedule<Scalar>& sched) {
  NoiseSchedule<Scalar>::check_domain(tau);
  const auto p = sched.at(sched.clamp_interior(tau));
  const Scalar denom = p.alpha_dot * p.sigma - p.sigma_dot * p.alpha;
  if (!(std::abs(denom) > Scalar(0)) || !std::isfinite(double(denom))) {
    throw DomainError("clean prediction denominator vanishes at tau=" + std::to_string(double(tau)));
  }
  return {p.sigma / denom, -p.sigma_dot / denom};
}

/// v = (alpha_dot / alpha) x - ((sigma_dot sigma alpha - alpha_dot sigma^2) / alpha) s
template <typename Scalar>
BasicLatticeField<Scalar> velocity_from_score(const BasicLatticeField<Scalar>& x,
                                              const BasicLatticeField<Scalar>& s, Scalar tau,
                                              const NoiseSchedule<Scalar>& sched) {
  require_same_shape(x.shape(), s.shape(), "velocity_from_score");
  const auto k = velocity_coefficients(tau, sched);
  return BasicLatticeField<Scalar>(x.shape(), k.x_coef * x.array() + k.s_coef * s.array());
}

/// Inverse of velocity_from_score.
template <typename Scalar>
BasicLatticeField<Scalar> score_from_velocity(const BasicLatticeField<Scalar>& x,
                                              const BasicLatticeField<Scalar>& v, Scalar tau,
                                              const NoiseSchedule<Scalar>& sched) {
  require_same_shape(x.shape(), v.shape(), "score_from_velocity");
  const auto k = velocity_coefficients(tau, sched);
  if (!(std::abs(k.s_coef) > Scalar(0)) || !std::isfinite(double(k.s_coef))) {
    throw DomainError("score coefficient vanishes at tau=" + std::to_string(double(tau)));
  }
  return BasicLatticeField<Scalar>(x.shape(), (v.array() - k.x_coef * x.array()) / k.s_coef);
}

/// x0_hat = sigma / (alpha_dot sigma - sigma_dot alpha) v - sigma_dot / (alpha_dot sigma - sigma_dot alpha) x
template <typename Scalar>
BasicLatticeField<Scalar> clean_prediction(const BasicLatticeField<Scalar>& x,
                                           const BasicLatticeField<Scalar>& v, Scalar tau,
                                           const NoiseSchedule<Scalar>& sched) {
  require_same_shape(x.shape(), v.shape(), "clean_prediction");
  const auto k = clean_coefficients(tau, sched);
  return BasicLatticeField<Scalar>(x.shape(), k.v_coef * v.array() + k.x_coef * x.array());
}

/// d x0_hat / d x with the score held fixed: x0_hat = jac * x + (const in x).
template <typename Scalar>
Scalar clean_prediction_jacobian(Scalar tau, const NoiseSchedule<Scalar>& sched) {
  const auto v = velocity_coefficients(tau, sched);
  const auto c = clean_coefficients(tau, sched);
  return c.v_coef * v.x_coef + c.x_coef;
}

}  // namespace steinflow
