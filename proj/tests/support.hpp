#pragma once

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <vector>

#include "steinflow/gmm.hpp"
#include "steinflow/lattice.hpp"

namespace testutil {

using steinflow::LatticeField;
using steinflow::LatticeShape;

inline LatticeField random_field(const LatticeShape& s, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  LatticeField f(s);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.array()[i] = n(rng);
  return f;
}

inline double max_abs_diff(const LatticeField& a, const LatticeField& b) {
  return (a.array() - b.array()).abs().maxCoeff();
}

inline bool bitwise_equal(const LatticeField& a, const LatticeField& b) {
  if (!(a.shape() == b.shape())) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = a.array()[i], y = b.array()[i];
    if (std::memcmp(&x, &y, sizeof x) != 0) return false;
  }
  return true;
}

// Gaussian data N(mu, v I) on the RL path: posterior quantities in closed form.
struct GaussianPath {
  double mu;
  double v;
  double tau;
  double alpha() const { return tau; }
  double sigma() const { return 1.0 - tau; }
  double marg_var() const { return alpha() * alpha() * v + sigma() * sigma(); }
  double score(double x) const { return -(x - alpha() * mu) / marg_var(); }
  double x1_mean(double x) const { return mu + alpha() * v / marg_var() * (x - alpha() * mu); }
  double eps_mean(double x) const { return sigma() / marg_var() * (x - alpha() * mu); }
  // alpha_dot = 1, sigma_dot = -1
  double velocity(double x) const { return x1_mean(x) - eps_mean(x); }
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// 1-D mixture on the RL path: CDF and density of the marginal at tau.
struct Mixture1d {
  std::vector<double> w, mu, v;
  double cdf(double x, double tau) const {
    double f = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double s = std::sqrt(tau * tau * v[k] + (1 - tau) * (1 - tau));
      f += w[k] * normal_cdf((x - tau * mu[k]) / s);
    }
    return f;
  }
  double pdf(double x, double tau) const {
    double p = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double s2 = tau * tau * v[k] + (1 - tau) * (1 - tau);
      p += w[k] * std::exp(-0.5 * (x - tau * mu[k]) * (x - tau * mu[k]) / s2) / std::sqrt(2 * std::numbers::pi * s2);
    }
    return p;
  }
  // Continuity equation in 1-D: d/dtau F(x) + p v = 0.
  double flow_velocity(double x, double tau, double h = 1e-4) const {
    return -(cdf(x, tau + h) - cdf(x, tau - h)) / (2 * h) / pdf(x, tau);
  }
  steinflow::GmmExpert expert() const {
    std::vector<steinflow::GmmComponent> c;
    for (std::size_t k = 0; k < w.size(); ++k) c.push_back({w[k], LatticeField::Constant({1, 1, 1, 1}, mu[k]), v[k]});
    return steinflow::GmmExpert(c);
  }
};

inline Mixture1d random_mixture(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kd(1, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mixture1d m;
  const int k = kd(rng);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    m.w.push_back(0.2 + u(rng));
    m.mu.push_back(-3.0 + 6.0 * u(rng));
    m.v.push_back(0.2 + 1.5 * u(rng));
    total += m.w.back();
  }
  for (auto& x : m.w) x /= total;
  // exact normalization
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < m.w.size(); ++i) s += m.w[i];
  m.w.back() = 1.0 - s;
  return m;
}

}  // namespace testutil
