#pragma once

#include <optional>
#include <vector>

#include "steinflow/lattice.hpp"
#include "steinflow/mask.hpp"
#include "steinflow/schedule.hpp"

namespace steinflow {

/// One isotropic component N(mean, variance * I) with mixture weight.
struct GmmComponent {
  double weight = 1.0;
  LatticeField mean;
  double variance = 1.0;
};

/// Gaussian-mixture data distribution. Under the path x = alpha x1 + sigma eps
/// its marginal at tau is the mixture with means alpha mu_k and variances
/// alpha^2 v_k + sigma^2.
class GmmExpert {
 public:
  explicit GmmExpert(std::vector<GmmComponent> components, std::optional<Mask> region = std::nullopt);

  static GmmExpert gaussian(LatticeField mean, double variance);

  const std::vector<GmmComponent>& components() const { return components_; }
  const LatticeShape& shape() const { return components_.front().mean.shape(); }
  const std::optional<Mask>& region() const { return region_; }
  bool single_component() const { return components_.size() == 1; }

 private:
  std::vector<GmmComponent> components_;
  std::optional<Mask> region_;
};

/// Score of the analytically noised mixture, log-sum-exp stabilized.
/// Cells outside the expert's region (if any) get 0.
LatticeField gmm_marginal_score(const LatticeField& x, double tau, const GmmExpert& expert,
                                const NoiseSchedule<double>& sched);

/// Normalized log-density of the marginal at tau (tau = 1 is the data law).
double gmm_marginal_log_density(const LatticeField& x, double tau, const GmmExpert& expert,
                                const NoiseSchedule<double>& sched);

/// Posterior mean E[x1 | x_tau = x].
LatticeField gmm_posterior_mean(const LatticeField& x, double tau, const GmmExpert& expert,
                                const NoiseSchedule<double>& sched);

/// Moments of a product of isotropic Gaussians.
struct ProductMoments {
  LatticeField mean;
  double variance = 0.0;
};

/// Precision-weighted mean and variance of prod_i N(mu_i, v_i I).
/// Throws UnsupportedOracle if any expert has more than one component.
ProductMoments product_oracle_moments(const std::vector<GmmExpert>& experts);

struct GridSpec {
  double lo = -4.0;
  double hi = 4.0;
  int points = 161;
};

/// Normalized density tabulated on a regular grid over [lo, hi]^d, d <= 3.
class DensityTable {
 public:
  DensityTable(int dims, GridSpec grid, std::vector<double> density);

  int dims() const { return dims_; }
  const GridSpec& grid() const { return grid_; }
  double spacing() const { return (grid_.hi - grid_.lo) / (grid_.points - 1); }
  double coordinate(int i) const { return grid_.lo + i * spacing(); }
  const std::vector<double>& values() const { return density_; }

  /// Trapezoid-rule integral of the table.
  double integral() const;
  /// Log-density at the grid node nearest to `x` (clamped into the grid).
  double log_density_nearest(const LatticeField& x) const;
  /// Coordinates of the largest entry.
  std::vector<double> argmax() const;
  /// Mean and per-dimension variance computed by trapezoid quadrature.
  std::vector<double> mean() const;
  std::vector<double> variance() const;

 private:
  template <typename Fn>
  void for_each_node(Fn&& fn) const;

  int dims_;
  GridSpec grid_;
  std::vector<double> density_;
};

/// Brute-force oracle for the masked product: log p(x) = sum_i sum_cells M_i ell_i.
/// Single-component experts factorize over cells so any mask is allowed;
/// mixtures need a spatially uniform mask. `masks` may be empty (all ones).
DensityTable grid_brute_density(const std::vector<GmmExpert>& experts, const std::vector<Mask>& masks,
                                const GridSpec& grid);

}  // namespace steinflow
