#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "steinflow/composite.hpp"
#include "steinflow/lattice.hpp"

namespace steinflow {

struct SvgdConfig {
  double eta = 1e-3;
  double bandwidth_floor = 1e-8;
  int inner_iters = 1;
  bool repulsion = true;

  void validate() const;
};

/// Independent standard-normal fields, one RNG stream per index.
/// `stream` separates uses of the same seed (0 for initial particles).
std::vector<LatticeField> standard_normal_fields(const LatticeShape& shape, int count, std::uint64_t seed,
                                                 std::uint64_t stream);

/// L particles sharing one shape. Rows of matrix() are flattened particles.
class ParticleEnsemble {
 public:
  ParticleEnsemble() = default;
  ParticleEnsemble(const LatticeShape& shape, Eigen::MatrixXd rows);

  /// Each particle an independent N(0, I) draw from its own stream.
  static ParticleEnsemble standard_normal(const LatticeShape& shape, int count, std::uint64_t seed);

  int size() const { return int(rows_.rows()); }
  const LatticeShape& shape() const { return shape_; }
  LatticeField particle(int l) const;
  void set_particle(int l, const LatticeField& x);
  std::vector<LatticeField> particles() const;

  const Eigen::MatrixXd& matrix() const { return rows_; }
  Eigen::MatrixXd& matrix() { return rows_; }

 private:
  LatticeShape shape_{};
  Eigen::MatrixXd rows_;
};

/// Pairwise Euclidean distances between rows, as the L(L-1)/2 upper-triangle values.
std::vector<double> pairwise_distances(const Eigen::MatrixXd& rows);

/// Median of pairwise distances, floored; a single particle gets the floor.
double median_bandwidth(const Eigen::MatrixXd& rows, double floor = 1e-8);
double median_bandwidth(const ParticleEnsemble& ensemble, double floor = 1e-8);

double mean_pairwise_distance(const Eigen::MatrixXd& rows);

/// k(a, b) = exp(-||a - b||^2 / h) for all row pairs.
Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& rows, double h);

/// phi*(x_l) for every l at once:
/// (1/L) sum_l' [k(x_l', x_l) s_l' + (2/h)(x_l - x_l') k(x_l', x_l)].
Eigen::MatrixXd svgd_directions(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& scores, double h,
                                bool repulsion = true);

/// phi*(x_l) for one particle, straight from the per-pair sum.
LatticeField svgd_direction(int l, const ParticleEnsemble& ensemble, const std::vector<LatticeField>& scores, double h,
                            bool repulsion = true);

struct RefineSchedule {
  bool enabled = false;
  int every = 5;
  /// Defaults to half the mean per-cell RMS of z_0.
  std::optional<double> threshold;
  double decay = 0.8;
};

struct AnnealConfig {
  SvgdConfig svgd;
  int particles = 64;
  std::uint64_t seed = 0;
  int workers = 1;
  /// Line-10 projection; off reproduces the "without context" ablation.
  bool context_projection = true;
  RefineSchedule refine;
};

struct StepRecord {
  int t = 0;
  double tau = 0.0;
  double bandwidth = 0.0;
  /// mean_l sum_i w_i log p_i(x_l, tau); NaN if an expert has no density.
  double mean_log_density = 0.0;
  double mean_pairwise_distance = 0.0;
};

using StepObserver = std::function<void(const StepRecord&)>;

struct AnnealResult {
  ParticleEnsemble initial;
  ParticleEnsemble ensemble;
  std::vector<StepRecord> records;
};

/// The annealed SVGD loop from t = T - 1 down to 0. Mask refinement
/// mutates `target.masks`. Throws DivergenceError on a non-finite particle.
AnnealResult anneal_sample(CompositeTarget& target, const AnnealConfig& config, const StepObserver& observer = {});

/// Same, starting from a given ensemble instead of fresh N(0, I) draws.
AnnealResult anneal_from(CompositeTarget& target, ParticleEnsemble initial, const AnnealConfig& config,
                         const StepObserver& observer = {});

}  // namespace steinflow
