#include "steinflow/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace steinflow {

std::string_view to_string(MaskRole role) {
  switch (role) {
    case MaskRole::fg: return "fg";
    case MaskRole::sim: return "sim";
    case MaskRole::context: return "context";
    case MaskRole::custom: return "custom";
  }
  return "custom";
}

void Mask::validate() const {
  if (values.shape().c != 1) throw ContractViolation("mask must have a single channel");
  const auto& a = values.array();
  if (!((a >= 0.0).all() && (a <= 1.0).all())) {
    throw ContractViolation(std::string("mask '") + std::string(to_string(role)) + "' has entries outside [0,1]");
  }
}

Eigen::ArrayXd Mask::broadcast(const LatticeShape& field) const {
  const auto& s = values.shape();
  if (s.h != field.h || s.w != field.w || s.n != field.n) {
    throw ContractViolation("mask " + s.str() + " does not cover field " + field.str());
  }
  if (field.c == 1) return values.array();
  Eigen::ArrayXd out(field.size());
  for (Eigen::Index cell = 0; cell < s.cells(); ++cell) {
    out.segment(cell * field.c, field.c).setConstant(values.array()[cell]);
  }
  return out;
}

GmmExpert::GmmExpert(std::vector<GmmComponent> components, std::optional<Mask> region)
    : components_(std::move(components)), region_(std::move(region)) {
  if (components_.empty()) throw ContractViolation("GMM expert needs at least one component");
  double total = 0.0;
  const auto shape = components_.front().mean.shape();
  for (const auto& c : components_) {
    if (!(c.weight >= 0.0)) throw ContractViolation("GMM weights must be nonnegative");
    if (!(c.variance > 0.0)) throw ContractViolation("GMM variances must be positive");
    require_same_shape(c.mean.shape(), shape, "GMM component mean");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ContractViolation("GMM weights sum to " + std::to_string(total) + ", expected 1");
  }
  if (region_) {
    region_->validate();
    const auto& r = region_->shape();
    if (r.h != shape.h || r.w != shape.w || r.n != shape.n) {
      throw ContractViolation("GMM region does not match lattice " + shape.str());
    }
  }
}

GmmExpert GmmExpert::gaussian(LatticeField mean, double variance) {
  return GmmExpert({GmmComponent{1.0, std::move(mean), variance}});
}

namespace {

struct Responsibilities {
  Eigen::ArrayXd r;         // posterior component probabilities
  Eigen::ArrayXd variances;  // alpha^2 v_k + sigma^2
  double log_norm;          // log sum_k exp(logit_k)
};

Responsibilities responsibilities(const LatticeField& x, double alpha, double sigma, const GmmExpert& expert) {
  const auto& comps = expert.components();
  const auto K = Eigen::Index(comps.size());
  const double d = double(x.size());
  Eigen::ArrayXd logits(K);
  Eigen::ArrayXd vars(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& c = comps[k];
    const double V = alpha * alpha * c.variance + sigma * sigma;
    vars[k] = V;
    const double sq = (x.array() - alpha * c.mean.array()).square().sum();
    logits[k] = (c.weight > 0.0 ? std::log(c.weight) : -std::numeric_limits<double>::infinity()) -
                0.5 * d * std::log(2.0 * std::numbers::pi * V) - 0.5 * sq / V;
  }
  const double m = logits.maxCoeff();
  Eigen::ArrayXd e = (logits - m).exp();
  const double z = e.sum();
  return {e / z, vars, m + std::log(z)};
}

void check_field(const LatticeField& x, const GmmExpert& expert) {
  require_same_shape(x.shape(), expert.shape(), "GMM expert input");
}

}  // namespace

LatticeField gmm_marginal_score(const LatticeField& x, double tau, const GmmExpert& expert,
                                const NoiseSchedule<double>& sched) {
  NoiseSchedule<double>::check_domain(tau);
  check_field(x, expert);
  const double t = sched.clamp_for_score(tau);
  const double alpha = sched.alpha(t);
  const double sigma = sched.sigma(t);
  const auto resp = responsibilities(x, alpha, sigma, expert);
  Eigen::ArrayXd s = Eigen::ArrayXd::Zero(x.size());
  const auto& comps = expert.components();
  for (std::size_t k = 0; k < comps.size(); ++k) {
    if (resp.r[k] == 0.0) continue;
    s += (resp.r[k] / resp.variances[k]) * (alpha * comps[k].mean.array() - x.array());
  }
  if (expert.region()) {
    s *= (expert.region()->broadcast(x.shape()) > 0.0).cast<double>();
  }
  return LatticeField(x.shape(), s);
}

double gmm_marginal_log_density(const LatticeField& x, double tau, const GmmExpert& expert,
                                const NoiseSchedule<double>& sched) {
  NoiseSchedule<double>::check_domain(tau);
  check_field(x, expert);
  return responsibilities(x, sched.alpha(tau), sched.sigma(tau), expert).log_norm;
}

LatticeField gmm_posterior_mean(const LatticeField& x, double tau, const GmmExpert& expert,
                                const NoiseSchedule<double>& sched) {
  NoiseSchedule<double>::check_domain(tau);
  check_field(x, expert);
  const double alpha = sched.alpha(tau);
  const double sigma = sched.sigma(tau);
  const auto resp = responsibilities(x, alpha, sigma, expert);
  Eigen::ArrayXd m = Eigen::ArrayXd::Zero(x.size());
  const auto& comps = expert.components();
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const auto& c = comps[k];
    const double gain = alpha * c.variance / resp.variances[k];
    m += resp.r[k] * (c.mean.array() + gain * (x.array() - alpha * c.mean.array()));
  }
  return LatticeField(x.shape(), m);
}

ProductMoments product_oracle_moments(const std::vector<GmmExpert>& experts) {
  if (experts.empty()) throw UnsupportedOracle("product oracle needs at least one expert");
  const auto shape = experts.front().shape();
  double precision = 0.0;
  Eigen::ArrayXd weighted = Eigen::ArrayXd::Zero(shape.size());
  for (const auto& e : experts) {
    if (!e.single_component()) throw UnsupportedOracle("product oracle requires single-component experts");
    if (e.region()) throw UnsupportedOracle("product oracle does not support expert regions");
    require_same_shape(e.shape(), shape, "product oracle");
    const auto& c = e.components().front();
    precision += 1.0 / c.variance;
    weighted += c.mean.array() / c.variance;
  }
  return {LatticeField(shape, weighted / precision), 1.0 / precision};
}

// ---------------------------------------------------------------------------

DensityTable::DensityTable(int dims, GridSpec grid, std::vector<double> density)
    : dims_(dims), grid_(grid), density_(std::move(density)) {}

template <typename Fn>
void DensityTable::for_each_node(Fn&& fn) const {
  const int p = grid_.points;
  std::vector<int> idx(dims_, 0);
  for (std::size_t flat = 0; flat < density_.size(); ++flat) {
    fn(flat, idx);
    for (int d = dims_ - 1; d >= 0; --d) {
      if (++idx[d] < p) break;
      idx[d] = 0;
    }
  }
}

namespace {
double trapezoid_weight(int i, int points, double h) { return (i == 0 || i == points - 1) ? 0.5 * h : h; }
}  // namespace

double DensityTable::integral() const {
  double total = 0.0;
  const double h = spacing();
  for_each_node([&](std::size_t flat, const std::vector<int>& idx) {
    double w = 1.0;
    for (int i : idx) w *= trapezoid_weight(i, grid_.points, h);
    total += w * density_[flat];
  });
  return total;
}

double DensityTable::log_density_nearest(const LatticeField& x) const {
  if (x.size() != dims_) throw ContractViolation("density table dimension mismatch");
  std::size_t flat = 0;
  for (int d = 0; d < dims_; ++d) {
    const double u = (x.array()[d] - grid_.lo) / spacing();
    const int i = std::clamp(int(std::lround(u)), 0, grid_.points - 1);
    flat = flat * grid_.points + std::size_t(i);
  }
  return std::log(density_[flat]);
}

std::vector<double> DensityTable::argmax() const {
  const auto it = std::max_element(density_.begin(), density_.end());
  std::size_t flat = std::size_t(it - density_.begin());
  std::vector<double> out(dims_);
  for (int d = dims_ - 1; d >= 0; --d) {
    out[d] = coordinate(int(flat % grid_.points));
    flat /= grid_.points;
  }
  return out;
}

std::vector<double> DensityTable::mean() const {
  std::vector<double> m(dims_, 0.0);
  const double h = spacing();
  for_each_node([&](std::size_t flat, const std::vector<int>& idx) {
    double w = 1.0;
    for (int i : idx) w *= trapezoid_weight(i, grid_.points, h);
    for (int d = 0; d < dims_; ++d) m[d] += w * density_[flat] * coordinate(idx[d]);
  });
  return m;
}

std::vector<double> DensityTable::variance() const {
  const auto m = mean();
  std::vector<double> v(dims_, 0.0);
  const double h = spacing();
  for_each_node([&](std::size_t flat, const std::vector<int>& idx) {
    double w = 1.0;
    for (int i : idx) w *= trapezoid_weight(i, grid_.points, h);
    for (int d = 0; d < dims_; ++d) {
      const double dx = coordinate(idx[d]) - m[d];
      v[d] += w * density_[flat] * dx * dx;
    }
  });
  return v;
}

DensityTable grid_brute_density(const std::vector<GmmExpert>& experts, const std::vector<Mask>& masks,
                                const GridSpec& grid) {
  if (grid.points < 2 || !(grid.hi > grid.lo)) throw UnsupportedOracle("grid must have >= 2 points and hi > lo");
  if (!masks.empty() && masks.size() != experts.size()) {
    throw ContractViolation("grid_brute_density: one mask per expert required");
  }
  int dims = 0;
  LatticeShape shape{};
  if (!experts.empty()) {
    shape = experts.front().shape();
    dims = int(shape.size());
  } else if (!masks.empty()) {
    shape = masks.front().shape();
    dims = int(shape.size());
  }
  if (dims < 1 || dims > 3) throw UnsupportedOracle("grid oracle supports 1..3 lattice entries, got " + std::to_string(dims));

  // Per expert: per-entry weights, and a flag for whole-vector evaluation.
  struct Term {
    const GmmExpert* expert;
    Eigen::ArrayXd weights;
    bool factorized;
  };
  std::vector<Term> terms;
  for (std::size_t i = 0; i < experts.size(); ++i) {
    require_same_shape(experts[i].shape(), shape, "grid_brute_density expert");
    Eigen::ArrayXd w = masks.empty() ? Eigen::ArrayXd::Ones(dims) : masks[i].broadcast(shape);
    const bool factorized = experts[i].single_component();
    if (!factorized && (w != w[0]).any()) {
      throw UnsupportedOracle("mixture experts need a spatially uniform mask in the grid oracle");
    }
    terms.push_back({&experts[i], w, factorized});
  }

  std::size_t total = 1;
  for (int d = 0; d < dims; ++d) total *= std::size_t(grid.points);
  std::vector<double> logd(total, 0.0);
  const double h = (grid.hi - grid.lo) / (grid.points - 1);
  const NoiseSchedule<double> sched;
  LatticeField x(shape);
  std::vector<int> idx(dims, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    for (int d = 0; d < dims; ++d) x.array()[d] = grid.lo + idx[d] * h;
    double acc = 0.0;
    for (const auto& term : terms) {
      if (term.factorized) {
        const auto& c = term.expert->components().front();
        const Eigen::ArrayXd ell = -0.5 * std::log(2.0 * std::numbers::pi * c.variance) -
                                   0.5 * (x.array() - c.mean.array()).square() / c.variance;
        acc += (term.weights * ell).sum();
      } else if (term.weights[0] != 0.0) {
        acc += term.weights[0] * gmm_marginal_log_density(x, 1.0, *term.expert, sched);
      }
    }
    logd[flat] = acc;
    for (int d = dims - 1; d >= 0; --d) {
      if (++idx[d] < grid.points) break;
      idx[d] = 0;
    }
  }

  const double peak = *std::max_element(logd.begin(), logd.end());
  std::vector<double> density(total);
  for (std::size_t i = 0; i < total; ++i) density[i] = std::exp(logd[i] - peak);
  DensityTable table(dims, grid, density);
  const double z = table.integral();
  for (auto& v : density) v /= z;
  return DensityTable(dims, grid, std::move(density));
}

}  // namespace steinflow
