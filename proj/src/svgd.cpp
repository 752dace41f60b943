#include "steinflow/svgd.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "steinflow/flow.hpp"

namespace steinflow {

void SvgdConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw DomainError("svgd eta must be positive");
  if (!(bandwidth_floor > 0.0)) throw DomainError("bandwidth floor must be positive");
  if (inner_iters < 1) throw DomainError("inner_iters must be at least 1");
}

std::vector<LatticeField> standard_normal_fields(const LatticeShape& shape, int count, std::uint64_t seed,
                                                 std::uint64_t stream) {
  std::vector<LatticeField> out;
  out.reserve(std::size_t(std::max(count, 0)));
  for (int l = 0; l < count; ++l) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream), std::uint32_t(l)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    LatticeField x(shape);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.array()[i] = normal(rng);
    out.push_back(std::move(x));
  }
  return out;
}

ParticleEnsemble::ParticleEnsemble(const LatticeShape& shape, Eigen::MatrixXd rows)
    : shape_(shape), rows_(std::move(rows)) {
  if (rows_.rows() < 1) throw ContractViolation("ensemble needs at least one particle");
  if (rows_.cols() != shape_.size()) throw ContractViolation("ensemble rows do not match shape " + shape_.str());
}

ParticleEnsemble ParticleEnsemble::standard_normal(const LatticeShape& shape, int count, std::uint64_t seed) {
  if (count < 1) throw ContractViolation("particle count must be at least 1");
  const auto fields = standard_normal_fields(shape, count, seed, 0);
  Eigen::MatrixXd rows(count, shape.size());
  for (int l = 0; l < count; ++l) rows.row(l) = fields[std::size_t(l)].array().matrix().transpose();
  return ParticleEnsemble(shape, std::move(rows));
}

LatticeField ParticleEnsemble::particle(int l) const {
  return LatticeField(shape_, rows_.row(l).transpose().array());
}

void ParticleEnsemble::set_particle(int l, const LatticeField& x) {
  require_same_shape(x.shape(), shape_, "ensemble particle");
  rows_.row(l) = x.array().matrix().transpose();
}

std::vector<LatticeField> ParticleEnsemble::particles() const {
  std::vector<LatticeField> out;
  out.reserve(std::size_t(size()));
  for (int l = 0; l < size(); ++l) out.push_back(particle(l));
  return out;
}

std::vector<double> pairwise_distances(const Eigen::MatrixXd& rows) {
  const Eigen::Index n = rows.rows();
  std::vector<double> d;
  d.reserve(std::size_t(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((rows.row(i) - rows.row(j)).norm());
  return d;
}

double median_bandwidth(const Eigen::MatrixXd& rows, double floor) {
  auto d = pairwise_distances(rows);
  if (d.empty()) return floor;
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + std::ptrdiff_t(mid), d.end());
  double med = d[mid];
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), d.begin() + std::ptrdiff_t(mid));
    med = 0.5 * (med + lower);
  }
  return std::max(med, floor);
}

double median_bandwidth(const ParticleEnsemble& ensemble, double floor) {
  return median_bandwidth(ensemble.matrix(), floor);
}

double mean_pairwise_distance(const Eigen::MatrixXd& rows) {
  const auto d = pairwise_distances(rows);
  if (d.empty()) return 0.0;
  double total = 0.0;
  for (double v : d) total += v;
  return total / double(d.size());
}

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& rows, double h) {
  const Eigen::Index n = rows.rows();
  const Eigen::ArrayXd sq = rows.rowwise().squaredNorm().array();
  Eigen::MatrixXd k(n, n);
  k.noalias() = rows * rows.transpose();
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < n; ++j) {
    auto col = k.col(j).array();
    col = ((2.0 * col - sq - sq[j]).min(0.0) / h).exp();
    col[j] = 1.0;
  }
  return k;
}

Eigen::MatrixXd svgd_directions(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& scores, double h,
                                bool repulsion) {
  if (rows.rows() != scores.rows() || rows.cols() != scores.cols()) {
    throw ContractViolation("svgd_directions: particle and score matrices differ in shape");
  }
  const Eigen::MatrixXd k = rbf_kernel(rows, h);
  Eigen::MatrixXd phi = k * scores;
  if (repulsion) {
    const Eigen::VectorXd mass = k.rowwise().sum();
    phi += (2.0 / h) * (mass.asDiagonal() * rows - k * rows);
  }
  return phi / double(rows.rows());
}

LatticeField svgd_direction(int l, const ParticleEnsemble& ensemble, const std::vector<LatticeField>& scores, double h,
                            bool repulsion) {
  if (int(scores.size()) != ensemble.size()) throw ContractViolation("one score per particle required");
  const LatticeField x = ensemble.particle(l);
  LatticeField phi(ensemble.shape());
  for (int j = 0; j < ensemble.size(); ++j) {
    const auto& s = scores[std::size_t(j)];
    if (!s.all_finite()) throw DivergenceError(-1, j, "non-finite score");
    const LatticeField xj = ensemble.particle(j);
    const double k = std::exp(-(xj.array() - x.array()).square().sum() / h);
    phi.array() += k * s.array();
    if (repulsion) phi.array() -= (2.0 / h) * (xj.array() - x.array()) * k;
  }
  phi.array() /= double(ensemble.size());
  return phi;
}

namespace {

// Runs fn(l) for every particle; the lowest-index failure is rethrown.
template <typename Fn>
void for_each_particle(int count, int workers, Fn&& fn) {
  std::exception_ptr error;
  int error_index = count;
#pragma omp parallel for num_threads(std::max(workers, 1)) schedule(static)
  for (int l = 0; l < count; ++l) {
    try {
      fn(l);
    } catch (...) {
#pragma omp critical(steinflow_particle_error)
      {
        if (l < error_index) {
          error_index = l;
          error = std::current_exception();
        }
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

void require_finite(const Eigen::MatrixXd& rows, int t, const char* stage) {
  for (Eigen::Index l = 0; l < rows.rows(); ++l) {
    if (!rows.row(l).allFinite()) throw DivergenceError(t, int(l), std::string("non-finite particle after ") + stage);
  }
}

Eigen::MatrixXd score_matrix(const Eigen::MatrixXd& rows, int t, const CompositeTarget& target, int workers) {
  Eigen::MatrixXd s(rows.rows(), rows.cols());
  for_each_particle(int(rows.rows()), workers, [&](int l) {
    const LatticeField x(target.shape, rows.row(l).transpose().array());
    s.row(l) = composed_score(x, t, target, l).array().matrix().transpose();
  });
  require_finite(s, t, "score evaluation");
  return s;
}

double mean_log_density(const Eigen::MatrixXd& rows, int t, const CompositeTarget& target, int workers) {
  const double tau = target.ladder.tau(t);
  std::vector<double> per(std::size_t(rows.rows()), 0.0);
  for_each_particle(int(rows.rows()), workers, [&](int l) {
    const LatticeField x(target.shape, rows.row(l).transpose().array());
    double total = 0.0;
    for (const auto& slot : target.experts) {
      const auto lp = slot.model->log_density(x, tau, target.sched);
      if (!lp) {
        total = std::numeric_limits<double>::quiet_NaN();
        break;
      }
      total += slot.weight * *lp;
    }
    per[std::size_t(l)] = total;
  });
  double sum = 0.0;
  for (double v : per) sum += v;
  return sum / double(per.size());
}

void refine_step(CompositeTarget& target, const Eigen::MatrixXd& rows, const Eigen::MatrixXd& scores, int t,
                 const RefineSchedule& refine) {
  const double tau = target.ladder.tau(t);
  Eigen::ArrayXd mean_clean = Eigen::ArrayXd::Zero(rows.cols());
  for (Eigen::Index l = 0; l < rows.rows(); ++l) {
    const LatticeField x(target.shape, rows.row(l).transpose().array());
    const LatticeField s(target.shape, scores.row(l).transpose().array());
    mean_clean += clean_prediction(x, velocity_from_score(x, s, tau, target.sched), tau, target.sched).array();
  }
  mean_clean /= double(rows.rows());
  const LatticeField& reference = target.context->reference();
  RefineParams params;
  params.threshold = refine.threshold.value_or(default_refine_threshold(reference));
  params.decay = refine.decay;
  auto refined = refine_masks(LatticeField(target.shape, mean_clean), reference, target.masks.raw_fg(),
                              target.masks.prior_fg(), target.masks.sim(), params);
  target.masks.set_raw_fg(std::move(refined.fg));
}

}  // namespace

AnnealResult anneal_sample(CompositeTarget& target, const AnnealConfig& config, const StepObserver& observer) {
  if (config.particles < 1) throw ContractViolation("particle count must be at least 1");
  return anneal_from(target, ParticleEnsemble::standard_normal(target.shape, config.particles, config.seed), config,
                     observer);
}

AnnealResult anneal_from(CompositeTarget& target, ParticleEnsemble initial, const AnnealConfig& config,
                         const StepObserver& observer) {
  config.svgd.validate();
  target.validate();
  require_same_shape(initial.shape(), target.shape, "initial ensemble");
  if (config.refine.enabled && config.refine.every < 1) throw DomainError("refine.every must be at least 1");
  if (target.recon && (target.recon->every < 1 || !(target.recon->step_size > 0.0))) {
    throw DomainError("recon step needs every >= 1 and step_size > 0");
  }

  const int T = target.ladder.steps();
  const int workers = config.workers;
  const auto& svgd = config.svgd;
  const bool project = config.context_projection && target.context && target.lambda.hard();

  AnnealResult result;
  result.initial = initial;
  Eigen::MatrixXd x = std::move(initial.matrix());

  auto emit = [&](int t, double h) {
    StepRecord rec{t, target.ladder.tau(t), h, mean_log_density(x, t, target, workers), mean_pairwise_distance(x)};
    result.records.push_back(rec);
    if (observer) observer(rec);
  };
  emit(T, median_bandwidth(x, svgd.bandwidth_floor));

  auto project_all = [&](int t) {
    for_each_particle(int(x.rows()), workers, [&](int l) {
      const LatticeField xl(target.shape, x.row(l).transpose().array());
      x.row(l) = context_project(xl, t, target, l).array().matrix().transpose();
    });
  };

  for (int t = T - 1; t >= 0; --t) {
    const int k = T - 1 - t;
    const double tau = target.ladder.tau(t);
    const double dtau = target.ladder.step(t + 1);

    Eigen::MatrixXd s = score_matrix(x, t, target, workers);
    for_each_particle(int(x.rows()), workers, [&](int l) {
      const LatticeField xl(target.shape, x.row(l).transpose().array());
      const LatticeField sl(target.shape, s.row(l).transpose().array());
      x.row(l) += dtau * velocity_from_score(xl, sl, tau, target.sched).array().matrix().transpose();
    });
    require_finite(x, t, "pushforward");

    const double h = median_bandwidth(x, svgd.bandwidth_floor);
    for (int it = 0; it < svgd.inner_iters; ++it) {
      if (svgd.inner_iters > 1) s = score_matrix(x, t, target, workers);
      x += svgd.eta * svgd_directions(x, s, h, svgd.repulsion);
      require_finite(x, t, "svgd step");
      if (project && svgd.inner_iters > 1) project_all(t);
    }
    if (project) project_all(t);

    const bool do_recon = target.recon && target.context && k % target.recon->every == 0;
    const bool do_refine = config.refine.enabled && target.context && (k + 1) % config.refine.every == 0;
    if (do_recon) {
      s = score_matrix(x, t, target, workers);
      for_each_particle(int(x.rows()), workers, [&](int l) {
        const LatticeField xl(target.shape, x.row(l).transpose().array());
        const LatticeField sl(target.shape, s.row(l).transpose().array());
        x.row(l) = recon_grad_step(xl, sl, t, target, l).array().matrix().transpose();
      });
      require_finite(x, t, "recon step");
    }
    if (do_refine) refine_step(target, x, score_matrix(x, t, target, workers), t, config.refine);
    emit(t, h);
  }

  result.ensemble = ParticleEnsemble(target.shape, std::move(x));
  return result;
}

}  // namespace steinflow
