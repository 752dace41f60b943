#include <doctest.h>

#include <cmath>
#include <random>

#include "steinflow/svgd.hpp"
#include "support.hpp"
#include "targets.hpp"

using namespace steinflow;

namespace {
Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd m(v.size(), 1);
  int i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

class NanExpert final : public ExpertModel {
 public:
  LatticeField score(const LatticeField& x, double tau, const NoiseSchedule<double>&) const override {
    return LatticeField::Constant(x.shape(), tau < 0.5 ? 0.0 : std::nan(""));
  }
  std::string describe() const override { return "nan"; }
};
}  // namespace

TEST_CASE("median bandwidth") {
  CHECK(median_bandwidth(column({0, 1, 3})) == 2.0);
  CHECK(median_bandwidth(column({0, 1, 3, 7})) == 3.5);
  CHECK(median_bandwidth(column({4.0})) == 1e-8);
  CHECK(median_bandwidth(column({1, 1, 1})) == 1e-8);
  auto d = pairwise_distances(column({0, 1, 3}));
  std::sort(d.begin(), d.end());
  CHECK(d == std::vector<double>{1, 2, 3});
  CHECK(mean_pairwise_distance(column({0, 1, 3})) == 2.0);
}

TEST_CASE("kernel matrix") {
  std::mt19937_64 rng(41);
  Eigen::MatrixXd x(6, 4);
  std::normal_distribution<double> n;
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  auto k = rbf_kernel(x, 1.7);
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) CHECK(k(a, b) == doctest::Approx(std::exp(-(x.row(a) - x.row(b)).squaredNorm() / 1.7)).epsilon(1e-13));
}

TEST_CASE("single particle moves along its score") {
  ParticleEnsemble e({1, 1, 1, 2}, Eigen::MatrixXd::Constant(1, 2, 0.3));
  Eigen::MatrixXd s(1, 2);
  s << 1.5, -2.0;
  auto phi = svgd_directions(e.matrix(), s, median_bandwidth(e), true);
  CHECK((phi - s).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("two particles with zero score repel") {
  ParticleEnsemble e({1, 1, 1, 1}, column({0.0, 1.0}));
  const double h = median_bandwidth(e);
  CHECK(h == 1.0);
  std::vector<LatticeField> zero(2, LatticeField({1, 1, 1, 1}));
  // (1/2) (2/h) (x1 - x2) exp(-1)
  CHECK(svgd_direction(0, e, zero, h).array()[0] == doctest::Approx(-std::exp(-1.0)).epsilon(1e-15));
  CHECK(svgd_direction(1, e, zero, h).array()[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(svgd_direction(0, e, zero, h, false).array()[0] == 0.0);
}

TEST_CASE("symmetric pair under a standard normal score") {
  // x = +-a, s = -x, h = 2a: phi(a) = (1/2)(-a + (a + 2) exp(-2a))
  auto phi_at = [](double a) {
    Eigen::MatrixXd x = column({-a, a});
    return svgd_directions(x, -x, 2 * a);
  };
  for (double a : {0.3, 1.0, 2.0}) {
    auto phi = phi_at(a);
    CHECK(phi(1, 0) == doctest::Approx(0.5 * (-a + (a + 2) * std::exp(-2 * a))).epsilon(1e-14));
    CHECK(phi(0, 0) == doctest::Approx(-phi(1, 0)).epsilon(1e-15));
  }
  // repulsion wins when close, the score wins when far
  CHECK(phi_at(0.3)(1, 0) > 0.0);
  CHECK(phi_at(2.0)(1, 0) < 0.0);
}

TEST_CASE("matrix form agrees with the per-pair sum") {
  std::mt19937_64 rng(42);
  const LatticeShape s{1, 5, 1, 1};
  std::vector<LatticeField> xs, scores;
  Eigen::MatrixXd rows(7, 5), sm(7, 5);
  for (int l = 0; l < 7; ++l) {
    xs.push_back(testutil::random_field(s, rng));
    scores.push_back(testutil::random_field(s, rng));
    rows.row(l) = xs.back().array().matrix().transpose();
    sm.row(l) = scores.back().array().matrix().transpose();
  }
  ParticleEnsemble e(s, rows);
  const double h = median_bandwidth(e);
  for (bool rep : {true, false}) {
    auto phi = svgd_directions(rows, sm, h, rep);
    for (int l = 0; l < 7; ++l) {
      auto one = svgd_direction(l, e, scores, h, rep);
      CHECK((phi.row(l).transpose().array() - one.array()).abs().maxCoeff() < 1e-13);
    }
  }
}

TEST_CASE("config validation") {
  SvgdConfig c;
  CHECK_NOTHROW(c.validate());
  c.eta = 0.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = {};
  c.inner_iters = 0;
  CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("annealing is deterministic and independent of worker count") {
  const LatticeShape s{2, 2, 2, 1};
  auto target = testutil::make_target(
      s, {testutil::slot(testutil::gaussian(s, -1, 0.5)), testutil::slot(testutil::gaussian(s, 1, 0.5))}, 10);
  AnnealConfig cfg;
  cfg.particles = 16;
  cfg.seed = 99;
  auto a = anneal_sample(target, cfg);
  auto b = anneal_sample(target, cfg);
  cfg.workers = 4;
  auto c = anneal_sample(target, cfg);
  CHECK(a.ensemble.matrix() == b.ensemble.matrix());
  CHECK(a.ensemble.matrix() == c.ensemble.matrix());
  REQUIRE(a.records.size() == 11);
  CHECK(a.records.front().t == 10);
  CHECK(a.records.front().tau == 0.0);
  CHECK(a.records.back().t == 0);
  cfg.seed = 100;
  CHECK(anneal_sample(target, cfg).ensemble.matrix() != a.ensemble.matrix());
}

TEST_CASE("standard normal expert recovers N(0, I)") {
  const LatticeShape s{2, 2, 2, 1};
  auto target = testutil::make_target(s, {testutil::slot(testutil::gaussian(s, 0, 1))}, 50);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    AnnealConfig cfg;
    cfg.particles = 64;
    cfg.seed = seed;
    const auto& x = anneal_sample(target, cfg).ensemble.matrix();
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::RowVectorXd var = (x.rowwise() - mean).array().square().colwise().sum() / double(x.rows() - 1);
    CHECK(std::abs(mean.mean()) < 0.1);
    CHECK(std::abs(var.mean() - 1.0) < 0.25);
  }
}

TEST_CASE("two Gaussian experts recover the product moments") {
  const LatticeShape s{1, 1, 1, 1};
  auto target = testutil::make_target(
      s, {testutil::slot(testutil::gaussian(s, -1, 0.5)), testutil::slot(testutil::gaussian(s, 1, 0.5))}, 100);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    AnnealConfig cfg;
    cfg.particles = 64;
    cfg.seed = seed;
    cfg.svgd.inner_iters = 200;
    const auto& x = anneal_sample(target, cfg).ensemble.matrix();
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::RowVectorXd var = (x.rowwise() - mean).array().square().colwise().sum() / double(x.rows() - 1);
    CHECK(std::abs(mean.mean()) < 0.05);
    CHECK(std::abs(var.mean() - 0.25) < 0.15 * 0.25);
  }
}

TEST_CASE("full context mask returns the reference bitwise") {
  std::mt19937_64 rng(43);
  const LatticeShape s{2, 2, 2, 1};
  auto target = testutil::make_target(s, {testutil::slot(testutil::gaussian(s, 0, 1))}, 8,
                                      MaskSet(Mask::zeros(s, MaskRole::fg), Mask::zeros(s, MaskRole::sim)));
  std::vector<LatticeField> z;
  for (int t = 0; t <= 8; ++t) z.push_back(testutil::random_field(s, rng));
  target.context = ContextConditionals::from_sequence(z);
  REQUIRE(target.masks.context().values.array().minCoeff() == 1.0);
  AnnealConfig cfg;
  cfg.particles = 8;
  auto r = anneal_sample(target, cfg);
  for (int l = 0; l < 8; ++l) CHECK(testutil::bitwise_equal(r.ensemble.particle(l), z[0]));
}

TEST_CASE("non-finite scores raise a divergence error") {
  const LatticeShape s{1, 1, 1, 1};
  auto target = testutil::make_target(s, {ExpertSlot{std::make_shared<NanExpert>(), MaskBinding::full, {}, 1.0, "nan"}}, 10);
  AnnealConfig cfg;
  cfg.particles = 4;
  CHECK_THROWS_AS(anneal_sample(target, cfg), DivergenceError);
}
