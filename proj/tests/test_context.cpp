#include <doctest.h>

#include <cmath>
#include <random>

#include "steinflow/composite.hpp"
#include "steinflow/context.hpp"
#include "steinflow/flow.hpp"
#include "support.hpp"
#include "targets.hpp"

using namespace steinflow;
using testutil::random_field;

namespace {
const NoiseSchedule<double> rl(ScheduleKind::rectified_linear);
const LatticeShape shape{2, 2, 3, 1};

VelocityField linear_field(double a) {
  return [a](const LatticeField& x, double) { return LatticeField(x.shape(), a * x.array()); };
}

double linear_inversion_error(int steps, double a) {
  AnnealLadder ladder(steps);
  auto z0 = LatticeField::Constant({1, 1, 1, 1}, 1.0);
  auto ctx = rf_invert(z0, linear_field(a), ladder);
  const double exact = std::exp(a * (ladder.tau(steps) - ladder.tau(0)));
  return std::abs(ctx.at(steps).array()[0] - exact);
}
}  // namespace

TEST_CASE("zero velocity keeps the reference at every step") {
  std::mt19937_64 rng(31);
  auto ref = random_field(shape, rng);
  auto ctx = rf_invert(ref, [](const LatticeField& x, double) { return LatticeField(x.shape()); }, AnnealLadder(10));
  CHECK(ctx.steps() == 10);
  for (int t = 0; t <= 10; ++t) CHECK(testutil::bitwise_equal(ctx.at(t), ref));
}

TEST_CASE("inversion of a linear field converges at second order") {
  double prev = linear_inversion_error(10, 1.5);
  for (int steps : {20, 40, 80}) {
    const double err = linear_inversion_error(steps, 1.5);
    CHECK(prev / err >= 3.5);
    prev = err;
  }
}

TEST_CASE("Gaussian expert round trip at T = 50") {
  std::mt19937_64 rng(32);
  auto mu = random_field(shape, rng);
  auto field = expert_velocity_field(std::make_shared<GmmScoreModel>(GmmExpert::gaussian(mu, 0.5)), rl);
  auto ref = random_field(shape, rng);
  const double norm = ref.array().matrix().norm();
  auto roundtrip = [&](int steps, SolverOrder order) {
    AnnealLadder ladder(steps);
    auto ctx = rf_invert(ref, field, ladder);
    return (rf_generate(ctx.at(steps), field, ladder, order).array() - ref.array()).matrix().norm() / norm;
  };
  CHECK(roundtrip(50, SolverOrder::second) < 1e-2);
  // Euler is first order: a few percent at T = 50, halving with T
  const double e50 = roundtrip(50, SolverOrder::euler), e100 = roundtrip(100, SolverOrder::euler);
  CHECK(e50 < 5e-2);
  CHECK(e50 / e100 == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("inversion reports divergence") {
  auto ref = LatticeField::Constant(shape, 1.0);
  CHECK_THROWS_AS(rf_invert(ref, linear_field(1e300), AnnealLadder(5)), InversionDiverged);
}

TEST_CASE("direct context follows the path") {
  std::mt19937_64 rng(33);
  auto ref = random_field(shape, rng);
  std::vector<LatticeField> noise{random_field(shape, rng), random_field(shape, rng)};
  AnnealLadder ladder(8);
  auto ctx = ContextConditionals::direct(ref, noise, ladder, rl);
  CHECK(testutil::bitwise_equal(ctx.at(0, 1), ref));
  for (int t = 1; t <= 8; ++t) {
    const double tau = ladder.tau(t);
    LatticeField expect(shape, tau * ref.array() + (1 - tau) * noise[1].array());
    CHECK(testutil::max_abs_diff(ctx.at(t, 3), expect) < 1e-15);
  }
  CHECK_THROWS_AS(ctx.at(9), ContractViolation);
  CHECK_THROWS_AS(ContextConditionals::from_sequence({ref}), ContractViolation);
}

TEST_CASE("composed score of full-mask Gaussians is the product score near data") {
  std::mt19937_64 rng(34);
  auto target = testutil::make_target(
      shape, {testutil::slot(testutil::gaussian(shape, -1, 0.5)), testutil::slot(testutil::gaussian(shape, 1, 0.5))}, 10);
  // marginal mixing is O(eps) at tau = 1 - eps
  target.sched = NoiseSchedule<double>(ScheduleKind::rectified_linear, 1e-4);
  target.ladder = AnnealLadder(10, 1e-4);
  target.validate();
  auto moments = product_oracle_moments({testutil::gaussian(shape, -1, 0.5), testutil::gaussian(shape, 1, 0.5)});
  auto x = random_field(shape, rng);
  LatticeField expect(shape, -(x.array() - moments.mean.array()) / moments.variance);
  CHECK(testutil::max_abs_diff(composed_score(x, 0, target), expect) / expect.array().abs().maxCoeff() < 1e-3);
}

TEST_CASE("mask routing and weights") {
  std::mt19937_64 rng(35);
  auto fg = Mask::zeros(shape, MaskRole::fg);
  for (int n = 0; n < 3; ++n) fg.values(0, 0, n) = 1.0;
  auto a = testutil::slot(testutil::gaussian(shape, 2, 1), MaskBinding::fg);
  a.weight = 0.5;
  auto b = testutil::slot(testutil::gaussian(shape, 0, 1), MaskBinding::full);
  auto target = testutil::make_target(shape, {a, b}, 4, MaskSet(fg, Mask::zeros(shape, MaskRole::sim)));
  auto x = random_field(shape, rng);
  const double tau = target.ladder.tau(2);
  auto sa = gmm_marginal_score(x, tau, testutil::gaussian(shape, 2, 1), rl);
  auto sb = gmm_marginal_score(x, tau, testutil::gaussian(shape, 0, 1), rl);
  auto got = composed_score(x, 2, target);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double m = fg.values.array()[i];
    CHECK(got.array()[i] == doctest::Approx(0.5 * m * sa.array()[i] + sb.array()[i]).epsilon(1e-14));
  }
}

namespace {
class Throwing final : public ExpertModel {
 public:
  LatticeField score(const LatticeField&, double, const NoiseSchedule<double>&) const override {
    throw std::runtime_error("backend down");
  }
  std::string describe() const override { return "throwing"; }
};
class WrongShape final : public ExpertModel {
 public:
  LatticeField score(const LatticeField&, double, const NoiseSchedule<double>&) const override {
    return LatticeField({1, 1, 1, 1});
  }
  std::string describe() const override { return "wrong"; }
};
}  // namespace

TEST_CASE("expert failures are attributed") {
  ExpertSlot bad{std::make_shared<Throwing>(), MaskBinding::full, std::nullopt, 1.0, "remote-a"};
  auto target = testutil::make_target(shape, {bad}, 4);
  try {
    composed_score(LatticeField(shape), 1, target);
    FAIL("expected ExpertError");
  } catch (const ExpertError& e) {
    CHECK(e.expert() == "remote-a");
  }
  ExpertSlot wrong{std::make_shared<WrongShape>(), MaskBinding::full, std::nullopt, 1.0, "w"};
  CHECK_THROWS_AS(composed_score(LatticeField(shape), 1, testutil::make_target(shape, {wrong}, 4)), ExpertError);
}

TEST_CASE("validation catches uncovered cells") {
  auto t = testutil::make_target(shape, {testutil::slot(testutil::gaussian(shape, 0, 1), MaskBinding::fg)}, 4);
  CHECK_THROWS_AS(t.validate(), ContractViolation);
  t.context = ContextConditionals::from_sequence(std::vector<LatticeField>(5, LatticeField(shape)));
  CHECK_NOTHROW(t.validate());
  t.context = ContextConditionals::from_sequence(std::vector<LatticeField>(4, LatticeField(shape)));
  CHECK_THROWS_AS(t.validate(), ContractViolation);
}

TEST_CASE("context projection") {
  std::mt19937_64 rng(36);
  auto fg = Mask::zeros(shape, MaskRole::fg);
  for (int w = 0; w < 2; ++w)
    for (int n = 0; n < 3; ++n) fg.values(0, w, n) = 1.0;  // top half generated, bottom half context
  auto target = testutil::make_target(shape, {testutil::slot(testutil::gaussian(shape, 0, 1), MaskBinding::fg)}, 6,
                                      MaskSet(fg, Mask::zeros(shape, MaskRole::sim)));
  std::vector<LatticeField> z;
  for (int t = 0; t <= 6; ++t) z.push_back(random_field(shape, rng));
  target.context = ContextConditionals::from_sequence(z);
  target.validate();
  auto x = random_field(shape, rng);
  auto p = context_project(x, 3, target);
  for (int h = 0; h < 2; ++h)
    for (int w = 0; w < 2; ++w)
      for (int n = 0; n < 3; ++n) {
        const double want = h == 0 ? x(h, w, n) : z[3](h, w, n);
        CHECK(std::memcmp(&p(h, w, n), &want, sizeof want) == 0);
      }
  CHECK(testutil::bitwise_equal(context_project(p, 3, target), p));

  // fractional mask blends
  target.masks.override_context(Mask::constant(shape, 0.25));
  auto q = context_project(x, 3, target);
  CHECK(testutil::max_abs_diff(q, LatticeField(shape, 0.75 * x.array() + 0.25 * z[3].array())) < 1e-15);
}

TEST_CASE("soft lambda pulls toward the context") {
  std::mt19937_64 rng(37);
  auto target = testutil::make_target(shape, {testutil::slot(testutil::gaussian(shape, 0, 1))}, 4);
  auto hard = target;
  std::vector<LatticeField> z;
  for (int t = 0; t <= 4; ++t) z.push_back(random_field(shape, rng));
  target.context = ContextConditionals::from_sequence(z);
  target.masks.override_context(Mask::constant(shape, 0.5));
  target.lambda = LambdaPolicy::soft(3.0);
  auto x = random_field(shape, rng);
  auto diff = composed_score(x, 2, target).array() - composed_score(x, 2, hard).array();
  CHECK((diff - (-3.0 * 0.5 * (x.array() - z[2].array()))).abs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(LambdaPolicy::soft(-1.0), DomainError);
}

TEST_CASE("reconstruction step on one cell") {
  const LatticeShape one{1, 1, 1, 1};
  auto e = testutil::gaussian(one, 0.5, 0.8);
  auto target = testutil::make_target(one, {testutil::slot(e)}, 10);
  const double zc = -1.2;
  target.context = ContextConditionals::from_sequence(std::vector<LatticeField>(11, LatticeField::Constant(one, zc)));
  const double m = 0.6;
  target.masks.override_context(Mask::constant(one, m));
  const int t = 4;
  const double tau = target.ladder.tau(t);
  auto x = LatticeField::Constant(one, 0.9);
  auto s = gmm_marginal_score(x, tau, e, rl);

  // x0 = x + (1 - tau) v is affine in x with s frozen: slope J
  auto x0 = [&](const LatticeField& y) { return clean_prediction(y, velocity_from_score(y, s, tau, rl), tau, rl).array()[0]; };
  const double J = (x0(LatticeField::Constant(one, 1.9)) - x0(x)) / 1.0;
  auto residual = [&](const LatticeField& y) { return std::abs(m * (x0(y) - zc)); };
  const double bound = 1.0 / (J * J * m * m);

  target.recon = ReconStep{};
  for (double frac : {0.01, 0.3, 0.7, 0.99}) {
    target.recon->step_size = frac * bound;
    auto y = recon_grad_step(x, s, t, target);
    CHECK(residual(y) < residual(x));
    // closed form: residual scales by (1 - 2 eta J^2 m^2)
    CHECK(residual(y) == doctest::Approx(std::abs(1 - 2 * frac) * residual(x)).epsilon(1e-9));
  }
  target.recon->step_size = 1.01 * bound;
  CHECK(residual(recon_grad_step(x, s, t, target)) > residual(x));
  target.recon.reset();
  CHECK(testutil::bitwise_equal(recon_grad_step(x, s, t, target), x));
}
