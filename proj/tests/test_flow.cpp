#include <doctest.h>

#include <random>

#include "steinflow/flow.hpp"
#include "steinflow/gmm.hpp"
#include "support.hpp"

using namespace steinflow;
using testutil::random_field;

namespace {
const NoiseSchedule<double> rl(ScheduleKind::rectified_linear);
const NoiseSchedule<double> vp(ScheduleKind::variance_preserving);
const LatticeShape small{2, 2, 2, 1};
}  // namespace

TEST_CASE("schedule boundary identities") {
  for (const auto& s : {rl, vp}) {
    CHECK(std::abs(s.alpha(0.0)) < 1e-15);
    CHECK(std::abs(s.sigma(0.0) - 1.0) < 1e-15);
    CHECK(std::abs(s.alpha(1.0) - 1.0) < 1e-15);
    CHECK(std::abs(s.sigma(1.0)) < 1e-15);
  }
  for (double tau = 0.0; tau < 1.0; tau += 0.01) {
    CHECK(rl.alpha(tau + 0.01) > rl.alpha(tau));
    CHECK(vp.sigma(tau + 0.01) < vp.sigma(tau));
  }
}

TEST_CASE("ladder endpoints and monotonicity") {
  for (auto mapping : {LadderMapping::uniform, LadderMapping::plus_one}) {
    AnnealLadder ladder(20, 1e-3, mapping);
    CHECK(ladder.tau(20) == 0.0);
    CHECK(ladder.tau(0) == doctest::Approx(1.0 - 1e-3).epsilon(1e-14));
    for (int t = 1; t <= 20; ++t) {
      CHECK(ladder.tau(t) < ladder.tau(t - 1));
      CHECK(ladder.step(t) == doctest::Approx(ladder.tau(t - 1) - ladder.tau(t)));
    }
  }
  AnnealLadder u(4);
  CHECK(u.tau(2) == doctest::Approx(0.999 * 0.5));
}

TEST_CASE("velocity of Gaussian data matches the conditional velocity") {
  std::mt19937_64 rng(1);
  const double mu = 0.7;
  testutil::GaussianPath g{mu, 1.0, 0.5};
  auto x = random_field(small, rng, 2.0);
  LatticeField s(small), expect(small);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    s.array()[i] = g.score(x.array()[i]);
    expect.array()[i] = g.velocity(x.array()[i]);
  }
  auto v = velocity_from_score(x, s, 0.5, rl);
  CHECK(testutil::max_abs_diff(v, expect) < 1e-9);
}

TEST_CASE("zero state and zero score give zero velocity") {
  for (double tau : {0.0, 0.3, 0.999, 1.0}) {
    auto v = velocity_from_score(LatticeField(small), LatticeField(small), tau, rl);
    CHECK(v.array().abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("standard normal data at tau 0.5") {
  std::mt19937_64 rng(2);
  auto x = random_field(small, rng);
  auto expert = GmmExpert::gaussian(LatticeField(small), 1.0);
  auto s = gmm_marginal_score(x, 0.5, expert, rl);
  CHECK(testutil::max_abs_diff(s, LatticeField(small, -2.0 * x.array())) < 1e-12);
  auto v = velocity_from_score(x, s, 0.5, rl);
  CHECK(v.array().abs().maxCoeff() < 1e-12);
}

TEST_CASE("clean prediction recovers the endpoint of a straight path") {
  std::mt19937_64 rng(3);
  for (double tau : {0.1, 0.5, 0.9}) {
    auto x1 = random_field(small, rng), eps = random_field(small, rng);
    LatticeField x(small, tau * x1.array() + (1 - tau) * eps.array());
    LatticeField v(small, x1.array() - eps.array());
    CHECK(testutil::max_abs_diff(clean_prediction(x, v, tau, rl), x1) < 1e-9);
    // RL form: x0 = x + (1 - tau) v
    CHECK(testutil::max_abs_diff(clean_prediction(x, v, tau, rl), LatticeField(small, x.array() + (1 - tau) * v.array())) <
          1e-12);
  }
  auto x = random_field(small, rng);
  CHECK(testutil::max_abs_diff(clean_prediction(x, LatticeField(small), 0.4, rl), x) == 0.0);
}

TEST_CASE("clean prediction of Gaussian data is the posterior mean") {
  std::mt19937_64 rng(4);
  for (double tau : {0.2, 0.5, 0.8}) {
    testutil::GaussianPath g{-0.4, 1.0, tau};
    auto x = random_field(small, rng);
    LatticeField s(small), expect(small);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      s.array()[i] = g.score(x.array()[i]);
      expect.array()[i] = g.x1_mean(x.array()[i]);
    }
    auto x0 = clean_prediction(x, velocity_from_score(x, s, tau, rl), tau, rl);
    CHECK(testutil::max_abs_diff(x0, expect) < 1e-9);
  }
}

TEST_CASE("clean prediction equals Tweedie for both schedules") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (const auto& sched : {rl, vp}) {
    for (int i = 0; i < 50; ++i) {
      const double tau = u(rng);
      auto x = random_field(small, rng), s = random_field(small, rng);
      const double a = sched.alpha(tau), sg = sched.sigma(tau);
      LatticeField tweedie(small, (x.array() + sg * sg * s.array()) / a);
      CHECK(testutil::max_abs_diff(clean_prediction(x, velocity_from_score(x, s, tau, sched), tau, sched), tweedie) <
            1e-9);
    }
  }
}

TEST_CASE("score from velocity inverts velocity from score") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double tau = u(rng);
    auto x = random_field(small, rng), s = random_field(small, rng);
    auto back = score_from_velocity(x, velocity_from_score(x, s, tau, rl), tau, rl);
    worst = std::max(worst, testutil::max_abs_diff(back, s));
  }
  CHECK(worst < 1e-12);
  auto z = score_from_velocity(LatticeField(small), LatticeField(small), 0.5, rl);
  CHECK(z.array().abs().maxCoeff() == 0.0);
}

TEST_CASE("score from the analytic Gaussian velocity") {
  std::mt19937_64 rng(7);
  testutil::GaussianPath g{1.3, 1.0, 0.35};
  auto x = random_field(small, rng);
  LatticeField v(small), expect(small);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    v.array()[i] = g.velocity(x.array()[i]);
    expect.array()[i] = g.score(x.array()[i]);
  }
  CHECK(testutil::max_abs_diff(score_from_velocity(x, v, 0.35, rl), expect) < 1e-9);
}

TEST_CASE("velocity matches the probability-flow velocity of random mixtures") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  const LatticeShape one{1, 1, 1, 1};
  for (int e = 0; e < 5; ++e) {
    auto m = testutil::random_mixture(rng);
    auto expert = m.expert();
    for (int i = 0; i < 50; ++i) {
      const double tau = u(rng);
      // draw x from the marginal so the density is not negligible
      std::discrete_distribution<int> pick(m.w.begin(), m.w.end());
      const int k = pick(rng);
      std::normal_distribution<double> n(tau * m.mu[k], std::sqrt(tau * tau * m.v[k] + (1 - tau) * (1 - tau)));
      auto x = LatticeField::Constant(one, n(rng));
      auto v = velocity_from_score(x, gmm_marginal_score(x, tau, expert, rl), tau, rl);
      const double fd = m.flow_velocity(x.array()[0], tau);
      CHECK(std::abs(v.array()[0] - fd) <= 1e-5 * std::abs(fd));
    }
  }
}

TEST_CASE("domain and shape errors") {
  LatticeField a(small), b({2, 2, 1, 1});
  CHECK_THROWS_AS(velocity_from_score(a, a, 1.5, rl), DomainError);
  CHECK_THROWS_AS(velocity_from_score(a, a, -0.1, rl), DomainError);
  CHECK_THROWS_AS(velocity_from_score(a, b, 0.5, rl), ContractViolation);
  CHECK_THROWS_AS(NoiseSchedule<double>(ScheduleKind::rectified_linear, 0.0), DomainError);
}

TEST_CASE("float instantiation") {
  const NoiseSchedule<float> s(ScheduleKind::rectified_linear);
  BasicLatticeField<float> x = BasicLatticeField<float>::Constant({1, 1, 1, 2}, 1.0f);
  auto v = velocity_from_score(x, x, 0.5f, s);
  auto back = score_from_velocity(x, v, 0.5f, s);
  CHECK(std::abs(back.array()[0] - 1.0f) < 1e-6f);
}
