#include <doctest.h>

#include "steinflow/masks.hpp"
#include "support.hpp"

using namespace steinflow;

namespace {
const LatticeShape s{5, 5, 5, 1};
Mask point(int h, int w, int n) {
  auto m = Mask::zeros(s);
  m.values(h, w, n) = 1.0;
  return m;
}
}  // namespace

TEST_CASE("context mask is the complement product") {
  auto fg = Mask::constant(s, 0.25), sim = Mask::constant(s, 0.5);
  CHECK(derive_context_mask(fg, sim).values.array().maxCoeff() == doctest::Approx(0.375));
  CHECK(derive_context_mask(Mask::zeros(s), Mask::zeros(s)).values.array().minCoeff() == 1.0);
}

TEST_CASE("dilation of a single cell covers its 3x3x3 neighborhood") {
  auto d = smooth_mask(point(2, 2, 2), 1, 0.0);
  int ones = 0;
  for (int h = 0; h < 5; ++h)
    for (int w = 0; w < 5; ++w)
      for (int n = 0; n < 5; ++n) {
        const bool inside = std::abs(h - 2) <= 1 && std::abs(w - 2) <= 1 && std::abs(n - 2) <= 1;
        CHECK(d.values(h, w, n) == (inside ? 1.0 : 0.0));
        ones += d.values(h, w, n) == 1.0;
      }
  CHECK(ones == 27);
  // corner cell clips at the border
  auto c = smooth_mask(point(0, 0, 0), 1, 0.0);
  CHECK(c.values.array().sum() == 8.0);
}

TEST_CASE("smoothing keeps constants and range") {
  auto ones = smooth_mask(Mask::ones(s), 2, 1.0);
  CHECK((ones.values.array() - 1.0).abs().maxCoeff() < 1e-12);
  auto zeros = smooth_mask(Mask::zeros(s), 2, 1.0);
  CHECK(zeros.values.array().abs().maxCoeff() == 0.0);
  const LatticeShape big{9, 9, 9, 1};
  auto centre = Mask::zeros(big);
  centre.values(4, 4, 4) = 1.0;
  auto b = smooth_mask(centre, 0, 0.8);
  CHECK(b.values.array().minCoeff() >= 0.0);
  CHECK(b.values.array().maxCoeff() <= 1.0);
  CHECK(b.values.array().sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(testutil::max_abs_diff(smooth_mask(point(1, 3, 2), 0, 0.0).values, point(1, 3, 2).values) == 0.0);
  CHECK_THROWS_AS(smooth_mask(point(0, 0, 0), -1, 0.0), DomainError);
}

TEST_CASE("mask validation") {
  auto bad = Mask::constant(s, 1.5);
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  CHECK_THROWS_AS(MaskSet(bad, Mask::zeros(s)), ContractViolation);
}

TEST_CASE("pinned frames force context to one") {
  MaskSet set(Mask::ones(s), Mask::zeros(s));
  CHECK(set.context().values.array().maxCoeff() == 0.0);
  set.pin_frames(0, 2);
  for (int h = 0; h < 5; ++h)
    for (int w = 0; w < 5; ++w) {
      CHECK(set.context().values(h, w, 1) == 1.0);
      CHECK(set.context().values(h, w, 2) == 0.0);
    }
  CHECK_THROWS_AS(set.pin_frames(4, 2), ContractViolation);
}

TEST_CASE("refinement rule") {
  std::mt19937_64 rng(21);
  const LatticeShape f{5, 5, 5, 2};
  auto ref = testutil::random_field(f, rng);
  const double thr = default_refine_threshold(ref);
  CHECK(thr > 0.0);
  auto fg = Mask::zeros(s, MaskRole::fg), sim = Mask::zeros(s, MaskRole::sim);

  SUBCASE("agreement leaves the masks alone") {
    auto r = refine_masks(ref, ref, fg, fg, sim, {thr, 0.8});
    CHECK(r.fg.values.array().maxCoeff() == 0.0);
    CHECK(r.context.values.array().minCoeff() == 1.0);
  }
  SUBCASE("one deviating cell joins the foreground") {
    auto clean = ref;
    clean(1, 2, 3, 1) += 10.0 * thr;
    auto r = refine_masks(clean, ref, fg, fg, sim, {thr, 0.8});
    CHECK(r.fg.values(1, 2, 3) == 1.0);
    CHECK(r.context.values(1, 2, 3) == 0.0);
    CHECK(r.fg.values.array().sum() == 1.0);
  }
  SUBCASE("simulated cells are never taken") {
    auto clean = ref;
    clean(1, 2, 3, 0) += 10.0 * thr;
    auto sim1 = sim;
    sim1.values(1, 2, 3) = 1.0;
    auto r = refine_masks(clean, ref, fg, fg, sim1, {thr, 0.8});
    CHECK(r.fg.values(1, 2, 3) == 0.0);
  }
  SUBCASE("decay toward the prior") {
    auto cur = Mask::ones(s, MaskRole::fg);
    auto r = refine_masks(ref, ref, cur, fg, sim, {thr, 0.8});
    CHECK(r.fg.values.array().maxCoeff() == doctest::Approx(0.8));
  }
}
