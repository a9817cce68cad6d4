#include <cmath>

#include "doctest.h"
#include "fsg/data.hpp"
#include "fsg/metrics.hpp"
#include "support.hpp"

using namespace fsg;

namespace {

ChangeMap random_map(std::size_t h, std::size_t w, double p, Rng& rng) {
  ChangeMap m(h, w);
  for (auto& v : m.mask) v = rng.uniform() < p ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("confusion against itself and its complement") {
  Rng rng(1);
  const ChangeMap label = random_map(16, 16, 0.3, rng);
  const auto same = confusion(label, label);
  CHECK(same.fp == 0);
  CHECK(same.fn == 0);
  ChangeMap inv = label;
  for (auto& v : inv.mask) v = 1 - v;
  const auto flipped = confusion(inv, label);
  CHECK(flipped.tp == 0);
  CHECK(flipped.tn == 0);
  CHECK(flipped.total() == 256);
}

TEST_CASE("confusion matches a double-loop counter") {
  Rng rng(2);
  const ChangeMap a = random_map(64, 64, 0.2, rng), b = random_map(64, 64, 0.25, rng);
  ConfusionCounts expect;
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x) {
      const bool p = a.at(y, x) != 0, l = b.at(y, x) != 0;
      if (p && l) ++expect.tp;
      if (p && !l) ++expect.fp;
      if (!p && l) ++expect.fn;
      if (!p && !l) ++expect.tn;
    }
  CHECK(confusion(a, b) == expect);
  CHECK_THROWS_AS(confusion(ChangeMap(2, 2), ChangeMap(2, 3)), ShapeError);
}

TEST_CASE("worked example") {
  const auto m = metrics({50, 25, 900, 25});
  CHECK(m.precision == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(m.recall == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(m.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(m.iou == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m.oa == doctest::Approx(0.95).epsilon(1e-15));
  CHECK_FALSE(m.degenerate);
}

TEST_CASE("perfect and degenerate cases") {
  const auto perfect = metrics({10, 0, 90, 0});
  for (double v : {perfect.precision, perfect.recall, perfect.f1, perfect.iou, perfect.oa}) CHECK(v == 1.0);
  const auto miss = metrics({0, 5, 90, 5});
  CHECK(miss.precision == 0.0);
  CHECK(miss.recall == 0.0);
  CHECK(miss.f1 == 0.0);
  CHECK(miss.iou == 0.0);
  const auto empty = metrics({0, 0, 100, 0});
  CHECK(empty.degenerate);
  CHECK(empty.f1 == 0.0);
  CHECK(empty.oa == 1.0);
  CHECK_THROWS_AS(metrics({}), Error);
}

TEST_CASE("closed-form identities over random counts") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    ConfusionCounts c{static_cast<std::uint64_t>(rng.uniform_int(1, 5000)), static_cast<std::uint64_t>(rng.uniform_int(0, 5000)),
                      static_cast<std::uint64_t>(rng.uniform_int(0, 5000)), static_cast<std::uint64_t>(rng.uniform_int(0, 5000))};
    const auto m = metrics(c);
    CHECK(std::abs(m.f1 - 2 * m.iou / (1 + m.iou)) < 1e-12);
    CHECK(std::abs(m.f1 - 2 * m.precision * m.recall / (m.precision + m.recall)) < 1e-12);
    CHECK(m.iou <= m.f1);
  }
}
