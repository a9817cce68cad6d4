#include <cmath>

#include "doctest.h"
#include "fsg/grad_check.hpp"
#include "fsg/wavelet.hpp"
#include "support.hpp"

using namespace fsg;
using test::random_tensor;

TEST_CASE("constant image has only an approximation band") {
  const double c = 0.37;
  const auto s = dwt2_haar(Tensor({1, 2, 4, 6}, c));
  CHECK(s.ll.shape() == Shape{1, 2, 2, 3});
  for (double v : s.ll.data()) CHECK(v == doctest::Approx(2 * c).epsilon(1e-15));
  for (const Tensor* t : {&s.lh, &s.hl, &s.hh})
    for (double v : t->data()) CHECK(std::abs(v) < 1e-16);
  const Tensor back = idwt2_haar(s);
  for (double v : back.data()) CHECK(v == doctest::Approx(c).epsilon(1e-15));
}

TEST_CASE("single block arithmetic and its inverse") {
  const auto s = dwt2_haar(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(s.ll.item() == 5.0);
  CHECK(s.lh.item() == -2.0);
  CHECK(s.hl.item() == -1.0);
  CHECK(s.hh.item() == 0.0);
  const Tensor x = idwt2_haar({Tensor({1, 1, 1, 1}, 5.0), Tensor({1, 1, 1, 1}, -2.0), Tensor({1, 1, 1, 1}, -1.0),
                               Tensor({1, 1, 1, 1}, 0.0)});
  CHECK(equal(x, Tensor({1, 1, 2, 2}, {1, 2, 3, 4})));
}

TEST_CASE("energy is preserved") {
  const Tensor x = random_tensor({1, 2, 8, 8}, 1);
  const auto s = dwt2_haar(x);
  const double e = test::sum_of_squares(s.ll) + test::sum_of_squares(s.lh) + test::sum_of_squares(s.hl) +
                   test::sum_of_squares(s.hh);
  CHECK(std::abs(e - test::sum_of_squares(x)) < 1e-12);
}

TEST_CASE("round trip is the identity on random tensors") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Shape shape{static_cast<std::size_t>(rng.uniform_int(1, 2)), static_cast<std::size_t>(rng.uniform_int(1, 4)),
                      2 * static_cast<std::size_t>(rng.uniform_int(1, 8)), 2 * static_cast<std::size_t>(rng.uniform_int(1, 8))};
    const Tensor x = test::random_tensor(shape, rng, -10.0, 10.0);
    CHECK(max_abs_diff(idwt2_haar(dwt2_haar(x)), x) < 1e-12);
  }
}

TEST_CASE("odd sizes and mismatched bands are rejected") {
  CHECK_THROWS_AS(dwt2_haar(Tensor({1, 1, 3, 4})), ShapeError);
  CHECK_THROWS_AS(dwt2_haar(Tensor({1, 1, 4, 5})), ShapeError);
  CHECK_THROWS_AS(idwt2_haar({Tensor({1, 1, 2, 2}), Tensor({1, 1, 2, 2}), Tensor({1, 1, 2, 3}), Tensor({1, 1, 2, 2})}),
                  ShapeError);
}

TEST_CASE("wavelet pair is differentiable") {
  const Tensor r = random_tensor({1, 2, 4, 4}, 3);
  const auto fn = [&r](const Tensor& p) {
    const auto s = dwt2_haar(p);
    const Tensor y = idwt2_haar({hadamard(s.ll, s.ll), s.hh, sigmoid(s.hl), s.lh});
    return sum(hadamard(y, r));
  };
  CHECK(grad_check(fn, random_tensor({1, 2, 4, 4}, 4)) < 1e-6);
}
