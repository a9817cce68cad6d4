#include <cmath>
#include <sstream>

#include "doctest.h"
#include "support.hpp"

using namespace fsg;
using test::random_tensor;

TEST_CASE("conv2d: padded all-ones 3x3 kernel sums the whole 2x2 image") {
  const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor y = conv2d(x, Tensor({1, 1, 3, 3}, 1.0), Tensor(), 1, 1);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  for (double v : y.data()) CHECK(v == 10.0);
}

TEST_CASE("conv2d: 1x1 identity kernel is the identity") {
  const Tensor x = random_tensor({2, 1, 5, 3}, 1);
  CHECK(equal(conv2d(x, Tensor({1, 1, 1, 1}, 1.0), Tensor(), 1, 0), x));
}

TEST_CASE("conv2d matches the loop oracle") {
  for (std::size_t stride : {1u, 2u})
    for (std::size_t pad : {0u, 1u}) {
      const Tensor x = random_tensor({2, 3, 8, 8}, 2);
      const Tensor w = random_tensor({4, 3, 3, 3}, 3);
      const Tensor b = random_tensor({4}, 4);
      CHECK(max_abs_diff(conv2d(x, w, b, stride, pad), test::conv2d_oracle(x, w, b, stride, pad)) < 1e-12);
    }
  const Tensor x = random_tensor({1, 4, 7, 9}, 5);
  const Tensor w = random_tensor({6, 4, 7, 7}, 6);
  CHECK(max_abs_diff(conv2d(x, w, Tensor(), 2, 3), test::conv2d_oracle(x, w, Tensor(), 2, 3)) < 1e-12);
}

TEST_CASE("conv2d rejects mismatched channels and names both shapes") {
  const Tensor x({1, 3, 4, 4});
  const Tensor w({2, 2, 3, 3});
  try {
    conv2d(x, w, Tensor(), 1, 1);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1x3x4x4]") != std::string::npos);
    CHECK(msg.find("[2x2x3x3]") != std::string::npos);
  }
}

TEST_CASE("conv3d examples and oracle") {
  SUBCASE("depth-2 all-ones kernel sums the two time steps") {
    const Tensor y = conv3d(Tensor({1, 1, 2, 2, 2}, 1.0), Tensor({1, 1, 2, 1, 1}, 1.0), Tensor(), 0);
    CHECK(y.shape() == Shape{1, 1, 1, 2, 2});
    for (double v : y.data()) CHECK(v == 2.0);
  }
  SUBCASE("2x3x3 all-ones kernel on a constant reads 18 taps at interior pixels") {
    const double c = 0.7;
    const Tensor y = conv3d(Tensor({1, 1, 2, 5, 5}, c), Tensor({1, 1, 2, 3, 3}, 1.0), Tensor(), 1);
    CHECK(y[2 * 5 + 2] == doctest::Approx(18 * c).epsilon(1e-15));
  }
  SUBCASE("random input matches the loop oracle") {
    const Tensor x = random_tensor({1, 2, 2, 4, 4}, 7);
    const Tensor w = random_tensor({3, 2, 2, 3, 3}, 8);
    const Tensor b = random_tensor({3}, 9);
    CHECK(max_abs_diff(conv3d(x, w, b, 1), test::conv3d_oracle(x, w, b, 1)) < 1e-12);
  }
  SUBCASE("kernel deeper than input") {
    CHECK_THROWS_AS(conv3d(Tensor({1, 1, 1, 2, 2}), Tensor({1, 1, 2, 1, 1}), Tensor(), 0), ShapeError);
  }
}

TEST_CASE("batchnorm2d") {
  SUBCASE("standardized input passes through with unit affine") {
    Tensor x({2, 1, 2, 2}, {-1, 1, -1, 1, -1, 1, -1, 1});
    auto stats = BatchNormStats::init(1);
    const Tensor y = batchnorm2d(x, Tensor({1}, 1.0), Tensor({1}, 0.0), stats, true);
    for (std::size_t i = 0; i < 8; ++i) CHECK(y[i] == doctest::Approx(x[i] / std::sqrt(1 + kBatchNormEps)));
  }
  SUBCASE("gamma 0 yields beta") {
    auto stats = BatchNormStats::init(2);
    const Tensor y = batchnorm2d(random_tensor({3, 2, 4, 4}, 1), Tensor({2}, 0.0), Tensor({2}, {0.5, -2.0}), stats, true);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == ((i / 16) % 2 == 0 ? 0.5 : -2.0));
  }
  SUBCASE("training updates running stats with momentum, eval reads them") {
    auto stats = BatchNormStats::init(1);
    const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
    batchnorm2d(x, Tensor({1}, 1.0), Tensor({1}, 0.0), stats, true);
    CHECK(stats.running_mean[0] == doctest::Approx(0.1 * 2.5));
    // Unbiased variance 5/3 of the batch.
    CHECK(stats.running_var[0] == doctest::Approx(0.9 + 0.1 * 5.0 / 3.0));
    const Tensor y = batchnorm2d(x, Tensor({1}, 1.0), Tensor({1}, 0.0), stats, false);
    CHECK(y[0] == doctest::Approx((1 - 0.25) / std::sqrt(0.9 + 0.5 / 3.0 + kBatchNormEps)));
  }
  SUBCASE("single value per channel in training mode is rejected") {
    auto stats = BatchNormStats::init(1);
    CHECK_THROWS_AS(batchnorm2d(Tensor({1, 1, 1, 1}, 1.0), Tensor({1}, 1.0), Tensor({1}, 0.0), stats, true), Error);
  }
}

TEST_CASE("elementwise suite") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  const Tensor r = relu(Tensor({2}, {-3.0, 3.0}));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 3.0);
  CHECK(abs(Tensor({2}, {-2.5, 1.0}))[0] == 2.5);
  const Tensor s = sigmoid(Tensor({2}, {-40.0, 40.0}));
  CHECK(s[0] > 0.0);
  CHECK(s[0] < 1e-17);
  CHECK(scalar_mul(Tensor({2}, {1.0, -2.0}), 3.0)[1] == -6.0);
  CHECK(sub(Tensor({2}, {1.0, 2.0}), Tensor({2}, {3.0, 5.0}))[1] == -3.0);

  SUBCASE("Cx1x1 gate times CxHxW map is per-channel scaling") {
    const Tensor gate = random_tensor({3, 1, 1}, 1);
    const Tensor map = random_tensor({2, 3, 4, 4}, 2);
    const Tensor y = hadamard(gate, map);
    CHECK(y.shape() == map.shape());
    for (std::size_t i = 0; i < map.numel(); ++i) CHECK(y[i] == gate[(i / 16) % 3] * map[i]);
    CHECK(equal(add(map, gate), add(gate, map)));
  }
  SUBCASE("incompatible shapes are rejected") {
    CHECK_THROWS_AS(add(Tensor({3, 2}), Tensor({2, 3})), ShapeError);
    CHECK(broadcast_shape({3, 1, 1}, {2, 3, 4, 4}) == Shape{2, 3, 4, 4});
    CHECK(broadcast_shape({1, 1, 4, 4}, {2, 8, 1, 1}) == Shape{2, 8, 4, 4});
  }
}

TEST_CASE("softmax") {
  const Tensor a = softmax(Tensor({2}, {0.0, 0.0}));
  CHECK(a[0] == 0.5);
  CHECK(a[1] == 0.5);
  for (double x : {-1e6, 0.0, 3.7, 1e6}) {
    const Tensor b = softmax(Tensor({3}, x));
    for (double v : b.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  const Tensor c = softmax(Tensor({2}, {1000.0, 0.0}));
  CHECK(c[0] == 1.0);
  CHECK(c[1] < 1e-300);
  const Tensor d = softmax(random_tensor({4, 5, 7}, 3, -20.0, 20.0));
  for (std::size_t row = 0; row < 20; ++row) {
    double s = 0.0;
    for (std::size_t j = 0; j < 7; ++j) s += d[row * 7 + j];
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("pools") {
  SUBCASE("constant image") {
    const Tensor x({1, 2, 3, 4}, 1.25);
    for (const Tensor& p : {global_avg_pool(x), global_max_pool(x), avg_pool_h(x), avg_pool_w(x)})
      for (double v : p.data()) CHECK(v == 1.25);
  }
  SUBCASE("direction-wise means") {
    const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
    const Tensor h = avg_pool_h(x), w = avg_pool_w(x);
    CHECK(h.shape() == Shape{1, 1, 2, 1});
    CHECK(w.shape() == Shape{1, 1, 1, 2});
    CHECK(h[0] == 1.5);
    CHECK(h[1] == 3.5);
    CHECK(w[0] == 2.0);
    CHECK(w[1] == 3.0);
    CHECK(global_max_pool(x).item() == 4.0);
    CHECK(global_avg_pool(x).item() == 2.5);
  }
  SUBCASE("max_pool2d with padding ignores the pad") {
    const Tensor x({1, 1, 2, 2}, {-1, -2, -3, -4});
    const Tensor y = max_pool2d(x, 3, 2, 1);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == -1.0);
  }
}

TEST_CASE("structural ops") {
  const Tensor x = random_tensor({2, 3, 4}, 1);
  CHECK(equal(reshape(x, {6, 4}), Tensor({6, 4}, std::vector<double>(x.data().begin(), x.data().end()))));
  CHECK_THROWS_AS(reshape(x, {5, 5}), ShapeError);
  const Tensor t = transpose(x, 0, 2);
  CHECK(t.shape() == Shape{4, 3, 2});
  CHECK(t[(1 * 3 + 2) * 2 + 1] == x[(1 * 3 + 2) * 4 + 1]);
  CHECK(equal(transpose(t, 0, 2), x));
  const Tensor c = concat({x, slice(x, 1, 1, 2)}, 1);
  CHECK(c.shape() == Shape{2, 5, 4});
  CHECK(equal(slice(c, 1, 0, 3), x));
  CHECK(equal(slice(c, 1, 3, 2), slice(x, 1, 1, 2)));
  CHECK_THROWS_AS(slice(x, 1, 2, 2), ShapeError);

  SUBCASE("matmul with identity") {
    const Tensor a = random_tensor({2, 3, 4}, 2);
    Tensor eye({2, 4, 4});
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 4; ++i) eye[n * 16 + i * 5] = 1.0;
    CHECK(equal(matmul_batched(a, eye), a));
  }
  SUBCASE("linear matches hand arithmetic") {
    const Tensor y = linear(Tensor({1, 2}, {1, 2}), Tensor({2, 2}, {1, 0, 3, 4}), Tensor({2}, {0.5, -1}));
    CHECK(y[0] == 1.5);
    CHECK(y[1] == 10.0);
  }
}

TEST_CASE("bilinear upsampling") {
  const Tensor c({1, 2, 3, 3}, 0.4);
  const Tensor up = upsample_bilinear(c, 4);
  for (double v : up.data()) CHECK(v == doctest::Approx(0.4).epsilon(1e-15));
  const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor y = bilinear_upsample_x2(x);
  CHECK(y.shape() == Shape{1, 1, 4, 4});
  const double expect[16] = {1, 1.25, 1.75, 2, 1.5, 1.75, 2.25, 2.5, 2.5, 2.75, 3.25, 3.5, 3, 3.25, 3.75, 4};
  for (std::size_t i = 0; i < 16; ++i) CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-15));
  const Tensor r = random_tensor({2, 3, 5, 4}, 3);
  for (std::size_t f : {1u, 2u, 4u}) CHECK(max_abs_diff(upsample_bilinear(r, f), test::upsample_oracle(r, f)) < 1e-12);
}

TEST_CASE("forward ops reject non-finite results") {
  CHECK_THROWS_AS(scalar_mul(Tensor({1}, 1e308), 10.0), NumericError);
}

TEST_CASE("tensor record round trip") {
  const Tensor x = random_tensor({2, 1, 3}, 4);
  std::stringstream s;
  write_tensor(s, x);
  CHECK(equal(read_tensor(s), x));
  std::stringstream bad("NOPE");
  CHECK_THROWS_AS(read_tensor(bad), Error);
}

TEST_CASE("parameter lists sort and reject duplicates") {
  ParameterList p{{"b", Tensor({2})}, {"a", Tensor({3})}};
  sort_and_validate(p);
  CHECK(p[0].name == "a");
  CHECK(param_count(p) == 5);
  p.push_back({"a", Tensor({1})});
  CHECK_THROWS_AS(sort_and_validate(p), Error);
}
