#include <cmath>

#include "doctest.h"
#include "fsg/grad_check.hpp"
#include "fsg/stsam.hpp"
#include "support.hpp"

using namespace fsg;
using test::random_tensor;

namespace {

// Cross-attention of queries from `qs` over keys/values of `kv` for batch
// item 0, computed token by token.
Tensor attention_oracle(const Stsam& m, const Tensor& qs, const Tensor& kv, const Tensor& residual) {
  const std::size_t c = qs.dim(1), h = qs.dim(2), w = qs.dim(3), hw = h * w, r = c / 8;
  auto project = [&](const Conv2dLayer& conv, const Tensor& x, std::size_t co, std::size_t co_i, std::size_t t) {
    double acc = conv.bias.defined() ? conv.bias[co_i] : 0.0;
    for (std::size_t ci = 0; ci < c; ++ci) acc += conv.weight[co_i * c + ci] * x[ci * hw + t];
    (void)co;
    return acc;
  };
  Tensor out({1, c, h, w});
  for (std::size_t q = 0; q < hw; ++q) {
    std::vector<double> score(hw);
    double top = -1e300;
    for (std::size_t k = 0; k < hw; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < r; ++i) s += project(m.q_proj, qs, r, i, q) * project(m.k_proj, kv, r, i, k);
      score[k] = s;
      top = std::max(top, s);
    }
    double z = 0.0;
    for (auto& s : score) z += (s = std::exp(s - top));
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t k = 0; k < hw; ++k) acc += score[k] / z * project(m.v_proj, kv, c, ch, k);
      out[ch * hw + q] = m.omega[0] * acc + residual[ch * hw + q];
    }
  }
  return out;
}

}  // namespace

TEST_CASE("omega 0 makes the attention branch the identity") {
  for (StsamVariant v : {StsamVariant::full, StsamVariant::self, StsamVariant::no_time}) {
    Rng rng(1);
    const Stsam m(16, v, rng);
    CHECK(m.omega.item() == 0.0);
    const Tensor f1 = random_tensor({2, 16, 3, 4}, 2), f2 = random_tensor({2, 16, 3, 4}, 3);
    const auto [o1, o2] = m.attention_branch(f1, f2);
    CHECK(equal(o1, f1));
    CHECK(equal(o2, f2));
  }
}

TEST_CASE("single token attends to itself") {
  Rng rng(2);
  Stsam m(8, StsamVariant::self, rng);
  m.omega[0] = 0.75;
  const Tensor f1 = random_tensor({1, 8, 1, 1}, 4), f2 = random_tensor({1, 8, 1, 1}, 5);
  StsamTrace trace;
  const auto [o1, o2] = m.attention_branch(f1, f2, &trace);
  CHECK(trace.attention[0].item() == 1.0);
  const Tensor v = m.v_proj.forward(f1);
  for (std::size_t c = 0; c < 8; ++c) CHECK(o1[c] == doctest::Approx(0.75 * v[c] + f1[c]).epsilon(1e-14));
}

TEST_CASE("cross attention matches the token loop oracle") {
  Rng rng(3);
  Stsam m(8, StsamVariant::full, rng);
  m.omega[0] = 0.6;
  const Tensor f1 = random_tensor({1, 8, 3, 3}, 6), f2 = random_tensor({1, 8, 3, 3}, 7);
  const auto [o1, o2] = m.attention_branch(f1, f2);
  const Tensor x1 = add(f1, m.t1), x2 = add(f2, m.t2);
  CHECK(max_abs_diff(o1, attention_oracle(m, x2, x1, f1)) < 1e-10);
  CHECK(max_abs_diff(o2, attention_oracle(m, x1, x2, f2)) < 1e-10);
}

TEST_CASE("attention rows are distributions and gates lie in (0,1)") {
  Rng rng(4);
  Stsam m(16, StsamVariant::full, rng);
  m.omega[0] = 1.0;
  StsamTrace trace;
  const auto out = m.forward(random_tensor({2, 16, 4, 4}, 8, -3, 3), random_tensor({2, 16, 4, 4}, 9, -3, 3), true, &trace);
  CHECK(out.first.shape() == Shape{2, 16, 4, 4});
  for (const Tensor& a : trace.attention) {
    CHECK(a.shape() == Shape{2, 16, 16});
    for (std::size_t row = 0; row < 32; ++row) {
      double s = 0.0;
      for (std::size_t k = 0; k < 16; ++k) s += a[row * 16 + k];
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(trace.gate_h[t].shape() == Shape{2, 16, 4, 1});
    CHECK(trace.gate_w[t].shape() == Shape{2, 16, 1, 4});
    for (const Tensor* g : {&trace.gate_h[t], &trace.gate_w[t]})
      for (double v : g->data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
  }
}

TEST_CASE("open coordinate gates pass the map through") {
  Rng rng(5);
  Stsam m(8, StsamVariant::coord, rng);
  m.coord_hook = GateHook::open;
  const Tensor f = random_tensor({1, 8, 3, 5}, 10);
  CHECK(equal(m.coord_branch(f, true), f));
}

TEST_CASE("branch-1 selector fusion at omega 0 returns the input") {
  Rng rng(6);
  Stsam m(8, StsamVariant::full, rng);
  for (auto& v : m.fusion.weight.mutable_data()) v = 0.0;
  for (auto& v : m.fusion.bias.mutable_data()) v = 0.0;
  for (std::size_t c = 0; c < 8; ++c) m.fusion.weight[c * 16 + c] = 1.0;
  const Tensor f1 = random_tensor({2, 8, 4, 4}, 11), f2 = random_tensor({2, 8, 4, 4}, 12);
  const auto [o1, o2] = m.forward(f1, f2, true);
  CHECK(equal(o1, f1));
  CHECK(equal(o2, f2));
}

TEST_CASE("variants and construction") {
  Rng rng(7);
  CHECK_THROWS_AS(Stsam(12, StsamVariant::full, rng), ShapeError);
  const Stsam coord(16, StsamVariant::coord, rng);
  CHECK_FALSE(coord.omega.defined());
  CHECK_THROWS_AS(coord.attention_branch(Tensor({1, 16, 2, 2}), Tensor({1, 16, 2, 2})), Error);
  const Stsam no_time(16, StsamVariant::no_time, rng);
  CHECK_FALSE(no_time.t1.defined());
  CHECK(no_time.cross());
  CHECK_FALSE(Stsam(16, StsamVariant::self_coord, rng).cross());
  CHECK(coord_mid_channels(16) == 8);
  CHECK(coord_mid_channels(512) == 16);
  for (StsamVariant v : {StsamVariant::full, StsamVariant::self, StsamVariant::coord, StsamVariant::self_coord,
                         StsamVariant::no_time})
    CHECK(parse_stsam_variant(to_string(v)) == v);
  CHECK(parse_stsam_variant("off") == StsamVariant::self);
  CHECK_THROWS_AS(parse_stsam_variant("cross"), Error);
}

TEST_CASE("self variants with equal inputs give equal outputs") {
  Rng rng(8);
  Stsam m(8, StsamVariant::self_coord, rng);
  m.omega[0] = 0.9;
  const Tensor f = random_tensor({1, 8, 3, 3}, 13);
  const auto [o1, o2] = m.forward(f, f.clone(), true);
  CHECK(equal(o1, o2));
}

TEST_CASE("module gradient over every parameter") {
  Rng rng(9);
  Stsam m(8, StsamVariant::full, rng);
  m.omega[0] = 0.8;
  const Tensor f1 = random_tensor({1, 8, 3, 3}, 14), f2 = random_tensor({1, 8, 3, 3}, 15);
  const Tensor r = random_tensor({1, 8, 3, 3}, 16);
  const auto fn = [&](const Tensor&) {
    const auto [o1, o2] = m.forward(f1, f2, true);
    return add(sum(hadamard(o1, r)), sum(hadamard(o2, r)));
  };
  GradCheckOptions options;
  options.richardson_step = 1e-3;
  ParameterList params;
  m.parameters("s", params);
  for (const auto& p : params) {
    CAPTURE(p.name);
    CHECK(grad_check_detailed(fn, p.tensor, options).max_relative_error < 1e-6);
  }
  CHECK(grad_check_detailed(fn, f1, options).max_relative_error < 1e-6);
}
