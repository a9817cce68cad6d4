#include <cmath>

#include "doctest.h"
#include "fsg/optim.hpp"
#include "support.hpp"

using namespace fsg;

TEST_CASE("single AdamW step from a unit gradient") {
  std::vector<double> p{1.0};
  const std::vector<double> g{1.0};
  AdamMoments mom;
  AdamWConfig c;
  c.weight_decay = 0.0;
  adamw_update(p, g, mom, 1, 0.1, c);
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(mom.m.size() == 1);
  CHECK(mom.v.size() == 1);
}

TEST_CASE("zero gradient without decay is a no-op") {
  std::vector<double> p{0.3, -2.0};
  const std::vector<double> g{0.0, 0.0};
  AdamMoments mom;
  AdamWConfig c;
  c.weight_decay = 0.0;
  adamw_update(p, g, mom, 1, 0.1, c);
  CHECK(p[0] == 0.3);
  CHECK(p[1] == -2.0);
}

TEST_CASE("zero gradient with decay shrinks multiplicatively") {
  std::vector<double> p{0.3, -2.0};
  const std::vector<double> g{0.0, 0.0};
  AdamMoments mom;
  adamw_update(p, g, mom, 1, 0.1, AdamWConfig{});
  CHECK(p[0] == doctest::Approx(0.3 * 0.999).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(-2.0 * 0.999).epsilon(1e-15));
}

TEST_CASE("parameter groups and step bookkeeping") {
  CHECK(is_backbone_param("encoder.stem.conv.weight"));
  CHECK_FALSE(is_backbone_param("dawim.scale1.ll.temporal.weight"));
  Tensor enc = Tensor({2}, 1.0).set_requires_grad(true);
  Tensor head = Tensor({2}, 1.0).set_requires_grad(true);
  AdamW opt({{"encoder.w", enc}, {"head.w", head}}, AdamWConfig{0.9, 0.999, 1e-8, 0.0});
  CHECK_THROWS_AS(opt.step(0.1, 0.01), Error);
  for (auto& g : enc.mutable_grad()) g = 1.0;
  for (auto& g : head.mutable_grad()) g = 1.0;
  opt.step(0.1, 0.01);
  CHECK(opt.steps() == 1);
  CHECK(enc[0] == doctest::Approx(0.99).epsilon(1e-7));
  CHECK(head[0] == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("Adam minimizes a quadratic") {
  Tensor x = Tensor({3}, {2.0, -1.0, 0.5}).set_requires_grad(true);
  AdamW opt({{"head.x", x}}, AdamWConfig{0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 500; ++i) {
    x.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    backward(sum(hadamard(x, x)));
    opt.step(0.05, 0.05);
  }
  for (double v : x.data()) CHECK(std::abs(v) < 1e-2);
}

TEST_CASE("cosine schedule") {
  Schedule s;
  CHECK(cosine_lr(0, s, LrGroup::head) == 1e-3);
  CHECK(cosine_lr(0, s, LrGroup::backbone) == 1e-4);
  CHECK(cosine_lr(30, s, LrGroup::head) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(cosine_lr(15, s, LrGroup::head) == doctest::Approx((1e-3 + 1e-6) / 2).epsilon(1e-12));
  double last = 1.0;
  for (std::size_t e = 0; e <= 30; ++e) {
    const double lr = cosine_lr(e, s, LrGroup::head);
    CHECK(lr <= last);
    last = lr;
  }
  CHECK_THROWS_AS(cosine_lr(31, s, LrGroup::head), Error);
}
