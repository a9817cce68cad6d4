#include "fsg/grad_suite.hpp"

#include <algorithm>
#include <functional>

#include "fsg/dawim.hpp"
#include "fsg/grad_check.hpp"
#include "fsg/lgfu.hpp"
#include "fsg/network.hpp"
#include "fsg/ops.hpp"
#include "fsg/rng.hpp"
#include "fsg/stsam.hpp"
#include "fsg/wavelet.hpp"

namespace fsg {

namespace {

using Fn = std::function<Tensor(const Tensor&)>;

Tensor randn(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor t(shape);
  for (auto& v : t.mutable_data()) v = scale * rng.normal();
  return t;
}

// Values with |x| in [0.1, 1.1], away from the kinks of relu/abs.
Tensor away_from_zero(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (auto& v : t.mutable_data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.1);
  return t;
}

// Scalar probe <out, R> with a fixed random R, so every output component
// contributes with an O(1) weight.
Tensor probe(const Tensor& out, const Tensor& weights) { return sum(hadamard(out, weights)); }

// <out - base, R>: same gradient as probe(), but the summed terms are O(eps)
// rather than O(1), which keeps rounding in the final sum below the signal.
Tensor centered(const Tensor& out, const Tensor& base, const Tensor& weights) {
  return sum(hadamard(sub(out, base), weights));
}

class Suite {
 public:
  explicit Suite(const GradSuiteOptions& options) : options_(options) {}

  void check(const std::string& name, const std::string& input, const Fn& fn, const Tensor& point,
             double threshold, std::size_t components = 0, std::uint64_t seed = 0) {
    GradCheckOptions o;
    o.eps = options_.eps;
    o.max_components = components;
    o.seed = seed;
    o.richardson_step = options_.richardson_step;
    const GradCheckResult r = grad_check_detailed(fn, point, o);
    GradSuiteEntry& e = entry(name, threshold);
    e.components += components == 0 ? point.numel() : std::min(components, point.numel());
    e.extrapolated += r.extrapolated;
    e.one_sided += r.one_sided;
    e.unresolved += r.unresolved;
    if (r.max_relative_error >= e.max_error) {
      e.max_error = r.max_relative_error;
      e.worst = input;
      e.analytic = r.analytic;
      e.numeric = r.numeric;
    }
  }

  std::vector<GradSuiteEntry> take() { return std::move(entries_); }

 private:
  GradSuiteEntry& entry(const std::string& name, double threshold) {
    for (auto& e : entries_)
      if (e.name == name) return e;
    entries_.push_back(GradSuiteEntry{name, 0.0, threshold, 0, {}, 0.0, 0.0, 0, 0, 0});
    return entries_.back();
  }

  GradSuiteOptions options_;
  std::vector<GradSuiteEntry> entries_;
};

void primitives(Suite& s, Rng& rng, double tol) {
  // Convolutions.
  {
    Tensor x = randn({2, 3, 5, 5}, rng), k = randn({4, 3, 3, 3}, rng), b = randn({4}, rng);
    Tensor r = randn({2, 4, 3, 3}, rng);
    auto f = [&](const Tensor&) { return probe(conv2d(x, k, b, 2, 1), r); };
    s.check("conv2d", "input", f, x, tol);
    s.check("conv2d", "kernel", f, k, tol);
    s.check("conv2d", "bias", f, b, tol);
  }
  {
    Tensor x = randn({1, 2, 2, 4, 4}, rng), k = randn({3, 2, 2, 3, 3}, rng), b = randn({3}, rng);
    Tensor r = randn({1, 3, 1, 4, 4}, rng);
    auto f = [&](const Tensor&) { return probe(conv3d(x, k, b, 1), r); };
    s.check("conv3d", "input", f, x, tol);
    s.check("conv3d", "kernel", f, k, tol);
    s.check("conv3d", "bias", f, b, tol);
  }
  {
    Tensor x = randn({2, 3, 3, 3}, rng, 2.0), g = randn({3}, rng), b = randn({3}, rng);
    Tensor r = randn({2, 3, 3, 3}, rng);
    BatchNormStats stats = BatchNormStats::init(3);
    auto train = [&](const Tensor&) { return probe(batchnorm2d(x, g, b, stats, true), r); };
    s.check("batchnorm2d", "input", train, x, tol);
    s.check("batchnorm2d", "gamma", train, g, tol);
    s.check("batchnorm2d", "beta", train, b, tol);
    auto eval = [&](const Tensor&) { return probe(batchnorm2d(x, g, b, stats, false), r); };
    s.check("batchnorm2d", "input (eval)", eval, x, tol);
  }
  // Pointwise.
  {
    Tensor x = away_from_zero({3, 4}, rng), r = randn({3, 4}, rng);
    s.check("relu", "input", [&](const Tensor&) { return probe(relu(x), r); }, x, tol);
    s.check("abs", "input", [&](const Tensor&) { return probe(abs(x), r); }, x, tol);
    Tensor y = randn({3, 4}, rng, 2.0);
    s.check("sigmoid", "input", [&](const Tensor&) { return probe(sigmoid(y), r); }, y, tol);
    s.check("scalar_mul", "input", [&](const Tensor&) { return probe(scalar_mul(y, -1.7), r); }, y, tol);
  }
  {
    Tensor a = randn({2, 3, 4, 4}, rng), b = randn({3, 1, 1}, rng), r = randn({2, 3, 4, 4}, rng);
    using Op = Tensor (*)(const Tensor&, const Tensor&);
    const std::pair<const char*, Op> ops[3] = {{"add", &add}, {"sub", &sub}, {"hadamard", &hadamard}};
    for (const auto& [name, op] : ops) {
      auto f = [&, op = op](const Tensor&) { return probe(op(a, b), r); };
      s.check(name, "lhs", f, a, tol);
      s.check(name, "rhs (broadcast)", f, b, tol);
    }
  }
  {
    Tensor x = randn({3, 5}, rng, 2.0), r = randn({3, 5}, rng);
    s.check("softmax", "input", [&](const Tensor&) { return probe(softmax(x), r); }, x, tol);
  }
  // Pooling.
  {
    Tensor x = randn({2, 3, 4, 5}, rng);
    Tensor r11 = randn({2, 3, 1, 1}, rng), rh = randn({2, 3, 4, 1}, rng), rw = randn({2, 3, 1, 5}, rng);
    s.check("global_avg_pool", "input", [&](const Tensor&) { return probe(global_avg_pool(x), r11); }, x, tol);
    s.check("global_max_pool", "input", [&](const Tensor&) { return probe(global_max_pool(x), r11); }, x, tol);
    s.check("avg_pool_h", "input", [&](const Tensor&) { return probe(avg_pool_h(x), rh); }, x, tol);
    s.check("avg_pool_w", "input", [&](const Tensor&) { return probe(avg_pool_w(x), rw); }, x, tol);
    Tensor y = randn({1, 2, 6, 6}, rng), rp = randn({1, 2, 3, 3}, rng);
    s.check("max_pool2d", "input", [&](const Tensor&) { return probe(max_pool2d(y, 3, 2, 1), rp); }, y, tol);
  }
  // Structural.
  {
    Tensor a = randn({2, 3, 2, 2}, rng), b = randn({2, 1, 2, 2}, rng), r = randn({2, 4, 2, 2}, rng);
    auto f = [&](const Tensor&) { return probe(concat({a, b}, 1), r); };
    s.check("concat", "first", f, a, tol);
    s.check("concat", "second", f, b, tol);
    Tensor rs = randn({2, 2, 2, 2}, rng);
    s.check("slice", "input", [&](const Tensor&) { return probe(slice(a, 1, 1, 2), rs); }, a, tol);
    Tensor rr = randn({4, 6}, rng);
    s.check("reshape", "input", [&](const Tensor&) { return probe(reshape(a, {4, 6}), rr); }, a, tol);
    Tensor rt = randn({2, 2, 2, 3}, rng);
    s.check("transpose", "input", [&](const Tensor&) { return probe(transpose(a, 1, 3), rt); }, a, tol);
  }
  {
    Tensor a = randn({2, 3, 4}, rng), b = randn({2, 4, 5}, rng), r = randn({2, 3, 5}, rng);
    auto f = [&](const Tensor&) { return probe(matmul_batched(a, b), r); };
    s.check("matmul_batched", "lhs", f, a, tol);
    s.check("matmul_batched", "rhs", f, b, tol);
    Tensor x = randn({3, 4}, rng), w = randn({5, 4}, rng), bias = randn({5}, rng), rl = randn({3, 5}, rng);
    auto g = [&](const Tensor&) { return probe(linear(x, w, bias), rl); };
    s.check("linear", "input", g, x, tol);
    s.check("linear", "weight", g, w, tol);
    s.check("linear", "bias", g, bias, tol);
  }
  {
    Tensor x = randn({1, 2, 3, 3}, rng), r2 = randn({1, 2, 6, 6}, rng), r4 = randn({1, 2, 12, 12}, rng);
    s.check("upsample_bilinear", "x2", [&](const Tensor&) { return probe(upsample_bilinear(x, 2), r2); }, x, tol);
    s.check("upsample_bilinear", "x4", [&](const Tensor&) { return probe(upsample_bilinear(x, 4), r4); }, x, tol);
  }
  {
    Tensor x = randn({2, 3}, rng);
    s.check("sum", "input", [&](const Tensor&) { return scalar_mul(sum(x), 1.3); }, x, tol);
    s.check("mean", "input", [&](const Tensor&) { return scalar_mul(mean(x), 1.3); }, x, tol);
  }
  // Wavelet.
  {
    Tensor x = randn({1, 2, 4, 6}, rng);
    Tensor r[4] = {randn({1, 2, 2, 3}, rng), randn({1, 2, 2, 3}, rng), randn({1, 2, 2, 3}, rng),
                   randn({1, 2, 2, 3}, rng)};
    s.check("dwt2_haar", "input", [&](const Tensor&) {
      const WaveletSubbands b = dwt2_haar(x);
      return add(add(probe(b.ll, r[0]), probe(b.lh, r[1])), add(probe(b.hl, r[2]), probe(b.hh, r[3])));
    }, x, tol);
    WaveletSubbands bands{randn({1, 2, 2, 3}, rng), randn({1, 2, 2, 3}, rng), randn({1, 2, 2, 3}, rng),
                          randn({1, 2, 2, 3}, rng)};
    Tensor ro = randn({1, 2, 4, 6}, rng);
    auto f = [&](const Tensor&) { return probe(idwt2_haar(bands), ro); };
    s.check("idwt2_haar", "ll", f, bands.ll, tol);
    s.check("idwt2_haar", "lh", f, bands.lh, tol);
    s.check("idwt2_haar", "hl", f, bands.hl, tol);
    s.check("idwt2_haar", "hh", f, bands.hh, tol);
  }
  // Losses.
  {
    Tensor z = randn({2, 1, 4, 4}, rng, 2.0), y(Shape{2, 1, 4, 4});
    for (auto& v : y.mutable_data()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    s.check("bce_loss", "logits", [&](const Tensor&) { return bce_loss(z, y); }, z, tol);
    s.check("dice_loss", "logits", [&](const Tensor&) { return dice_loss(z, y); }, z, tol);
  }
}

void check_params(Suite& s, const std::string& name, const Fn& f, const ParameterList& params, double tol,
                  std::size_t components, std::uint64_t seed) {
  for (const auto& p : params) s.check(name, p.name, f, p.tensor, tol, components, seed);
}

void dawim_check(Suite& s, Rng& rng, double tol, std::uint64_t seed) {
  Dawim d(2, DawimVariant::full, rng);
  Tensor f1 = randn({1, 2, 4, 4}, rng), f2 = randn({1, 2, 4, 4}, rng);
  Tensor r1 = randn({1, 2, 4, 4}, rng), r2 = randn({1, 2, 4, 4}, rng);
  const auto [b1, b2] = d.forward(f1, f2, true);
  auto f = [&, b1 = b1.clone(), b2 = b2.clone()](const Tensor&) {
    const auto [o1, o2] = d.forward(f1, f2, true);
    return add(centered(o1, b1, r1), centered(o2, b2, r2));
  };
  s.check("dawim", "f1", f, f1, tol);
  s.check("dawim", "f2", f, f2, tol);
  ParameterList params;
  d.parameters("dawim", params);
  check_params(s, "dawim", f, params, tol, 0, seed);
}

void stsam_check(Suite& s, Rng& rng, double tol, std::uint64_t seed) {
  Stsam m(8, StsamVariant::full, rng);
  m.omega[0] = rng.uniform(0.5, 1.5);  // at 0 the attention weights get no gradient
  Tensor f1 = randn({1, 8, 3, 3}, rng), f2 = randn({1, 8, 3, 3}, rng);
  Tensor r1 = randn({1, 8, 3, 3}, rng), r2 = randn({1, 8, 3, 3}, rng);
  const auto [b1, b2] = m.forward(f1, f2, true);
  auto f = [&, b1 = b1.clone(), b2 = b2.clone()](const Tensor&) {
    const auto [o1, o2] = m.forward(f1, f2, true);
    return add(centered(o1, b1, r1), centered(o2, b2, r2));
  };
  s.check("stsam", "f1", f, f1, tol);
  s.check("stsam", "f2", f, f2, tol);
  ParameterList params;
  m.parameters("stsam", params);
  check_params(s, "stsam", f, params, tol, 0, seed);
}

void lgfu_check(Suite& s, Rng& rng, double tol, std::uint64_t seed) {
  Lgfu l(8, 4, true, rng);
  Tensor deep = randn({1, 8, 2, 2}, rng), shallow = randn({1, 4, 4, 4}, rng), r = randn({1, 4, 4, 4}, rng);
  const Tensor base = l.fuse(deep, shallow, true).clone();
  auto f = [&](const Tensor&) { return centered(l.fuse(deep, shallow, true), base, r); };
  s.check("lgfu", "deep", f, deep, tol);
  s.check("lgfu", "shallow", f, shallow, tol);
  ParameterList params;
  l.parameters("lgfu", params);
  check_params(s, "lgfu", f, params, tol, 0, seed);
}

void network_check(Suite& s, Rng& rng, double tol, std::size_t components, std::uint64_t seed) {
  NetConfig config;
  config.encoder.width_multiplier = 0.25;
  config.encoder.stage_strides = {2, 4, 8};
  config.seed = seed;
  FsgNet net(config);
  for (auto& st : net.stsam) st.omega[0] = rng.uniform(0.5, 1.5);
  Tensor img1(Shape{1, 3, 32, 32}), img2(Shape{1, 3, 32, 32}), label(Shape{1, 1, 32, 32});
  for (auto& v : img1.mutable_data()) v = rng.uniform();
  for (auto& v : img2.mutable_data()) v = rng.uniform();
  for (std::size_t y = 8; y < 20; ++y)
    for (std::size_t x = 10; x < 24; ++x) label[y * 32 + x] = 1.0;
  Tensor r(Shape{1, 1, 32, 32});
  for (auto& v : r.mutable_data()) v = rng.normal();
  const Tensor base = net.forward(img1, img2, true).clone();
  // The loss keeps bce/dice in the chain; the centered probe weighs every
  // logit with O(1) weight.
  auto f = [&](const Tensor&) {
    const Tensor logits = net.forward(img1, img2, true);
    return add(total_loss(logits, label), centered(logits, base, r));
  };
  s.check("network", "img1", f, img1, tol, components, seed);
  s.check("network", "img2", f, img2, tol, components, seed + 1);
  // One tensor per module family keeps the runtime bounded.
  const char* picks[] = {"encoder.stem.conv.weight", "encoder.layer3.1.conv2.weight", "dawim.scale1.ll.temporal.weight",
                         "dawim.scale2.hh.se.fc1.weight", "stsam.scale1.t1", "stsam.scale2.omega",
                         "stsam.scale3.q_proj.weight", "stsam.scale1.coord_h.weight", "lgfu.level1.gate_conv.weight",
                         "lgfu.level2.align.weight", "head.conv.weight", "head.conv.bias"};
  const ParameterList params = net.parameters();
  for (const char* name : picks)
    for (const auto& p : params)
      if (p.name == name) s.check("network", p.name, f, p.tensor, tol, components, seed);
}

}  // namespace

std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& options) {
  Suite suite(options);
  for (const std::uint64_t seed : options.seeds) {
    Rng rng(seed);
    primitives(suite, rng, options.module_threshold);
    dawim_check(suite, rng, options.module_threshold, seed);
    stsam_check(suite, rng, options.module_threshold, seed);
    lgfu_check(suite, rng, options.module_threshold, seed);
    if (options.include_network)
      network_check(suite, rng, options.network_threshold, options.network_components, seed);
  }
  return suite.take();
}

}  // namespace fsg
