#include "fsg/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fsg/rng.hpp"

namespace fsg {

namespace {

thread_local BranchProbe* g_probe = nullptr;

struct Sample {
  double value;
  std::uint64_t signature;
};

Sample evaluate(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point) {
  BranchProbe probe;
  const double v = fn(point).item();
  return Sample{v, probe.signature()};
}

}  // namespace

BranchProbe::BranchProbe() : previous_(g_probe) { g_probe = this; }
BranchProbe::~BranchProbe() { g_probe = previous_; }

namespace detail {

BranchProbe* active_branch_probe() { return g_probe; }

}  // namespace detail

GradCheckResult grad_check_detailed(const std::function<Tensor(const Tensor&)>& fn, Tensor point,
                                    const GradCheckOptions& options) {
  const bool had_grad_flag = point.requires_grad();
  point.set_requires_grad(true);
  point.zero_grad();
  std::vector<double> analytic(point.numel(), 0.0);
  std::uint64_t base_signature = 0;
  double base_value = 0.0;
  {
    Tape tape;
    TapeScope scope(tape);
    BranchProbe probe;
    Tensor loss = fn(point);
    if (loss.numel() != 1) throw ShapeError("grad_check: fn must return a scalar");
    base_signature = probe.signature();
    base_value = loss.item();
    if (loss.requires_grad()) {
      tape.backward(loss);
      if (point.has_grad()) std::copy(point.grad().begin(), point.grad().end(), analytic.begin());
    }
  }
  point.zero_grad();

  std::vector<std::size_t> indices(point.numel());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  if (options.max_components != 0 && options.max_components < indices.size()) {
    Rng rng(options.seed);
    rng.shuffle(indices);
    indices.resize(options.max_components);
    std::sort(indices.begin(), indices.end());
  }

  GradCheckResult result;
  auto values = point.mutable_data();
  auto at = [&](std::size_t i, double x) {
    values[i] = x;
    return evaluate(fn, point);
  };
  for (std::size_t i : indices) {
    const double saved = values[i];
    double numeric = 0.0;
    bool measured = false;
    if (options.richardson_step > 0.0) {
      const double h = options.richardson_step;
      const Sample p1 = at(i, saved + h), m1 = at(i, saved - h);
      const Sample p2 = at(i, saved + 0.5 * h), m2 = at(i, saved - 0.5 * h);
      if (p1.signature == base_signature && m1.signature == base_signature && p2.signature == base_signature &&
          m2.signature == base_signature) {
        const double wide = (p1.value - m1.value) / (2.0 * h);
        const double narrow = (p2.value - m2.value) / h;
        numeric = (4.0 * narrow - wide) / 3.0;
        measured = true;
        ++result.extrapolated;
      }
    }
    double h = options.eps;
    for (int attempt = 0; attempt < 3 && !measured; ++attempt, h *= 0.1) {
      const Sample plus = at(i, saved + h);
      const Sample minus = at(i, saved - h);
      if (plus.signature == base_signature && minus.signature == base_signature) {
        numeric = (plus.value - minus.value) / (2.0 * h);
        measured = true;
        break;
      }
      for (const double side : {1.0, -1.0}) {
        const Sample& near = side > 0 ? plus : minus;
        if (near.signature != base_signature) continue;
        const Sample far = at(i, saved + 2.0 * side * h);
        if (far.signature != base_signature) continue;
        numeric = side * (-3.0 * base_value + 4.0 * near.value - far.value) / (2.0 * h);
        measured = true;
        ++result.one_sided;
        break;
      }
    }
    values[i] = saved;
    if (!measured) {
      ++result.unresolved;
      continue;
    }
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double err = std::abs(a - numeric) / denom;
    if (err >= result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
      result.analytic = a;
      result.numeric = numeric;
    }
  }
  point.set_requires_grad(had_grad_flag);
  return result;
}

double grad_check(const std::function<Tensor(const Tensor&)>& fn, Tensor point, double eps) {
  GradCheckOptions options;
  options.eps = eps;
  return grad_check_detailed(fn, std::move(point), options).max_relative_error;
}

}  // namespace fsg
