#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "fsg/tensor.hpp"

namespace fsg {

struct GradCheckOptions {
  double eps = 1e-5;
  // Components probed by finite differences; 0 means all of them. When
  // fewer than numel, a seeded random subset is used.
  std::size_t max_components = 0;
  std::uint64_t seed = 0;
  // When positive, components first try the Richardson-extrapolated central
  // difference (4 D(h/2) - D(h)) / 3 with this h, whose O(h^4) truncation
  // lets h be large enough to keep float64 rounding far below 1e-6 relative.
  // Components whose stencil crosses a kink fall back to the eps path.
  double richardson_step = 0.0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  // Components whose central difference straddled a kink and were measured
  // with a one-sided second-order stencil instead.
  std::size_t one_sided = 0;
  // Components measured by the Richardson stencil.
  std::size_t extrapolated = 0;
  // Components left unmeasured because kinks sat on both sides at every
  // step size tried.
  std::size_t unresolved = 0;
};

// While a BranchProbe is alive on this thread, piecewise-linear ops (relu,
// abs, max pools) fold every branch decision into its signature. Two
// evaluations with equal signatures took the same linear piece everywhere.
class BranchProbe {
 public:
  BranchProbe();
  ~BranchProbe();
  BranchProbe(const BranchProbe&) = delete;
  BranchProbe& operator=(const BranchProbe&) = delete;

  std::uint64_t signature() const { return signature_; }
  void note(std::uint64_t decision) { signature_ = (signature_ ^ decision) * 0x100000001b3ull; }

 private:
  std::uint64_t signature_ = 0xcbf29ce484222325ull;
  BranchProbe* previous_;
};

namespace detail {
BranchProbe* active_branch_probe();
}  // namespace detail

// Compares the taped gradient of fn at `point` with central differences.
// `point` is perturbed in place (it is a handle), so fn may ignore its
// argument and read module state that shares the tensor. Relative error per
// component is |a - n| / max(|a|, |n|, 1e-8).
//
// When x +- eps lands on a different linear piece than x, the central
// difference measures a kink rather than the derivative. Such components use
// the one-sided stencil (-3 f(x) + 4 f(x+h) - f(x+2h)) / 2h on a side that
// stays on the piece of x, shrinking h by 10 up to twice if neither does.
GradCheckResult grad_check_detailed(const std::function<Tensor(const Tensor&)>& fn, Tensor point,
                                    const GradCheckOptions& options = {});

double grad_check(const std::function<Tensor(const Tensor&)>& fn, Tensor point, double eps = 1e-5);

}  // namespace fsg
