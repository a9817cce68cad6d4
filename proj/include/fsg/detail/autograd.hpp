#pragma once

// Helpers shared by every differentiable op implementation.

#include <initializer_list>
#include <memory>
#include <string_view>
#include <utility>

#include "fsg/tensor.hpp"

namespace fsg::detail {

inline bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs)
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  return false;
}

// Throws NumericError naming the op when out holds NaN or Inf.
void check_finite(const Tensor& out, std::string_view op);

// Attaches fn to the active tape when one exists and any input needs a
// gradient; marks out as requiring grad in that case.
template <typename Fn>
void record(Tensor& out, std::initializer_list<const Tensor*> inputs, Fn&& fn) {
  Tape* tape = Tape::active();
  if (tape == nullptr || !any_requires_grad(inputs)) return;
  out.set_requires_grad(true);
  tape->record(out.impl(), std::forward<Fn>(fn));
}

// Gradient buffer of impl, allocated on demand; null when impl does not
// require grad.
inline double* grad_ptr(const std::shared_ptr<TensorImpl>& impl) {
  if (!impl || !impl->requires_grad) return nullptr;
  impl->ensure_grad();
  return impl->grad.data();
}

}  // namespace fsg::detail
