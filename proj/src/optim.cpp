#include "fsg/optim.hpp"

#include <cmath>
#include <numbers>

namespace fsg {

void adamw_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments,
                  std::uint64_t step, double lr, const AdamWConfig& c) {
  if (grad.size() != param.size()) throw ShapeError("adamw: gradient size does not match parameter");
  if (step == 0) throw Error("adamw: step must be 1-based");
  if (moments.m.size() != param.size()) {
    moments.m.assign(param.size(), 0.0);
    moments.v.assign(param.size(), 0.0);
  }
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * c.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    double& m = moments.m[i];
    double& v = moments.v[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g * g;
    const double m_hat = m / bc1, v_hat = v / bc2;
    param[i] = param[i] * decay - lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

bool is_backbone_param(const std::string& name) { return name.rfind("encoder.", 0) == 0; }

AdamW::AdamW(ParameterList params, AdamWConfig config)
    : params_(std::move(params)), config_(config), moments_(params_.size()) {}

void AdamW::step(double lr_head, double lr_backbone) {
  for (const auto& p : params_)
    if (!p.tensor.has_grad()) throw Error("adamw: parameter '" + p.name + "' has no gradient");
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].tensor;
    const double lr = is_backbone_param(params_[i].name) ? lr_backbone : lr_head;
    adamw_update(t.mutable_data(), t.grad(), moments_[i], step_, lr, config_);
  }
}

double cosine_lr(std::size_t epoch, const Schedule& s, LrGroup group) {
  if (s.total_epochs == 0) throw Error("cosine_lr: total epochs must be positive");
  if (epoch > s.total_epochs)
    throw Error("cosine_lr: epoch " + std::to_string(epoch) + " beyond total " + std::to_string(s.total_epochs));
  const double init = group == LrGroup::head ? s.lr_head_init : s.lr_backbone_init;
  if (epoch == 0) return init;
  if (epoch == s.total_epochs) return s.lr_final;
  const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(s.total_epochs);
  return s.lr_final + 0.5 * (init - s.lr_final) * (1.0 + std::cos(phase));
}

}  // namespace fsg
