#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fsg/tensor.hpp"

namespace fsg {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Moments for one parameter tensor.
struct AdamMoments {
  std::vector<double> m, v;
};

// One decoupled-decay AdamW update of `param` in place; `step` is 1-based.
void adamw_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments,
                  std::uint64_t step, double lr, const AdamWConfig& config);

// Parameters whose name starts with "encoder." form the backbone group; the
// rest form the head group.
bool is_backbone_param(const std::string& name);

class AdamW {
 public:
  AdamW(ParameterList params, AdamWConfig config = {});

  // Throws if a parameter has no gradient.
  void step(double lr_head, double lr_backbone);
  std::uint64_t steps() const { return step_; }
  const ParameterList& params() const { return params_; }

 private:
  ParameterList params_;
  AdamWConfig config_;
  std::vector<AdamMoments> moments_;
  std::uint64_t step_ = 0;
};

struct Schedule {
  double lr_head_init = 1e-3;
  double lr_backbone_init = 1e-4;
  double lr_final = 1e-6;
  std::size_t total_epochs = 30;
};

enum class LrGroup { head, backbone };

// final + (init - final) (1 + cos(pi epoch / total)) / 2, for epoch in [0, total].
double cosine_lr(std::size_t epoch, const Schedule& schedule, LrGroup group);

}  // namespace fsg
