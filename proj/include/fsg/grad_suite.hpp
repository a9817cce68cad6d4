#pragma once

// Finite-difference gradient checks over every differentiable building
// block: tensor primitives, the wavelet pair, DAWIM, STSAM, LGFU, the
// losses and the whole network at toy size.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace fsg {

struct GradSuiteEntry {
  std::string name;
  double max_error = 0.0;  // max relative error over all probed components
  double threshold = 0.0;
  std::size_t components = 0;
  std::string worst;  // which input held the worst component
  double analytic = 0.0, numeric = 0.0;  // at the worst component
  std::size_t extrapolated = 0;  // components measured by the Richardson stencil
  std::size_t one_sided = 0;     // components measured past a kink
  std::size_t unresolved = 0;    // components no stencil could measure

  bool passed() const { return max_error < threshold && unresolved == 0; }
};

struct GradSuiteOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double eps = 1e-5;
  // Richardson step of the primary stencil; 0 measures with plain central
  // differences at eps only.
  double richardson_step = 1e-3;
  double module_threshold = 1e-6;
  double network_threshold = 1e-5;
  // Components probed per tensor in the network check.
  std::size_t network_components = 12;
  bool include_network = true;
};

std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& options = {});

}  // namespace fsg
