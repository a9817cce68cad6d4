#pragma once

#include <cstdint>

#include "fsg/network.hpp"

namespace fsg {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

// Positive class is change.
ConfusionCounts confusion(const ChangeMap& pred, const ChangeMap& label);

struct MetricsReport {
  double precision = 0, recall = 0, f1 = 0, iou = 0, oa = 0;
  // Set when any ratio was 0/0 and evaluated to 0.
  bool degenerate = false;
};

// Throws on all-zero counts.
MetricsReport metrics(const ConfusionCounts& counts);

}  // namespace fsg
