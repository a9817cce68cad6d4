#include "fsg/metrics.hpp"

namespace fsg {

ConfusionCounts confusion(const ChangeMap& pred, const ChangeMap& label) {
  if (pred.height != label.height || pred.width != label.width)
    throw ShapeError("confusion: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                     " vs label " + std::to_string(label.height) + "x" + std::to_string(label.width));
  // Index 2*pred + label: 0 tn, 1 fn, 2 fp, 3 tp.
  std::uint64_t bins[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < pred.mask.size(); ++i) {
    const unsigned p = pred.mask[i], y = label.mask[i];
    if (p > 1 || y > 1) throw Error("confusion: masks must be binary");
    ++bins[2 * p + y];
  }
  return ConfusionCounts{bins[3], bins[2], bins[0], bins[1]};
}

MetricsReport metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw Error("metrics: confusion counts are all zero");
  MetricsReport r;
  auto ratio = [&r](std::uint64_t num, std::uint64_t den) {
    if (den == 0) {
      r.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  // Count forms of 2PR/(P+R) and TP/(TP+FP+FN); equal wherever both are defined.
  r.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  r.iou = ratio(c.tp, c.tp + c.fp + c.fn);
  r.oa = ratio(c.tp + c.tn, c.total());
  return r;
}

}  // namespace fsg
