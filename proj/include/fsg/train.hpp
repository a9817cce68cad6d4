#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "fsg/data.hpp"
#include "fsg/metrics.hpp"
#include "fsg/network.hpp"
#include "fsg/optim.hpp"

namespace fsg {

struct EpochRecord {
  std::size_t epoch = 0;
  double lr_head = 0, lr_backbone = 0;
  double train_loss = 0;  // mean total loss over the epoch's batches
  double val_f1 = 0, val_iou = 0;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double lr_head = 1e-3;
  double lr_backbone = 1e-4;
  double lr_final = 1e-6;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;  // shuffling and augmentation
  // Each training pair gets one of the 8 flips/right-angle rotations (the
  // same one for both images and the label); flips only for non-square
  // images.
  bool augment = true;
  // Called after every epoch; may be empty.
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0;
  std::string best_checkpoint;  // serialized FSGC bytes of the best-val-F1 epoch
};

// Applies dihedral transform `t` in [0, 8): bit 0 flips along W, bit 1
// along H, bit 2 transposes H and W (square images only).
Tensor dihedral(const Tensor& image, unsigned t);  // [C,H,W]
ChangeMap dihedral(const ChangeMap& map, unsigned t);

// Trains `net` in place on data.train, selecting the epoch with the best F1
// on data.val (the last epoch when val is empty). Throws NumericError on a
// non-finite loss, naming the epoch and batch.
TrainResult train(FsgNet& net, const Dataset& data, const TrainConfig& config, const std::string& metadata = {});

// Eval-mode forward over samples, thresholded at 0.5.
ConfusionCounts evaluate(FsgNet& net, const std::vector<SamplePair>& samples, std::size_t batch_size = 8);

// Logits for an arbitrary-size pair: reflect-pads and tiles both images into
// `patch` x `patch` tiles, predicts each, and stitches the logits.
Tensor predict_tiled(FsgNet& net, const Tensor& img1, const Tensor& img2, std::size_t patch);

// History file: "#" header line, then one tab-separated line per epoch:
// epoch lr_head lr_backbone train_loss val_f1 val_iou
void write_history(std::ostream& out, const std::vector<EpochRecord>& history);
std::vector<EpochRecord> read_history(std::istream& in);

// One ablation configuration: "dawim=<v>,stsam=<v>,lgfu=<on|off>".
struct AblationConfig {
  DawimVariant dawim = DawimVariant::full;
  StsamVariant stsam = StsamVariant::full;
  bool lgfu = true;
  std::string label;  // as written by the user, or describe() when empty

  static AblationConfig parse(const std::string& text);
  std::string describe() const;
};

struct AblationRow {
  AblationConfig config;
  MetricsReport test;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0;
  std::size_t param_count = 0;
};

// Trains each configuration from the same seed on data.train, selects by
// data.val F1, and reports data.test metrics.
std::vector<AblationRow> run_ablation(const std::vector<AblationConfig>& matrix, const Dataset& data,
                                      const EncoderConfig& encoder, const TrainConfig& train_config,
                                      std::uint64_t seed);

// Named matrices:
//   modules  baseline, each module alone, each module left out, full (8 rows)
//   dawim    the unified interaction strategies, noSE, noRes, full
//   stsam    self, coord, self+coord, noTime, full
//   core     baseline, no-DAWIM, full
std::vector<AblationConfig> ablation_preset(const std::string& name);

// Aligned text table.
std::string format_ablation_table(const std::vector<AblationRow>& rows);
// One "key=value ..." record per row.
std::string format_ablation_records(const std::vector<AblationRow>& rows);

}  // namespace fsg
