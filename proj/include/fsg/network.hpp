#pragma once

// Siamese change-detection network: a shared ResNet-style encoder yields
// three scales per image; each scale pair passes through DAWIM then STSAM,
// the absolute difference of the two streams is taken, and LGFU fuses the
// three difference maps bottom-up into a single-channel logit map.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fsg/dawim.hpp"
#include "fsg/layers.hpp"
#include "fsg/lgfu.hpp"
#include "fsg/stsam.hpp"

namespace fsg {

struct EncoderConfig {
  double width_multiplier = 0.25;
  std::array<std::size_t, 3> base_channels{64, 128, 256};
  // Output stride of each stage relative to the input. The first must be
  // 1, 2 or 4 and each next one doubles the previous.
  std::array<std::size_t, 3> stage_strides{4, 8, 16};

  std::array<std::size_t, 3> channels() const;
  // H and W must be multiples of this (keeps every DWT input even).
  std::size_t input_multiple() const { return 2 * stage_strides[2]; }
  void validate() const;
};

struct NetConfig {
  EncoderConfig encoder;
  DawimVariant dawim = DawimVariant::full;
  StsamVariant stsam = StsamVariant::full;
  bool lgfu = true;
  bool scale_attention = false;
  std::uint64_t seed = 0;

  std::string describe() const;  // "dawim=full stsam=full lgfu=on"
};

struct BasicBlock {
  Conv2dLayer conv1, conv2;
  BatchNorm2dLayer bn1, bn2;
  bool has_downsample = false;
  Conv2dLayer down_conv;
  BatchNorm2dLayer down_bn;

  static BasicBlock make(std::size_t in, std::size_t out, std::size_t stride, Rng& rng);
  Tensor forward(const Tensor& x, bool training);
  void parameters(const std::string& prefix, ParameterList& out) const;
  void buffers(const std::string& prefix, ParameterList& out) const;
};

class Encoder {
 public:
  Encoder(const EncoderConfig& config, Rng& rng);
  // Image [N,3,H,W] -> features at the three stage strides.
  std::array<Tensor, 3> forward(const Tensor& image, bool training);
  void parameters(const std::string& prefix, ParameterList& out) const;
  void buffers(const std::string& prefix, ParameterList& out) const;

 private:
  EncoderConfig config_;
  Conv2dLayer stem_conv_;
  BatchNorm2dLayer stem_bn_;
  bool stem_pool_;
  std::array<std::array<BasicBlock, 2>, 3> stages_;
};

// Intermediate values of one forward pass, for tests and diagnostics.
struct ForwardTrace {
  std::array<std::array<Tensor, 3>, 2> features;  // encoder output per time and scale
  std::array<Tensor, 3> difference;               // |S1 - S2| per scale
  std::array<StsamTrace, 3> stsam;
  std::array<Tensor, 2> gates;  // LGFU gates: [0] fuse into scale 1, [1] into scale 2
};

class FsgNet {
 public:
  explicit FsgNet(const NetConfig& config);

  const NetConfig& config() const { return config_; }

  // Logits [N,1,H,W] at input resolution.
  Tensor forward(const Tensor& img1, const Tensor& img2, bool training, ForwardTrace* trace = nullptr);

  // Learnable tensors, sorted by name.
  ParameterList parameters() const;
  // BatchNorm running statistics, sorted by name.
  ParameterList buffers() const;

  // Binary checkpoint ("FSGC"). Loading rebuilds the net from the stored config.
  void save(std::ostream& out, const std::string& metadata = {}) const;
  void save(const std::string& path, const std::string& metadata = {}) const;
  static FsgNet load(std::istream& in, std::string* metadata = nullptr);
  static FsgNet load(const std::string& path, std::string* metadata = nullptr);
  std::string serialize(const std::string& metadata = {}) const;
  static FsgNet deserialize(const std::string& bytes, std::string* metadata = nullptr);

  Encoder encoder;
  std::vector<Dawim> dawim;  // one per scale
  std::vector<Stsam> stsam;  // one per scale
  std::vector<Lgfu> lgfu;    // [0]: scale 2 -> scale 1, [1]: scale 3 -> scale 2
  Conv2dLayer head;

 private:
  FsgNet(const NetConfig& config, Rng rng);
  NetConfig config_;
};

// |s1 - s2|.
Tensor diff_features(const Tensor& s1, const Tensor& s2);

// Mean binary cross-entropy of logits against {0,1} labels, in log-space.
Tensor bce_loss(const Tensor& logits, const Tensor& label);
// 1 - (2 sum(p y) + 1) / (sum(p) + sum(y) + 1) with p = sigmoid(logits).
Tensor dice_loss(const Tensor& logits, const Tensor& label);
Tensor total_loss(const Tensor& logits, const Tensor& label);

inline constexpr double kDiceSmoothing = 1.0;

// Single-channel binary mask, row-major.
struct ChangeMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> mask;

  ChangeMap() = default;
  ChangeMap(std::size_t h, std::size_t w) : height(h), width(w), mask(h * w, 0) {}
  std::uint8_t at(std::size_t y, std::size_t x) const { return mask[y * width + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return mask[y * width + x]; }
  std::size_t positives() const;
  bool operator==(const ChangeMap&) const = default;
};

// sigmoid(z) > threshold per pixel; one map per batch item.
std::vector<ChangeMap> predict(const Tensor& logits, double threshold = 0.5);
// Label tensor [N,1,H,W] from maps of equal size.
Tensor label_tensor(const std::vector<ChangeMap>& maps);
ChangeMap to_change_map(const Tensor& label);  // [H,W], [1,H,W] or [1,1,H,W] of {0,1}

std::size_t param_count(const FsgNet& net);
// Multiply-adds (2 FLOPs each) of convolutions, matmuls and linears in one
// eval-mode forward on a pair of images of `input_shape` = [N,3,H,W].
// BatchNorm, activations, pooling and resampling are not counted.
std::size_t flop_estimate(FsgNet& net, const Shape& input_shape);

}  // namespace fsg
