#include "fsg/network.hpp"

#include <cmath>
#include <sstream>

namespace fsg {

std::array<std::size_t, 3> EncoderConfig::channels() const {
  std::array<std::size_t, 3> out{};
  for (std::size_t i = 0; i < 3; ++i)
    out[i] = static_cast<std::size_t>(std::llround(static_cast<double>(base_channels[i]) * width_multiplier));
  return out;
}

void EncoderConfig::validate() const {
  if (!(width_multiplier > 0.0) || !std::isfinite(width_multiplier))
    throw Error("encoder: width multiplier must be positive, got " + std::to_string(width_multiplier));
  for (const std::size_t c : channels())
    if (c < 16 || c % 8 != 0)
      throw Error("encoder: scaled channel count " + std::to_string(c) +
                  " must be >= 16 and a multiple of 8 (width multiplier " + std::to_string(width_multiplier) + ")");
  const std::size_t s0 = stage_strides[0];
  if ((s0 != 1 && s0 != 2 && s0 != 4) || stage_strides[1] != 2 * s0 || stage_strides[2] != 4 * s0)
    throw Error("encoder: stage strides must be [s, 2s, 4s] with s in {1, 2, 4}");
}

std::string NetConfig::describe() const {
  return std::string("dawim=") + to_string(dawim) + " stsam=" + to_string(stsam) + " lgfu=" + (lgfu ? "on" : "off");
}

BasicBlock BasicBlock::make(std::size_t in, std::size_t out, std::size_t stride, Rng& rng) {
  BasicBlock b;
  b.conv1 = Conv2dLayer::make(in, out, 3, stride, 1, false, rng);
  b.bn1 = BatchNorm2dLayer::make(out);
  b.conv2 = Conv2dLayer::make(out, out, 3, 1, 1, false, rng);
  b.bn2 = BatchNorm2dLayer::make(out);
  if (stride != 1 || in != out) {
    b.has_downsample = true;
    b.down_conv = Conv2dLayer::make(in, out, 1, stride, 0, false, rng);
    b.down_bn = BatchNorm2dLayer::make(out);
  }
  return b;
}

Tensor BasicBlock::forward(const Tensor& x, bool training) {
  const Tensor y = bn2.forward(conv2.forward(relu(bn1.forward(conv1.forward(x), training))), training);
  const Tensor shortcut = has_downsample ? down_bn.forward(down_conv.forward(x), training) : x;
  return relu(add(y, shortcut));
}

void BasicBlock::parameters(const std::string& prefix, ParameterList& out) const {
  conv1.parameters(prefix + ".conv1", out);
  bn1.parameters(prefix + ".bn1", out);
  conv2.parameters(prefix + ".conv2", out);
  bn2.parameters(prefix + ".bn2", out);
  if (has_downsample) {
    down_conv.parameters(prefix + ".down_conv", out);
    down_bn.parameters(prefix + ".down_bn", out);
  }
}

void BasicBlock::buffers(const std::string& prefix, ParameterList& out) const {
  bn1.buffers(prefix + ".bn1", out);
  bn2.buffers(prefix + ".bn2", out);
  if (has_downsample) down_bn.buffers(prefix + ".down_bn", out);
}

Encoder::Encoder(const EncoderConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const auto ch = config_.channels();
  const std::size_t s0 = config_.stage_strides[0];
  // Stem: 7x7 conv (stride 2 unless s0 == 1), then 3x3/2 max-pool iff s0 == 4.
  stem_conv_ = Conv2dLayer::make(3, ch[0], 7, s0 >= 2 ? 2 : 1, 3, false, rng);
  stem_bn_ = BatchNorm2dLayer::make(ch[0]);
  stem_pool_ = s0 == 4;
  std::size_t in = ch[0];
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t stride = s == 0 ? 1 : 2;
    stages_[s][0] = BasicBlock::make(in, ch[s], stride, rng);
    stages_[s][1] = BasicBlock::make(ch[s], ch[s], 1, rng);
    in = ch[s];
  }
}

std::array<Tensor, 3> Encoder::forward(const Tensor& image, bool training) {
  if (image.rank() != 4 || image.dim(1) != 3)
    throw ShapeError("encoder: expected [N,3,H,W] image, got " + to_string(image.shape()));
  const std::size_t m = config_.input_multiple();
  if (image.dim(2) % m != 0 || image.dim(3) % m != 0)
    throw ShapeError("encoder: image height and width must be multiples of " + std::to_string(m) + ", got " +
                     to_string(image.shape()) + "; tile or pad the input first");
  Tensor x = relu(stem_bn_.forward(stem_conv_.forward(image), training));
  if (stem_pool_) x = max_pool2d(x, 3, 2, 1);
  std::array<Tensor, 3> out;
  for (std::size_t s = 0; s < 3; ++s) {
    for (auto& block : stages_[s]) x = block.forward(x, training);
    out[s] = x;
  }
  return out;
}

void Encoder::parameters(const std::string& prefix, ParameterList& out) const {
  stem_conv_.parameters(prefix + ".stem.conv", out);
  stem_bn_.parameters(prefix + ".stem.bn", out);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t b = 0; b < 2; ++b)
      stages_[s][b].parameters(prefix + ".layer" + std::to_string(s + 1) + "." + std::to_string(b), out);
}

void Encoder::buffers(const std::string& prefix, ParameterList& out) const {
  stem_bn_.buffers(prefix + ".stem.bn", out);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t b = 0; b < 2; ++b)
      stages_[s][b].buffers(prefix + ".layer" + std::to_string(s + 1) + "." + std::to_string(b), out);
}

FsgNet::FsgNet(const NetConfig& config) : FsgNet(config, Rng(config.seed)) {}

FsgNet::FsgNet(const NetConfig& config, Rng rng) : encoder(config.encoder, rng), config_(config) {
  const auto ch = config.encoder.channels();
  for (std::size_t s = 0; s < 3; ++s) dawim.emplace_back(ch[s], config.dawim, rng);
  for (std::size_t s = 0; s < 3; ++s) stsam.emplace_back(ch[s], config.stsam, rng, config.scale_attention);
  lgfu.emplace_back(ch[1], ch[0], config.lgfu, rng);
  lgfu.emplace_back(ch[2], ch[1], config.lgfu, rng);
  head = Conv2dLayer::make(ch[0], 1, 1, 1, 0, true, rng);
}

Tensor FsgNet::forward(const Tensor& img1, const Tensor& img2, bool training, ForwardTrace* trace) {
  if (img1.shape() != img2.shape())
    throw ShapeError("forward: image shapes differ: " + to_string(img1.shape()) + " vs " + to_string(img2.shape()));
  const std::array<Tensor, 3> e1 = encoder.forward(img1, training);
  const std::array<Tensor, 3> e2 = encoder.forward(img2, training);
  std::array<Tensor, 3> diff;
  for (std::size_t s = 0; s < 3; ++s) {
    const auto [d1, d2] = dawim[s].forward(e1[s], e2[s], training);
    const auto [s1, s2] = stsam[s].forward(d1, d2, training, trace != nullptr ? &trace->stsam[s] : nullptr);
    diff[s] = diff_features(s1, s2);
  }
  Tensor* g[2] = {trace != nullptr ? &trace->gates[0] : nullptr, trace != nullptr ? &trace->gates[1] : nullptr};
  const Tensor x2 = lgfu[1].fuse(diff[2], diff[1], training, g[1]);
  const Tensor x1 = lgfu[0].fuse(x2, diff[0], training, g[0]);
  const Tensor logits = upsample_bilinear(head.forward(x1), config_.encoder.stage_strides[0]);
  if (trace != nullptr) {
    trace->features = {e1, e2};
    trace->difference = diff;
  }
  return logits;
}

ParameterList FsgNet::parameters() const {
  ParameterList out;
  encoder.parameters("encoder", out);
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string scale = "scale" + std::to_string(s + 1);
    dawim[s].parameters("dawim." + scale, out);
    stsam[s].parameters("stsam." + scale, out);
  }
  lgfu[0].parameters("lgfu.level1", out);
  lgfu[1].parameters("lgfu.level2", out);
  head.parameters("head.conv", out);
  sort_and_validate(out);
  return out;
}

ParameterList FsgNet::buffers() const {
  ParameterList out;
  encoder.buffers("encoder", out);
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string scale = "scale" + std::to_string(s + 1);
    dawim[s].buffers("dawim." + scale, out);
    stsam[s].buffers("stsam." + scale, out);
  }
  lgfu[0].buffers("lgfu.level1", out);
  lgfu[1].buffers("lgfu.level2", out);
  sort_and_validate(out);
  return out;
}

Tensor diff_features(const Tensor& s1, const Tensor& s2) {
  if (s1.shape() != s2.shape())
    throw ShapeError("diff_features: shapes differ: " + to_string(s1.shape()) + " vs " + to_string(s2.shape()));
  return abs(sub(s1, s2));
}

std::size_t ChangeMap::positives() const {
  std::size_t n = 0;
  for (const auto v : mask) n += v;
  return n;
}

std::vector<ChangeMap> predict(const Tensor& logits, double threshold) {
  if (logits.rank() != 4 || logits.dim(1) != 1)
    throw ShapeError("predict: expected [N,1,H,W] logits, got " + to_string(logits.shape()));
  const std::size_t n = logits.dim(0), h = logits.dim(2), w = logits.dim(3);
  std::vector<ChangeMap> out(n, ChangeMap(h, w));
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < h * w; ++i) {
      const double z = logits[b * h * w + i];
      const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      out[b].mask[i] = p > threshold ? 1 : 0;
    }
  return out;
}

Tensor label_tensor(const std::vector<ChangeMap>& maps) {
  if (maps.empty()) throw Error("label_tensor: no maps");
  const std::size_t h = maps[0].height, w = maps[0].width;
  Tensor out(Shape{maps.size(), 1, h, w});
  for (std::size_t b = 0; b < maps.size(); ++b) {
    if (maps[b].height != h || maps[b].width != w) throw ShapeError("label_tensor: maps differ in size");
    for (std::size_t i = 0; i < h * w; ++i) out[b * h * w + i] = maps[b].mask[i];
  }
  return out;
}

ChangeMap to_change_map(const Tensor& label) {
  const Shape& s = label.shape();
  const std::size_t r = s.size();
  if (r < 2 || r > 4 || label.numel() != s[r - 2] * s[r - 1])
    throw ShapeError("to_change_map: expected a single [H,W] plane, got " + to_string(s));
  ChangeMap m(s[r - 2], s[r - 1]);
  for (std::size_t i = 0; i < label.numel(); ++i) {
    const double v = label[i];
    if (v != 0.0 && v != 1.0) throw Error("to_change_map: label value " + std::to_string(v) + " is not 0 or 1");
    m.mask[i] = static_cast<std::uint8_t>(v);
  }
  return m;
}

std::size_t param_count(const FsgNet& net) { return param_count(net.parameters()); }

std::size_t flop_estimate(FsgNet& net, const Shape& input_shape) {
  if (input_shape.size() != 4 || input_shape[1] != 3)
    throw ShapeError("flop_estimate: expected [N,3,H,W], got " + to_string(input_shape));
  const Tensor img = Tensor::full(input_shape, 0.5);
  const std::size_t before = flop_counter();
  net.forward(img, img, false);
  return flop_counter() - before;
}

}  // namespace fsg
