#include "fsg/stsam.hpp"

#include <algorithm>
#include <cmath>

namespace fsg {

const char* to_string(StsamVariant v) {
  switch (v) {
    case StsamVariant::full: return "full";
    case StsamVariant::self: return "self";
    case StsamVariant::coord: return "coord";
    case StsamVariant::self_coord: return "self+coord";
    case StsamVariant::no_time: return "noTime";
  }
  return "?";
}

StsamVariant parse_stsam_variant(const std::string& s) {
  if (s == "full") return StsamVariant::full;
  if (s == "self" || s == "off") return StsamVariant::self;
  if (s == "coord") return StsamVariant::coord;
  if (s == "self+coord") return StsamVariant::self_coord;
  if (s == "noTime") return StsamVariant::no_time;
  throw Error("unknown stsam variant '" + s + "' (expected full, self, coord, self+coord, noTime, off)");
}

std::size_t coord_mid_channels(std::size_t channels) { return std::max<std::size_t>(8, channels / 32); }

Stsam::Stsam(std::size_t channels, StsamVariant variant, Rng& rng, bool scale_attention_flag)
    : scale_attention(scale_attention_flag), channels_(channels), variant_(variant) {
  if (channels == 0 || channels % 8 != 0)
    throw ShapeError("stsam: channel count " + std::to_string(channels) + " must be a positive multiple of 8");
  if (uses_attention()) {
    if (uses_time()) {
      t1 = Tensor(Shape{channels, 1, 1});
      t2 = Tensor(Shape{channels, 1, 1});
      for (auto& v : t1.mutable_data()) v = rng.normal(0.0, 0.02);
      for (auto& v : t2.mutable_data()) v = rng.normal(0.0, 0.02);
      t1.set_requires_grad(true);
      t2.set_requires_grad(true);
    }
    q_proj = Conv2dLayer::make(channels, channels / 8, 1, 1, 0, true, rng);
    k_proj = Conv2dLayer::make(channels, channels / 8, 1, 1, 0, false, rng);  // softmax cancels a key bias
    v_proj = Conv2dLayer::make(channels, channels, 1, 1, 0, true, rng);
    omega = Tensor::zeros(Shape{1}).set_requires_grad(true);
  }
  if (uses_coord()) {
    const std::size_t mid = coord_mid_channels(channels);
    coord_fuse = Conv2dLayer::make(channels, mid, 1, 1, 0, false, rng);  // BN follows
    coord_bn = BatchNorm2dLayer::make(mid);
    coord_h = Conv2dLayer::make(mid, channels, 1, 1, 0, true, rng);
    coord_w = Conv2dLayer::make(mid, channels, 1, 1, 0, true, rng);
  }
  if (uses_attention() && uses_coord()) fusion = Conv2dLayer::make(2 * channels, channels, 1, 1, 0, true, rng);
}

Tensor Stsam::attend(const Tensor& query_src, const Tensor& kv_src, const Tensor& residual, Tensor* attention) const {
  const std::size_t n = kv_src.dim(0), c = channels_, h = kv_src.dim(2), w = kv_src.dim(3), hw = h * w;
  const Tensor q = reshape(q_proj.forward(query_src), Shape{n, c / 8, hw});
  const Tensor k = reshape(k_proj.forward(kv_src), Shape{n, c / 8, hw});
  const Tensor v = reshape(v_proj.forward(kv_src), Shape{n, c, hw});
  Tensor scores = matmul_batched(transpose(q, 1, 2), k);  // [N, HW(query), HW(key)]
  if (scale_attention) scores = scalar_mul(scores, 1.0 / std::sqrt(static_cast<double>(c / 8)));
  const Tensor a = softmax(scores);
  if (attention != nullptr) *attention = a;
  const Tensor out = reshape(matmul_batched(v, transpose(a, 1, 2)), Shape{n, c, h, w});
  return add(hadamard(omega, out), residual);
}

std::pair<Tensor, Tensor> Stsam::attention_branch(const Tensor& f1, const Tensor& f2, StsamTrace* trace) const {
  if (!uses_attention()) throw Error("stsam: variant " + std::string(to_string(variant_)) + " has no attention branch");
  const Tensor x1 = uses_time() ? add(f1, t1) : f1;
  const Tensor x2 = uses_time() ? add(f2, t2) : f2;
  Tensor* a1 = trace != nullptr ? &trace->attention[0] : nullptr;
  Tensor* a2 = trace != nullptr ? &trace->attention[1] : nullptr;
  if (cross()) return {attend(x2, x1, f1, a1), attend(x1, x2, f2, a2)};
  return {attend(x1, x1, f1, a1), attend(x2, x2, f2, a2)};
}

Tensor Stsam::coord_branch(const Tensor& f, bool training, Tensor* gate_h, Tensor* gate_w) {
  if (!uses_coord()) throw Error("stsam: variant " + std::string(to_string(variant_)) + " has no coordinate branch");
  const std::size_t h = f.dim(2), w = f.dim(3);
  const Tensor xh = avg_pool_h(f);                   // [N, C, H, 1]
  const Tensor xw = transpose(avg_pool_w(f), 2, 3);  // [N, C, W, 1]
  const Tensor y = relu(coord_bn.forward(coord_fuse.forward(concat({xh, xw}, 2)), training));
  const Tensor yh = slice(y, 2, 0, h);
  const Tensor yw = transpose(slice(y, 2, h, w), 2, 3);  // [N, mid, 1, W]
  const Tensor ah = sigmoid(apply_gate_hook(coord_h.forward(yh), coord_hook));
  const Tensor aw = sigmoid(apply_gate_hook(coord_w.forward(yw), coord_hook));
  if (gate_h != nullptr) *gate_h = ah;
  if (gate_w != nullptr) *gate_w = aw;
  return hadamard(hadamard(f, ah), aw);
}

std::pair<Tensor, Tensor> Stsam::forward(const Tensor& f1, const Tensor& f2, bool training, StsamTrace* trace) {
  if (f1.rank() != 4 || f1.shape() != f2.shape() || f1.dim(1) != channels_)
    throw ShapeError("stsam: expected two equal [N," + std::to_string(channels_) + ",H,W] maps, got " +
                     to_string(f1.shape()) + " and " + to_string(f2.shape()));
  std::pair<Tensor, Tensor> b1;
  if (uses_attention()) b1 = attention_branch(f1, f2, trace);
  if (!uses_coord()) return b1;
  Tensor* gh[2] = {trace ? &trace->gate_h[0] : nullptr, trace ? &trace->gate_h[1] : nullptr};
  Tensor* gw[2] = {trace ? &trace->gate_w[0] : nullptr, trace ? &trace->gate_w[1] : nullptr};
  const Tensor c1 = coord_branch(f1, training, gh[0], gw[0]);
  const Tensor c2 = coord_branch(f2, training, gh[1], gw[1]);
  if (!uses_attention()) return {c1, c2};
  return {fusion.forward(concat({b1.first, c1}, 1)), fusion.forward(concat({b1.second, c2}, 1))};
}

void Stsam::parameters(const std::string& prefix, ParameterList& out) const {
  add_param(out, prefix + ".t1", t1);
  add_param(out, prefix + ".t2", t2);
  add_param(out, prefix + ".omega", omega);
  if (uses_attention()) {
    q_proj.parameters(prefix + ".q_proj", out);
    k_proj.parameters(prefix + ".k_proj", out);
    v_proj.parameters(prefix + ".v_proj", out);
  }
  if (uses_coord()) {
    coord_fuse.parameters(prefix + ".coord_fuse", out);
    coord_bn.parameters(prefix + ".coord_bn", out);
    coord_h.parameters(prefix + ".coord_h", out);
    coord_w.parameters(prefix + ".coord_w", out);
  }
  fusion.parameters(prefix + ".fusion", out);
}

void Stsam::buffers(const std::string& prefix, ParameterList& out) const {
  if (uses_coord()) coord_bn.buffers(prefix + ".coord_bn", out);
}

}  // namespace fsg
