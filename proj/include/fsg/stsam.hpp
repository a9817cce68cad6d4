#pragma once

// Temporal-spatial attention over a bi-temporal feature pair at one scale.
// Branch 1 is cross-attention: each time's keys/values are queried by the
// counterpart's queries after adding a learned per-time channel offset.
// Branch 2 is coordinate attention: direction-wise pooled gates along H and
// W. A shared 1x1 conv fuses the two branches.

#include <array>
#include <cstddef>
#include <string>
#include <utility>

#include "fsg/layers.hpp"

namespace fsg {

enum class StsamVariant {
  full,        // cross-attention with time embeddings + coordinate attention
  self,        // self-attention only (baseline attention)
  coord,       // coordinate attention only
  self_coord,  // self-attention + coordinate attention
  no_time,     // full without time embeddings
};

const char* to_string(StsamVariant v);
StsamVariant parse_stsam_variant(const std::string& s);  // "off" selects self

// Intermediate width of the coordinate branch: max(8, C / 32).
std::size_t coord_mid_channels(std::size_t channels);

struct StsamTrace {
  std::array<Tensor, 2> attention;  // [N, HW, HW] per time, rows over keys
  std::array<Tensor, 2> gate_h;     // [N, C, H, 1]
  std::array<Tensor, 2> gate_w;     // [N, C, 1, W]
};

class Stsam {
 public:
  Stsam(std::size_t channels, StsamVariant variant, Rng& rng, bool scale_attention = false);

  std::size_t channels() const { return channels_; }
  StsamVariant variant() const { return variant_; }
  bool uses_attention() const { return variant_ != StsamVariant::coord; }
  bool uses_coord() const { return variant_ != StsamVariant::self; }
  bool uses_time() const { return variant_ == StsamVariant::full; }
  bool cross() const { return variant_ == StsamVariant::full || variant_ == StsamVariant::no_time; }

  // omega * Attn(...) + f_i for both times. Cross variants query time i's
  // keys with the counterpart's queries; self variants use their own.
  std::pair<Tensor, Tensor> attention_branch(const Tensor& f1, const Tensor& f2, StsamTrace* trace = nullptr) const;
  // f * a_h * a_w.
  Tensor coord_branch(const Tensor& f, bool training, Tensor* gate_h = nullptr, Tensor* gate_w = nullptr);

  std::pair<Tensor, Tensor> forward(const Tensor& f1, const Tensor& f2, bool training,
                                    StsamTrace* trace = nullptr);

  void parameters(const std::string& prefix, ParameterList& out) const;
  void buffers(const std::string& prefix, ParameterList& out) const;

  Tensor t1, t2;  // [C, 1, 1]
  Tensor omega;   // [1]
  Conv2dLayer q_proj, k_proj, v_proj;
  Conv2dLayer coord_fuse, coord_h, coord_w;
  BatchNorm2dLayer coord_bn;
  Conv2dLayer fusion;  // 2C -> C
  bool scale_attention = false;

  // Pins both coordinate gates; test-only.
  GateHook coord_hook = GateHook::none;

 private:
  // Attention of queries from `query_src` over keys/values of `kv_src`.
  Tensor attend(const Tensor& query_src, const Tensor& kv_src, const Tensor& residual, Tensor* attention) const;

  std::size_t channels_;
  StsamVariant variant_;
};

}  // namespace fsg
