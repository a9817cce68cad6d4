#pragma once

// Synthetic bi-temporal corpus, PNG I/O, tiling and comparison rendering.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fsg/network.hpp"
#include "fsg/tensor.hpp"

namespace fsg {

struct SamplePair {
  Tensor img1;  // [3, H, W] in [0, 1]
  Tensor img2;
  ChangeMap label;
  std::string id;
};

struct Dataset {
  std::vector<SamplePair> train, val, test;
};

// Label-free radiometric perturbations applied to the second image.
struct PseudoChangeConfig {
  double brightness_shift_range = 0.15;  // additive shift ~ U(-r, r)
  double smooth_gradient_amp = 0.12;     // linear ramp in [-a, a] along a random direction
  double noise_sigma = 0.02;             // i.i.d. Gaussian per pixel and channel
  double season_tint_range = 0.15;       // per-channel gain 1 + U(-t, t)

  bool none() const {
    return brightness_shift_range == 0.0 && smooth_gradient_amp == 0.0 && noise_sigma == 0.0 &&
           season_tint_range == 0.0;
  }
};

enum class ShapeKind { rectangle, disc, l_polyomino };

struct SynthConfig {
  std::size_t count = 200;
  std::size_t size = 64;          // H = W; one of 32, 64, 128, 256
  double change_density = 0.08;   // target label fraction per sample, in (0, 0.5]
  std::size_t base_objects = 4;   // objects present in both images before changes
  std::size_t max_changes = 16;   // 0 disables changes (all-zero labels)
  PseudoChangeConfig pseudo;
  std::vector<ShapeKind> shape_palette{ShapeKind::rectangle, ShapeKind::disc, ShapeKind::l_polyomino};
  std::uint64_t seed = 0;
  // Explicit split sizes; when all are zero `count` is split 70/15/15.
  std::size_t train_count = 0, val_count = 0, test_count = 0;

  void validate() const;
  std::array<std::size_t, 3> split_counts() const;
};

// One sample; depends only on (config, index).
SamplePair generate_sample(const SynthConfig& config, std::size_t index);
Dataset generate_synthetic(const SynthConfig& config);

// Stacks [3,H,W] images of equal size into [N,3,H,W].
Tensor stack_images(const std::vector<const Tensor*>& images);

// Row-major non-overlapping tiles of a [C,H,W] image, after reflect padding
// H and W up to multiples of the patch size.
struct TileGrid {
  std::vector<Tensor> tiles;  // each [C, patch, patch]
  std::size_t rows = 0, cols = 0;
  std::size_t height = 0, width = 0;  // original size
  std::size_t patch = 0;
};

TileGrid tile_patches(const Tensor& image, std::size_t patch = 256);
// Reassembles tiles (any channel count) and crops to the original size.
Tensor stitch_patches(const TileGrid& grid);

// 8-bit interleaved image (channels 1 or 3).
struct Image8 {
  std::size_t width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> pixels;
};

// Comparison colors: TP white, TN black, FP red, FN green.
Image8 render_comparison(const ChangeMap& pred, const ChangeMap& label);

Image8 load_png(const std::string& path);
void save_png(const std::string& path, const Image8& image);

Tensor image_to_tensor(const Image8& image);  // RGB -> [3,H,W] in [0,1]
Image8 tensor_to_image(const Tensor& image);  // [3,H,W] in [0,1] -> RGB, rounded
ChangeMap load_mask(const std::string& path);  // grayscale or RGB, binarized at 128
void save_mask(const std::string& path, const ChangeMap& mask);

// Layout: {dir}/{split}/{id}_A.png, {id}_B.png, {id}_label.png
void write_dataset(const std::string& dir, const Dataset& dataset);
std::vector<SamplePair> read_split(const std::string& dir, const std::string& split);
Dataset read_dataset(const std::string& dir);

}  // namespace fsg
