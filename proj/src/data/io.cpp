#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "fsg/data.hpp"

namespace fsg {

namespace fs = std::filesystem;

Image8 load_png(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&img, path.c_str()) == 0)
    throw Error("cannot read PNG '" + path + "': " + img.message);
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 out;
  out.width = img.width;
  out.height = img.height;
  out.channels = gray ? 1 : 3;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr) == 0) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw Error("cannot decode PNG '" + path + "': " + msg);
  }
  return out;
}

void save_png(const std::string& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw Error("save_png: channels must be 1 or 3");
  if (image.pixels.size() != image.width * image.height * image.channels)
    throw Error("save_png: pixel buffer size does not match " + std::to_string(image.width) + "x" +
                std::to_string(image.height));
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr) == 0)
    throw Error("cannot write PNG '" + path + "': " + img.message);
}

Tensor image_to_tensor(const Image8& image) {
  if (image.channels != 3) throw Error("image_to_tensor: expected an RGB image");
  const std::size_t h = image.height, w = image.width;
  Tensor t(Shape{3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) t[c * h * w + y * w + x] = image.pixels[(y * w + x) * 3 + c] / 255.0;
  return t;
}

Image8 tensor_to_image(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3) throw ShapeError("tensor_to_image: expected [3,H,W], got " + to_string(t.shape()));
  const std::size_t h = t.dim(1), w = t.dim(2);
  Image8 img{w, h, 3, std::vector<std::uint8_t>(h * w * 3)};
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.pixels[(y * w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(t[c * h * w + y * w + x], 0.0, 1.0) * 255.0));
  return img;
}

ChangeMap load_mask(const std::string& path) {
  const Image8 img = load_png(path);
  ChangeMap m(img.height, img.width);
  for (std::size_t i = 0; i < img.width * img.height; ++i) m.mask[i] = img.pixels[i * img.channels] >= 128 ? 1 : 0;
  return m;
}

void save_mask(const std::string& path, const ChangeMap& mask) {
  Image8 img{mask.width, mask.height, 1, std::vector<std::uint8_t>(mask.mask.size())};
  for (std::size_t i = 0; i < mask.mask.size(); ++i) img.pixels[i] = mask.mask[i] != 0 ? 255 : 0;
  save_png(path, img);
}

Image8 render_comparison(const ChangeMap& pred, const ChangeMap& label) {
  if (pred.height != label.height || pred.width != label.width)
    throw ShapeError("render_comparison: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                     " vs label " + std::to_string(label.height) + "x" + std::to_string(label.width));
  Image8 img{pred.width, pred.height, 3, std::vector<std::uint8_t>(pred.mask.size() * 3)};
  for (std::size_t i = 0; i < pred.mask.size(); ++i) {
    const bool p = pred.mask[i] != 0, y = label.mask[i] != 0;
    std::uint8_t* px = &img.pixels[i * 3];
    px[0] = p ? 255 : 0;       // TP, FP
    px[1] = y ? 255 : 0;       // TP, FN
    px[2] = p && y ? 255 : 0;  // TP
  }
  return img;
}

namespace {

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t r = i % period;
  if (r < 0) r += period;
  return static_cast<std::size_t>(r < static_cast<std::ptrdiff_t>(n) ? r : period - r);
}

}  // namespace

TileGrid tile_patches(const Tensor& image, std::size_t patch) {
  if (image.rank() != 3) throw ShapeError("tile_patches: expected [C,H,W], got " + to_string(image.shape()));
  if (patch == 0) throw Error("tile_patches: patch size must be positive");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  TileGrid g;
  g.height = h;
  g.width = w;
  g.patch = patch;
  g.rows = (h + patch - 1) / patch;
  g.cols = (w + patch - 1) / patch;
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t q = 0; q < g.cols; ++q) {
      Tensor tile(Shape{c, patch, patch});
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < patch; ++y) {
          const std::size_t sy = reflect_index(static_cast<std::ptrdiff_t>(r * patch + y), h);
          for (std::size_t x = 0; x < patch; ++x) {
            const std::size_t sx = reflect_index(static_cast<std::ptrdiff_t>(q * patch + x), w);
            tile[(ch * patch + y) * patch + x] = image[(ch * h + sy) * w + sx];
          }
        }
      g.tiles.push_back(std::move(tile));
    }
  return g;
}

Tensor stitch_patches(const TileGrid& grid) {
  if (grid.tiles.size() != grid.rows * grid.cols || grid.tiles.empty())
    throw Error("stitch_patches: tile count does not match the grid");
  const std::size_t c = grid.tiles[0].dim(0), p = grid.patch, h = grid.height, w = grid.width;
  Tensor out(Shape{c, h, w});
  for (std::size_t r = 0; r < grid.rows; ++r)
    for (std::size_t q = 0; q < grid.cols; ++q) {
      const Tensor& tile = grid.tiles[r * grid.cols + q];
      if (tile.shape() != Shape{c, p, p}) throw ShapeError("stitch_patches: tile shape " + to_string(tile.shape()));
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < p && r * p + y < h; ++y)
          for (std::size_t x = 0; x < p && q * p + x < w; ++x)
            out[(ch * h + r * p + y) * w + q * p + x] = tile[(ch * p + y) * p + x];
    }
  return out;
}

void write_dataset(const std::string& dir, const Dataset& dataset) {
  const std::pair<const char*, const std::vector<SamplePair>*> splits[3] = {
      {"train", &dataset.train}, {"val", &dataset.val}, {"test", &dataset.test}};
  for (const auto& [name, samples] : splits) {
    const fs::path sub = fs::path(dir) / name;
    fs::create_directories(sub);
    for (const auto& s : *samples) {
      save_png((sub / (s.id + "_A.png")).string(), tensor_to_image(s.img1));
      save_png((sub / (s.id + "_B.png")).string(), tensor_to_image(s.img2));
      save_mask((sub / (s.id + "_label.png")).string(), s.label);
    }
  }
}

std::vector<SamplePair> read_split(const std::string& dir, const std::string& split) {
  const fs::path sub = fs::path(dir) / split;
  std::vector<SamplePair> out;
  if (!fs::is_directory(sub)) return out;
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(sub)) {
    const std::string name = entry.path().filename().string();
    const std::string suffix = "_A.png";
    if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      ids.push_back(name.substr(0, name.size() - suffix.size()));
  }
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) {
    SamplePair s;
    s.id = id;
    s.img1 = image_to_tensor(load_png((sub / (id + "_A.png")).string()));
    s.img2 = image_to_tensor(load_png((sub / (id + "_B.png")).string()));
    s.label = load_mask((sub / (id + "_label.png")).string());
    if (s.img1.shape() != s.img2.shape() || s.label.height != s.img1.dim(1) || s.label.width != s.img1.dim(2))
      throw ShapeError("dataset sample '" + (sub / id).string() + "': image and label sizes differ");
    out.push_back(std::move(s));
  }
  return out;
}

Dataset read_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error("dataset directory '" + dir + "' does not exist");
  Dataset d{read_split(dir, "train"), read_split(dir, "val"), read_split(dir, "test")};
  if (d.train.empty() && d.val.empty() && d.test.empty())
    throw Error("dataset directory '" + dir + "' holds no {split}/{id}_A.png samples");
  return d;
}

}  // namespace fsg
