#include <algorithm>
#include <cmath>
#include <numbers>

#include "fsg/data.hpp"
#include "fsg/rng.hpp"

namespace fsg {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

using Rgb = std::array<double, 3>;

// Footprint of one object: a boolean mask over its bounding box.
struct Object {
  std::size_t y0 = 0, x0 = 0, h = 0, w = 0;
  std::vector<std::uint8_t> mask;
  Rgb color{};

  bool covers(std::size_t y, std::size_t x) const {
    return y >= y0 && y < y0 + h && x >= x0 && x < x0 + w && mask[(y - y0) * w + (x - x0)] != 0;
  }
  std::size_t area() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }
};

class Canvas {
 public:
  explicit Canvas(std::size_t size) : size_(size), occupied_(size * size, 0) {}

  // Places `obj` at a random free position (1-pixel margin to other objects).
  bool place(Object& obj, Rng& rng) {
    if (obj.h + 2 > size_ || obj.w + 2 > size_) return false;
    for (int attempt = 0; attempt < 40; ++attempt) {
      obj.y0 = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(size_ - obj.h - 1)));
      obj.x0 = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(size_ - obj.w - 1)));
      if (free(obj)) {
        mark(obj);
        return true;
      }
    }
    return false;
  }

 private:
  bool free(const Object& obj) const {
    for (std::size_t y = obj.y0 - 1; y <= obj.y0 + obj.h; ++y)
      for (std::size_t x = obj.x0 - 1; x <= obj.x0 + obj.w; ++x)
        if (occupied_[y * size_ + x] != 0) return false;
    return true;
  }
  void mark(const Object& obj) {
    for (std::size_t y = 0; y < obj.h; ++y)
      for (std::size_t x = 0; x < obj.w; ++x)
        if (obj.mask[y * obj.w + x] != 0) occupied_[(obj.y0 + y) * size_ + obj.x0 + x] = 1;
  }

  std::size_t size_;
  std::vector<std::uint8_t> occupied_;
};

Object make_shape(ShapeKind kind, std::size_t size, Rng& rng) {
  Object o;
  const auto lo = static_cast<std::int64_t>(std::max<std::size_t>(3, size / 10));
  const auto hi = static_cast<std::int64_t>(std::max<std::size_t>(4, size / 4));
  switch (kind) {
    case ShapeKind::rectangle: {
      o.h = static_cast<std::size_t>(rng.uniform_int(lo, hi));
      o.w = static_cast<std::size_t>(rng.uniform_int(lo, hi));
      o.mask.assign(o.h * o.w, 1);
      break;
    }
    case ShapeKind::disc: {
      const std::size_t d = static_cast<std::size_t>(rng.uniform_int(lo, hi));
      o.h = o.w = d;
      o.mask.assign(d * d, 0);
      const double c = (static_cast<double>(d) - 1.0) / 2.0, r2 = (d / 2.0) * (d / 2.0);
      for (std::size_t y = 0; y < d; ++y)
        for (std::size_t x = 0; x < d; ++x) {
          const double dy = static_cast<double>(y) - c, dx = static_cast<double>(x) - c;
          o.mask[y * d + x] = dy * dy + dx * dx <= r2 ? 1 : 0;
        }
      break;
    }
    case ShapeKind::l_polyomino: {
      // Bounding box minus one corner block; arm width is a third to a half.
      o.h = static_cast<std::size_t>(rng.uniform_int(lo + 2, hi + 2));
      o.w = static_cast<std::size_t>(rng.uniform_int(lo + 2, hi + 2));
      const std::size_t arm_h = std::max<std::size_t>(2, o.h * static_cast<std::size_t>(rng.uniform_int(35, 50)) / 100);
      const std::size_t arm_w = std::max<std::size_t>(2, o.w * static_cast<std::size_t>(rng.uniform_int(35, 50)) / 100);
      const auto corner = rng.uniform_int(0, 3);
      o.mask.assign(o.h * o.w, 1);
      for (std::size_t y = 0; y < o.h; ++y)
        for (std::size_t x = 0; x < o.w; ++x) {
          const bool top = y < o.h - arm_h, left = x < o.w - arm_w;
          const bool cut = (corner == 0 && top && left) || (corner == 1 && top && x >= arm_w) ||
                           (corner == 2 && y >= arm_h && left) || (corner == 3 && y >= arm_h && x >= arm_w);
          if (cut) o.mask[y * o.w + x] = 0;
        }
      break;
    }
  }
  return o;
}

Rgb random_color_away_from(const Rgb& avoid, Rng& rng) {
  for (;;) {
    const Rgb c{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
    const double d = std::abs(c[0] - avoid[0]) + std::abs(c[1] - avoid[1]) + std::abs(c[2] - avoid[2]);
    if (d >= 0.45) return c;
  }
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

void SynthConfig::validate() const {
  if (size != 32 && size != 64 && size != 128 && size != 256)
    throw Error("synth: size must be 32, 64, 128 or 256, got " + std::to_string(size));
  if (!(change_density > 0.0 && change_density <= 0.5))
    throw Error("synth: change density must be in (0, 0.5], got " + std::to_string(change_density));
  if (shape_palette.empty()) throw Error("synth: shape palette is empty");
  const auto counts = split_counts();
  if (counts[0] + counts[1] + counts[2] == 0) throw Error("synth: sample count is zero");
}

std::array<std::size_t, 3> SynthConfig::split_counts() const {
  if (train_count + val_count + test_count > 0) return {train_count, val_count, test_count};
  const auto train = static_cast<std::size_t>(std::llround(0.70 * static_cast<double>(count)));
  const auto val = static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(count)));
  return {train, val, count - std::min(count, train + val)};
}

SamplePair generate_sample(const SynthConfig& config, std::size_t index) {
  const std::size_t n = config.size;
  Rng rng(splitmix64(config.seed * 0x100000001B3ULL + index));

  // Background: base tone plus a few low-frequency waves and fixed grain.
  const Rgb base{rng.uniform(0.2, 0.6), rng.uniform(0.25, 0.6), rng.uniform(0.15, 0.5)};
  std::array<std::array<double, 4>, 3> waves{};
  for (auto& wave : waves)
    wave = {rng.uniform(0.05, 0.35), rng.uniform(0.05, 0.35), rng.uniform(0.0, 2.0 * std::numbers::pi),
            rng.uniform(0.02, 0.06)};
  std::vector<double> background(3 * n * n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      double t = 0.0;
      for (const auto& wv : waves) t += wv[3] * std::sin(wv[0] * static_cast<double>(x) + wv[1] * static_cast<double>(y) + wv[2]);
      const double grain = 0.02 * rng.normal();
      for (std::size_t c = 0; c < 3; ++c) background[c * n * n + y * n + x] = base[c] + t + grain;
    }

  auto random_kind = [&] {
    const auto k = rng.uniform_int(0, static_cast<std::int64_t>(config.shape_palette.size()) - 1);
    return config.shape_palette[static_cast<std::size_t>(k)];
  };
  Canvas canvas(n);
  std::vector<Object> base_objects;
  for (std::size_t i = 0; i < config.base_objects; ++i) {
    Object o = make_shape(random_kind(), n, rng);
    o.color = random_color_away_from(base, rng);
    if (canvas.place(o, rng)) base_objects.push_back(std::move(o));
  }

  // Changes: remove base objects or add new ones, stepping toward the
  // target changed area and stopping once a step would move away from it.
  const double target = config.change_density * static_cast<double>(n * n);
  std::vector<bool> removed(base_objects.size(), false);
  std::vector<Object> added;
  double changed = 0.0;
  std::size_t changes = 0;
  int failures = 0;
  while (changes < config.max_changes && failures < 60) {
    const bool try_remove = rng.uniform() < 0.4;
    std::size_t victim = base_objects.size();
    if (try_remove)
      for (std::size_t i = 0; i < base_objects.size(); ++i)
        if (!removed[i]) {
          victim = i;
          break;
        }
    if (victim < base_objects.size()) {
      const double a = static_cast<double>(base_objects[victim].area());
      if (std::abs(changed + a - target) >= std::abs(changed - target)) {
        if (++failures > 6 && changed > 0.0) break;
        continue;
      }
      removed[victim] = true;
      changed += a;
      ++changes;
      continue;
    }
    Object o = make_shape(random_kind(), n, rng);
    const double a = static_cast<double>(o.area());
    if (std::abs(changed + a - target) >= std::abs(changed - target)) {
      // Too large for the remaining budget; a smaller draw may still fit.
      if (++failures > 6 && changed > 0.0) break;
      continue;
    }
    o.color = random_color_away_from(base, rng);
    if (!canvas.place(o, rng)) {
      ++failures;
      continue;
    }
    changed += a;
    ++changes;
    added.push_back(std::move(o));
  }
  if (config.max_changes > 0 && changed < 0.5 * target)
    throw Error("synth: change density " + std::to_string(config.change_density) + " is not achievable at size " +
                std::to_string(n));

  SamplePair s;
  s.id = "s" + std::to_string(100000 + index).substr(1);
  s.img1 = Tensor(Shape{3, n, n});
  s.img2 = Tensor(Shape{3, n, n});
  s.label = ChangeMap(n, n);
  std::vector<double> img2(3 * n * n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const Object* o1 = nullptr;
      const Object* o2 = nullptr;
      for (std::size_t i = 0; i < base_objects.size(); ++i)
        if (base_objects[i].covers(y, x)) {
          o1 = &base_objects[i];
          if (!removed[i]) o2 = o1;
        }
      for (const auto& o : added)
        if (o.covers(y, x)) o2 = &o;
      s.label.at(y, x) = o1 != o2 ? 1 : 0;
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t k = c * n * n + y * n + x;
        // Objects keep a faint copy of the background texture.
        const double bg = background[k];
        s.img1[k] = o1 != nullptr ? o1->color[c] + 0.25 * (bg - base[c]) : bg;
        img2[k] = o2 != nullptr ? o2->color[c] + 0.25 * (bg - base[c]) : bg;
      }
    }

  // Pseudo-changes on the second acquisition only.
  const PseudoChangeConfig& pc = config.pseudo;
  const double shift = pc.brightness_shift_range > 0.0 ? rng.uniform(-pc.brightness_shift_range, pc.brightness_shift_range) : 0.0;
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double amp = pc.smooth_gradient_amp > 0.0 ? rng.uniform(-pc.smooth_gradient_amp, pc.smooth_gradient_amp) : 0.0;
  Rgb gain{1.0, 1.0, 1.0};
  if (pc.season_tint_range > 0.0)
    for (auto& g : gain) g = 1.0 + rng.uniform(-pc.season_tint_range, pc.season_tint_range);
  const double half = (static_cast<double>(n) - 1.0) / 2.0;
  const double reach = half * std::numbers::sqrt2;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double ramp = ((static_cast<double>(x) - half) * std::cos(angle) + (static_cast<double>(y) - half) * std::sin(angle)) / reach;
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t k = c * n * n + y * n + x;
        double v = img2[k] * gain[c] + shift + amp * ramp;
        if (pc.noise_sigma > 0.0) v += pc.noise_sigma * rng.normal();
        s.img2[k] = quantize(v);
        s.img1[k] = quantize(s.img1[k]);
      }
    }
  return s;
}

Dataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  const auto counts = config.split_counts();
  Dataset d;
  std::size_t index = 0;
  std::vector<SamplePair>* splits[3] = {&d.train, &d.val, &d.test};
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t i = 0; i < counts[s]; ++i) splits[s]->push_back(generate_sample(config, index++));
  return d;
}

Tensor stack_images(const std::vector<const Tensor*>& images) {
  if (images.empty()) throw Error("stack_images: no images");
  const Shape& s = images[0]->shape();
  Shape out_shape{images.size()};
  out_shape.insert(out_shape.end(), s.begin(), s.end());
  Tensor out(out_shape);
  const std::size_t m = images[0]->numel();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->shape() != s)
      throw ShapeError("stack_images: " + to_string(images[i]->shape()) + " vs " + to_string(s));
    std::copy(images[i]->data().begin(), images[i]->data().end(), out.mutable_ptr() + i * m);
  }
  return out;
}

}  // namespace fsg
