#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fsg/data.hpp"
#include "fsg/metrics.hpp"
#include "support.hpp"

using namespace fsg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(FSG_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool same_pair(const SamplePair& a, const SamplePair& b) {
  return a.id == b.id && equal(a.img1, b.img1) && equal(a.img2, b.img2) && a.label == b.label;
}

}  // namespace

TEST_CASE("null configuration gives identical images and an empty label") {
  SynthConfig sc;
  sc.pseudo = PseudoChangeConfig{0, 0, 0, 0};
  sc.max_changes = 0;
  sc.count = 4;
  CHECK(sc.pseudo.none());
  const Dataset d = generate_synthetic(sc);
  for (const auto* split : {&d.train, &d.val, &d.test})
    for (const auto& s : *split) {
      CHECK(equal(s.img1, s.img2));
      CHECK(s.label.positives() == 0);
    }
}

TEST_CASE("label density tracks the target") {
  for (double density : {0.05, 0.08, 0.2}) {
    SynthConfig sc;
    sc.change_density = density;
    double total = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
      const SamplePair s = generate_sample(sc, i);
      total += static_cast<double>(s.label.positives()) / static_cast<double>(s.label.mask.size());
    }
    CAPTURE(density);
    CHECK(std::abs(total / 100 - density) <= 0.3 * density);
  }
}

TEST_CASE("samples are pure functions of config and index") {
  SynthConfig sc;
  sc.seed = 42;
  sc.train_count = 3;
  sc.val_count = 2;
  sc.test_count = 1;
  const Dataset a = generate_synthetic(sc), b = generate_synthetic(sc);
  REQUIRE(a.train.size() == 3);
  REQUIRE(a.val.size() == 2);
  REQUIRE(a.test.size() == 1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(same_pair(a.train[i], b.train[i]));
  CHECK(same_pair(a.test[0], b.test[0]));
  CHECK(same_pair(generate_sample(sc, 1), generate_sample(sc, 1)));
  CHECK_FALSE(equal(generate_sample(sc, 1).img1, generate_sample(sc, 2).img1));
  sc.seed = 43;
  CHECK_FALSE(equal(generate_sample(sc, 1).img1, a.train[1].img1));
}

TEST_CASE("images lie in [0,1] and pseudo-changes leave labels alone") {
  SynthConfig sc;
  sc.seed = 5;
  const SamplePair s = generate_sample(sc, 0);
  for (const Tensor* t : {&s.img1, &s.img2}) {
    CHECK(t->shape() == Shape{3, 64, 64});
    for (double v : t->data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  SynthConfig quiet = sc;
  quiet.pseudo = PseudoChangeConfig{0, 0, 0, 0};
  CHECK(generate_sample(quiet, 0).label == s.label);
  CHECK_FALSE(equal(generate_sample(quiet, 0).img2, s.img2));
}

TEST_CASE("split sizes and validation") {
  SynthConfig sc;
  sc.count = 200;
  CHECK(sc.split_counts() == std::array<std::size_t, 3>{140, 30, 30});
  sc.size = 48;
  CHECK_THROWS_AS(sc.validate(), Error);
  sc.size = 64;
  sc.change_density = 0.0;
  CHECK_THROWS_AS(sc.validate(), Error);
  sc.change_density = 0.6;
  CHECK_THROWS_AS(sc.validate(), Error);
  SynthConfig tight;
  tight.size = 32;
  tight.change_density = 0.5;
  tight.max_changes = 1;
  CHECK_THROWS_AS(generate_sample(tight, 0), Error);
}

TEST_CASE("tiling") {
  SUBCASE("exact multiple") {
    const Tensor img = test::random_tensor({3, 512, 512}, 1);
    const TileGrid g = tile_patches(img, 256);
    CHECK(g.tiles.size() == 4);
    CHECK(g.rows == 2);
    CHECK(g.cols == 2);
    CHECK(equal(stitch_patches(g), img));
    CHECK(g.tiles[1][0] == img[256]);
  }
  SUBCASE("reflect padding and crop") {
    const Tensor img = test::random_tensor({3, 300, 300}, 2);
    const TileGrid g = tile_patches(img, 256);
    CHECK(g.tiles.size() == 4);
    CHECK(g.height == 300);
    CHECK(equal(stitch_patches(g), img));
    // Row 300 of the padded image mirrors row 298.
    CHECK(g.tiles[2][(300 - 256) * 256 + 5] == img[298 * 300 + 5]);
  }
  SUBCASE("odd sizes and single channel") {
    const Tensor img = test::random_tensor({1, 33, 70}, 3);
    const TileGrid g = tile_patches(img, 32);
    CHECK(g.rows == 2);
    CHECK(g.cols == 3);
    CHECK(equal(stitch_patches(g), img));
  }
}

TEST_CASE("comparison render colors") {
  ChangeMap ones(4, 4), zeros(4, 4);
  for (auto& v : ones.mask) v = 1;
  const Image8 white = render_comparison(ones, ones);
  for (auto v : white.pixels) CHECK(v == 255);
  const Image8 red = render_comparison(ones, zeros);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(red.pixels[3 * i] == 255);
    CHECK(red.pixels[3 * i + 1] == 0);
    CHECK(red.pixels[3 * i + 2] == 0);
  }
  const Image8 green = render_comparison(zeros, ones);
  CHECK(green.pixels[1] == 255);
  CHECK(green.pixels[0] == 0);
  CHECK_THROWS_AS(render_comparison(ones, ChangeMap(4, 5)), ShapeError);
}

TEST_CASE("PNG round trips") {
  const fs::path dir = scratch("png");
  Rng rng(4);
  Image8 rgb{7, 5, 3, {}};
  for (std::size_t i = 0; i < 7 * 5 * 3; ++i) rgb.pixels.push_back(static_cast<std::uint8_t>(rng.uniform_int(0, 255)));
  save_png((dir / "rgb.png").string(), rgb);
  const Image8 back = load_png((dir / "rgb.png").string());
  CHECK(back.width == 7);
  CHECK(back.height == 5);
  CHECK(back.pixels == rgb.pixels);
  CHECK(tensor_to_image(image_to_tensor(rgb)).pixels == rgb.pixels);

  Image8 gray{3, 1, 1, {0, 255, 127}};
  save_png((dir / "mask.png").string(), gray);
  const ChangeMap m = load_mask((dir / "mask.png").string());
  CHECK(m.mask == std::vector<std::uint8_t>{0, 1, 0});
  save_mask((dir / "m2.png").string(), m);
  CHECK(load_mask((dir / "m2.png").string()) == m);

  std::ofstream((dir / "junk.png").string()) << "not a png";
  try {
    load_png((dir / "junk.png").string());
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("junk.png") != std::string::npos);
  }
  CHECK_THROWS_AS(load_png((dir / "missing.png").string()), Error);
}

TEST_CASE("dataset directory round trip") {
  const fs::path dir = scratch("ds");
  SynthConfig sc;
  sc.size = 32;
  sc.train_count = 2;
  sc.val_count = 1;
  sc.test_count = 1;
  const Dataset d = generate_synthetic(sc);
  write_dataset(dir.string(), d);
  CHECK(fs::exists(dir / "train" / (d.train[0].id + "_A.png")));
  CHECK(fs::exists(dir / "test" / (d.test[0].id + "_label.png")));
  const Dataset back = read_dataset(dir.string());
  REQUIRE(back.train.size() == 2);
  REQUIRE(back.val.size() == 1);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.train[i].id == d.train[i].id);
    CHECK(back.train[i].label == d.train[i].label);
    CHECK(max_abs_diff(back.train[i].img1, d.train[i].img1) <= 0.5 / 255 + 1e-12);
  }
  CHECK_THROWS_AS(read_dataset((dir / "nope").string()), Error);
}

TEST_CASE("stacking") {
  const Tensor a({3, 2, 2}, 1.0), b({3, 2, 2}, 2.0), c({3, 2, 4});
  const Tensor s = stack_images({&a, &b});
  CHECK(s.shape() == Shape{2, 3, 2, 2});
  CHECK(s[12] == 2.0);
  CHECK_THROWS_AS(stack_images({&a, &c}), ShapeError);
  CHECK_THROWS_AS(stack_images({}), Error);
}
