#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "pwc/flow_ops.hpp"
#include "pwc/io.hpp"
#include "pwc/metrics.hpp"
#include "pwc/synth.hpp"
#include "test_util.hpp"

using namespace pwc;
namespace fs = std::filesystem;
using pwc::testing::TempDir;

namespace {

SynthSpec spec64(MotionKind kind, std::uint64_t seed, double md = 8.0) {
  SynthSpec s;
  s.motion = kind;
  s.seed = seed;
  s.max_displacement = md;
  return s;
}

}  // namespace

TEST_CASE("translation sample has constant flow") {
  auto s = gen_sample(spec64(MotionKind::translate, 1), Motion::translation(4, 0));
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x) {
      CHECK(s.flow.at(0, 0, y, x) == 4.0f);
      CHECK(s.flow.at(0, 1, y, x) == 0.0f);
    }
  CHECK(aepe(s.flow, s.flow, Tensor<float>({1, 1, 64, 64}, 1.0f)) == 0.0);
}

TEST_CASE("zero motion gives identical frames and zero flow") {
  for (auto tex : {TextureKind::smoothed_noise, TextureKind::random_dots}) {
    auto spec = spec64(MotionKind::translate, 2);
    spec.texture = tex;
    auto s = gen_sample(spec, Motion{});
    CHECK(s.image1 == s.image2);
    for (float v : s.flow.data()) CHECK(v == 0.0f);
    for (float v : s.mask.data()) CHECK(v == 1.0f);
  }
}

TEST_CASE("rotation flow matches the closed form pointwise") {
  const double theta = 0.1;
  auto s = gen_sample(spec64(MotionKind::rotate, 3), Motion::rotation(theta));
  const double c = 31.5;
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x) {
      const double dx = x - c, dy = y - c;
      const double u = std::cos(theta) * dx - std::sin(theta) * dy - dx;
      const double v = std::sin(theta) * dx + std::cos(theta) * dy - dy;
      CHECK(s.flow.at(0, 0, y, x) == doctest::Approx(u).epsilon(1e-5));
      CHECK(s.flow.at(0, 1, y, x) == doctest::Approx(v).epsilon(1e-5));
    }
}

TEST_CASE("drawn motions respect the displacement bound") {
  for (auto kind : {MotionKind::translate, MotionKind::rotate, MotionKind::zoom, MotionKind::affine_mix})
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CAPTURE(to_string(kind));
      auto s = gen_sample(spec64(kind, seed, 6.0));
      double worst = 0;
      for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 0; x < 64; ++x)
          worst = std::max(worst, std::hypot(double(s.flow.at(0, 0, y, x)), double(s.flow.at(0, 1, y, x))));
      CHECK(worst <= 6.0 + 1e-4);
    }
}

TEST_CASE("generation is a pure function of the spec") {
  auto spec = spec64(MotionKind::affine_mix, 4);
  auto a = gen_sample(spec), b = gen_sample(spec);
  CHECK(a.image1 == b.image1);
  CHECK(a.image2 == b.image2);
  CHECK(a.flow == b.flow);
  CHECK(a.mask == b.mask);
  spec.seed = 5;
  CHECK(!(gen_sample(spec).image1 == a.image1));
  for (float v : a.image1.data()) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("integer translations are reconstructed exactly by warping") {
  for (int k = 0; k < 10; ++k) {
    const int tx = (k * 3) % 9 - 4, ty = (k * 5) % 7 - 3;
    auto s = gen_sample(spec64(MotionKind::translate, 10 + k), Motion::translation(tx, ty));
    auto back = warp(make_constant(s.image2), make_constant(s.flow)).value();
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 0; x < 64; ++x)
          if (s.mask.at(0, 0, y, x) != 0.0f) REQUIRE(back.at(0, c, y, x) == s.image1.at(0, c, y, x));
  }
}

TEST_CASE("occlusion mask marks pixels that leave the frame") {
  auto spec = spec64(MotionKind::translate, 6);
  auto s = gen_sample(spec, Motion::translation(3, -2));
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x) {
      const bool inside = x + 3 <= 63 && y >= 2;
      CHECK(s.mask.at(0, 0, y, x) == (inside ? 1.0f : 0.0f));
    }
  spec.occlusion = false;
  const auto unoccluded = gen_sample(spec, Motion::translation(3, -2));
  for (float v : unoccluded.mask.data()) CHECK(v == 1.0f);

  spec.mask_drop_rate = 0.5;
  double kept = 0;
  const auto dropped = gen_sample(spec);
  for (float v : dropped.mask.data()) kept += v;
  CHECK(kept / 4096.0 == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("spec validation") {
  auto s = spec64(MotionKind::translate, 0, 16.0);
  CHECK_NOTHROW(s.validate());
  s.max_displacement = 16.5;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.max_displacement = -1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK_THROWS_AS(motion_kind_from_string("shear"), std::invalid_argument);
  CHECK(motion_kind_from_string("affine_mix") == MotionKind::affine_mix);
  CHECK(texture_kind_from_string("random_dots") == TextureKind::random_dots);
}

TEST_CASE("horizontal flip") {
  auto s = gen_sample(spec64(MotionKind::affine_mix, 7));
  auto twice = hflip(hflip(s));
  CHECK(twice.image1 == s.image1);
  CHECK(twice.flow == s.flow);
  CHECK(twice.mask == s.mask);

  auto t = gen_sample(spec64(MotionKind::translate, 8), Motion::translation(4, 1));
  auto f = hflip(t);
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x) {
      CHECK(f.flow.at(0, 0, y, x) == -4.0f);
      CHECK(f.flow.at(0, 1, y, x) == 1.0f);
      CHECK(f.image1.at(0, 1, y, x) == t.image1.at(0, 1, y, 63 - x));
      CHECK(f.mask.at(0, 0, y, x) == t.mask.at(0, 0, y, 63 - x));
    }
}

TEST_CASE("augmentation crops consistently and adds no noise") {
  auto s = gen_sample(spec64(MotionKind::rotate, 9));
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    auto a = augment(s, {48, 40, true}, seed);
    CHECK_NOTHROW(a.validate());
    CHECK(a.height() == 48);
    CHECK(a.width() == 40);
    for (float m : a.mask.data()) CHECK((m == 0.0f || m == 1.0f));
    auto b = augment(s, {48, 40, true}, seed);
    CHECK(a.image2 == b.image2);
  }
  auto same = augment(s, {0, 0, false}, 3);
  CHECK(same.image1 == s.image1);
  CHECK(same.image2 == s.image2);
  CHECK(same.flow == s.flow);
  CHECK_THROWS_AS(augment(s, {65, 10, false}, 0), DimensionError);
  auto c = crop(s, 10, 20, 8, 9);
  CHECK(c.flow.at(0, 1, 2, 3) == s.flow.at(0, 1, 12, 23));
}

TEST_CASE("datasets cycle motion kinds and stack into batches") {
  auto base = spec64(MotionKind::translate, 11);
  auto data = gen_dataset(base, {MotionKind::translate, MotionKind::rotate}, 4);
  REQUIRE(data.size() == 4);
  auto batch = stack(data);
  CHECK(batch.image1.shape() == Shape{4, 3, 64, 64});
  CHECK(batch.flow.at(3, 1, 5, 6) == data[3].flow.at(0, 1, 5, 6));
  // Translations have spatially constant flow, rotations do not.
  CHECK(data[0].flow.at(0, 0, 0, 0) == data[0].flow.at(0, 0, 63, 63));
  CHECK(data[1].flow.at(0, 0, 0, 0) != data[1].flow.at(0, 0, 63, 63));
}

TEST_CASE(".flo round trip and format checks") {
  TempDir dir("flo");
  auto flow = pwc::testing::random_tensor<float>({1, 2, 7, 5}, 12, -300.0, 300.0);
  flow.at(0, 1, 3, 2) = std::numeric_limits<float>::denorm_min();
  write_flo(dir.path / "a.flo", flow);
  CHECK(read_flo(dir.path / "a.flo") == flow);

  write_flo(dir.path / "small.flo", Tensor<float>({1, 2, 1, 2}, 1.5f));
  CHECK(fs::file_size(dir.path / "small.flo") == 28);

  {
    std::fstream f(dir.path / "a.flo", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  CHECK_THROWS_AS(read_flo(dir.path / "a.flo"), FormatError);

  write_flo(dir.path / "b.flo", flow);
  fs::resize_file(dir.path / "b.flo", fs::file_size(dir.path / "b.flo") - 4);
  CHECK_THROWS_AS(read_flo(dir.path / "b.flo"), FormatError);
  CHECK_THROWS_AS(write_flo(dir.path / "c.flo", Tensor<float>({1, 3, 2, 2})), DimensionError);
}

TEST_CASE("PNG round trip of 8-bit values") {
  TempDir dir("png");
  Tensor<float> img({1, 3, 4, 6});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = float((i * 37) % 256) / 255.0f;
  write_png(dir.path / "a.png", img);
  CHECK(read_png(dir.path / "a.png", 3) == img);
  Tensor<float> gray({1, 1, 3, 2}, std::vector<float>{0, 1, 1, 0, 1, 1});
  write_png(dir.path / "m.png", gray);
  CHECK(read_png(dir.path / "m.png", 1) == gray);
}

TEST_CASE("dataset directory loading and the uniform-resolution guard") {
  TempDir dir("ds");
  std::vector<Sample> samples;
  for (std::uint64_t i = 0; i < 3; ++i) samples.push_back(gen_sample(spec64(MotionKind::translate, 20 + i)));
  write_dataset_dir(dir.path, samples);
  auto loaded = load_dataset_dir(dir.path, true);
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[1].name == "0001");
  CHECK(loaded[1].sample.flow == samples[1].flow);
  CHECK(loaded[1].sample.mask == samples[1].mask);

  // Plant one 60x64 sample.
  auto odd = gen_sample([] {
    SynthSpec s;
    s.height = 60;
    s.seed = 30;
    return s;
  }());
  write_png(dir.path / "0003_img1.png", odd.image1);
  write_png(dir.path / "0003_img2.png", odd.image2);
  write_flo(dir.path / "0003_flow.flo", odd.flow);
  try {
    load_dataset_dir(dir.path, true);
    FAIL("expected the uniform-resolution guard to fire");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("0003_img1.png") != std::string::npos);
    CHECK(msg.find("0003_flow.flo") != std::string::npos);
    CHECK(msg.find("0001_") == std::string::npos);
  }
  auto mixed = load_dataset_dir(dir.path, false);
  REQUIRE(mixed.size() == 4);
  CHECK(mixed[3].sample.height() == 60);
  CHECK(mixed[3].sample.width() == 64);
  CHECK(mixed[0].sample.height() == 64);
  for (float m : mixed[3].sample.mask.data()) CHECK(m == 1.0f);  // no mask file: all valid
}
