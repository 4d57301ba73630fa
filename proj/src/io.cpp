#include "pwc/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace pwc {
namespace fs = std::filesystem;
namespace {

template <typename U>
void put_le(std::vector<char>& buf, U value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, 4);
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= std::uint32_t(p[i]) << (8 * i);
  U value;
  std::memcpy(&value, &bits, 4);
  return value;
}

struct PngSize {
  std::size_t width = 0, height = 0;
};

PngSize png_size(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw FormatError("cannot read PNG " + path.string() + ": " + img.message);
  }
  PngSize s{img.width, img.height};
  png_image_free(&img);
  return s;
}

PngSize flo_size(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char head[12];
  if (!in.read(reinterpret_cast<char*>(head), 12)) {
    throw FormatError(path.string() + ": truncated .flo header");
  }
  if (get_le<float>(head) != kFloMagic) throw FormatError(path.string() + ": bad .flo magic");
  const auto w = get_le<std::int32_t>(head + 4), h = get_le<std::int32_t>(head + 8);
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) {
    throw FormatError(path.string() + ": implausible .flo size " + std::to_string(w) + "x" +
                      std::to_string(h));
  }
  return {std::size_t(w), std::size_t(h)};
}

}  // namespace

void write_flo(const fs::path& path, const Tensor<float>& flow) {
  require_rank4(flow, "write_flo");
  if (flow.batch() != 1 || flow.channels() != 2) {
    throw DimensionError("write_flo: expected 1x2xHxW, got " + shape_to_string(flow.shape()));
  }
  const std::size_t H = flow.height(), W = flow.width();
  std::vector<char> buf;
  buf.reserve(12 + 8 * H * W);
  put_le(buf, kFloMagic);
  put_le(buf, static_cast<std::int32_t>(W));
  put_le(buf, static_cast<std::int32_t>(H));
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      put_le(buf, flow.at(0, 0, y, x));
      put_le(buf, flow.at(0, 1, y, x));
    }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.write(buf.data(), static_cast<std::streamsize>(buf.size()))) {
    throw std::runtime_error("cannot write " + path.string());
  }
}

Tensor<float> read_flo(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), {});
  if (buf.size() < 12) throw FormatError(path.string() + ": truncated .flo header");
  if (get_le<float>(buf.data()) != kFloMagic) {
    throw FormatError(path.string() + ": bad .flo magic");
  }
  const auto w = get_le<std::int32_t>(buf.data() + 4), h = get_le<std::int32_t>(buf.data() + 8);
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) {
    throw FormatError(path.string() + ": implausible .flo size " + std::to_string(w) + "x" +
                      std::to_string(h));
  }
  const std::size_t W = std::size_t(w), H = std::size_t(h);
  if (buf.size() != 12 + 8 * W * H) {
    throw FormatError(path.string() + ": expected " + std::to_string(12 + 8 * W * H) +
                      " bytes for " + std::to_string(W) + "x" + std::to_string(H) + ", found " +
                      std::to_string(buf.size()));
  }
  Tensor<float> flow({1, 2, H, W});
  const unsigned char* p = buf.data() + 12;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x, p += 8) {
      flow.at(0, 0, y, x) = get_le<float>(p);
      flow.at(0, 1, y, x) = get_le<float>(p + 4);
    }
  return flow;
}

void write_png_rgb8(const fs::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != 3 * width * height) {
    throw DimensionError("write_png_rgb8: buffer size does not match " + std::to_string(width) +
                         "x" + std::to_string(height));
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, rgb.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + img.message);
  }
}

void write_png(const fs::path& path, const Tensor<float>& image) {
  require_rank4(image, "write_png");
  const std::size_t C = image.channels(), H = image.height(), W = image.width();
  if (image.batch() != 1 || (C != 1 && C != 3)) {
    throw DimensionError("write_png: expected 1x1xHxW or 1x3xHxW, got " +
                         shape_to_string(image.shape()));
  }
  std::vector<std::uint8_t> px(C * H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c) {
        const float v = std::clamp(image.at(0, c, y, x), 0.0f, 1.0f);
        px[(y * W + x) * C + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(W);
  img.height = static_cast<png_uint_32>(H);
  img.format = C == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, px.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + img.message);
  }
}

Tensor<float> read_png(const fs::path& path, int channels) {
  if (channels != 1 && channels != 3) throw std::invalid_argument("read_png: channels must be 1 or 3");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw FormatError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t H = img.height, W = img.width;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw FormatError("cannot decode PNG " + path.string() + ": " + msg);
  }
  Tensor<float> out({1, std::size_t(channels), H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (int c = 0; c < channels; ++c)
        out.at(0, c, y, x) = px[(y * W + x) * channels + c] / 255.0f;
  return out;
}

std::vector<NamedSample> load_dataset_dir(const fs::path& dir, bool expect_uniform) {
  if (!fs::is_directory(dir)) throw FormatError("not a directory: " + dir.string());
  std::map<std::string, bool> names;  // name -> has mask
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string f = e.path().filename().string();
    const std::string suffix = "_flow.flo";
    if (f.size() > suffix.size() && f.compare(f.size() - suffix.size(), suffix.size(), suffix) == 0) {
      const std::string name = f.substr(0, f.size() - suffix.size());
      names[name] = fs::exists(dir / (name + "_mask.png"));
    }
  }
  if (names.empty()) throw FormatError("no *_flow.flo files in " + dir.string());

  // Sizes are read from headers first so a mismatch is reported before any
  // pixel data is interpreted.
  struct Files {
    std::string name;
    std::vector<std::pair<fs::path, PngSize>> sizes;
  };
  std::vector<Files> all;
  for (const auto& [name, has_mask] : names) {
    Files f{name, {}};
    for (const char* part : {"_img1.png", "_img2.png"}) {
      const fs::path p = dir / (name + part);
      if (!fs::exists(p)) throw FormatError("missing " + p.string());
      f.sizes.emplace_back(p, png_size(p));
    }
    const fs::path flo = dir / (name + "_flow.flo");
    f.sizes.emplace_back(flo, flo_size(flo));
    if (has_mask) {
      const fs::path m = dir / (name + "_mask.png");
      f.sizes.emplace_back(m, png_size(m));
    }
    all.push_back(std::move(f));
  }

  std::ostringstream report;
  int bad = 0;
  const PngSize ref = all.front().sizes.front().second;
  for (const auto& f : all) {
    const PngSize own = f.sizes.front().second;
    for (const auto& [path, s] : f.sizes) {
      const bool inconsistent = s.width != own.width || s.height != own.height;
      const bool non_uniform = expect_uniform && (s.width != ref.width || s.height != ref.height);
      if (inconsistent || non_uniform) {
        report << "\n  " << path.string() << ": " << s.width << "x" << s.height;
        ++bad;
      }
    }
  }
  if (bad) {
    throw FormatError("dataset " + dir.string() + ": " + std::to_string(bad) +
                      " file(s) differ from the expected " + std::to_string(ref.width) + "x" +
                      std::to_string(ref.height) + " (width x height):" + report.str());
  }

  std::vector<NamedSample> out;
  for (const auto& f : all) {
    Sample s;
    s.image1 = read_png(dir / (f.name + "_img1.png"), 3);
    s.image2 = read_png(dir / (f.name + "_img2.png"), 3);
    s.flow = read_flo(dir / (f.name + "_flow.flo"));
    if (names.at(f.name)) {
      s.mask = read_png(dir / (f.name + "_mask.png"), 1);
      for (auto& v : s.mask.data()) v = v >= 0.5f ? 1.0f : 0.0f;
    } else {
      s.mask = Tensor<float>({1, 1, s.image1.height(), s.image1.width()}, 1.0f);
    }
    s.validate();
    out.push_back({f.name, std::move(s)});
  }
  return out;
}

void write_dataset_dir(const fs::path& dir, const std::vector<Sample>& samples) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu", i);
    const Sample& s = samples[i];
    s.validate();
    write_png(dir / (std::string(name) + "_img1.png"), s.image1);
    write_png(dir / (std::string(name) + "_img2.png"), s.image2);
    write_flo(dir / (std::string(name) + "_flow.flo"), s.flow);
    write_png(dir / (std::string(name) + "_mask.png"), s.mask);
  }
}

}  // namespace pwc
