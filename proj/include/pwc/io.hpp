#pragma once

// Middlebury .flo files, 8-bit PNG images and sample directories.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pwc/synth.hpp"

namespace pwc {

inline constexpr float kFloMagic = 202021.25f;

/// flow: 1 x 2 x H x W. Layout: float magic, int32 width, int32 height, then
/// row-major interleaved (u, v) float pairs, all little-endian.
void write_flo(const std::filesystem::path& path, const Tensor<float>& flow);
/// Throws FormatError on a bad magic, implausible size or truncated file.
Tensor<float> read_flo(const std::filesystem::path& path);

/// image: 1 x C x H x W with C = 1 (gray) or 3 (RGB), values clamped to
/// [0, 1] and rounded to 8 bits.
void write_png(const std::filesystem::path& path, const Tensor<float>& image);
/// Returns 1 x channels x H x W in [0, 1]; channels is 1 or 3.
Tensor<float> read_png(const std::filesystem::path& path, int channels);
/// Interleaved 8-bit RGB.
void write_png_rgb8(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& rgb);

struct NamedSample {
  std::string name;  // the NNNN prefix
  Sample sample;
};

/// Reads NNNN_img1.png, NNNN_img2.png, NNNN_flow.flo and the optional
/// NNNN_mask.png (absent means every pixel is valid), sorted by name. With
/// expect_uniform, any sample whose size differs from the first one aborts
/// loading with a FormatError listing every offending file.
std::vector<NamedSample> load_dataset_dir(const std::filesystem::path& dir, bool expect_uniform);

/// Writes samples as 0000_*, 0001_*, ... (the mask is always written).
void write_dataset_dir(const std::filesystem::path& dir, const std::vector<Sample>& samples);

}  // namespace pwc
