#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace woundcare {

/// 8-bit interleaved RGB raster.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0);

  std::uint8_t* at(int x, int y) noexcept { return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const std::uint8_t* at(int x, int y) const noexcept {
    return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
  bool operator==(const RgbImage&) const = default;
};

/// Binary raster, one byte per pixel holding 0 or 1.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t get(int x, int y) const noexcept { return bits[static_cast<std::size_t>(y) * width + x]; }
  void set(int x, int y, bool on) noexcept { bits[static_cast<std::size_t>(y) * width + x] = on ? 1 : 0; }
  std::size_t popcount() const noexcept;
  bool operator==(const Mask&) const = default;
};

/// "image/png", "image/jpeg" or "application/octet-stream".
std::string sniff_media_type(std::span<const std::uint8_t> bytes);

/// Decodes PNG or JPEG to RGB; throws ErrorCode::format on anything else.
RgbImage decode_image(std::span<const std::uint8_t> bytes);
RgbImage load_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const RgbImage& image);
std::vector<std::uint8_t> encode_jpeg(const RgbImage& image, int quality = 92);
/// 8-bit grayscale PNG, 0 = background, 255 = wound.
std::vector<std::uint8_t> encode_mask_png(const Mask& mask);
/// Any PNG/JPEG; pixels with luma >= 128 are wound.
Mask decode_mask(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace woundcare
