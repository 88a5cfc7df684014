// PNG / JPEG codecs for Image, plus bilinear resizing.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cvd/core.hpp"

namespace cvd {

/// Decodes PNG or JPEG (sniffed from the file signature). 8-bit samples map
/// to [0,1] by division by 255, 16-bit by 65535. Alpha is dropped and
/// gray+alpha becomes gray. Throws DecodeError carrying the path.
Image read_image(const std::filesystem::path& path);
Image decode_image(std::span<const std::uint8_t> bytes, const std::string& label = "<memory>");

/// Raw 16-bit single-channel PNG samples (for height maps), row-major.
struct Gray16 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> values;
};
Gray16 read_png16(const std::filesystem::path& path);
void write_png16(const Gray16& img, const std::filesystem::path& path);

/// 8-bit PNG (values rounded from [0,1]).
std::vector<std::uint8_t> encode_png(const Image& img);
void write_png(const Image& img, const std::filesystem::path& path);

/// 1-bit grayscale PNG; bit set where mask is nonzero.
void write_png_1bit(std::size_t height, std::size_t width, std::span<const std::uint8_t> mask,
                    const std::filesystem::path& path);

void write_jpeg(const Image& img, const std::filesystem::path& path, int quality = 95);

/// Bilinear resize with pixel-center alignment; same-size resize is the identity.
Image resize_bilinear(const Image& img, std::size_t height, std::size_t width);

}  // namespace cvd
