// Shared data model: typed errors, dense float tensors, images.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cvd {

enum class Errc {
  Io,
  DimsOverflow,
  BadMagic,
  UnsupportedVersion,
  TruncatedPayload,
  InvalidTensor,
  OutOfFrame,
  NonFiniteHeight,
  InvalidArgument,
  DimensionMismatch,
  ShapeMismatch,
  InvalidRange,
  InvalidSteps,
  Divergence,
  TooFewSamples,
  ParseError,
  RangeError,
  TransportError,
  LengthMismatch,
  RootMissing,
  EmptyDataset,
  DecodeError,
  MissingFile,
  ConfigError,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure in the library surfaces as this exception; `code()` is the
/// stable, testable part, `what()` is a human diagnostic.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Dense row-major float32 array. Rank >= 1, every extent >= 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims);
  Tensor(std::vector<std::size_t> dims, std::vector<float> data);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<float> data_;
};

std::size_t element_count(std::span<const std::size_t> dims);

/// Interleaved H x W x C image with values in [0, 1]; C is 1 or 3.
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, std::size_t channels, float fill = 0.0f);
  Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> pixels);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  bool empty() const noexcept { return pixels_.empty(); }

  float at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels_[(y * width_ + x) * channels_ + c];
  }
  float& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels_[(y * width_ + x) * channels_ + c];
  }

  std::span<const float> pixels() const noexcept { return pixels_; }
  std::span<float> pixels() noexcept { return pixels_; }

  /// BT.601 luma for 3-channel images, a copy otherwise.
  Image to_gray() const;

  /// Throws InvalidArgument when any value leaves [0, 1] or is not finite.
  void validate() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<float> pixels_;
};

/// Images serialize as rank-3 (H, W, C) tensors.
Tensor to_tensor(const Image& img);
Image to_image(const Tensor& t);

// CVDF: "CVDF" | u16 version=1 | u8 dtype=0 (f32) | u8 rank | rank x u32 dims | f32 payload,
// all little-endian.
inline constexpr std::uint16_t kTensorFileVersion = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace cvd
