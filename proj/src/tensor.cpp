#include "cvd/core.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace cvd {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::Io: return "IoError";
    case Errc::DimsOverflow: return "DimsOverflow";
    case Errc::BadMagic: return "BadMagic";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::TruncatedPayload: return "TruncatedPayload";
    case Errc::InvalidTensor: return "InvalidTensor";
    case Errc::OutOfFrame: return "OutOfFrame";
    case Errc::NonFiniteHeight: return "NonFiniteHeight";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::InvalidRange: return "InvalidRange";
    case Errc::InvalidSteps: return "InvalidSteps";
    case Errc::Divergence: return "Divergence";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::ParseError: return "ParseError";
    case Errc::RangeError: return "RangeError";
    case Errc::TransportError: return "TransportError";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::RootMissing: return "RootMissing";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::DecodeError: return "DecodeError";
    case Errc::MissingFile: return "MissingFile";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

std::size_t element_count(std::span<const std::size_t> dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d) {
      throw Error(Errc::DimsOverflow, "element count overflows size_t");
    }
    n *= d;
  }
  return n;
}

namespace {

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw Error(Errc::InvalidTensor, "rank must be >= 1");
  if (dims.size() > 255) throw Error(Errc::InvalidTensor, "rank must fit in a byte");
  for (std::size_t d : dims) {
    if (d == 0) throw Error(Errc::InvalidTensor, "every dim must be >= 1");
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  check_dims(dims_);
  data_.assign(element_count(dims_), 0.0f);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_);
  if (data_.size() != element_count(dims_)) {
    throw Error(Errc::InvalidTensor, "data length " + std::to_string(data_.size()) +
                                         " != product(dims) " +
                                         std::to_string(element_count(dims_)));
  }
}

Image::Image(std::size_t height, std::size_t width, std::size_t channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  if (height == 0 || width == 0) throw Error(Errc::InvalidArgument, "empty image");
  if (channels != 1 && channels != 3) throw Error(Errc::InvalidArgument, "channels must be 1 or 3");
  pixels_.assign(height * width * channels, fill);
}

Image::Image(std::size_t height, std::size_t width, std::size_t channels,
             std::vector<float> pixels)
    : Image(height, width, channels) {
  if (pixels.size() != pixels_.size()) {
    throw Error(Errc::DimensionMismatch, "pixel buffer does not match H x W x C");
  }
  pixels_ = std::move(pixels);
}

Image Image::to_gray() const {
  if (channels_ == 1) return *this;
  Image out(height_, width_, 1);
  for (std::size_t i = 0; i < height_ * width_; ++i) {
    const float* p = &pixels_[i * 3];
    out.pixels_[i] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
  }
  return out;
}

void Image::validate() const {
  for (float v : pixels_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(Errc::InvalidArgument, "pixel value outside [0,1]");
    }
  }
}

Tensor to_tensor(const Image& img) {
  return Tensor({img.height(), img.width(), img.channels()},
                std::vector<float>(img.pixels().begin(), img.pixels().end()));
}

Image to_image(const Tensor& t) {
  if (t.rank() != 3) throw Error(Errc::ShapeMismatch, "image tensors are rank 3 (H, W, C)");
  const auto& d = t.dims();
  Image img(d[0], d[1], d[2], std::vector<float>(t.data().begin(), t.data().end()));
  img.validate();
  return img;
}

namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'V', 'D', 'F'};
constexpr std::uint8_t kDtypeF32 = 0;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * t.rank() + 4 * t.size());
  for (std::uint8_t b : kMagic) out.push_back(b);
  put_u16(out, kTensorFileVersion);
  out.push_back(kDtypeF32);
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) {
      throw Error(Errc::DimsOverflow, "dim " + std::to_string(d) + " does not fit in u32");
    }
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw Error(Errc::TruncatedPayload, "header shorter than 8 bytes");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error(Errc::BadMagic, "expected \"CVDF\"");
  const std::uint16_t version = std::uint16_t(bytes[4]) | (std::uint16_t(bytes[5]) << 8);
  if (version != kTensorFileVersion) {
    throw Error(Errc::UnsupportedVersion, "version " + std::to_string(version));
  }
  if (bytes[6] != kDtypeF32) {
    throw Error(Errc::UnsupportedVersion, "dtype code " + std::to_string(bytes[6]));
  }
  const std::size_t rank = bytes[7];
  if (rank == 0) throw Error(Errc::InvalidTensor, "rank 0");
  if (bytes.size() < 8 + 4 * rank) throw Error(Errc::TruncatedPayload, "dims truncated");

  std::vector<std::size_t> dims(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    dims[i] = get_u32(bytes.data() + 8 + 4 * i);
    if (dims[i] == 0) throw Error(Errc::InvalidTensor, "zero extent");
  }
  const std::size_t n = element_count(dims);
  const std::size_t header = 8 + 4 * rank;
  const std::size_t avail = bytes.size() - header;
  if (n > avail / 4) {
    throw Error(Errc::TruncatedPayload,
                "payload has " + std::to_string(avail) + " bytes, dims need " + std::to_string(4 * n));
  }
  if (avail != 4 * n) throw Error(Errc::InvalidTensor, "trailing bytes after payload");
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes.data() + header + 4 * i));
  }
  return Tensor(std::move(dims), std::move(data));
}

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

}  // namespace cvd
