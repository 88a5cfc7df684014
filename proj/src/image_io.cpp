#include "cvd/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

extern "C" {
#include <jpeglib.h>
}

namespace cvd {

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingFile, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

bool is_png(std::span<const std::uint8_t> b) {
  return b.size() >= 8 && png_sig_cmp(b.data(), 0, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

// ---------------------------------------------------------------------------
// PNG decoding (classic API; the simplified API would gamma-convert 16-bit data)

struct PngReadSource {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_read_mem(png_structp png, png_bytep out, png_size_t count) {
  auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
  if (src->offset + count > src->bytes.size()) png_error(png, "unexpected end of data");
  std::memcpy(out, src->bytes.data() + src->offset, count);
  src->offset += count;
}

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void png_warn_fn(png_structp, png_const_charp) {}

struct DecodedPng {
  std::size_t height = 0, width = 0, channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;  // row-major interleaved
};

DecodedPng decode_png_raw(std::span<const std::uint8_t> bytes, const std::string& label) {
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warn_fn);
  if (!png) throw Error(Errc::DecodeError, label + ": png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  PngReadSource src{bytes, 0};
  DecodedPng out;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> buffer;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(Errc::DecodeError, label + ": " + (err.empty() ? "corrupt PNG" : err));
  }
  png_set_read_fn(png, &src, png_read_mem);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);  // host order, little-endian hosts
  png_read_update_info(png, info);

  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  depth = png_get_bit_depth(png, info);
  const std::size_t in_channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (std::size_t y = 0; y < out.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  // gray(+alpha) -> 1 channel, rgb(+alpha) -> 3 channels
  out.channels = in_channels >= 3 ? 3 : 1;
  out.bit_depth = depth;
  out.samples.resize(out.height * out.width * out.channels);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      for (std::size_t c = 0; c < out.channels; ++c) {
        const std::size_t idx = x * in_channels + c;
        std::uint16_t v;
        if (depth == 16) {
          std::memcpy(&v, rows[y] + 2 * idx, 2);
        } else {
          v = rows[y][idx];
        }
        out.samples[(y * out.width + x) * out.channels + c] = v;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// PNG encoding

void png_write_mem(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_mem(png_structp) {}

std::vector<std::uint8_t> encode_png_rows(std::size_t height, std::size_t width, int color_type,
                                          int bit_depth, const std::vector<png_bytep>& rows) {
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warn_fn);
  if (!png) throw Error(Errc::Io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::Io, "PNG encode failed: " + err);
  }
  png_set_write_fn(png, &out, png_write_mem, png_flush_mem);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

// ---------------------------------------------------------------------------
// JPEG

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_quiet(j_common_ptr, int) {}

Image decode_jpeg(std::span<const std::uint8_t> bytes, const std::string& label) {
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  err.mgr.emit_message = jpeg_quiet;
  std::vector<std::uint8_t> buffer;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(Errc::DecodeError, label + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const std::size_t w = cinfo.output_width, h = cinfo.output_height;
  const std::size_t c = cinfo.output_components;
  buffer.resize(w * h * c);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buffer.data() + std::size_t(cinfo.output_scanline) * w * c;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);

  std::vector<float> px(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) px[i] = buffer[i] / 255.0f;
  return Image(h, w, c, std::move(px));
}

std::uint8_t to_u8(float v) {
  const float clamped = std::fmin(1.0f, std::fmax(0.0f, v));
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes, const std::string& label) {
  if (is_png(bytes)) {
    DecodedPng raw = decode_png_raw(bytes, label);
    const float scale = raw.bit_depth == 16 ? 65535.0f : 255.0f;
    std::vector<float> px(raw.samples.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = raw.samples[i] / scale;
    return Image(raw.height, raw.width, raw.channels, std::move(px));
  }
  if (is_jpeg(bytes)) return decode_jpeg(bytes, label);
  throw Error(Errc::DecodeError, label + ": not a PNG or JPEG file");
}

Image read_image(const std::filesystem::path& path) {
  return decode_image(slurp(path), path.string());
}

Gray16 read_png16(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  if (!is_png(bytes)) throw Error(Errc::DecodeError, path.string() + ": not a PNG file");
  DecodedPng raw = decode_png_raw(bytes, path.string());
  if (raw.channels != 1) {
    throw Error(Errc::DecodeError, path.string() + ": height maps must be single-channel");
  }
  return Gray16{raw.height, raw.width, std::move(raw.samples)};
}

void write_png16(const Gray16& img, const std::filesystem::path& path) {
  if (img.values.size() != img.height * img.width) {
    throw Error(Errc::DimensionMismatch, "Gray16 buffer does not match dims");
  }
  std::vector<std::uint16_t> copy = img.values;
  std::vector<png_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(copy.data() + y * img.width);
  }
  spill(encode_png_rows(img.height, img.width, PNG_COLOR_TYPE_GRAY, 16, rows), path);
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  std::vector<std::uint8_t> buf(img.pixels().size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_u8(img.pixels()[i]);
  const std::size_t stride = img.width() * img.channels();
  std::vector<png_bytep> rows(img.height());
  for (std::size_t y = 0; y < img.height(); ++y) rows[y] = buf.data() + y * stride;
  return encode_png_rows(img.height(), img.width(),
                         img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8, rows);
}

void write_png(const Image& img, const std::filesystem::path& path) {
  spill(encode_png(img), path);
}

void write_png_1bit(std::size_t height, std::size_t width, std::span<const std::uint8_t> mask,
                    const std::filesystem::path& path) {
  if (mask.size() != height * width) throw Error(Errc::DimensionMismatch, "mask size");
  const std::size_t stride = (width + 7) / 8;
  std::vector<std::uint8_t> packed(stride * height, 0);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (mask[y * width + x]) packed[y * stride + x / 8] |= std::uint8_t(0x80u >> (x % 8));
    }
  }
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = packed.data() + y * stride;
  spill(encode_png_rows(height, width, PNG_COLOR_TYPE_GRAY, 1, rows), path);
}

void write_jpeg(const Image& img, const std::filesystem::path& path, int quality) {
  std::vector<std::uint8_t> buf(img.pixels().size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_u8(img.pixels()[i]);

  jpeg_compress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  unsigned char* mem = nullptr;
  unsigned long mem_size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(mem);
    throw Error(Errc::Io, std::string("JPEG encode failed: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &mem, &mem_size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width());
  cinfo.image_height = static_cast<JDIMENSION>(img.height());
  cinfo.input_components = static_cast<int>(img.channels());
  cinfo.in_color_space = img.channels() == 3 ? JCS_RGB : JCS_GRAYSCALE;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t stride = img.width() * img.channels();
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = buf.data() + std::size_t(cinfo.next_scanline) * stride;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> bytes(mem, mem + mem_size);
  jpeg_destroy_compress(&cinfo);
  std::free(mem);
  spill(bytes, path);
}

Image resize_bilinear(const Image& img, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw Error(Errc::InvalidArgument, "resize to empty image");
  if (height == img.height() && width == img.width()) return img;
  Image out(height, width, img.channels());
  const double sy = double(img.height()) / double(height);
  const double sx = double(img.width()) / double(width);
  const auto last_y = static_cast<double>(img.height() - 1);
  const auto last_x = static_cast<double>(img.width() - 1);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, last_y);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - double(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, last_x);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - double(x0);
      for (std::size_t c = 0; c < img.channels(); ++c) {
        const double top = (1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        const double bot = (1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        out.at(y, x, c) = static_cast<float>((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

}  // namespace cvd
