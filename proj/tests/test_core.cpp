#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "cvd/core.hpp"
#include "cvd/image_io.hpp"

namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cvd_core_tests";
  fs::create_directories(dir);
  return dir / name;
}

cvd::Errc decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    cvd::decode_tensor(bytes);
  } catch (const cvd::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode accepted a corrupt buffer";
  return cvd::Errc::Io;
}

}  // namespace

TEST(Tensor, RejectsInconsistentData) {
  EXPECT_THROW(cvd::Tensor({2, 2}, {1, 2, 3}), cvd::Error);
  EXPECT_THROW(cvd::Tensor(std::vector<std::size_t>{}), cvd::Error);
  EXPECT_THROW(cvd::Tensor({3, 0}), cvd::Error);
}

TEST(TensorFile, TwoByTwoLayout) {
  const cvd::Tensor t({2, 2}, {1, 2, 3, 4});
  const auto bytes = cvd::encode_tensor(t);
  // 4 magic + 2 version + 1 dtype + 1 rank + 2 * 4 dims, then 4 floats.
  ASSERT_EQ(bytes.size(), 16u + 16u);
  EXPECT_EQ(std::memcmp(bytes.data(), "CVDF", 4), 0);
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 0);
  EXPECT_EQ(bytes[7], 2);
  EXPECT_EQ(bytes[8], 2);
  EXPECT_EQ(bytes[12], 2);
  float first;
  std::memcpy(&first, bytes.data() + 16, 4);
  EXPECT_EQ(first, 1.0f);

  const fs::path p = temp_file("two.cvdf");
  cvd::write_tensor(t, p);
  EXPECT_EQ(fs::file_size(p), 32u);
  EXPECT_EQ(cvd::read_tensor(p), t);
}

TEST(TensorFile, RankOneZero) {
  const cvd::Tensor t({1}, {0.0f});
  const fs::path p = temp_file("zero.cvdf");
  cvd::write_tensor(t, p);
  EXPECT_EQ(cvd::read_tensor(p), t);
}

TEST(TensorFile, RandomRoundTripIsBitwise) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::uint32_t> bits;
  cvd::Tensor t({3, 4, 5});
  for (auto& v : t.data()) {
    std::uint32_t b;
    do {
      b = bits(rng);
      std::memcpy(&v, &b, 4);
    } while (std::isnan(v));
  }
  const fs::path p = temp_file("rand.cvdf");
  cvd::write_tensor(t, p);
  const cvd::Tensor back = cvd::read_tensor(p);
  ASSERT_EQ(back.dims(), t.dims());
  EXPECT_EQ(std::memcmp(back.data().data(), t.data().data(), 4 * t.size()), 0);
}

TEST(TensorFile, BadMagic) {
  auto bytes = cvd::encode_tensor(cvd::Tensor({2}, {1, 2}));
  std::memcpy(bytes.data(), "XXXX", 4);
  EXPECT_EQ(decode_error(bytes), cvd::Errc::BadMagic);
}

TEST(TensorFile, TruncatedPayload) {
  auto bytes = cvd::encode_tensor(cvd::Tensor({2, 2}, {1, 2, 3, 4}));
  bytes.resize(16 + 8);
  EXPECT_EQ(decode_error(bytes), cvd::Errc::TruncatedPayload);
}

TEST(TensorFile, VersionAndDtypeChecked) {
  auto bytes = cvd::encode_tensor(cvd::Tensor({2}, {1, 2}));
  auto v = bytes;
  v[4] = 2;
  EXPECT_EQ(decode_error(v), cvd::Errc::UnsupportedVersion);
  auto d = bytes;
  d[6] = 1;
  EXPECT_EQ(decode_error(d), cvd::Errc::UnsupportedVersion);
}

TEST(TensorFile, EveryHeaderCorruptionIsTyped) {
  const auto good = cvd::encode_tensor(cvd::Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  const std::size_t header = 8 + 4 * 2;
  for (std::size_t i = 0; i < header; ++i) {
    for (int delta : {1, 0x80}) {
      auto bad = good;
      bad[i] = static_cast<std::uint8_t>(bad[i] ^ delta);
      try {
        const cvd::Tensor t = cvd::decode_tensor(bad);
        ADD_FAILURE() << "byte " << i << " flip " << delta << " decoded silently";
      } catch (const cvd::Error&) {
      }
    }
  }
}

TEST(TensorFile, TrailingBytesRejected) {
  auto bytes = cvd::encode_tensor(cvd::Tensor({2}, {1, 2}));
  bytes.push_back(0);
  EXPECT_EQ(decode_error(bytes), cvd::Errc::InvalidTensor);
}

TEST(TensorFile, MissingFileIsIoError) {
  try {
    cvd::read_tensor(temp_file("does_not_exist.cvdf"));
    FAIL();
  } catch (const cvd::Error& e) {
    EXPECT_EQ(e.code(), cvd::Errc::Io);
  }
}

TEST(Image, ValidatesRange) {
  cvd::Image img(2, 2, 1, 0.5f);
  EXPECT_NO_THROW(img.validate());
  img.at(1, 1) = 1.5f;
  EXPECT_THROW(img.validate(), cvd::Error);
  EXPECT_THROW(cvd::Image(2, 2, 2), cvd::Error);
}

TEST(Image, TensorRoundTrip) {
  cvd::Image img(2, 3, 3);
  for (std::size_t i = 0; i < img.pixels().size(); ++i) img.pixels()[i] = float(i) / 20.0f;
  const cvd::Tensor t = cvd::to_tensor(img);
  EXPECT_EQ(t.dims(), (std::vector<std::size_t>{2, 3, 3}));
  EXPECT_EQ(cvd::to_image(t), img);
}

TEST(Image, GrayUsesBt601) {
  cvd::Image img(1, 1, 3);
  img.at(0, 0, 0) = 1.0f;
  EXPECT_NEAR(img.to_gray().at(0, 0), 0.299f, 1e-7);
}

TEST(ImageIo, PngRoundTripIsExactOn8BitLevels) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> level(0, 255);
  cvd::Image img(5, 7, 3);
  for (float& v : img.pixels()) v = float(level(rng)) / 255.0f;
  const fs::path p = temp_file("rt.png");
  cvd::write_png(img, p);
  EXPECT_EQ(cvd::read_image(p), img);
}

TEST(ImageIo, Png16RoundTrip) {
  cvd::Gray16 g{3, 2, {0, 1, 65535, 1234, 7, 42}};
  const fs::path p = temp_file("g16.png");
  cvd::write_png16(g, p);
  const cvd::Gray16 back = cvd::read_png16(p);
  EXPECT_EQ(back.values, g.values);
  const cvd::Image as_float = cvd::read_image(p);
  EXPECT_FLOAT_EQ(as_float.at(1, 0), 1.0f);
}

TEST(ImageIo, JpegDecodes) {
  cvd::Image img(8, 8, 3, 0.5f);
  const fs::path p = temp_file("flat.jpg");
  cvd::write_jpeg(img, p);
  const cvd::Image back = cvd::read_image(p);
  ASSERT_EQ(back.height(), 8u);
  EXPECT_NEAR(back.at(4, 4, 1), 0.5f, 0.02f);
}

TEST(ImageIo, CorruptFileNamesPath) {
  const fs::path p = temp_file("corrupt.png");
  {
    std::ofstream out(p, std::ios::binary);
    out << "\x89PNG\r\n\x1a\n garbage";
  }
  try {
    cvd::read_image(p);
    FAIL();
  } catch (const cvd::Error& e) {
    EXPECT_EQ(e.code(), cvd::Errc::DecodeError);
    EXPECT_NE(std::string(e.what()).find(p.string()), std::string::npos);
  }
}

TEST(ImageIo, ResizeToSameSizeIsIdentity) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0, 1);
  cvd::Image img(6, 9, 3);
  for (float& v : img.pixels()) v = u(rng);
  EXPECT_EQ(cvd::resize_bilinear(img, 6, 9), img);
}

TEST(ImageIo, ResizeOfConstantStaysConstant) {
  cvd::Image img(4, 4, 1, 0.25f);
  const cvd::Image out = cvd::resize_bilinear(img, 7, 3);
  for (float v : out.pixels()) EXPECT_FLOAT_EQ(v, 0.25f);
}
