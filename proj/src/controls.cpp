#include "cvd/controls.hpp"

#include <cmath>
#include <string>

#include "cvd/image_io.hpp"

namespace cvd {

std::pair<StructureMap, TextureMapping> build_controls(const VoxelGrid& grid,
                                                       const CameraPose& pose,
                                                       const PanoramaDims& dims) {
  dims.validate();
  pose.validate(grid);
  StructureMap s{dims, decltype(StructureMap::bits)::Zero(static_cast<Eigen::Index>(dims.height),
                                                         static_cast<Eigen::Index>(dims.width))};
  TextureMapping m{dims, {}};
  m.entries.resize(dims.height * dims.width);
  const Vec2<double> center = pose.center();

  for (std::size_t row = 0; row < dims.height; ++row) {
    for (std::size_t col = 0; col < dims.width; ++col) {
      const auto ray = pixel_ray<double>(col, row, dims);
      const RayHit hit = cast_ray(grid, pose, ray);
      if (!hit) continue;
      s.bits(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = 1;
      m.entries[row * dims.width + col] = angles_to_satellite(ray, hit->range, center);
    }
  }
  return {std::move(s), std::move(m)};
}

StructureMap build_structure_map(const VoxelGrid& grid, const CameraPose& pose,
                                 const PanoramaDims& dims) {
  return build_controls(grid, pose, dims).first;
}

TextureMapping build_texture_mapping(const VoxelGrid& grid, const CameraPose& pose,
                                     const PanoramaDims& dims) {
  return build_controls(grid, pose, dims).second;
}

SatCoord<double> token_center(std::size_t j, const GridDims& tokens, const GridDims& pixels) {
  const double block_w = double(pixels.cols) / double(tokens.cols);
  const double block_h = double(pixels.rows) / double(tokens.rows);
  const std::size_t a = j / tokens.cols;
  const std::size_t b = j % tokens.cols;
  return {(b + 0.5) * block_w, (a + 0.5) * block_h};
}

WeightMatrix build_weight_matrix(const TextureMapping& mapping, const GridDims& control,
                                 const GridDims& satellite_tokens,
                                 const GridDims& satellite_pixels, double beta) {
  const PanoramaDims& pano = mapping.dims;
  auto divides = [](std::size_t part, std::size_t whole) {
    return part > 0 && whole > 0 && whole % part == 0;
  };
  if (!divides(control.rows, pano.height) || !divides(control.cols, pano.width)) {
    throw Error(Errc::DimensionMismatch,
                "control dims " + std::to_string(control.rows) + "x" + std::to_string(control.cols) +
                    " must divide panorama dims " + std::to_string(pano.height) + "x" +
                    std::to_string(pano.width));
  }
  if (!divides(satellite_tokens.rows, satellite_pixels.rows) ||
      !divides(satellite_tokens.cols, satellite_pixels.cols)) {
    throw Error(Errc::DimensionMismatch, "satellite token dims must divide satellite dims");
  }
  if (mapping.entries.size() != pano.height * pano.width) {
    throw Error(Errc::DimensionMismatch, "mapping entry count does not match its dims");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw Error(Errc::InvalidArgument, "beta must be finite and >= 0");
  }

  WeightMatrix w;
  w.control = control;
  w.satellite_tokens = satellite_tokens;
  w.satellite_pixels = satellite_pixels;
  w.beta = beta;
  w.values.resize(static_cast<Eigen::Index>(control.count()),
                  static_cast<Eigen::Index>(satellite_tokens.count()));
  w.pooled.resize(control.count());

  std::vector<SatCoord<double>> centers(satellite_tokens.count());
  for (std::size_t j = 0; j < centers.size(); ++j) {
    centers[j] = token_center(j, satellite_tokens, satellite_pixels);
  }

  const std::size_t bh = pano.height / control.rows;
  const std::size_t bw = pano.width / control.cols;
  for (std::size_t r = 0; r < control.rows; ++r) {
    for (std::size_t c = 0; c < control.cols; ++c) {
      SatCoord<double> sum = SatCoord<double>::Zero();
      std::size_t n = 0;
      for (std::size_t y = r * bh; y < (r + 1) * bh; ++y) {
        for (std::size_t x = c * bw; x < (c + 1) * bw; ++x) {
          if (const auto& e = mapping.at(y, x)) {
            sum += *e;
            ++n;
          }
        }
      }
      const auto row = static_cast<Eigen::Index>(r * control.cols + c);
      if (n == 0) {
        w.values.row(row).setConstant(kUnmappedWeight);
        continue;
      }
      const SatCoord<double> p = sum / static_cast<double>(n);
      w.pooled[static_cast<std::size_t>(row)] = p;
      for (std::size_t j = 0; j < centers.size(); ++j) {
        w.values(row, static_cast<Eigen::Index>(j)) =
            one_minus_sigmoid(beta * (p - centers[j]).norm());
      }
    }
  }
  return w;
}

ContinuityReport check_wrap_continuity(const StructureMap& s, const TextureMapping& m) {
  if (!(s.dims == m.dims)) throw Error(Errc::DimensionMismatch, "structure/mapping dims differ");
  ContinuityReport r;
  r.rows = s.dims.height;
  const auto last = static_cast<Eigen::Index>(s.dims.width - 1);
  for (std::size_t y = 0; y < r.rows; ++y) {
    const auto row = static_cast<Eigen::Index>(y);
    if (s.bits(row, 0) != s.bits(row, last)) ++r.differing_bits;
    const auto& a = m.at(y, 0);
    const auto& b = m.at(y, s.dims.width - 1);
    if (a && b) {
      ++r.compared_coordinates;
      r.max_coordinate_discrepancy = std::max(r.max_coordinate_discrepancy, (*a - *b).norm());
    }
  }
  r.bit_difference_rate = r.rows ? double(r.differing_bits) / double(r.rows) : 0.0;
  return r;
}

Tensor mapping_to_tensor(const TextureMapping& m) {
  Tensor t({m.dims.height, m.dims.width, 2});
  auto data = t.data();
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    data[2 * i] = e ? static_cast<float>(e->x()) : -1.0f;
    data[2 * i + 1] = e ? static_cast<float>(e->y()) : -1.0f;
  }
  return t;
}

Tensor weights_to_tensor(const WeightMatrix& w) {
  const auto rows = static_cast<std::size_t>(w.values.rows());
  const auto cols = static_cast<std::size_t>(w.values.cols());
  Tensor t({rows, cols});
  auto data = t.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      data[r * cols + c] =
          static_cast<float>(w.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }
  }
  return t;
}

void write_structure_png(const StructureMap& s, const std::filesystem::path& path) {
  std::vector<std::uint8_t> mask(s.dims.height * s.dims.width);
  for (std::size_t y = 0; y < s.dims.height; ++y) {
    for (std::size_t x = 0; x < s.dims.width; ++x) {
      mask[y * s.dims.width + x] =
          s.bits(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x));
    }
  }
  write_png_1bit(s.dims.height, s.dims.width, mask, path);
}

}  // namespace cvd
