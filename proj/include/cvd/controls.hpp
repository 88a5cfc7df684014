// Structural and textural cross-view controls: the binary structure map, the
// per-pixel panorama -> satellite texture mapping, and the distance-weighted
// token matrix M used by the cross-view attention.
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cvd/voxel.hpp"

namespace cvd {

/// 1 where the pixel-center ray hits the scene, 0 for sky. rows = H_pano.
struct StructureMap {
  PanoramaDims dims;
  Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> bits;
};

struct TextureMapping {
  PanoramaDims dims;
  std::vector<std::optional<SatCoord<double>>> entries;  // row-major, H_pano x W_pano

  const std::optional<SatCoord<double>>& at(std::size_t row, std::size_t col) const {
    return entries[row * dims.width + col];
  }
};

struct GridDims {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t count() const { return rows * cols; }
};

/// Value filled into rows whose control block never hits the scene.
inline constexpr double kUnmappedWeight = 0.25;
/// Default sigmoid steepness per full-resolution satellite pixel.
inline constexpr double kDefaultBeta = 0.05;

/// rows = control tokens (h_p * w_p, row-major), cols = satellite tokens
/// (h_s * w_s, row-major). Entries lie in [0, 0.5].
struct WeightMatrix {
  GridDims control;
  GridDims satellite_tokens;
  GridDims satellite_pixels;
  double beta = kDefaultBeta;
  Eigen::MatrixXd values;
  std::vector<std::optional<SatCoord<double>>> pooled;  // p* per control token
};

StructureMap build_structure_map(const VoxelGrid& grid, const CameraPose& pose,
                                 const PanoramaDims& dims);

TextureMapping build_texture_mapping(const VoxelGrid& grid, const CameraPose& pose,
                                     const PanoramaDims& dims);

/// Both controls from one pass of ray casts.
std::pair<StructureMap, TextureMapping> build_controls(const VoxelGrid& grid,
                                                       const CameraPose& pose,
                                                       const PanoramaDims& dims);

/// Center of satellite token j in full-resolution satellite pixels.
SatCoord<double> token_center(std::size_t j, const GridDims& tokens, const GridDims& pixels);

/// Block-mean pools the mapping to control resolution (NONE entries ignored),
/// then M_j = 1 - sigmoid(beta * |p* - p_j|) over satellite token centers.
/// Rows whose block is entirely unmapped are filled with kUnmappedWeight.
WeightMatrix build_weight_matrix(const TextureMapping& mapping, const GridDims& control,
                                 const GridDims& satellite_tokens,
                                 const GridDims& satellite_pixels, double beta = kDefaultBeta);

/// 1 - sigmoid(x), evaluated without overflow.
inline double one_minus_sigmoid(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

struct ContinuityReport {
  std::size_t rows = 0;
  std::size_t differing_bits = 0;
  double bit_difference_rate = 0.0;
  std::size_t compared_coordinates = 0;
  double max_coordinate_discrepancy = 0.0;  // satellite pixels
};

/// Compares panorama columns 0 and W-1, which straddle the azimuth seam.
ContinuityReport check_wrap_continuity(const StructureMap& s, const TextureMapping& m);

/// H x W x 2 tensor of (x_sate, y_sate); unmapped pixels hold -1.
Tensor mapping_to_tensor(const TextureMapping& m);
Tensor weights_to_tensor(const WeightMatrix& w);
void write_structure_png(const StructureMap& s, const std::filesystem::path& path);

}  // namespace cvd
