// Occupancy voxel grid built from a satellite height field, and first-hit
// ray casting through it.
#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <optional>

#include "cvd/geometry.hpp"

namespace cvd {

/// Meters above ground per satellite pixel; rows = satellite rows (y),
/// cols = satellite columns (x).
struct HeightField {
  Eigen::ArrayXXd values;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

/// Loads a height map from a single-channel 16-bit PNG (meters = value *
/// scale) or a CVDF tensor of shape (H, W) or (H, W, 1) holding meters.
HeightField load_height_field(const std::filesystem::path& path, double png_scale = 1.0);

/// Voxel cell (ix, iy, iz) spans [ix, ix+1] x [iy, iy+1] x [iz, iz+1]; ix runs
/// along satellite columns, iy along satellite rows. Columns are solid from
/// z = 0 up to `top(iy, ix)`; the layer at `ground_level` is always solid.
class VoxelGrid {
 public:
  VoxelGrid(Eigen::ArrayXXi tops, int nz, double meters_per_voxel, int ground_level = 0);

  int nx() const noexcept { return static_cast<int>(tops_.cols()); }
  int ny() const noexcept { return static_cast<int>(tops_.rows()); }
  int nz() const noexcept { return nz_; }
  int ground_level() const noexcept { return ground_level_; }
  double meters_per_voxel() const noexcept { return meters_per_voxel_; }

  /// Highest occupied iz of column (ix, iy).
  int top(int ix, int iy) const { return tops_(iy, ix); }
  const Eigen::ArrayXXi& tops() const noexcept { return tops_; }

  bool in_bounds(int ix, int iy, int iz) const noexcept {
    return ix >= 0 && iy >= 0 && iz >= 0 && ix < nx() && iy < ny() && iz < nz_;
  }
  bool occupied(int ix, int iy, int iz) const noexcept {
    return in_bounds(ix, iy, iz) && iz <= tops_(iy, ix);
  }

  double diagonal() const noexcept;

 private:
  Eigen::ArrayXXi tops_;
  int nz_;
  double meters_per_voxel_;
  int ground_level_;
};

/// Column (ix, iy) is occupied through ground_level + round(h / mpv), clamped to nz - 1.
VoxelGrid grid_from_height(const HeightField& h, double meters_per_voxel, int nz);

/// Camera at continuous horizontal position (x_cen, y_cen); the eye sits at
/// the center of voxel layer z_cam, i.e. at z = z_cam + 0.5.
struct CameraPose {
  double x_cen = 0.0;
  double y_cen = 0.0;
  int z_cam = 1;

  Vec3<double> eye() const { return {x_cen, y_cen, z_cam + 0.5}; }
  Vec2<double> center() const { return {x_cen, y_cen}; }

  /// Throws InvalidArgument unless the eye cell is inside and unoccupied and
  /// z_cam > ground_level.
  void validate(const VoxelGrid& grid) const;
};

/// Camera at the center of the central cell, at ground_level + round(camera_height_m / mpv).
CameraPose default_pose(const VoxelGrid& grid, double camera_height_m = 2.5);

struct Hit {
  double range = 0.0;  // distance from the eye to the hit cell's entry face
  Eigen::Vector3i cell = Eigen::Vector3i::Zero();
};

/// Empty when the ray leaves the grid or exceeds max_range without hitting.
using RayHit = std::optional<Hit>;

/// Exact grid marching (every pierced cell visited once, in order).
/// max_range <= 0 selects the grid diagonal.
RayHit cast_ray(const VoxelGrid& grid, const CameraPose& pose, const SphericalRay<double>& ray,
                double max_range = 0.0);

}  // namespace cvd
