#include "cvd/voxel.hpp"

#include <cmath>
#include <limits>

#include "cvd/image_io.hpp"

namespace cvd {

HeightField load_height_field(const std::filesystem::path& path, double png_scale) {
  if (!std::filesystem::exists(path)) throw Error(Errc::MissingFile, path.string());
  HeightField h;
  if (path.extension() == ".cvdf") {
    const Tensor t = read_tensor(path);
    const auto& d = t.dims();
    if (!(t.rank() == 2 || (t.rank() == 3 && d[2] == 1))) {
      throw Error(Errc::ShapeMismatch, path.string() + ": height tensor must be (H, W) or (H, W, 1)");
    }
    h.values.resize(static_cast<Eigen::Index>(d[0]), static_cast<Eigen::Index>(d[1]));
    for (std::size_t y = 0; y < d[0]; ++y) {
      for (std::size_t x = 0; x < d[1]; ++x) {
        h.values(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = t[y * d[1] + x];
      }
    }
    return h;
  }
  const Gray16 raw = read_png16(path);
  h.values.resize(static_cast<Eigen::Index>(raw.height), static_cast<Eigen::Index>(raw.width));
  for (std::size_t y = 0; y < raw.height; ++y) {
    for (std::size_t x = 0; x < raw.width; ++x) {
      h.values(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) =
          raw.values[y * raw.width + x] * png_scale;
    }
  }
  return h;
}

VoxelGrid::VoxelGrid(Eigen::ArrayXXi tops, int nz, double meters_per_voxel, int ground_level)
    : tops_(std::move(tops)), nz_(nz), meters_per_voxel_(meters_per_voxel),
      ground_level_(ground_level) {
  if (tops_.size() == 0) throw Error(Errc::InvalidArgument, "empty voxel footprint");
  if (nz_ < 2) throw Error(Errc::InvalidArgument, "nz must be >= 2");
  if (!(meters_per_voxel_ > 0.0)) throw Error(Errc::InvalidArgument, "meters_per_voxel must be > 0");
  if (ground_level_ < 0 || ground_level_ >= nz_ - 1) {
    throw Error(Errc::InvalidArgument, "ground_level must leave at least one free layer");
  }
  if ((tops_ < ground_level_).any() || (tops_ >= nz_).any()) {
    throw Error(Errc::InvalidArgument, "column tops must lie in [ground_level, nz)");
  }
}

double VoxelGrid::diagonal() const noexcept {
  const double x = nx(), y = ny(), z = nz_;
  return std::sqrt(x * x + y * y + z * z);
}

VoxelGrid grid_from_height(const HeightField& h, double meters_per_voxel, int nz) {
  if (!(meters_per_voxel > 0.0)) throw Error(Errc::InvalidArgument, "meters_per_voxel must be > 0");
  if (nz < 2) throw Error(Errc::InvalidArgument, "nz must be >= 2");
  constexpr int ground = 0;
  Eigen::ArrayXXi tops(h.rows(), h.cols());
  for (Eigen::Index y = 0; y < h.rows(); ++y) {
    for (Eigen::Index x = 0; x < h.cols(); ++x) {
      const double v = h.values(y, x);
      if (!std::isfinite(v)) {
        throw Error(Errc::NonFiniteHeight,
                    "height at row " + std::to_string(y) + ", col " + std::to_string(x));
      }
      if (v < 0.0) throw Error(Errc::InvalidArgument, "negative height");
      const double cells = std::round(v / meters_per_voxel);
      tops(y, x) = static_cast<int>(std::min<double>(ground + cells, nz - 1));
    }
  }
  return VoxelGrid(std::move(tops), nz, meters_per_voxel, ground);
}

void CameraPose::validate(const VoxelGrid& grid) const {
  const Vec3<double> e = eye();
  const int ix = static_cast<int>(std::floor(e.x()));
  const int iy = static_cast<int>(std::floor(e.y()));
  if (!grid.in_bounds(ix, iy, z_cam)) throw Error(Errc::InvalidArgument, "camera outside the grid");
  if (z_cam <= grid.ground_level()) throw Error(Errc::InvalidArgument, "camera below ground");
  if (grid.occupied(ix, iy, z_cam)) throw Error(Errc::InvalidArgument, "camera cell is occupied");
}

CameraPose default_pose(const VoxelGrid& grid, double camera_height_m) {
  CameraPose pose;
  // Center of the central cell, so the eye never sits on a cell boundary.
  pose.x_cen = grid.nx() / 2 + 0.5;
  pose.y_cen = grid.ny() / 2 + 0.5;
  const auto lift = static_cast<int>(std::lround(camera_height_m / grid.meters_per_voxel()));
  pose.z_cam = std::min(grid.ground_level() + std::max(lift, 1), grid.nz() - 1);
  return pose;
}

RayHit cast_ray(const VoxelGrid& grid, const CameraPose& pose, const SphericalRay<double>& ray,
                double max_range) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (max_range <= 0.0) max_range = grid.diagonal();

  const Vec3<double> origin = pose.eye();
  const Vec3<double> dir = ray_direction(ray);

  Eigen::Vector3i cell(static_cast<int>(std::floor(origin.x())),
                       static_cast<int>(std::floor(origin.y())),
                       static_cast<int>(std::floor(origin.z())));
  if (!grid.in_bounds(cell.x(), cell.y(), cell.z())) return std::nullopt;
  if (grid.occupied(cell.x(), cell.y(), cell.z())) return Hit{0.0, cell};

  Eigen::Vector3i step;
  Vec3<double> t_max;
  Vec3<double> t_delta;
  for (int a = 0; a < 3; ++a) {
    // |d| below this is numerically axis-parallel; cos(pi/2) is ~6e-17, not 0.
    if (std::abs(dir[a]) < 1e-15) {
      step[a] = 0;
      t_max[a] = inf;
      t_delta[a] = inf;
      continue;
    }
    step[a] = dir[a] > 0 ? 1 : -1;
    const double boundary = dir[a] > 0 ? cell[a] + 1.0 : static_cast<double>(cell[a]);
    t_max[a] = (boundary - origin[a]) / dir[a];
    t_delta[a] = 1.0 / std::abs(dir[a]);
  }

  for (;;) {
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    const double t_enter = t_max[axis];
    if (!(t_enter <= max_range)) return std::nullopt;
    cell[axis] += step[axis];
    if (!grid.in_bounds(cell.x(), cell.y(), cell.z())) return std::nullopt;
    if (grid.occupied(cell.x(), cell.y(), cell.z())) return Hit{t_enter, cell};
    t_max[axis] += t_delta[axis];
  }
}

}  // namespace cvd
