// Equirectangular panorama <-> spherical angles <-> satellite plane.
//
// Frame: satellite pixel coordinates, x = column (east), y = row (south),
// z = up in voxel units. A panorama pixel (x_pano, y_pano) has
//
//   theta = pi/2 - y_pano * pi / H_pano         (elevation)
//   phi   = x_pano * 2 pi / W_pano - pi         (azimuth)
//
// and its ray of length R from (x_cen, y_cen) lands on
//
//   x_sate = x_cen + R cos(theta) cos(phi)
//   y_sate = y_cen - R cos(theta) sin(phi)
//
// so phi = 0 looks along +x and phi = +pi/2 along -y (decreasing rows).
// Pixel sampling uses pixel centers (i + 0.5, j + 0.5).
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>

#include "cvd/core.hpp"

namespace cvd {

struct PanoramaDims {
  std::size_t height = 0;
  std::size_t width = 0;

  /// Full 360 x 180 frame requires width == 2 * height.
  static PanoramaDims full_frame(std::size_t height) { return {height, 2 * height}; }

  void validate() const {
    if (height == 0 || width != 2 * height) {
      throw Error(Errc::InvalidArgument, "panorama must satisfy width == 2 * height, got " +
                                             std::to_string(height) + "x" + std::to_string(width));
    }
  }
  friend bool operator==(const PanoramaDims&, const PanoramaDims&) = default;
};

template <typename Scalar>
struct SphericalRay {
  Scalar theta{};  // elevation, [-pi/2, pi/2]
  Scalar phi{};    // azimuth, [-pi, pi]
};

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

/// Continuous satellite-pixel coordinate (x = column, y = row).
template <typename Scalar>
using SatCoord = Vec2<Scalar>;

template <typename Scalar>
SphericalRay<Scalar> pano_to_angles(Scalar x_pano, Scalar y_pano, const PanoramaDims& dims) {
  const Scalar w = static_cast<Scalar>(dims.width);
  const Scalar h = static_cast<Scalar>(dims.height);
  if (!(x_pano >= Scalar(0) && x_pano <= w && y_pano >= Scalar(0) && y_pano <= h)) {
    throw Error(Errc::OutOfFrame, "panorama coordinate outside the frame");
  }
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  return {pi / 2 - y_pano * pi / h, x_pano * 2 * pi / w - pi};
}

/// Ray through the center of pixel (column, row).
template <typename Scalar>
SphericalRay<Scalar> pixel_ray(std::size_t column, std::size_t row, const PanoramaDims& dims) {
  return pano_to_angles(static_cast<Scalar>(column) + Scalar(0.5),
                        static_cast<Scalar>(row) + Scalar(0.5), dims);
}

/// Inverse of pano_to_angles; returns (x_pano, y_pano).
template <typename Scalar>
Vec2<Scalar> angles_to_pano(const SphericalRay<Scalar>& ray, const PanoramaDims& dims) {
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar w = static_cast<Scalar>(dims.width);
  const Scalar h = static_cast<Scalar>(dims.height);
  return {(ray.phi + pi) * w / (2 * pi), (pi / 2 - ray.theta) * h / pi};
}

/// Unit direction (cos t cos p, -cos t sin p, sin t).
template <typename Scalar>
Vec3<Scalar> ray_direction(const SphericalRay<Scalar>& ray) {
  using std::cos;
  using std::sin;
  const Scalar ct = cos(ray.theta);
  return {ct * cos(ray.phi), -ct * sin(ray.phi), sin(ray.theta)};
}

template <typename Scalar>
SatCoord<Scalar> angles_to_satellite(const SphericalRay<Scalar>& ray, Scalar range,
                                     const Vec2<Scalar>& center) {
  using std::cos;
  using std::sin;
  const Scalar horizontal = range * cos(ray.theta);
  return {center.x() + horizontal * cos(ray.phi), center.y() - horizontal * sin(ray.phi)};
}

}  // namespace cvd
