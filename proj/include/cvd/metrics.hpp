// Classical image-quality metrics on [0,1] images and KID over feature sets.
#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "cvd/core.hpp"

namespace cvd {

inline constexpr double kPsnrCap = 100.0;

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Normalized 1-D Gaussian taps.
Eigen::VectorXd gaussian_kernel(int size, double sigma);

/// Mean SSIM over all fully-contained windows of the grayscale (BT.601) images.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

/// 10 log10(1 / MSE); identical images return kPsnrCap.
double psnr(const Image& a, const Image& b);

/// PSNR between gradient-magnitude maps |dx| + |dy| (forward differences,
/// zero at the last row/column) of the grayscale images; capped like psnr.
double sharpness_difference(const Image& a, const Image& b);

/// Gradient map used by sharpness_difference.
Eigen::ArrayXXd gradient_magnitude(const Image& gray);

/// n x d feature rows.
using FeatureSet = Eigen::MatrixXd;

/// (x^T y / d + 1)^3.
double kid_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Unbiased squared MMD with the cubic polynomial kernel. Equal-size sets use
/// the paired U-statistic (cross terms i != j), so identical sets score 0;
/// unequal sizes use the two-sample estimator with the full cross term.
double kid(const FeatureSet& fa, const FeatureSet& fb);

FeatureSet features_from_tensor(const Tensor& t);

struct ImageScores {
  std::string name;
  double ssim = 0, psnr_db = 0, sd = 0;
};

struct MetricReport {
  std::vector<ImageScores> per_image;
  double mean_ssim = 0, mean_psnr_db = 0, mean_sd = 0;
  std::optional<double> kid;
};

ImageScores score_pair(const std::string& name, const Image& pred, const Image& gt);
MetricReport aggregate(std::vector<ImageScores> scores);

}  // namespace cvd
