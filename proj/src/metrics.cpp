#include "cvd/metrics.hpp"

#include <cmath>

namespace cvd {

namespace {

using Plane = Eigen::ArrayXXd;  // rows = image rows

void require_same_dims(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels()) {
    throw Error(Errc::DimensionMismatch,
                std::to_string(a.height()) + "x" + std::to_string(a.width()) + "x" +
                    std::to_string(a.channels()) + " vs " + std::to_string(b.height()) + "x" +
                    std::to_string(b.width()) + "x" + std::to_string(b.channels()));
  }
}

Plane to_plane(const Image& img) {
  const Image g = img.to_gray();
  Plane p(static_cast<Eigen::Index>(g.height()), static_cast<Eigen::Index>(g.width()));
  for (std::size_t y = 0; y < g.height(); ++y) {
    for (std::size_t x = 0; x < g.width(); ++x) {
      p(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = g.at(y, x);
    }
  }
  return p;
}

// Separable "valid" correlation: output is (rows - k + 1) x (cols - k + 1).
Plane filter_valid(const Plane& in, const Eigen::VectorXd& taps) {
  const Eigen::Index k = taps.size();
  const Eigen::Index rows = in.rows() - k + 1;
  const Eigen::Index cols = in.cols() - k + 1;
  Plane horiz(in.rows(), cols);
  for (Eigen::Index y = 0; y < in.rows(); ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < k; ++i) acc += taps(i) * in(y, x + i);
      horiz(y, x) = acc;
    }
  }
  Plane out(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < k; ++i) acc += taps(i) * horiz(y + i, x);
      out(y, x) = acc;
    }
  }
  return out;
}

double capped_psnr(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace

Eigen::VectorXd gaussian_kernel(int size, double sigma) {
  Eigen::VectorXd taps(size);
  const double mid = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - mid;
    taps(i) = std::exp(-(d * d) / (2.0 * sigma * sigma));
  }
  return taps / taps.sum();
}

double ssim(const Image& a, const Image& b, const SsimParams& params) {
  require_same_dims(a, b);
  if (a.height() < std::size_t(params.window) || a.width() < std::size_t(params.window)) {
    throw Error(Errc::DimensionMismatch, "images smaller than the SSIM window");
  }
  const Plane x = to_plane(a);
  const Plane y = to_plane(b);
  const Eigen::VectorXd taps = gaussian_kernel(params.window, params.sigma);
  const double c1 = params.k1 * params.k1;
  const double c2 = params.k2 * params.k2;

  const Plane mx = filter_valid(x, taps);
  const Plane my = filter_valid(y, taps);
  const Plane sxx = filter_valid(x * x, taps) - mx * mx;
  const Plane syy = filter_valid(y * y, taps) - my * my;
  const Plane sxy = filter_valid(x * y, taps) - mx * my;

  const Plane num = (2.0 * mx * my + c1) * (2.0 * sxy + c2);
  const Plane den = (mx * mx + my * my + c1) * (sxx + syy + c2);
  return (num / den).mean();
}

double psnr(const Image& a, const Image& b) {
  require_same_dims(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels().size(); ++i) {
    const double d = double(a.pixels()[i]) - double(b.pixels()[i]);
    sum += d * d;
  }
  return capped_psnr(sum / double(a.pixels().size()));
}

Eigen::ArrayXXd gradient_magnitude(const Image& img) {
  const Plane p = to_plane(img);
  Plane g = Plane::Zero(p.rows(), p.cols());
  for (Eigen::Index y = 0; y < p.rows(); ++y) {
    for (Eigen::Index x = 0; x < p.cols(); ++x) {
      const double dx = x + 1 < p.cols() ? p(y, x + 1) - p(y, x) : 0.0;
      const double dy = y + 1 < p.rows() ? p(y + 1, x) - p(y, x) : 0.0;
      g(y, x) = std::abs(dx) + std::abs(dy);
    }
  }
  return g;
}

double sharpness_difference(const Image& a, const Image& b) {
  require_same_dims(a, b);
  const Plane diff = gradient_magnitude(a) - gradient_magnitude(b);
  return capped_psnr(diff.square().mean());
}

double kid_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const double v = x.dot(y) / double(x.size()) + 1.0;
  return v * v * v;
}

double kid(const FeatureSet& fa, const FeatureSet& fb) {
  if (fa.cols() != fb.cols()) throw Error(Errc::DimensionMismatch, "feature dims differ");
  if (fa.rows() < 2 || fb.rows() < 2) throw Error(Errc::TooFewSamples, "need n >= 2 per set");
  const double d = double(fa.cols());
  auto gram = [d](const FeatureSet& u, const FeatureSet& v) {
    return ((u * v.transpose()).array() / d + 1.0).cube().matrix().eval();
  };
  const Eigen::MatrixXd kxx = gram(fa, fa);
  const Eigen::MatrixXd kyy = gram(fb, fb);
  const Eigen::MatrixXd kxy = gram(fa, fb);
  const double m = double(fa.rows());
  const double n = double(fb.rows());
  const double xx = (kxx.sum() - kxx.trace()) / (m * (m - 1));
  const double yy = (kyy.sum() - kyy.trace()) / (n * (n - 1));
  if (fa.rows() == fb.rows()) {
    return xx + yy - 2.0 * (kxy.sum() - kxy.trace()) / (m * (m - 1));
  }
  return xx + yy - 2.0 * kxy.sum() / (m * n);
}

FeatureSet features_from_tensor(const Tensor& t) {
  if (t.rank() != 2) throw Error(Errc::ShapeMismatch, "feature tensors are (n, d)");
  const auto n = static_cast<Eigen::Index>(t.dims()[0]);
  const auto d = static_cast<Eigen::Index>(t.dims()[1]);
  FeatureSet f(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) f(i, j) = t[static_cast<std::size_t>(i * d + j)];
  }
  return f;
}

ImageScores score_pair(const std::string& name, const Image& pred, const Image& gt) {
  return {name, ssim(pred, gt), psnr(pred, gt), sharpness_difference(pred, gt)};
}

MetricReport aggregate(std::vector<ImageScores> scores) {
  MetricReport r;
  r.per_image = std::move(scores);
  if (r.per_image.empty()) return r;
  for (const auto& s : r.per_image) {
    r.mean_ssim += s.ssim;
    r.mean_psnr_db += s.psnr_db;
    r.mean_sd += s.sd;
  }
  const double n = double(r.per_image.size());
  r.mean_ssim /= n;
  r.mean_psnr_db /= n;
  r.mean_sd /= n;
  return r;
}

}  // namespace cvd
