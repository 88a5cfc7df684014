// Enhanced cross-view attention z = softmax(A .* M) V with linear patch
// encoders, analytic backward pass and a finite-difference gradient check.
//
// Q holds panorama tokens (structure map side), K and V satellite tokens,
// M the distance weights from the texture mapping. The affinity is
// A = Q K^T / sqrt(d) unless scaling is disabled.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "cvd/core.hpp"

namespace cvd {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Linear patch embedding: a flattened (py, px, c) patch times `weights`, plus `bias`.
template <typename Scalar>
struct PatchEncoder {
  std::size_t patch_size = 1;
  std::size_t channels = 1;
  Matrix<Scalar> weights;  // (patch_size^2 * channels) x d
  RowVector<Scalar> bias;  // 1 x d

  Eigen::Index dim() const { return weights.cols(); }

  void validate() const {
    if (patch_size == 0) throw Error(Errc::InvalidArgument, "patch_size must be >= 1");
    if (weights.cols() < 1 || bias.cols() != weights.cols()) {
      throw Error(Errc::DimensionMismatch, "encoder bias/weights width mismatch");
    }
    if (static_cast<std::size_t>(weights.rows()) != patch_size * patch_size * channels) {
      throw Error(Errc::DimensionMismatch, "encoder weights need patch_size^2 * channels rows");
    }
    if (!weights.allFinite() || !bias.allFinite()) {
      throw Error(Errc::InvalidArgument, "encoder parameters must be finite");
    }
  }
};

/// Tokens in row-major patch order, (H/p * W/p) x d.
template <typename Scalar>
Matrix<Scalar> encode(const Image& img, const PatchEncoder<Scalar>& enc) {
  enc.validate();
  const std::size_t p = enc.patch_size;
  if (img.channels() != enc.channels) {
    throw Error(Errc::DimensionMismatch, "image channels do not match the encoder");
  }
  if (img.height() % p != 0 || img.width() % p != 0) {
    throw Error(Errc::DimensionMismatch, "image dims must be divisible by patch_size " +
                                             std::to_string(p));
  }
  const std::size_t rows = img.height() / p;
  const std::size_t cols = img.width() / p;
  const std::size_t c = img.channels();
  Matrix<Scalar> patches(static_cast<Eigen::Index>(rows * cols),
                         static_cast<Eigen::Index>(p * p * c));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t q = 0; q < cols; ++q) {
      const auto token = static_cast<Eigen::Index>(r * cols + q);
      Eigen::Index k = 0;
      for (std::size_t py = 0; py < p; ++py) {
        for (std::size_t px = 0; px < p; ++px) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            patches(token, k++) = static_cast<Scalar>(img.at(r * p + py, q * p + px, ch));
          }
        }
      }
    }
  }
  return (patches * enc.weights).rowwise() + enc.bias;
}

template <typename Scalar>
struct ProjectionSet {
  Matrix<Scalar> wq, wk, wv;  // d x d, applied on the right of token rows

  void validate(Eigen::Index d) const {
    for (const auto* w : {&wq, &wk, &wv}) {
      if (w->rows() != d || w->cols() != d) {
        throw Error(Errc::DimensionMismatch, "projection matrices must be d x d");
      }
      if (!w->allFinite()) throw Error(Errc::InvalidArgument, "projection must be finite");
    }
  }
};

template <typename Scalar>
struct AttentionInputs {
  Matrix<Scalar> q;  // (h_p w_p) x d
  Matrix<Scalar> k;  // (h_s w_s) x d
  Matrix<Scalar> v;  // (h_s w_s) x d_v
  Matrix<Scalar> m;  // (h_p w_p) x (h_s w_s)

  void validate() const {
    if (q.rows() < 1 || q.cols() < 1 || k.rows() < 1) {
      throw Error(Errc::DimensionMismatch, "attention operands must be non-empty");
    }
    if (k.cols() != q.cols()) throw Error(Errc::DimensionMismatch, "Q and K feature dims differ");
    if (v.rows() != k.rows()) throw Error(Errc::DimensionMismatch, "K and V token counts differ");
    if (m.rows() != q.rows() || m.cols() != k.rows()) {
      throw Error(Errc::DimensionMismatch,
                  "M must be " + std::to_string(q.rows()) + " x " + std::to_string(k.rows()));
    }
  }
};

/// Q = E_pano(S) W_q, K = E_sate(I) W_k, V = E_sate(I) W_v.
template <typename Scalar>
AttentionInputs<Scalar> project(const Matrix<Scalar>& pano_tokens, const Matrix<Scalar>& sat_tokens,
                                const ProjectionSet<Scalar>& proj, Matrix<Scalar> m) {
  proj.validate(pano_tokens.cols());
  if (sat_tokens.cols() != pano_tokens.cols()) {
    throw Error(Errc::DimensionMismatch, "panorama and satellite embeddings differ in width");
  }
  AttentionInputs<Scalar> in{pano_tokens * proj.wq, sat_tokens * proj.wk, sat_tokens * proj.wv,
                             std::move(m)};
  in.validate();
  return in;
}

struct AttentionOptions {
  bool scale_affinity = true;  // divide Q K^T by sqrt(d)
};

template <typename Scalar>
Scalar affinity_scale(Eigen::Index d, const AttentionOptions& opt) {
  using std::sqrt;
  return opt.scale_affinity ? Scalar(1) / sqrt(static_cast<Scalar>(d)) : Scalar(1);
}

/// Row-wise softmax with max subtraction.
template <typename Derived>
Matrix<typename Derived::Scalar> row_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const Scalar peak = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - peak).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> affinity(const AttentionInputs<Scalar>& in, const AttentionOptions& opt = {}) {
  return (in.q * in.k.transpose()) * affinity_scale<Scalar>(in.q.cols(), opt);
}

/// softmax(A .* M), the attention probabilities.
template <typename Scalar>
Matrix<Scalar> attention_weights(const AttentionInputs<Scalar>& in, const AttentionOptions& opt = {}) {
  in.validate();
  return row_softmax(affinity(in, opt).cwiseProduct(in.m));
}

template <typename Scalar>
Matrix<Scalar> cross_view_attention(const AttentionInputs<Scalar>& in,
                                    const AttentionOptions& opt = {}) {
  return attention_weights(in, opt) * in.v;
}

/// F_pano: z reshaped to (h_p, w_p, d).
template <typename Scalar>
Tensor to_panorama_feature(const Matrix<Scalar>& z, std::size_t h_p, std::size_t w_p) {
  if (static_cast<std::size_t>(z.rows()) != h_p * w_p) {
    throw Error(Errc::DimensionMismatch, "z rows must equal h_p * w_p");
  }
  const auto d = static_cast<std::size_t>(z.cols());
  Tensor t({h_p, w_p, d});
  for (std::size_t i = 0; i < h_p * w_p; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      t[i * d + c] = static_cast<float>(z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
    }
  }
  return t;
}

template <typename Scalar>
struct AttentionGrads {
  Matrix<Scalar> q, k, v, m;
};

/// Vector-Jacobian product of cross_view_attention for upstream gradient dz.
template <typename Scalar>
AttentionGrads<Scalar> attention_backward(const AttentionInputs<Scalar>& in,
                                          const Matrix<Scalar>& dz,
                                          const AttentionOptions& opt = {}) {
  in.validate();
  const Scalar s = affinity_scale<Scalar>(in.q.cols(), opt);
  const Matrix<Scalar> a = (in.q * in.k.transpose()) * s;
  const Matrix<Scalar> p = row_softmax(a.cwiseProduct(in.m));

  AttentionGrads<Scalar> g;
  g.v = p.transpose() * dz;
  const Matrix<Scalar> dp = dz * in.v.transpose();
  // softmax Jacobian: dS = P .* (dP - rowsum(dP .* P))
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inner = dp.cwiseProduct(p).rowwise().sum();
  const Matrix<Scalar> ds = p.cwiseProduct(dp.colwise() - inner);
  g.m = ds.cwiseProduct(a);
  const Matrix<Scalar> da = ds.cwiseProduct(in.m);
  g.q = s * (da * in.k);
  g.k = s * (da.transpose() * in.q);
  return g;
}

struct GradCheckReport {
  double q = 0, k = 0, v = 0, m = 0;
  double max() const { return std::max({q, k, v, m}); }
};

/// Loss = sum(z^2). Central differences with the given step; per-element
/// relative error |analytic - numeric| / max(|analytic|, 1e-8).
inline GradCheckReport attention_grad_check(const AttentionInputs<double>& in,
                                            const AttentionOptions& opt = {}, double step = 1e-5) {
  auto loss = [&](const AttentionInputs<double>& x) {
    return cross_view_attention(x, opt).squaredNorm();
  };
  const Matrix<double> z = cross_view_attention(in, opt);
  const AttentionGrads<double> g = attention_backward<double>(in, 2.0 * z, opt);

  auto check = [&](Matrix<double> AttentionInputs<double>::*field, const Matrix<double>& analytic) {
    double worst = 0.0;
    AttentionInputs<double> probe = in;
    Matrix<double>& target = probe.*field;
    for (Eigen::Index i = 0; i < target.size(); ++i) {
      const double orig = target.data()[i];
      target.data()[i] = orig + step;
      const double up = loss(probe);
      target.data()[i] = orig - step;
      const double down = loss(probe);
      target.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.data()[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(std::abs(a), 1e-8));
    }
    return worst;
  };

  GradCheckReport r;
  r.q = check(&AttentionInputs<double>::q, g.q);
  r.k = check(&AttentionInputs<double>::k, g.k);
  r.v = check(&AttentionInputs<double>::v, g.v);
  r.m = check(&AttentionInputs<double>::m, g.m);
  return r;
}

/// Shannon entropy (nats) of each attention row.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row_entropy(const Matrix<Scalar>& probs) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> h(probs.rows());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Scalar acc = 0;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      const Scalar p = probs(r, c);
      if (p > 0) acc -= p * std::log(p);
    }
    h(r) = acc;
  }
  return h;
}

}  // namespace cvd
