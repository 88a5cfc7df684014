// Diffusion scheduler mathematics on flattened samples: noise schedules,
// closed-form forward noising, the simplified epsilon loss, the ancestral
// reverse step, deterministic DDIM sampling, and a desk-scale linear noise
// predictor trained by gradient descent.
#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "cvd/attention.hpp"
#include "cvd/core.hpp"

namespace cvd {

template <typename Scalar>
using Sample = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// beta_t, alpha_t = 1 - beta_t and alpha_bar_t = prod_{s<=t} alpha_s, for
/// t = 1..T (1-based accessors).
class NoiseSchedule {
 public:
  explicit NoiseSchedule(Eigen::ArrayXd betas) : betas_(std::move(betas)) {
    if (betas_.size() < 1) throw Error(Errc::InvalidRange, "schedule needs T >= 1");
    if (!((betas_ > 0.0).all() && (betas_ < 1.0).all())) {
      throw Error(Errc::InvalidRange, "every beta must lie in (0, 1)");
    }
    alphas_ = 1.0 - betas_;
    alpha_bars_.resize(betas_.size());
    double acc = 1.0;
    for (Eigen::Index i = 0; i < betas_.size(); ++i) {
      acc *= alphas_(i);
      alpha_bars_(i) = acc;
    }
  }

  std::size_t steps() const noexcept { return static_cast<std::size_t>(betas_.size()); }
  double beta(std::size_t t) const { return betas_(index(t)); }
  double alpha(std::size_t t) const { return alphas_(index(t)); }
  /// alpha_bar(0) == 1 by convention (clean data).
  double alpha_bar(std::size_t t) const { return t == 0 ? 1.0 : alpha_bars_(index(t)); }

  const Eigen::ArrayXd& betas() const noexcept { return betas_; }
  const Eigen::ArrayXd& alphas() const noexcept { return alphas_; }
  const Eigen::ArrayXd& alpha_bars() const noexcept { return alpha_bars_; }

  void check_step(std::size_t t) const {
    if (t < 1 || t > steps()) {
      throw Error(Errc::InvalidRange,
                  "timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
    }
  }

 private:
  Eigen::Index index(std::size_t t) const {
    check_step(t);
    return static_cast<Eigen::Index>(t - 1);
  }

  Eigen::ArrayXd betas_;
  Eigen::ArrayXd alphas_;
  Eigen::ArrayXd alpha_bars_;
};

/// Betas linearly spaced from beta_start to beta_end inclusive.
inline NoiseSchedule linear_schedule(std::size_t steps, double beta_start, double beta_end) {
  if (steps < 1) throw Error(Errc::InvalidRange, "T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw Error(Errc::InvalidRange, "require 0 < beta_start <= beta_end < 1");
  }
  Eigen::ArrayXd betas(static_cast<Eigen::Index>(steps));
  for (std::size_t i = 0; i < steps; ++i) {
    const double f = steps == 1 ? 0.0 : double(i) / double(steps - 1);
    betas(static_cast<Eigen::Index>(i)) = beta_start + f * (beta_end - beta_start);
  }
  return NoiseSchedule(std::move(betas));
}

/// epsilon_phi(x_t, t, cond). `cond` is the fused panorama feature z, or null.
template <typename Scalar>
using NoisePredictor =
    std::function<Sample<Scalar>(const Sample<Scalar>& x_t, std::size_t t, const Matrix<Scalar>* cond)>;

namespace detail {
template <typename Scalar>
void require_same_shape(const Sample<Scalar>& a, const Sample<Scalar>& b, const char* what) {
  if (a.size() != b.size()) {
    throw Error(Errc::ShapeMismatch, std::string(what) + ": " + std::to_string(a.size()) +
                                         " vs " + std::to_string(b.size()) + " elements");
  }
}
}  // namespace detail

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
template <typename Scalar>
Sample<Scalar> forward_sample(const Sample<Scalar>& x0, std::size_t t, const Sample<Scalar>& eps,
                              const NoiseSchedule& sched) {
  detail::require_same_shape(x0, eps, "forward_sample");
  const double ab = sched.alpha_bar(t);
  sched.check_step(t);
  return Scalar(std::sqrt(ab)) * x0 + Scalar(std::sqrt(1.0 - ab)) * eps;
}

/// Mean over elements of (epsilon_phi(x_t, t, cond) - eps)^2.
template <typename Scalar>
Scalar loss_simple(const NoisePredictor<Scalar>& pred, const Sample<Scalar>& x0, std::size_t t,
                   const Sample<Scalar>& eps, const std::type_identity_t<Matrix<Scalar>>* cond,
                   const NoiseSchedule& sched) {
  const Sample<Scalar> x_t = forward_sample(x0, t, eps, sched);
  const Sample<Scalar> guess = pred(x_t, t, cond);
  detail::require_same_shape(guess, eps, "predictor output");
  return (guess - eps).square().mean();
}

/// x_{t-1} = (x_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_t)
///           + sqrt(beta_t) noise.
/// An empty `noise` means zero injected noise.
template <typename Scalar>
Sample<Scalar> reverse_step(const Sample<Scalar>& x_t, std::size_t t,
                            const NoisePredictor<Scalar>& pred, const std::type_identity_t<Matrix<Scalar>>* cond,
                            const NoiseSchedule& sched, const Sample<Scalar>& noise = {}) {
  sched.check_step(t);
  const Sample<Scalar> eps_hat = pred(x_t, t, cond);
  detail::require_same_shape(x_t, eps_hat, "predictor output");
  const double a = sched.alpha(t);
  const double coef = (1.0 - a) / std::sqrt(1.0 - sched.alpha_bar(t));
  Sample<Scalar> out = (x_t - Scalar(coef) * eps_hat) / Scalar(std::sqrt(a));
  if (noise.size() != 0) {
    detail::require_same_shape(x_t, noise, "reverse_step noise");
    out += Scalar(std::sqrt(sched.beta(t))) * noise;
  }
  return out;
}

/// `steps` timesteps evenly spaced from T down to 1, both ends included
/// (a single step uses T alone).
inline std::vector<std::size_t> ddim_timesteps(std::size_t total, std::size_t steps) {
  if (steps < 1 || steps > total) {
    throw Error(Errc::InvalidSteps,
                "steps must lie in [1, " + std::to_string(total) + "], got " + std::to_string(steps));
  }
  std::vector<std::size_t> ts(steps);
  if (steps == 1) {
    ts[0] = total;
    return ts;
  }
  for (std::size_t i = 0; i < steps; ++i) {
    const double f = double(i) / double(steps - 1);
    ts[i] = static_cast<std::size_t>(std::llround(double(total) - f * double(total - 1)));
  }
  return ts;
}

template <typename Scalar>
Sample<Scalar> gaussian_sample(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Sample<Scalar> out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = static_cast<Scalar>(normal(rng));
  return out;
}

/// Deterministic (eta = 0) DDIM trajectory from the given x_T.
template <typename Scalar>
Sample<Scalar> ddim_sample_from(Sample<Scalar> x, const NoisePredictor<Scalar>& pred,
                                const std::type_identity_t<Matrix<Scalar>>* cond, const NoiseSchedule& sched,
                                std::size_t steps) {
  const std::vector<std::size_t> ts = ddim_timesteps(sched.steps(), steps);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const std::size_t t = ts[i];
    const std::size_t prev = i + 1 < ts.size() ? ts[i + 1] : 0;
    const double ab = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(prev);
    const Sample<Scalar> eps_hat = pred(x, t, cond);
    detail::require_same_shape(x, eps_hat, "predictor output");
    const Sample<Scalar> x0_hat =
        (x - Scalar(std::sqrt(1.0 - ab)) * eps_hat) / Scalar(std::sqrt(ab));
    x = Scalar(std::sqrt(ab_prev)) * x0_hat + Scalar(std::sqrt(1.0 - ab_prev)) * eps_hat;
  }
  return x;
}

/// Deterministic DDIM starting from seeded standard Gaussian noise.
template <typename Scalar>
Sample<Scalar> ddim_sample(const NoisePredictor<Scalar>& pred, Eigen::Index size,
                           const std::type_identity_t<Matrix<Scalar>>* cond, const NoiseSchedule& sched,
                           std::size_t steps, std::uint64_t seed) {
  return ddim_sample_from<Scalar>(gaussian_sample<Scalar>(size, seed), pred, cond, sched, steps);
}

/// The noise that is exactly consistent with a known x0 at every step:
/// (x_t - sqrt(alpha_bar_t) x0) / sqrt(1 - alpha_bar_t).
template <typename Scalar>
NoisePredictor<Scalar> oracle_predictor(Sample<Scalar> x0, const NoiseSchedule& sched) {
  return [x0 = std::move(x0), &sched](const Sample<Scalar>& x_t, std::size_t t,
                                      const Matrix<Scalar>*) -> Sample<Scalar> {
    const double ab = sched.alpha_bar(t);
    return (x_t - Scalar(std::sqrt(ab)) * x0) / Scalar(std::sqrt(1.0 - ab));
  };
}

/// eps_hat = W_t x_t + b_t. A single (W, b) pair is shared across timesteps.
struct LinearPredictor {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static LinearPredictor zeros(Eigen::Index dim, std::size_t timesteps) {
    LinearPredictor p;
    p.weights.assign(timesteps, Eigen::MatrixXd::Zero(dim, dim));
    p.biases.assign(timesteps, Eigen::VectorXd::Zero(dim));
    return p;
  }

  std::size_t slot(std::size_t t) const { return weights.size() == 1 ? 0 : t - 1; }

  Sample<double> predict(const Sample<double>& x_t, std::size_t t) const {
    const std::size_t s = slot(t);
    if (s >= weights.size()) throw Error(Errc::InvalidRange, "no parameters for timestep");
    return (weights[s] * x_t.matrix() + biases[s]).array();
  }

  NoisePredictor<double> as_predictor() const {
    return [this](const Sample<double>& x_t, std::size_t t, const Matrix<double>*) {
      return predict(x_t, t);
    };
  }
};

/// Fixed regression problem drawn by forward noising: each row is one
/// (t, x_t, eps) triple.
struct TrainingSet {
  std::vector<std::size_t> timesteps;
  std::vector<Sample<double>> inputs;   // x_t
  std::vector<Sample<double>> targets;  // eps
};

inline TrainingSet make_training_set(const std::vector<Sample<double>>& data,
                                     const NoiseSchedule& sched, std::size_t draws_per_step,
                                     std::uint64_t seed) {
  TrainingSet set;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& x0 : data) {
    for (std::size_t t = 1; t <= sched.steps(); ++t) {
      for (std::size_t k = 0; k < draws_per_step; ++k) {
        Sample<double> eps(x0.size());
        for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = normal(rng);
        set.timesteps.push_back(t);
        set.inputs.push_back(forward_sample(x0, t, eps, sched));
        set.targets.push_back(std::move(eps));
      }
    }
  }
  return set;
}

/// Mean-square epsilon error of `p` over a training set.
inline double dataset_loss(const LinearPredictor& p, const TrainingSet& set) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < set.inputs.size(); ++s) {
    total += (p.predict(set.inputs[s], set.timesteps[s]) - set.targets[s]).square().sum();
    count += static_cast<std::size_t>(set.targets[s].size());
  }
  return count ? total / double(count) : 0.0;
}

struct TrainOptions {
  std::size_t epochs = 500;
  double learning_rate = 0.1;
  bool shared_weights = false;
};

struct TrainResult {
  LinearPredictor predictor;
  std::vector<double> loss_history;  // entry 0 is the initial loss
};

/// Full-batch gradient descent on the mean-square epsilon loss, starting from
/// zero parameters. Throws Divergence when the loss rises five epochs in a
/// row or becomes non-finite.
inline TrainResult train_linear_predictor(const TrainingSet& set, std::size_t timesteps,
                                          const TrainOptions& opt) {
  if (set.inputs.empty()) throw Error(Errc::InvalidArgument, "empty training set");
  if (!(opt.learning_rate >= 0.0)) throw Error(Errc::InvalidArgument, "learning rate must be >= 0");
  const Eigen::Index dim = set.inputs.front().size();
  TrainResult result;
  result.predictor = LinearPredictor::zeros(dim, opt.shared_weights ? 1 : timesteps);
  LinearPredictor& p = result.predictor;

  double count = 0.0;
  for (const auto& e : set.targets) count += double(e.size());

  result.loss_history.push_back(dataset_loss(p, set));
  int rising = 0;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::vector<Eigen::MatrixXd> gw(p.weights.size(), Eigen::MatrixXd::Zero(dim, dim));
    std::vector<Eigen::VectorXd> gb(p.biases.size(), Eigen::VectorXd::Zero(dim));
    for (std::size_t s = 0; s < set.inputs.size(); ++s) {
      const std::size_t slot = p.slot(set.timesteps[s]);
      const Eigen::VectorXd r =
          (p.predict(set.inputs[s], set.timesteps[s]) - set.targets[s]).matrix();
      gw[slot].noalias() += r * set.inputs[s].matrix().transpose();
      gb[slot] += r;
    }
    const double scale = 2.0 * opt.learning_rate / count;
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
      p.weights[k] -= scale * gw[k];
      p.biases[k] -= scale * gb[k];
    }
    const double loss = dataset_loss(p, set);
    if (!std::isfinite(loss)) throw Error(Errc::Divergence, "loss became non-finite");
    rising = loss > result.loss_history.back() ? rising + 1 : 0;
    result.loss_history.push_back(loss);
    if (rising >= 5) {
      throw Error(Errc::Divergence,
                  "loss increased 5 consecutive epochs (epoch " + std::to_string(epoch + 1) + ")");
    }
  }
  return result;
}

inline TrainResult train_linear_predictor(const std::vector<Sample<double>>& data,
                                          const NoiseSchedule& sched, const TrainOptions& opt,
                                          std::size_t draws_per_step = 4,
                                          std::uint64_t seed = 0) {
  return train_linear_predictor(make_training_set(data, sched, draws_per_step, seed),
                                sched.steps(), opt);
}

}  // namespace cvd
