/* Copyright 2026 The MonoPix Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "monopix/tensor.hpp"

namespace monopix {

/// Raised when a metric needs a plugin that was not supplied.
class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// One input translated at increasing intensities.
template <typename Scalar>
struct Trajectory {
  ImageBatch<Scalar> input;
  std::vector<double> intensities;
  std::vector<ImageBatch<Scalar>> images;

  void validate() const {
    if (intensities.size() != images.size()) throw ShapeError("trajectory: intensity/image count mismatch");
    for (std::size_t i = 1; i < intensities.size(); ++i) {
      if (!(intensities[i] > intensities[i - 1])) throw ConfigError("trajectory: intensities must increase strictly");
    }
    for (const auto& im : images) {
      if (!(im.shape() == input.shape())) throw ShapeError("trajectory: image shape " + im.shape().str());
    }
  }
};

/// `count` evenly spaced points over [lo, hi], endpoints included.
std::vector<double> linspace(double lo, double hi, int count);

/// Pearson correlation; nullopt when either side has zero variance.
std::optional<double> pearson(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b);

/// Root-mean-square pixel difference.
struct PixelL2 {
  template <typename Scalar>
  double operator()(const Tensor<Scalar>& a, const Tensor<Scalar>& b) const {
    if (!(a.shape() == b.shape())) throw ShapeError("pixel_l2: " + a.shape().str() + " vs " + b.shape().str());
    if (a.size() == 0) return 0.0;
    const auto d = (a.array().template cast<double>() - b.array().template cast<double>());
    return std::sqrt(d.square().mean());
  }
};

inline constexpr PixelL2 pixel_l2{};

struct AbsoluteLinearity {
  std::optional<double> al;
  double rg = 0.0;
  std::vector<double> distances;
  std::string diagnostic;
};

struct RelativeLinearity {
  std::optional<double> rl;
  double sm = 0.0;
  std::vector<double> adjacent;
  std::string diagnostic;
};

AbsoluteLinearity absolute_linearity_from(const std::vector<double>& intensities, const std::vector<double>& distances);
RelativeLinearity relative_linearity_from(const std::vector<double>& adjacent);

/// AL: correlation of intensity with distance to the raw input; Rg: range
/// of those distances.
template <typename Scalar, typename Distance = PixelL2>
AbsoluteLinearity absolute_linearity(const Trajectory<Scalar>& traj, Distance d = {}) {
  traj.validate();
  if (traj.images.size() < 3) throw ConfigError("absolute_linearity needs at least 3 points");
  std::vector<double> dist;
  dist.reserve(traj.images.size());
  for (const auto& im : traj.images) dist.push_back(d(im, traj.input));
  return absolute_linearity_from(traj.intensities, dist);
}

/// RL: linearity of cumulative adjacent distances; Sm: largest adjacent step.
template <typename Scalar, typename Distance = PixelL2>
RelativeLinearity relative_linearity(const Trajectory<Scalar>& traj, Distance d = {}) {
  traj.validate();
  if (traj.images.size() < 3) throw ConfigError("relative_linearity needs at least 3 points");
  std::vector<double> adj;
  for (std::size_t i = 0; i + 1 < traj.images.size(); ++i) adj.push_back(d(traj.images[i], traj.images[i + 1]));
  return relative_linearity_from(adj);
}

/// Highest target-domain confidence along the trajectory.
template <typename Scalar>
double acc_metric(const Trajectory<Scalar>& traj, const std::function<double(const ImageBatch<Scalar>&)>& classifier) {
  if (!classifier) throw UnsupportedError("acc_metric: no classifier plugin supplied");
  if (traj.images.empty()) throw ConfigError("acc_metric: empty trajectory");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& im : traj.images) best = std::max(best, classifier(im));
  return best;
}

struct FidResult {
  double value = 0.0;
  double jitter = 0.0;  // diagonal jitter added to make the covariances positive definite
};

/// Frechet distance between Gaussian fits of two embedding sets (one row
/// per sample).
FidResult frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

enum class FidMode { whole_trajectory, last_intensity };

template <typename Scalar>
using Embedding = std::function<Eigen::VectorXd(const ImageBatch<Scalar>&)>;

/// Channel means over a grid x grid pooling of the image.
template <typename Scalar>
Eigen::VectorXd pooled_pixel_embedding(const ImageBatch<Scalar>& image, int grid = 4) {
  if (image.n() != 1 || image.h() % grid != 0 || image.w() % grid != 0) {
    throw ShapeError("pooled_pixel_embedding: " + image.shape().str());
  }
  const int bh = image.h() / grid;
  const int bw = image.w() / grid;
  Eigen::VectorXd e = Eigen::VectorXd::Zero(image.c() * grid * grid);
  for (int c = 0; c < image.c(); ++c) {
    for (int y = 0; y < image.h(); ++y) {
      for (int x = 0; x < image.w(); ++x) {
        e[(c * grid + y / bh) * grid + x / bw] += image(0, c, y, x);
      }
    }
  }
  return e / static_cast<double>(bh * bw);
}

template <typename Scalar>
std::vector<const ImageBatch<Scalar>*> fid_candidate_pool(const std::vector<Trajectory<Scalar>>& trajectories,
                                                          FidMode mode) {
  std::vector<const ImageBatch<Scalar>*> pool;
  for (const auto& t : trajectories) {
    if (t.images.empty()) continue;
    if (mode == FidMode::last_intensity) {
      pool.push_back(&t.images.back());
    } else {
      for (const auto& im : t.images) pool.push_back(&im);
    }
  }
  return pool;
}

template <typename Scalar>
FidResult fid_harness(const std::vector<Trajectory<Scalar>>& trajectories, const std::vector<ImageBatch<Scalar>>& real,
                      const Embedding<Scalar>& embedding, FidMode mode) {
  if (!embedding) throw UnsupportedError("fid_harness: no embedding plugin supplied");
  const auto pool = fid_candidate_pool(trajectories, mode);
  if (pool.size() < 2 || real.size() < 2) throw ConfigError("fid_harness needs at least 2 samples per side");
  auto embed_all = [&](auto count, auto get) {
    Eigen::MatrixXd m;
    for (std::size_t i = 0; i < count; ++i) {
      const Eigen::VectorXd e = embedding(get(i));
      if (i == 0) m.resize(static_cast<Eigen::Index>(count), e.size());
      m.row(static_cast<Eigen::Index>(i)) = e.transpose();
    }
    return m;
  };
  const Eigen::MatrixXd a = embed_all(pool.size(), [&](std::size_t i) -> const ImageBatch<Scalar>& { return *pool[i]; });
  const Eigen::MatrixXd b = embed_all(real.size(), [&](std::size_t i) -> const ImageBatch<Scalar>& { return real[i]; });
  return frechet_distance(a, b);
}

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(max_val^2 / MSE), capped at kPsnrCap.
template <typename Scalar>
double psnr(const Tensor<Scalar>& a, const Tensor<Scalar>& b, double max_val) {
  if (!(a.shape() == b.shape())) throw ShapeError("psnr: " + a.shape().str() + " vs " + b.shape().str());
  const double mse = (a.array().template cast<double>() - b.array().template cast<double>()).square().mean();
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / mse));
}

double ssim_plane(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b,
                  double data_range);

/// Mean SSIM over samples and channels; 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, valid-region filtering.
template <typename Scalar>
double ssim(const Tensor<Scalar>& a, const Tensor<Scalar>& b, double data_range = 2.0) {
  if (!(a.shape() == b.shape())) throw ShapeError("ssim: " + a.shape().str() + " vs " + b.shape().str());
  if (a.h() < 11 || a.w() < 11) throw ShapeError("ssim needs images of at least 11x11");
  double total = 0.0;
  for (int n = 0; n < a.n(); ++n) {
    for (int c = 0; c < a.c(); ++c) {
      using Plane = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
      const Eigen::MatrixXd pa = Plane(a.plane(n, c), a.h(), a.w()).template cast<double>();
      const Eigen::MatrixXd pb = Plane(b.plane(n, c), b.h(), b.w()).template cast<double>();
      total += ssim_plane(pa, pb, data_range);
    }
  }
  return total / (a.n() * a.c());
}

/// KL(p || q) of two discrete distributions.
double kl_divergence(const Eigen::ArrayXd& p, const Eigen::ArrayXd& q);

/// Epsilon-smoothed, normalized histogram over [lo, hi]; values outside
/// land in the edge bins.
Eigen::ArrayXd histogram_density(const Eigen::ArrayXd& values, int bins, double lo, double hi, double eps);

struct AkldResult {
  double value = 0.0;
  std::vector<double> per_image;
  std::string diagnostic;  // non-empty when some residual histogram sits in one bin
};

inline constexpr int kAkldBins = 256;
inline constexpr double kAkldEps = 1e-8;

/// Average over images of KL(generated residual || reference residual),
/// residuals taken against the clean image.
template <typename Scalar>
AkldResult akld(const ImageBatch<Scalar>& generated_noisy, const ImageBatch<Scalar>& reference_noisy,
                const ImageBatch<Scalar>& clean, int bins = kAkldBins) {
  if (!(generated_noisy.shape() == clean.shape()) || !(reference_noisy.shape() == clean.shape())) {
    throw ShapeError("akld: misaligned triple");
  }
  if (bins < 2) throw ConfigError("akld: need at least 2 bins");
  AkldResult out;
  const Eigen::Index per = static_cast<Eigen::Index>(clean.c()) * clean.shape().plane();
  for (int n = 0; n < clean.n(); ++n) {
    using Vec = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
    const Eigen::ArrayXd c = Vec(clean.sample(n), per).template cast<double>();
    const Eigen::ArrayXd rg = Vec(generated_noisy.sample(n), per).template cast<double>() - c;
    const Eigen::ArrayXd rr = Vec(reference_noisy.sample(n), per).template cast<double>() - c;
    const auto p = histogram_density(rg, bins, -1.0, 1.0, kAkldEps);
    const auto q = histogram_density(rr, bins, -1.0, 1.0, kAkldEps);
    if (p.maxCoeff() > 1.0 - 1e-6 || q.maxCoeff() > 1.0 - 1e-6) {
      out.diagnostic = "residual histogram concentrated in a single bin for image " + std::to_string(n);
    }
    out.per_image.push_back(kl_divergence(p, q));
  }
  double s = 0.0;
  for (double v : out.per_image) s += v;
  out.value = s / static_cast<double>(out.per_image.size());
  return out;
}

/// Per-image continuity metrics and their means.
struct EvalRow {
  std::string id;
  std::optional<double> al;
  double rg = 0.0;
  std::optional<double> rl;
  double sm = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::optional<double> mean_al;
  double mean_rg = 0.0;
  std::optional<double> mean_rl;
  double mean_sm = 0.0;

  void add(EvalRow row);
  void finalize();
  [[nodiscard]] std::string csv() const;
  [[nodiscard]] std::string json() const;
};

template <typename Scalar, typename Distance = PixelL2>
EvalRow evaluate_trajectory(const std::string& id, const Trajectory<Scalar>& traj, Distance d = {}) {
  const auto a = absolute_linearity(traj, d);
  const auto r = relative_linearity(traj, d);
  return {id, a.al, a.rg, r.rl, r.sm};
}

}  // namespace monopix
