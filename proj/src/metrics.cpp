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

#include "monopix/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace monopix {

std::vector<double> linspace(double lo, double hi, int count) {
  if (count < 2) throw ConfigError("linspace needs at least 2 points");
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (count - 1);
  out.back() = hi;
  return out;
}

std::optional<double> pearson(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
  if (a.size() != b.size() || a.size() < 2) throw ConfigError("pearson needs two equal-length series of length >= 2");
  const Eigen::ArrayXd da = a - a.mean();
  const Eigen::ArrayXd db = b - b.mean();
  // Spreads at rounding level of the mean count as constant.
  auto flat = [](const Eigen::ArrayXd& v, const Eigen::ArrayXd& d) {
    return !(d.abs().maxCoeff() > 1e-12 * std::max(1.0, v.abs().maxCoeff()));
  };
  if (flat(a, da) || flat(b, db)) return std::nullopt;
  const double saa = da.square().sum();
  const double sbb = db.square().sum();
  return (da * db).sum() / std::sqrt(saa * sbb);
}

namespace {

Eigen::ArrayXd to_array(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::ArrayXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

AbsoluteLinearity absolute_linearity_from(const std::vector<double>& intensities, const std::vector<double>& distances) {
  if (intensities.size() != distances.size()) throw ShapeError("absolute_linearity: length mismatch");
  AbsoluteLinearity out;
  out.distances = distances;
  const auto d = to_array(distances);
  out.rg = d.maxCoeff() - d.minCoeff();
  out.al = pearson(to_array(intensities), d);
  if (!out.al) out.diagnostic = "distances have zero variance; AL undefined";
  return out;
}

RelativeLinearity relative_linearity_from(const std::vector<double>& adjacent) {
  RelativeLinearity out;
  out.adjacent = adjacent;
  // cumulative distance from the first trajectory point, starting at 0
  Eigen::ArrayXd cum(static_cast<Eigen::Index>(adjacent.size()) + 1);
  cum[0] = 0.0;
  for (std::size_t i = 0; i < adjacent.size(); ++i) {
    cum[static_cast<Eigen::Index>(i) + 1] = cum[static_cast<Eigen::Index>(i)] + adjacent[i];
  }
  out.sm = adjacent.empty() ? 0.0 : *std::max_element(adjacent.begin(), adjacent.end());
  out.rl = pearson(Eigen::ArrayXd::LinSpaced(cum.size(), 0.0, static_cast<double>(cum.size() - 1)), cum);
  if (!out.rl) out.diagnostic = "cumulative distances have zero variance; RL undefined";
  return out;
}

namespace {

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, Eigen::VectorXd& mean) {
  mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

FidResult frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw ShapeError("frechet_distance: embedding dims differ");
  if (a.rows() < 2 || b.rows() < 2) throw ConfigError("frechet_distance needs at least 2 samples per side");
  Eigen::VectorXd mu_a;
  Eigen::VectorXd mu_b;
  Eigen::MatrixXd sa = covariance(a, mu_a);
  Eigen::MatrixXd sb = covariance(b, mu_b);

  FidResult out;
  auto min_eig = [](const Eigen::MatrixXd& m) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  };
  const double scale = std::max({1.0, sa.diagonal().maxCoeff(), sb.diagonal().maxCoeff()});
  if (min_eig(sa) <= 1e-12 * scale || min_eig(sb) <= 1e-12 * scale) {
    out.jitter = 1e-6 * scale;
    sa.diagonal().array() += out.jitter;
    sb.diagonal().array() += out.jitter;
  }
  // tr((sa sb)^{1/2}) = tr((sa^{1/2} sb sa^{1/2})^{1/2}), which stays symmetric
  const Eigen::MatrixXd ra = psd_sqrt(sa);
  const Eigen::MatrixXd inner = ra * sb * ra;
  const Eigen::MatrixXd sym = 0.5 * (inner + inner.transpose());
  const double tr_sqrt = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly)
                             .eigenvalues()
                             .cwiseMax(0.0)
                             .cwiseSqrt()
                             .sum();
  out.value = (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
  return out;
}

namespace {

Eigen::VectorXd gaussian_window(int size, double sigma) {
  Eigen::VectorXd w(size);
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) w[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
  return w / w.sum();
}

// Valid-region separable filtering.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& x, const Eigen::VectorXd& w) {
  const Eigen::Index k = w.size();
  const Eigen::Index oh = x.rows() - k + 1;
  const Eigen::Index ow = x.cols() - k + 1;
  Eigen::MatrixXd rows(oh, x.cols());
  for (Eigen::Index i = 0; i < oh; ++i) rows.row(i) = w.transpose() * x.middleRows(i, k);
  Eigen::MatrixXd out(oh, ow);
  for (Eigen::Index j = 0; j < ow; ++j) out.col(j) = rows.middleCols(j, k) * w;
  return out;
}

}  // namespace

double ssim_plane(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b,
                  double data_range) {
  const Eigen::VectorXd w = gaussian_window(11, 1.5);
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  const Eigen::ArrayXXd mu_a = filter_valid(a, w).array();
  const Eigen::ArrayXXd mu_b = filter_valid(b, w).array();
  const Eigen::ArrayXXd saa = filter_valid(a.cwiseProduct(a), w).array() - mu_a.square();
  const Eigen::ArrayXXd sbb = filter_valid(b.cwiseProduct(b), w).array() - mu_b.square();
  const Eigen::ArrayXXd sab = filter_valid(a.cwiseProduct(b), w).array() - mu_a * mu_b;
  const Eigen::ArrayXXd map =
      ((2.0 * mu_a * mu_b + c1) * (2.0 * sab + c2)) / ((mu_a.square() + mu_b.square() + c1) * (saa + sbb + c2));
  return map.mean();
}

double kl_divergence(const Eigen::ArrayXd& p, const Eigen::ArrayXd& q) {
  if (p.size() != q.size()) throw ShapeError("kl_divergence: length mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

Eigen::ArrayXd histogram_density(const Eigen::ArrayXd& values, int bins, double lo, double hi, double eps) {
  Eigen::ArrayXd h = Eigen::ArrayXd::Zero(bins);
  const double width = (hi - lo) / bins;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const int b = std::clamp(static_cast<int>(std::floor((values[i] - lo) / width)), 0, bins - 1);
    h[b] += 1.0;
  }
  if (values.size() > 0) h /= static_cast<double>(values.size());
  h += eps;
  return h / h.sum();
}

void EvalReport::add(EvalRow row) { rows.push_back(std::move(row)); }

void EvalReport::finalize() {
  double al = 0.0;
  double rl = 0.0;
  int nal = 0;
  int nrl = 0;
  mean_rg = 0.0;
  mean_sm = 0.0;
  for (const auto& r : rows) {
    if (r.al) al += *r.al, ++nal;
    if (r.rl) rl += *r.rl, ++nrl;
    mean_rg += r.rg;
    mean_sm += r.sm;
  }
  mean_al = nal ? std::optional<double>(al / nal) : std::nullopt;
  mean_rl = nrl ? std::optional<double>(rl / nrl) : std::nullopt;
  if (!rows.empty()) {
    mean_rg /= static_cast<double>(rows.size());
    mean_sm /= static_cast<double>(rows.size());
  }
}

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "nan";
  std::ostringstream out;
  out << std::setprecision(9) << *v;
  return out.str();
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

std::string EvalReport::csv() const {
  std::ostringstream out;
  out << "id,AL,Rg,RL,Sm\n";
  for (const auto& r : rows) out << r.id << ',' << fmt(r.al) << ',' << fmt(r.rg) << ',' << fmt(r.rl) << ',' << fmt(r.sm) << '\n';
  out << "mean," << fmt(mean_al) << ',' << fmt(mean_rg) << ',' << fmt(mean_rl) << ',' << fmt(mean_sm) << '\n';
  return out.str();
}

std::string EvalReport::json() const {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"id", r.id}, {"AL", opt_json(r.al)}, {"Rg", r.rg}, {"RL", opt_json(r.rl)}, {"Sm", r.sm}});
  }
  j["mean"] = {{"AL", opt_json(mean_al)}, {"Rg", mean_rg}, {"RL", opt_json(mean_rl)}, {"Sm", mean_sm}};
  return j.dump(2);
}

}  // namespace monopix
