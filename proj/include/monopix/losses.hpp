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

// Contrastive intensity sampling and the loss kernels of the training
// objective. Kernels come in value/gradient pairs over plain tensors; the
// network-level compositions live in objective.hpp.

#include <cmath>
#include <string>
#include <vector>

#include "monopix/model.hpp"
#include "monopix/rng.hpp"

namespace monopix {

enum class Reduction { mean, sum };
enum class AdversarialForm { least_squares };

std::string to_string(Reduction r);
Reduction parse_reduction(const std::string& s);

/// Ordered intensity pair per batch item; both maps are constant-valued.
struct ContrastivePair {
  std::vector<double> low;   // v1 per item
  std::vector<double> high;  // v2 per item, v1 < v2

  [[nodiscard]] int size() const { return static_cast<int>(low.size()); }

  template <typename Scalar>
  [[nodiscard]] ControlMap<Scalar> low_map(int h, int w) const { return constant_maps<Scalar>(low, h, w); }
  template <typename Scalar>
  [[nodiscard]] ControlMap<Scalar> high_map(int h, int w) const { return constant_maps<Scalar>(high, h, w); }
  /// low maps followed by high maps, matching a doubled image batch.
  template <typename Scalar>
  [[nodiscard]] ControlMap<Scalar> stacked_maps(int h, int w) const {
    std::vector<double> both = low;
    both.insert(both.end(), high.begin(), high.end());
    return constant_maps<Scalar>(both, h, w);
  }

  template <typename Scalar>
  static ControlMap<Scalar> constant_maps(const std::vector<double>& values, int h, int w) {
    ControlMap<Scalar> map{Tensor<Scalar>(static_cast<int>(values.size()), 1, h, w)};
    for (int n = 0; n < static_cast<int>(values.size()); ++n) {
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(map.values.plane(n, 0), map.values.shape().plane())
          .setConstant(static_cast<Scalar>(values[n]));
    }
    return map;
  }
};

/// Per item: two i.i.d. uniforms on [0, 1], sorted, redrawn until the gap
/// is at least `delta_min` (and strictly positive).
ContrastivePair cig_sample(Rng& rng, int batch_size, double delta_min = 0.0);

struct LossWeights {
  double lambda_cyc = 10.0;
  double lambda_mn = 1.0;
  double lambda_df = 0.25;
  double epsilon = 0.5;
  /// Weight of the adversarial term; 1 in the standard objective.
  double lambda_adv = 1.0;
  AdversarialForm adversarial_form = AdversarialForm::least_squares;
  Reduction reduction = Reduction::mean;

  void validate() const;
};

/// Reduction of max(epsilon - delta, 0)^2.
template <typename Scalar>
double hinge_margin_loss(const Tensor<Scalar>& delta, double epsilon, Reduction reduction = Reduction::mean) {
  if (epsilon < 0) throw ConfigError("margin epsilon must be >= 0");
  if (delta.empty()) return 0.0;
  const auto slack = (static_cast<Scalar>(epsilon) - delta.array()).max(Scalar(0)).template cast<double>();
  const double total = slack.square().sum();
  return reduction == Reduction::mean ? total / static_cast<double>(delta.size()) : total;
}

/// d(hinge_margin_loss)/d(delta); exactly zero wherever delta >= epsilon.
template <typename Scalar>
Tensor<Scalar> hinge_margin_grad(const Tensor<Scalar>& delta, double epsilon, Reduction reduction = Reduction::mean,
                                 double scale = 1.0) {
  Tensor<Scalar> g(delta.shape());
  if (delta.empty()) return g;
  const double norm = reduction == Reduction::mean ? static_cast<double>(delta.size()) : 1.0;
  const auto k = static_cast<Scalar>(-2.0 * scale / norm);
  g.array() = k * (static_cast<Scalar>(epsilon) - delta.array()).max(Scalar(0));
  return g;
}

/// mean((x - target)^2)
template <typename Scalar>
double squared_error_to(const Tensor<Scalar>& x, double target) {
  if (x.empty()) return 0.0;
  return (x.array().template cast<double>() - target).square().mean();
}

template <typename Scalar>
Tensor<Scalar> squared_error_to_grad(const Tensor<Scalar>& x, double target, double scale = 1.0) {
  Tensor<Scalar> g(x.shape());
  g.array() = static_cast<Scalar>(2.0 * scale / static_cast<double>(x.size())) *
              (x.array() - static_cast<Scalar>(target));
  return g;
}

/// mean(|a - b|)
template <typename Scalar>
double l1_mean(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (!(a.shape() == b.shape())) throw ShapeError("l1: " + a.shape().str() + " vs " + b.shape().str());
  if (a.empty()) return 0.0;
  return (a.array() - b.array()).abs().template cast<double>().mean();
}

/// d l1_mean / d a; zero where a == b.
template <typename Scalar>
Tensor<Scalar> l1_mean_grad(const Tensor<Scalar>& a, const Tensor<Scalar>& b, double scale = 1.0) {
  Tensor<Scalar> g(a.shape());
  const auto k = static_cast<Scalar>(scale / static_cast<double>(a.size()));
  g.array() = k * (a.array() - b.array()).sign();
  return g;
}

/// Least-squares GAN terms for one discriminator.
struct AdversarialLosses {
  double d_loss = 0.0;  // mean((D(real)-1)^2) + mean(D(fake)^2)
  double g_loss = 0.0;  // mean((D(fake)-1)^2)
};

template <typename Scalar>
AdversarialLosses adversarial_losses_from_outputs(const ConfidenceMap<Scalar>& d_real,
                                                  const ConfidenceMap<Scalar>& d_fake) {
  return {squared_error_to(d_real, 1.0) + squared_error_to(d_fake, 0.0), squared_error_to(d_fake, 1.0)};
}

template <typename Scalar>
AdversarialLosses adversarial_losses(const Discriminator<Scalar>& disc, const ImageBatch<Scalar>& real,
                                     const ImageBatch<Scalar>& fake) {
  return adversarial_losses_from_outputs(discriminator_forward(disc, real), discriminator_forward(disc, fake));
}

/// D_tar(G(x, c2)) - D_tar(G(x, c1)).
template <typename Scalar>
ConfidenceMap<Scalar> confidence_delta_target(const Discriminator<Scalar>& d_tar, const Generator<Scalar>& gen,
                                              const ImageBatch<Scalar>& x, const ContrastivePair& pair) {
  if (pair.size() != x.n()) throw ShapeError("contrastive pair size does not match batch");
  ConfidenceMap<Scalar> hi = discriminator_forward(d_tar, generator_forward(gen, x, pair.high_map<Scalar>(x.h(), x.w())));
  const ConfidenceMap<Scalar> lo =
      discriminator_forward(d_tar, generator_forward(gen, x, pair.low_map<Scalar>(x.h(), x.w())));
  hi.array() -= lo.array();
  return hi;
}

/// D_src(G(x, c1)) - D_src(G(x, c2)).
template <typename Scalar>
ConfidenceMap<Scalar> confidence_delta_source(const Discriminator<Scalar>& d_src, const Generator<Scalar>& gen,
                                              const ImageBatch<Scalar>& x, const ContrastivePair& pair) {
  if (pair.size() != x.n()) throw ShapeError("contrastive pair size does not match batch");
  ConfidenceMap<Scalar> lo = discriminator_forward(d_src, generator_forward(gen, x, pair.low_map<Scalar>(x.h(), x.w())));
  const ConfidenceMap<Scalar> hi =
      discriminator_forward(d_src, generator_forward(gen, x, pair.high_map<Scalar>(x.h(), x.w())));
  lo.array() -= hi.array();
  return lo;
}

/// mean |G_bwd(G_fwd(x, c), c) - x|.
template <typename Scalar>
double cycle_loss(const Generator<Scalar>& g_fwd, const Generator<Scalar>& g_bwd, const ImageBatch<Scalar>& x,
                  const ControlMap<Scalar>& c) {
  return l1_mean(generator_forward(g_bwd, generator_forward(g_fwd, x, c), c), x);
}

/// Component values summed over translation directions.
struct LossTerms {
  double adv = 0.0;
  double cyc = 0.0;
  double mono = 0.0;
  double df = 0.0;

  friend bool operator==(const LossTerms&, const LossTerms&) = default;
};

/// L_G = adv + l_cyc*cyc + l_mn*mono + l_df*df. The domain-fidelity term is
/// dropped for unidirectional training.
double total_generator_loss(const LossTerms& terms, const LossWeights& w, bool bidirectional);
/// L_D = adv + l_mn*mono + l_df*df.
double total_discriminator_loss(const LossTerms& terms, const LossWeights& w, bool bidirectional);

}  // namespace monopix
