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

// Network-level training objective: the weighted sums of adversarial,
// cycle, monotonicity and domain-fidelity terms over both translation
// directions, with analytic gradients for every participating network.
//
// Each item of a batch is translated twice, under the low and the high
// intensity of its contrastive pair; the doubled batch is laid out as
// [all low | all high].

#include "monopix/losses.hpp"

namespace monopix {

template <typename Scalar>
struct TranslationModels {
  const Generator<Scalar>* g_xy = nullptr;
  const Generator<Scalar>* g_yx = nullptr;  // bidirectional only
  const Discriminator<Scalar>* d_x = nullptr;  // bidirectional only
  const Discriminator<Scalar>* d_y = nullptr;
  bool bidirectional = true;

  void validate() const {
    if (g_xy == nullptr || d_y == nullptr) throw ConfigError("forward generator and target discriminator required");
    if (bidirectional && (g_yx == nullptr || d_x == nullptr)) {
      throw ConfigError("bidirectional training requires the reverse generator and source discriminator");
    }
  }
};

template <typename Scalar>
struct ModelGrads {
  ParamStore<Scalar> g_xy;
  ParamStore<Scalar> g_yx;
  ParamStore<Scalar> d_x;
  ParamStore<Scalar> d_y;
};

/// Doubled-batch translation of one source batch under its contrastive pair.
template <typename Scalar>
struct ContrastiveFakes {
  ImageBatch<Scalar> inputs;  // source batch repeated twice
  ControlMap<Scalar> control;
  GeneratorCache<Scalar> cache;
  ImageBatch<Scalar> fake;
  int items = 0;
};

template <typename Scalar>
ContrastiveFakes<Scalar> generate_contrastive(const Generator<Scalar>& gen, const ImageBatch<Scalar>& source,
                                              const ContrastivePair& pair, Mode mode) {
  if (pair.size() != source.n()) throw ShapeError("contrastive pair size does not match batch");
  ContrastiveFakes<Scalar> f;
  f.items = source.n();
  f.inputs = concat_batch(source, source);
  f.control = pair.stacked_maps<Scalar>(source.h(), source.w());
  f.fake = forward(gen, f.inputs, f.control, mode, &f.cache);
  return f;
}

struct DirectionReport {
  LossTerms terms;
  double mean_delta_tar = 0.0;
};

namespace detail {

/// Gradient of a hinge on (second - first) (sign = +1) or (first - second)
/// (sign = -1) halves of a doubled confidence map, accumulated into `grad`.
template <typename Scalar>
double contrastive_hinge(const ConfidenceMap<Scalar>& out, int items, int sign, double epsilon, Reduction reduction,
                         double weight, ConfidenceMap<Scalar>* grad, double* mean_delta = nullptr) {
  const ConfidenceMap<Scalar> lo = out.slice_batch(0, items);
  const ConfidenceMap<Scalar> hi = out.slice_batch(items, items);
  ConfidenceMap<Scalar> delta(lo.shape());
  delta.array() = sign > 0 ? (hi.array() - lo.array()).eval() : (lo.array() - hi.array()).eval();
  if (mean_delta != nullptr) *mean_delta = delta.array().template cast<double>().mean();
  const double value = hinge_margin_loss(delta, epsilon, reduction);
  if (grad != nullptr && weight != 0.0) {
    const Tensor<Scalar> gd = hinge_margin_grad(delta, epsilon, reduction, weight);
    const Eigen::Index half = gd.size();
    grad->array().segment(0, half) -= static_cast<Scalar>(sign) * gd.array();
    grad->array().segment(half, half) += static_cast<Scalar>(sign) * gd.array();
  }
  return value;
}

}  // namespace detail

/// Discriminator-side terms for one direction. `fakes` are treated as
/// constants (no gradient reaches the generator).
template <typename Scalar>
LossTerms discriminator_direction(const Discriminator<Scalar>& d_tar, const Discriminator<Scalar>* d_src,
                                  const ImageBatch<Scalar>& real_target, const ContrastiveFakes<Scalar>& fakes,
                                  const LossWeights& w, bool use_df, ParamStore<Scalar>* grads_tar,
                                  ParamStore<Scalar>* grads_src) {
  LossTerms t;
  DiscriminatorCache<Scalar> real_cache;
  DiscriminatorCache<Scalar> fake_cache;
  const bool want = grads_tar != nullptr;
  const auto d_real = forward(d_tar, real_target, want ? &real_cache : nullptr);
  const auto d_fake = forward(d_tar, fakes.fake, want ? &fake_cache : nullptr);
  t.adv = squared_error_to(d_real, 1.0) + squared_error_to(d_fake, 0.0);
  ConfidenceMap<Scalar> g_fake;
  if (want) {
    backward(d_tar, real_cache, squared_error_to_grad(d_real, 1.0, w.lambda_adv), grads_tar, false);
    g_fake = squared_error_to_grad(d_fake, 0.0, w.lambda_adv);
  }
  t.mono = detail::contrastive_hinge(d_fake, fakes.items, +1, w.epsilon, w.reduction, w.lambda_mn,
                                     want ? &g_fake : nullptr);
  if (want) backward(d_tar, fake_cache, g_fake, grads_tar, false);

  if (use_df && d_src != nullptr) {
    DiscriminatorCache<Scalar> src_cache;
    const bool want_src = grads_src != nullptr;
    const auto s_fake = forward(*d_src, fakes.fake, want_src ? &src_cache : nullptr);
    ConfidenceMap<Scalar> g_src(s_fake.shape());
    t.df = detail::contrastive_hinge(s_fake, fakes.items, -1, w.epsilon, w.reduction, w.lambda_df,
                                     want_src ? &g_src : nullptr);
    if (want_src) backward(*d_src, src_cache, g_src, grads_src, false);
  }
  return t;
}

/// Generator-side terms for one direction. Gradients flow into the forward
/// generator (and the backward generator through the cycle term); the
/// discriminators are held fixed.
template <typename Scalar>
DirectionReport generator_direction(const Generator<Scalar>& g_fwd, const Generator<Scalar>* g_bwd,
                                    const Discriminator<Scalar>& d_tar, const Discriminator<Scalar>* d_src,
                                    const ContrastiveFakes<Scalar>& fakes, const LossWeights& w, bool use_df,
                                    Mode mode, ParamStore<Scalar>* grads_fwd, ParamStore<Scalar>* grads_bwd) {
  DirectionReport r;
  const bool want = grads_fwd != nullptr;
  DiscriminatorCache<Scalar> tar_cache;
  const auto d_fake = forward(d_tar, fakes.fake, want ? &tar_cache : nullptr);
  r.terms.adv = squared_error_to(d_fake, 1.0);
  ConfidenceMap<Scalar> g_dfake;
  if (want) g_dfake = squared_error_to_grad(d_fake, 1.0, w.lambda_adv);
  r.terms.mono = detail::contrastive_hinge(d_fake, fakes.items, +1, w.epsilon, w.reduction, w.lambda_mn,
                                           want ? &g_dfake : nullptr, &r.mean_delta_tar);
  ImageBatch<Scalar> g_fake;
  if (want) g_fake = backward(d_tar, tar_cache, g_dfake, static_cast<ParamStore<Scalar>*>(nullptr), true);

  if (use_df && d_src != nullptr) {
    DiscriminatorCache<Scalar> src_cache;
    const auto s_fake = forward(*d_src, fakes.fake, want ? &src_cache : nullptr);
    ConfidenceMap<Scalar> g_src(s_fake.shape());
    r.terms.df = detail::contrastive_hinge(s_fake, fakes.items, -1, w.epsilon, w.reduction, w.lambda_df,
                                           want ? &g_src : nullptr);
    if (want) g_fake.array() += backward(*d_src, src_cache, g_src, static_cast<ParamStore<Scalar>*>(nullptr), true).array();
  }

  if (g_bwd != nullptr) {
    GeneratorCache<Scalar> rec_cache;
    const auto rec = forward(*g_bwd, fakes.fake, fakes.control, mode, want ? &rec_cache : nullptr);
    r.terms.cyc = l1_mean(rec, fakes.inputs);
    if (want && w.lambda_cyc != 0.0) {
      const auto g_rec = l1_mean_grad(rec, fakes.inputs, w.lambda_cyc);
      g_fake.array() += backward(*g_bwd, rec_cache, g_rec, grads_bwd).array();
    }
  }
  if (want) backward(g_fwd, fakes.cache, g_fake, grads_fwd);
  return r;
}

struct ObjectiveReport {
  LossTerms terms;
  double total = 0.0;
  double mean_delta_tar = 0.0;  // averaged over directions
};

inline void accumulate(LossTerms& into, const LossTerms& t) {
  into.adv += t.adv;
  into.cyc += t.cyc;
  into.mono += t.mono;
  into.df += t.df;
}

/// L_D over all directions on already-generated fakes.
template <typename Scalar>
ObjectiveReport discriminator_objective(const TranslationModels<Scalar>& m, const ImageBatch<Scalar>& x,
                                        const ImageBatch<Scalar>& y, const ContrastiveFakes<Scalar>& fakes_xy,
                                        const ContrastiveFakes<Scalar>* fakes_yx, const LossWeights& w,
                                        ModelGrads<Scalar>* grads) {
  m.validate();
  ObjectiveReport r;
  const bool bi = m.bidirectional;
  accumulate(r.terms, discriminator_direction(*m.d_y, m.d_x, y, fakes_xy, w, bi, grads ? &grads->d_y : nullptr,
                                              grads ? &grads->d_x : nullptr));
  if (bi) {
    if (fakes_yx == nullptr) throw ConfigError("bidirectional objective needs reverse-direction fakes");
    accumulate(r.terms, discriminator_direction(*m.d_x, m.d_y, x, *fakes_yx, w, true, grads ? &grads->d_x : nullptr,
                                                grads ? &grads->d_y : nullptr));
  }
  r.total = total_discriminator_loss(r.terms, w, bi);
  return r;
}

/// L_G over all directions on already-generated fakes (the fake caches
/// must come from the current generator parameters).
template <typename Scalar>
ObjectiveReport generator_objective(const TranslationModels<Scalar>& m, const ContrastiveFakes<Scalar>& fakes_xy,
                                    const ContrastiveFakes<Scalar>* fakes_yx, const LossWeights& w, Mode mode,
                                    ModelGrads<Scalar>* grads) {
  m.validate();
  ObjectiveReport r;
  const bool bi = m.bidirectional;
  const auto xy = generator_direction(*m.g_xy, bi ? m.g_yx : nullptr, *m.d_y, m.d_x, fakes_xy, w, bi, mode,
                                      grads ? &grads->g_xy : nullptr, grads ? &grads->g_yx : nullptr);
  accumulate(r.terms, xy.terms);
  r.mean_delta_tar = xy.mean_delta_tar;
  if (bi) {
    if (fakes_yx == nullptr) throw ConfigError("bidirectional objective needs reverse-direction fakes");
    const auto yx = generator_direction(*m.g_yx, m.g_xy, *m.d_x, m.d_y, *fakes_yx, w, true, mode,
                                        grads ? &grads->g_yx : nullptr, grads ? &grads->g_xy : nullptr);
    accumulate(r.terms, yx.terms);
    r.mean_delta_tar = 0.5 * (xy.mean_delta_tar + yx.mean_delta_tar);
  }
  r.total = total_generator_loss(r.terms, w, bi);
  return r;
}

/// Self-contained L_G evaluation (generates the fakes itself); used for
/// finite-difference checks and reporting.
template <typename Scalar>
ObjectiveReport evaluate_generator_objective(const TranslationModels<Scalar>& m, const ImageBatch<Scalar>& x,
                                             const ImageBatch<Scalar>& y, const ContrastivePair& pair_x,
                                             const ContrastivePair& pair_y, const LossWeights& w, Mode mode,
                                             ModelGrads<Scalar>* grads) {
  m.validate();
  const auto fxy = generate_contrastive(*m.g_xy, x, pair_x, mode);
  if (m.bidirectional) {
    const auto fyx = generate_contrastive(*m.g_yx, y, pair_y, mode);
    return generator_objective(m, fxy, &fyx, w, mode, grads);
  }
  return generator_objective<Scalar>(m, fxy, nullptr, w, mode, grads);
}

template <typename Scalar>
ObjectiveReport evaluate_discriminator_objective(const TranslationModels<Scalar>& m, const ImageBatch<Scalar>& x,
                                                 const ImageBatch<Scalar>& y, const ContrastivePair& pair_x,
                                                 const ContrastivePair& pair_y, const LossWeights& w, Mode mode,
                                                 ModelGrads<Scalar>* grads) {
  m.validate();
  const auto fxy = generate_contrastive(*m.g_xy, x, pair_x, mode);
  if (m.bidirectional) {
    const auto fyx = generate_contrastive(*m.g_yx, y, pair_y, mode);
    return discriminator_objective(m, x, y, fxy, &fyx, w, grads);
  }
  return discriminator_objective<Scalar>(m, x, y, fxy, nullptr, w, grads);
}

}  // namespace monopix
