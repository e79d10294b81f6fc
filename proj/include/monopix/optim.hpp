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

#include <cmath>

#include "monopix/params.hpp"

namespace monopix {

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

/// First/second moment buffers for one parameter store.
template <typename Scalar>
struct AdamMoments {
  ParamStore<Scalar> m;
  ParamStore<Scalar> v;

  static AdamMoments like(const ParamStore<Scalar>& params) { return {params.zeros_like(), params.zeros_like()}; }
};

/// One bias-corrected Adam update; `t` is the 1-based step count.
template <typename Scalar>
void adam_update(ParamStore<Scalar>& params, const ParamStore<Scalar>& grads, AdamMoments<Scalar>& moments,
                 const AdamConfig& cfg, double lr, long t) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto step = static_cast<Scalar>(lr / c1);
  const auto vscale = static_cast<Scalar>(1.0 / c2);
  const auto eps = static_cast<Scalar>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params.trainable[i]) continue;
    auto& m = moments.m[i].array();
    auto& v = moments.v[i].array();
    const auto& g = grads[i].array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    params[i].array() -= step * m / ((v * vscale).sqrt() + eps);
  }
}

/// Global L2 norm over trainable gradients.
template <typename Scalar>
double grad_norm(const ParamStore<Scalar>& grads) {
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads.trainable[i]) sq += grads[i].array().template cast<double>().square().sum();
  }
  return std::sqrt(sq);
}

template <typename Scalar>
void clip_grad_norm(ParamStore<Scalar>& grads, double max_norm) {
  const double norm = grad_norm(grads);
  if (max_norm <= 0.0 || norm <= max_norm) return;
  const auto scale = static_cast<Scalar>(max_norm / norm);
  for (auto& g : grads.values) g.array() *= scale;
}

}  // namespace monopix
