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

// Template definitions for model.hpp.

#include <algorithm>
#include <cmath>

namespace monopix {

namespace detail {

template <typename Scalar>
ParamStore<Scalar> materialize(const std::vector<ParamDecl>& decls, InitScheme init, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore<Scalar> store;
  for (const auto& d : decls) {
    Tensor<Scalar> t(d.shape);
    bool trainable = true;
    switch (d.kind) {
      case ParamKind::conv_weight:
        if (init == InitScheme::normal_002) {
          fill_normal(t, rng, 0.0, 0.02);
        } else {
          fill_normal(t, rng, 0.0, std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope) / d.fan_in));
        }
        break;
      case ParamKind::norm_scale:
      case ParamKind::running_var:
        t.array().setOnes();
        trainable = d.kind == ParamKind::norm_scale;
        break;
      case ParamKind::running_mean:
        trainable = false;
        break;
      case ParamKind::bias:
      case ParamKind::norm_shift:
        break;
    }
    store.add(d.name, std::move(t), trainable);
  }
  return store;
}

template <typename Scalar>
Tensor<Scalar> conv(const ParamStore<Scalar>& p, const ConvLayer& layer, const Tensor<Scalar>& x) {
  return ops::conv2d_forward(x, p[layer.weight], p[layer.bias], layer.geom);
}

template <typename Scalar>
Tensor<Scalar> conv_backward(const ParamStore<Scalar>& p, const ConvLayer& layer, const Tensor<Scalar>& x,
                             const Tensor<Scalar>& dy, ParamStore<Scalar>* grads, bool want_dx) {
  Tensor<Scalar> dx;
  ops::conv2d_backward(x, p[layer.weight], layer.geom, dy, grads ? &(*grads)[layer.weight] : nullptr,
                       grads ? &(*grads)[layer.bias] : nullptr, want_dx ? &dx : nullptr);
  return dx;
}

template <typename Scalar>
Tensor<Scalar> cln_forward(const Generator<Scalar>& gen, const ClnLayer& layer, const Tensor<Scalar>& x,
                           Mode mode, ClnCache<Scalar>* cache) {
  const auto& p = gen.params;
  Tensor<Scalar> a = conv(p, layer.conv, x);
  if (gen.spec.pre_norm_nonlinearity == Nonlinearity::leaky_relu) {
    a = ops::leaky_relu_forward(std::move(a), static_cast<Scalar>(kLeakySlope));
  }
  ops::NormCache<Scalar>* nc = cache ? &cache->norm : nullptr;
  Tensor<Scalar> y;
  switch (gen.spec.norm_mode) {
    case NormMode::identity:
      y = a;
      break;
    case NormMode::instance:
      y = ops::instance_norm_forward(a, nc);
      break;
    case NormMode::batch:
      y = ops::batch_norm_forward(a, p[layer.gamma], p[layer.beta], p[layer.running_mean],
                                  p[layer.running_var], mode == Mode::train, nc);
      break;
  }
  if (cache != nullptr) {
    cache->input = x;
    cache->activated = std::move(a);
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> cln_backward(const Generator<Scalar>& gen, const ClnLayer& layer, const ClnCache<Scalar>& cache,
                            Tensor<Scalar> dy, ParamStore<Scalar>* grads, bool want_dx = true) {
  const auto& p = gen.params;
  switch (gen.spec.norm_mode) {
    case NormMode::identity:
      break;
    case NormMode::instance:
      dy = ops::instance_norm_backward(cache.norm, dy);
      break;
    case NormMode::batch:
      dy = ops::batch_norm_backward(cache.norm, p[layer.gamma], dy, grads ? &(*grads)[layer.gamma] : nullptr,
                                    grads ? &(*grads)[layer.beta] : nullptr);
      break;
  }
  if (gen.spec.pre_norm_nonlinearity == Nonlinearity::leaky_relu) {
    dy = ops::leaky_relu_backward(cache.activated, std::move(dy), static_cast<Scalar>(kLeakySlope));
  }
  return conv_backward(p, layer.conv, cache.input, dy, grads, want_dx);
}

}  // namespace detail

template <typename Scalar>
Generator<Scalar> build_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  spec.validate();
  GeneratorPlan plan = plan_generator(spec);
  Generator<Scalar> gen;
  gen.spec = spec;
  gen.params = detail::materialize<Scalar>(plan.params, spec.init, seed);
  gen.encoder = std::move(plan.encoder);
  gen.bottleneck = std::move(plan.bottleneck);
  gen.up_convs = std::move(plan.up_convs);
  gen.decoder = std::move(plan.decoder);
  gen.head = plan.head;
  return gen;
}

template <typename Scalar>
Discriminator<Scalar> build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) {
  spec.validate();
  DiscriminatorPlan plan = plan_discriminator(spec);
  Discriminator<Scalar> disc;
  disc.spec = spec;
  disc.params = detail::materialize<Scalar>(plan.params, spec.init, seed);
  disc.layers = std::move(plan.layers);
  return disc;
}

template <typename Scalar>
ImageBatch<Scalar> forward(const Generator<Scalar>& gen, const ImageBatch<Scalar>& image,
                           const ControlMap<Scalar>& control, Mode mode, GeneratorCache<Scalar>* cache) {
  const auto& spec = gen.spec;
  const Shape& cs = control.shape();
  if (image.c() != spec.image_channels()) {
    throw ShapeError("generator expects " + std::to_string(spec.image_channels()) + " image channels, got " +
                     image.shape().str());
  }
  if (cs.c != 1 || cs.n != image.n() || cs.h != image.h() || cs.w != image.w()) {
    throw ShapeError("control map " + cs.str() + " does not match image " + image.shape().str());
  }
  if (image.h() % spec.size_multiple() != 0 || image.w() % spec.size_multiple() != 0) {
    throw ShapeError("image size " + image.shape().str() + " is not a multiple of " +
                     std::to_string(spec.size_multiple()));
  }

  const std::size_t n_cln = gen.encoder.size() + gen.bottleneck.size() + gen.decoder.size();
  if (cache != nullptr) {
    *cache = GeneratorCache<Scalar>{};
    cache->cln.resize(n_cln);
    cache->pool_argmax.resize(spec.depth);
  }
  std::size_t ci = 0;
  auto cln = [&](const ClnLayer& layer, const Tensor<Scalar>& x) {
    return detail::cln_forward(gen, layer, x, mode, cache ? &cache->cln[ci++] : nullptr);
  };

  Tensor<Scalar> x = concat_channels(image, control.values);
  if (cache != nullptr) cache->input = x;

  std::vector<Tensor<Scalar>> skips;
  skips.reserve(spec.depth);
  for (int level = 0; level < spec.depth; ++level) {
    x = cln(gen.encoder[2 * level], x);
    x = cln(gen.encoder[2 * level + 1], x);
    if (cache != nullptr) cache->pool_input_shapes.push_back(x.shape());
    skips.push_back(x);
    x = ops::max_pool2_forward(x, cache ? &cache->pool_argmax[level] : nullptr);
  }
  x = cln(gen.bottleneck[0], x);
  x = cln(gen.bottleneck[1], x);
  for (int i = 0; i < spec.depth; ++i) {
    if (cache != nullptr) cache->upsample_input_shapes.push_back(x.shape());
    x = ops::upsample2_forward(x);
    if (cache != nullptr) cache->up_conv_inputs.push_back(x);
    x = detail::conv(gen.params, gen.up_convs[i], x);
    x = concat_channels(x, skips[spec.depth - 1 - i]);
    x = cln(gen.decoder[2 * i], x);
    x = cln(gen.decoder[2 * i + 1], x);
  }
  if (cache != nullptr) cache->head_input = x;
  x = detail::conv(gen.params, gen.head, x);
  if (cache != nullptr) cache->head_output = x;
  if (spec.output_activation == OutputActivation::tanh) {
    x = ops::tanh_forward(std::move(x));
  } else {
    x.array() = x.array().max(Scalar(-1)).min(Scalar(1));
  }
  if (cache != nullptr) cache->output = x;
  return x;
}

template <typename Scalar>
ImageBatch<Scalar> backward(const Generator<Scalar>& gen, const GeneratorCache<Scalar>& cache,
                            const ImageBatch<Scalar>& grad_output, ParamStore<Scalar>* grads) {
  const auto& spec = gen.spec;
  const auto& p = gen.params;
  Tensor<Scalar> g;
  if (spec.output_activation == OutputActivation::tanh) {
    g = ops::tanh_backward(cache.output, grad_output);
  } else {
    g = grad_output;
    const auto& pre = cache.head_output.array();
    g.array() *= (pre.abs() <= Scalar(1)).template cast<Scalar>();
  }
  g = detail::conv_backward(p, gen.head, cache.head_input, g, grads, true);

  std::size_t ci = cache.cln.size();
  std::vector<Tensor<Scalar>> skip_grads(spec.depth);
  for (int i = spec.depth - 1; i >= 0; --i) {
    g = detail::cln_backward(gen, gen.decoder[2 * i + 1], cache.cln[--ci], std::move(g), grads);
    g = detail::cln_backward(gen, gen.decoder[2 * i], cache.cln[--ci], std::move(g), grads);
    const int up_channels = gen.up_convs[i].geom.out_channels;
    auto [g_up, g_skip] = split_channels(g, up_channels);
    skip_grads[spec.depth - 1 - i] = std::move(g_skip);
    g = detail::conv_backward(p, gen.up_convs[i], cache.up_conv_inputs[i], g_up, grads, true);
    g = ops::upsample2_backward(cache.upsample_input_shapes[i], g);
  }
  g = detail::cln_backward(gen, gen.bottleneck[1], cache.cln[--ci], std::move(g), grads);
  g = detail::cln_backward(gen, gen.bottleneck[0], cache.cln[--ci], std::move(g), grads);
  for (int level = spec.depth - 1; level >= 0; --level) {
    g = ops::max_pool2_backward(cache.pool_input_shapes[level], cache.pool_argmax[level], g);
    g.array() += skip_grads[level].array();
    g = detail::cln_backward(gen, gen.encoder[2 * level + 1], cache.cln[--ci], std::move(g), grads);
    g = detail::cln_backward(gen, gen.encoder[2 * level], cache.cln[--ci], std::move(g), grads);
  }
  return split_channels(g, spec.image_channels()).first;
}

template <typename Scalar>
ConfidenceMap<Scalar> forward(const Discriminator<Scalar>& disc, const ImageBatch<Scalar>& image,
                              DiscriminatorCache<Scalar>* cache) {
  if (image.c() != disc.spec.in_channels) {
    throw ShapeError("discriminator expects " + std::to_string(disc.spec.in_channels) + " channels, got " +
                     image.shape().str());
  }
  if (cache != nullptr) *cache = DiscriminatorCache<Scalar>{};
  Tensor<Scalar> x = image;
  const std::size_t last = disc.layers.size() - 1;
  for (std::size_t i = 0; i < disc.layers.size(); ++i) {
    if (cache != nullptr) cache->inputs.push_back(x);
    x = detail::conv(disc.params, disc.layers[i], x);
    if (i != last) {
      x = ops::leaky_relu_forward(std::move(x), static_cast<Scalar>(kLeakySlope));
      if (cache != nullptr) cache->activated.push_back(x);
    }
  }
  return x;
}

template <typename Scalar>
ImageBatch<Scalar> backward(const Discriminator<Scalar>& disc, const DiscriminatorCache<Scalar>& cache,
                            const ConfidenceMap<Scalar>& grad_output, ParamStore<Scalar>* grads,
                            bool want_input_grad) {
  Tensor<Scalar> g = grad_output;
  for (std::size_t i = disc.layers.size(); i-- > 0;) {
    if (i != disc.layers.size() - 1) {
      g = ops::leaky_relu_backward(cache.activated[i], std::move(g), static_cast<Scalar>(kLeakySlope));
    }
    const bool need_dx = i > 0 || want_input_grad;
    g = detail::conv_backward(disc.params, disc.layers[i], cache.inputs[i], g, grads, need_dx);
    if (!need_dx) return {};
  }
  return g;
}

template <typename Scalar>
void update_running_stats(Generator<Scalar>& gen, const GeneratorCache<Scalar>& cache, double momentum) {
  if (gen.spec.norm_mode != NormMode::batch) return;
  std::size_t ci = 0;
  auto fold = [&](const ClnLayer& layer) {
    const auto& nc = cache.cln[ci++].norm;
    auto& rm = gen.params[layer.running_mean];
    auto& rv = gen.params[layer.running_var];
    for (std::size_t c = 0; c < nc.batch_mean.size(); ++c) {
      rm.data()[c] = static_cast<Scalar>((1 - momentum) * rm.data()[c] + momentum * nc.batch_mean[c]);
      rv.data()[c] = static_cast<Scalar>((1 - momentum) * rv.data()[c] + momentum * nc.batch_var[c]);
    }
  };
  // Cache order matches forward: encoder, bottleneck, decoder.
  for (const auto& l : gen.encoder) fold(l);
  for (const auto& l : gen.bottleneck) fold(l);
  for (const auto& l : gen.decoder) fold(l);
}

template <typename Scalar>
Tensor<Scalar> activated_feature_map(const Generator<Scalar>& gen, const ImageBatch<Scalar>& image,
                                     double c_low, double c_high) {
  const ClnLayer& first = gen.encoder.front();
  auto preactivation = [&](double c) {
    ControlMap<Scalar> control{Tensor<Scalar>(Shape{image.n(), 1, image.h(), image.w()}, static_cast<Scalar>(c))};
    return detail::conv(gen.params, first.conv, concat_channels(image, control.values));
  };
  const Tensor<Scalar> lo = preactivation(c_low);
  const Tensor<Scalar> hi = preactivation(c_high);
  Tensor<Scalar> out(image.n(), 1, image.h(), image.w());
  const Eigen::Index plane = image.shape().plane();
  for (int n = 0; n < image.n(); ++n) {
    for (int c = 0; c < lo.c(); ++c) {
      const Scalar* a = lo.plane(n, c);
      const Scalar* b = hi.plane(n, c);
      Scalar* o = out.plane(n, 0);
      for (Eigen::Index i = 0; i < plane; ++i) {
        if ((a[i] > 0) != (b[i] > 0)) o[i] += Scalar(1);
      }
    }
  }
  out.array() /= static_cast<Scalar>(lo.c());
  return out;
}

}  // namespace monopix
