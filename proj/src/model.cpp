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

#include "monopix/model.hpp"

#include <cmath>

namespace monopix {

std::string to_string(NormMode mode) {
  switch (mode) {
    case NormMode::identity: return "identity";
    case NormMode::instance: return "instance";
    case NormMode::batch: return "batch";
  }
  return "?";
}

std::string to_string(Nonlinearity nl) { return nl == Nonlinearity::leaky_relu ? "leaky_relu" : "none"; }

std::string to_string(OutputActivation act) {
  return act == OutputActivation::tanh ? "tanh" : "linear_clamped";
}

std::string to_string(InitScheme init) {
  return init == InitScheme::normal_002 ? "normal_002" : "kaiming_normal";
}

NormMode parse_norm_mode(const std::string& s) {
  if (s == "identity") return NormMode::identity;
  if (s == "instance") return NormMode::instance;
  if (s == "batch") return NormMode::batch;
  throw ConfigError("unknown norm_mode '" + s + "'");
}

Nonlinearity parse_nonlinearity(const std::string& s) {
  if (s == "leaky_relu") return Nonlinearity::leaky_relu;
  if (s == "none") return Nonlinearity::none;
  throw ConfigError("unknown pre_norm_nonlinearity '" + s + "'");
}

OutputActivation parse_output_activation(const std::string& s) {
  if (s == "tanh") return OutputActivation::tanh;
  if (s == "linear_clamped") return OutputActivation::linear_clamped;
  throw ConfigError("unknown output_activation '" + s + "'");
}

InitScheme parse_init_scheme(const std::string& s) {
  if (s == "normal_002") return InitScheme::normal_002;
  if (s == "kaiming_normal") return InitScheme::kaiming_normal;
  throw ConfigError("unknown init '" + s + "'");
}

void GeneratorSpec::validate() const {
  if (in_channels < 2) throw ConfigError("generator in_channels must be >= 2 (image + control)");
  if (base_channels < 1) throw ConfigError("generator base_channels must be >= 1");
  if (depth < 1 || depth > 8) throw ConfigError("generator depth must be in [1, 8]");
  if (norm_mode == NormMode::instance && pre_norm_nonlinearity == Nonlinearity::none && !allow_degenerate) {
    throw ConfigError(
        "instance normalization directly after the control-injecting convolution erases constant control "
        "maps; use pre_norm_nonlinearity=leaky_relu");
  }
}

GeneratorSpec GeneratorSpec::full_width() {
  GeneratorSpec s;
  s.base_channels = 32;
  return s;
}

GeneratorSpec GeneratorSpec::desk() { return GeneratorSpec{}; }

void DiscriminatorSpec::validate() const {
  if (in_channels < 1) throw ConfigError("discriminator in_channels must be >= 1");
  if (base_channels < 1) throw ConfigError("discriminator base_channels must be >= 1");
}

DiscriminatorSpec DiscriminatorSpec::full_width() {
  DiscriminatorSpec s;
  s.base_channels = 64;
  return s;
}

DiscriminatorSpec DiscriminatorSpec::desk() { return DiscriminatorSpec{}; }

namespace {

struct PlanBuilder {
  std::vector<ParamDecl> params;
  std::vector<std::pair<std::string, ops::ConvGeometry>> convs;

  ConvLayer conv(const std::string& name, int cin, int cout, int k, int stride, int pad) {
    ConvLayer layer;
    layer.geom = ops::ConvGeometry{cin, cout, k, stride, pad};
    layer.weight = params.size();
    params.push_back({name + ".weight", Shape{cout, cin, k, k}, ParamKind::conv_weight, cin * k * k});
    layer.bias = params.size();
    params.push_back({name + ".bias", Shape{1, cout, 1, 1}, ParamKind::bias, 1});
    convs.emplace_back(name, layer.geom);
    return layer;
  }

  ClnLayer cln(const std::string& name, int cin, int cout, NormMode norm) {
    ClnLayer layer;
    layer.conv = conv(name, cin, cout, 3, 1, 1);
    if (norm == NormMode::batch) {
      const Shape s{1, cout, 1, 1};
      layer.gamma = params.size();
      params.push_back({name + ".norm.scale", s, ParamKind::norm_scale, 1});
      layer.beta = params.size();
      params.push_back({name + ".norm.shift", s, ParamKind::norm_shift, 1});
      layer.running_mean = params.size();
      params.push_back({name + ".norm.running_mean", s, ParamKind::running_mean, 1});
      layer.running_var = params.size();
      params.push_back({name + ".norm.running_var", s, ParamKind::running_var, 1});
    }
    return layer;
  }
};

}  // namespace

GeneratorPlan plan_generator(const GeneratorSpec& spec) {
  spec.validate();
  PlanBuilder b;
  GeneratorPlan plan;
  const int base = spec.base_channels;
  int cin = spec.in_channels;
  for (int level = 0; level < spec.depth; ++level) {
    const int width = base << level;
    const std::string name = "enc" + std::to_string(level + 1);
    plan.encoder.push_back(b.cln(name + ".0", cin, width, spec.norm_mode));
    plan.encoder.push_back(b.cln(name + ".1", width, width, spec.norm_mode));
    cin = width;
  }
  const int mid = base << spec.depth;
  plan.bottleneck.push_back(b.cln("mid.0", cin, mid, spec.norm_mode));
  plan.bottleneck.push_back(b.cln("mid.1", mid, mid, spec.norm_mode));
  int width = mid;
  for (int i = 0; i < spec.depth; ++i) {
    const std::string name = "dec" + std::to_string(i + 1);
    const int half = width / 2;
    plan.up_convs.push_back(b.conv(name + ".up", width, half, 3, 1, 1));
    plan.decoder.push_back(b.cln(name + ".0", width, half, spec.norm_mode));
    plan.decoder.push_back(b.cln(name + ".1", half, half, spec.norm_mode));
    width = half;
  }
  plan.head = b.conv("head", width, spec.image_channels(), 1, 1, 0);
  plan.params = std::move(b.params);
  plan.convs = std::move(b.convs);
  return plan;
}

DiscriminatorPlan plan_discriminator(const DiscriminatorSpec& spec) {
  spec.validate();
  PlanBuilder b;
  DiscriminatorPlan plan;
  const int base = spec.base_channels;
  plan.layers.push_back(b.conv("layer1", spec.in_channels, base, 4, 2, 1));
  plan.layers.push_back(b.conv("layer2", base, 2 * base, 4, 2, 1));
  plan.layers.push_back(b.conv("layer3", 2 * base, 4 * base, 4, 2, 1));
  plan.layers.push_back(b.conv("layer4", 4 * base, 8 * base, 4, 1, 1));
  plan.layers.push_back(b.conv("head", 8 * base, 1, 4, 1, 1));
  plan.params = std::move(b.params);
  plan.convs = std::move(b.convs);
  return plan;
}

std::vector<std::pair<std::string, ops::ConvGeometry>> generator_layer_table(const GeneratorSpec& spec) {
  return plan_generator(spec).convs;
}

std::vector<std::pair<std::string, ops::ConvGeometry>> discriminator_layer_table(const DiscriminatorSpec& spec) {
  return plan_discriminator(spec).convs;
}

int discriminator_output_size(int input_size) {
  int s = input_size;
  for (const auto& [name, g] : plan_discriminator(DiscriminatorSpec{}).convs) s = g.out_size(s);
  return s;
}

DegeneracyReport in_degeneracy_probe(NormMode norm, Nonlinearity nonlinearity, double c_a, double c_b,
                                     std::uint64_t seed) {
  if (c_a == c_b) throw ConfigError("degeneracy probe needs two distinct control values");
  constexpr int kImageChannels = 3;
  constexpr int kOut = 8;
  constexpr int kSize = 16;
  const ops::ConvGeometry geom{kImageChannels + 1, kOut, 3, 1, 0};

  Rng rng(seed);
  Tensor<double> image(1, kImageChannels, kSize, kSize);
  fill_normal(image, rng, 0.0, 1.0);
  Tensor<double> weight(kOut, kImageChannels + 1, 3, 3);
  fill_normal(weight, rng, 0.0, std::sqrt(2.0 / static_cast<double>(geom.patch())));
  Tensor<double> bias(1, kOut, 1, 1);
  fill_normal(bias, rng, 0.0, 0.1);
  const Tensor<double> gamma(Shape{1, kOut, 1, 1}, 1.0);
  const Tensor<double> beta(Shape{1, kOut, 1, 1}, 0.0);

  auto block = [&](double c) {
    const Tensor<double> control(Shape{1, 1, kSize, kSize}, c);
    Tensor<double> a = ops::conv2d_forward(concat_channels(image, control), weight, bias, geom);
    if (nonlinearity == Nonlinearity::leaky_relu) a = ops::leaky_relu_forward(std::move(a), kLeakySlope);
    switch (norm) {
      case NormMode::identity: return a;
      case NormMode::instance: return ops::instance_norm_forward<double>(a, nullptr);
      case NormMode::batch: return ops::batch_norm_forward<double>(a, gamma, beta, beta, gamma, true, nullptr);
    }
    return a;
  };
  DegeneracyReport report;
  report.max_abs_diff = max_abs_diff(block(c_a), block(c_b));
  report.degenerate = report.max_abs_diff < 1e-5;
  return report;
}

}  // namespace monopix
