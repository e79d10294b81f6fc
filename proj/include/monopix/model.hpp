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

// Control-conditioned U-Net generator and PatchGAN discriminator.
//
// Generator, per level: [conv-lrelu-norm] x2 then 2x2 max-pool on the way
// down; bilinear up-sample, plain conv, concat with the skip, then
// [conv-lrelu-norm] x2 on the way up; a final 1x1 conv and output
// activation. The control map enters as one extra input channel of the very
// first convolution only.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "monopix/layers.hpp"
#include "monopix/params.hpp"

namespace monopix {

enum class NormMode { identity, instance, batch };
enum class Nonlinearity { leaky_relu, none };
enum class OutputActivation { tanh, linear_clamped };
enum class InitScheme { normal_002, kaiming_normal };
enum class Mode { train, eval };

std::string to_string(NormMode mode);
std::string to_string(Nonlinearity nl);
std::string to_string(OutputActivation act);
std::string to_string(InitScheme init);
NormMode parse_norm_mode(const std::string& s);
Nonlinearity parse_nonlinearity(const std::string& s);
OutputActivation parse_output_activation(const std::string& s);
InitScheme parse_init_scheme(const std::string& s);

inline constexpr double kLeakySlope = 0.2;

struct GeneratorSpec {
  int in_channels = 4;  // image channels + 1 control channel
  int base_channels = 8;
  int depth = 4;
  NormMode norm_mode = NormMode::identity;
  Nonlinearity pre_norm_nonlinearity = Nonlinearity::leaky_relu;
  OutputActivation output_activation = OutputActivation::tanh;
  InitScheme init = InitScheme::normal_002;
  bool bidirectional = true;
  /// Permits conv -> instance-norm without a nonlinearity. Only meant for
  /// demonstrating that the control signal is erased in that configuration.
  bool allow_degenerate = false;

  [[nodiscard]] int image_channels() const { return in_channels - 1; }
  [[nodiscard]] int size_multiple() const { return 1 << depth; }

  /// Throws ConfigError when the spec cannot be built.
  void validate() const;

  /// Full-size widths (8.6M parameters at RGB).
  static GeneratorSpec full_width();
  /// Desk-scale default.
  static GeneratorSpec desk();

  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

struct DiscriminatorSpec {
  int in_channels = 3;
  int base_channels = 16;
  InitScheme init = InitScheme::normal_002;

  void validate() const;
  static DiscriminatorSpec full_width();
  static DiscriminatorSpec desk();

  friend bool operator==(const DiscriminatorSpec&, const DiscriminatorSpec&) = default;
};

struct ConvLayer {
  ops::ConvGeometry geom;
  std::size_t weight = kNoParam;
  std::size_t bias = kNoParam;
};

/// conv -> (leaky ReLU) -> norm.
struct ClnLayer {
  ConvLayer conv;
  std::size_t gamma = kNoParam;
  std::size_t beta = kNoParam;
  std::size_t running_mean = kNoParam;
  std::size_t running_var = kNoParam;
};

template <typename Scalar>
struct ClnCache {
  Tensor<Scalar> input;
  Tensor<Scalar> activated;
  ops::NormCache<Scalar> norm;
};

template <typename Scalar>
struct GeneratorCache {
  Tensor<Scalar> input;  // image ++ control
  std::vector<ClnCache<Scalar>> cln;
  std::vector<Shape> pool_input_shapes;
  std::vector<std::vector<std::int32_t>> pool_argmax;
  std::vector<Shape> upsample_input_shapes;
  std::vector<Tensor<Scalar>> up_conv_inputs;
  Tensor<Scalar> head_input;
  Tensor<Scalar> head_output;  // before the output activation
  Tensor<Scalar> output;
};

/// Generator parameters plus the layer plan derived from the spec.
template <typename Scalar>
struct Generator {
  GeneratorSpec spec;
  ParamStore<Scalar> params;
  std::vector<ClnLayer> encoder;     // 2 per level
  std::vector<ClnLayer> bottleneck;  // 2
  std::vector<ConvLayer> up_convs;   // 1 per level, coarsest first
  std::vector<ClnLayer> decoder;     // 2 per level, coarsest first
  ConvLayer head;

  template <typename Other>
  [[nodiscard]] Generator<Other> cast() const {
    Generator<Other> out;
    out.spec = spec;
    out.params = params.template cast<Other>();
    out.encoder = encoder;
    out.bottleneck = bottleneck;
    out.up_convs = up_convs;
    out.decoder = decoder;
    out.head = head;
    return out;
  }
};

template <typename Scalar>
struct DiscriminatorCache {
  std::vector<Tensor<Scalar>> inputs;     // input of every conv
  std::vector<Tensor<Scalar>> activated;  // post-activation output, hidden layers
};

template <typename Scalar>
struct Discriminator {
  DiscriminatorSpec spec;
  ParamStore<Scalar> params;
  std::vector<ConvLayer> layers;  // the last one is the 1-channel head

  template <typename Other>
  [[nodiscard]] Discriminator<Other> cast() const {
    Discriminator<Other> out;
    out.spec = spec;
    out.params = params.template cast<Other>();
    out.layers = layers;
    return out;
  }
};

enum class ParamKind { conv_weight, bias, norm_scale, norm_shift, running_mean, running_var };

struct ParamDecl {
  std::string name;
  Shape shape;
  ParamKind kind;
  int fan_in = 1;
};

/// Layer plan and parameter declarations implied by a spec; shared by the
/// scalar instantiations.
struct GeneratorPlan {
  std::vector<ClnLayer> encoder;
  std::vector<ClnLayer> bottleneck;
  std::vector<ConvLayer> up_convs;
  std::vector<ClnLayer> decoder;
  ConvLayer head;
  std::vector<ParamDecl> params;
  std::vector<std::pair<std::string, ops::ConvGeometry>> convs;
};

struct DiscriminatorPlan {
  std::vector<ConvLayer> layers;
  std::vector<ParamDecl> params;
  std::vector<std::pair<std::string, ops::ConvGeometry>> convs;
};

GeneratorPlan plan_generator(const GeneratorSpec& spec);
DiscriminatorPlan plan_discriminator(const DiscriminatorSpec& spec);

template <typename Scalar>
Generator<Scalar> build_generator(const GeneratorSpec& spec, std::uint64_t seed);

template <typename Scalar>
Discriminator<Scalar> build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);

/// Plain-English layer table: one (name, geometry) row per convolution.
std::vector<std::pair<std::string, ops::ConvGeometry>> generator_layer_table(const GeneratorSpec& spec);
std::vector<std::pair<std::string, ops::ConvGeometry>> discriminator_layer_table(
    const DiscriminatorSpec& spec);

/// Spatial size of the confidence map for an input of the given size.
int discriminator_output_size(int input_size);

/// Full forward with optional activation cache for backward.
template <typename Scalar>
ImageBatch<Scalar> forward(const Generator<Scalar>& gen, const ImageBatch<Scalar>& image,
                           const ControlMap<Scalar>& control, Mode mode,
                           GeneratorCache<Scalar>* cache);

/// Backpropagates `grad_output`; parameter gradients accumulate into
/// `grads` (same layout as gen.params) when non-null. Returns the gradient
/// with respect to the image channels of the input.
template <typename Scalar>
ImageBatch<Scalar> backward(const Generator<Scalar>& gen, const GeneratorCache<Scalar>& cache,
                            const ImageBatch<Scalar>& grad_output, ParamStore<Scalar>* grads);

template <typename Scalar>
ConfidenceMap<Scalar> forward(const Discriminator<Scalar>& disc, const ImageBatch<Scalar>& image,
                              DiscriminatorCache<Scalar>* cache);

template <typename Scalar>
ImageBatch<Scalar> backward(const Discriminator<Scalar>& disc, const DiscriminatorCache<Scalar>& cache,
                            const ConfidenceMap<Scalar>& grad_output, ParamStore<Scalar>* grads,
                            bool want_input_grad = true);

/// Inference-mode generator forward.
template <typename Scalar>
ImageBatch<Scalar> generator_forward(const Generator<Scalar>& gen, const ImageBatch<Scalar>& image,
                                     const ControlMap<Scalar>& control) {
  return forward(gen, image, control, Mode::eval, static_cast<GeneratorCache<Scalar>*>(nullptr));
}

template <typename Scalar>
ConfidenceMap<Scalar> discriminator_forward(const Discriminator<Scalar>& disc,
                                            const ImageBatch<Scalar>& image) {
  return forward(disc, image, static_cast<DiscriminatorCache<Scalar>*>(nullptr));
}

/// Folds the batch statistics recorded in a training-mode cache into the
/// running averages (momentum 0.1, unbiased variance).
template <typename Scalar>
void update_running_stats(Generator<Scalar>& gen, const GeneratorCache<Scalar>& cache,
                          double momentum = 0.1);

struct DegeneracyReport {
  bool degenerate = false;
  double max_abs_diff = 0.0;
};

/// Builds a single conv -> (nonlinearity) -> norm block with random weights
/// and compares its outputs for two constant control values on the same
/// random image. Valid (unpadded) convolution keeps a constant map constant
/// after the conv, so the comparison isolates the normalization.
DegeneracyReport in_degeneracy_probe(NormMode norm, Nonlinearity nonlinearity, double c_a, double c_b,
                                     std::uint64_t seed);

/// Per position, the fraction of first-block channels whose pre-activation
/// changes sign between two control intensities; a (n, 1, H, W) map in [0, 1].
template <typename Scalar>
Tensor<Scalar> activated_feature_map(const Generator<Scalar>& gen, const ImageBatch<Scalar>& image,
                                     double c_low, double c_high);

}  // namespace monopix

#include "monopix/model_impl.hpp"
