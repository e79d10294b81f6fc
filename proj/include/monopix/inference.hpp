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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "monopix/layers.hpp"
#include "monopix/metrics.hpp"
#include "monopix/model.hpp"

namespace monopix {

struct ControlBounds {
  double lo = 0.0;
  double hi = 1.0;

  [[nodiscard]] bool contains(double v) const { return v >= lo && v <= hi; }
  friend bool operator==(const ControlBounds&, const ControlBounds&) = default;
};

inline constexpr ControlBounds kNominalBounds{0.0, 1.0};
inline constexpr ControlBounds kOutOfBoundBounds{-1.0, 2.0};

inline ControlBounds active_bounds(bool oob_allowed, ControlBounds oob = kOutOfBoundBounds) {
  return oob_allowed ? oob : kNominalBounds;
}

/// Recipe for a single-image control map.
struct ControlRecipe {
  enum class Kind { constant, horizontal_ramp, vertical_ramp, mask_blend, painted };

  Kind kind = Kind::constant;
  double v0 = 0.0;        // constant value, ramp start, or value inside the mask
  double v1 = 0.0;        // ramp end, or value outside the mask
  Tensor<float> raster;   // 1x1xHxW mask in [0, 1] or painted intensities

  static ControlRecipe constant(double v) { return {Kind::constant, v, v, {}}; }
  static ControlRecipe horizontal_ramp(double a, double b) { return {Kind::horizontal_ramp, a, b, {}}; }
  static ControlRecipe vertical_ramp(double a, double b) { return {Kind::vertical_ramp, a, b, {}}; }
  static ControlRecipe mask_blend(Tensor<float> mask, double v_in, double v_out) {
    return {Kind::mask_blend, v_in, v_out, std::move(mask)};
  }
  static ControlRecipe painted(Tensor<float> values) { return {Kind::painted, 0.0, 0.0, std::move(values)}; }
};

std::string to_string(ControlRecipe::Kind k);

/// Builds a 1x1xHxW map. Every value must lie within the active bounds
/// (nominal [0, 1], or `oob` when out-of-bound inference is allowed);
/// violations raise RangeError.
ControlMap<float> make_control_map(const ControlRecipe& recipe, int height, int width, bool oob_allowed,
                                   ControlBounds oob = kOutOfBoundBounds);

/// {"kind": "constant", "v": 0.5}, {"kind": "horizontal_ramp", "v0": 0, "v1": 1},
/// {"kind": "mask_blend", "mask": [[...]], "v_in": 1, "v_out": 0},
/// {"kind": "painted", "values": [[...]]}.
ControlRecipe recipe_from_json(const nlohmann::json& j);
nlohmann::json recipe_to_json(const ControlRecipe& r);

/// Inputs available to an aesthetic criterion besides the candidate.
struct CriterionContext {
  const ImageBatch<float>* input = nullptr;
  const ImageBatch<float>* reference = nullptr;
};

/// Scores a candidate translation; higher is better.
struct AestheticCriterion {
  std::string name;
  bool needs_reference = false;
  std::function<double(const ImageBatch<float>&, const CriterionContext&)> score;
};

/// PSNR (data range 2) against the reference.
AestheticCriterion psnr_to_reference();
/// Negated AKLD of candidate vs reference residuals, taking the input as the clean image.
AestheticCriterion negative_akld_to_reference();
AestheticCriterion criterion_by_name(const std::string& name);

struct Evaluation {
  double c = 0.0;
  double score = 0.0;
};

struct TernaryIteration {
  double low = 0.0;
  double high = 0.0;
  double c1 = 0.0;
  double score1 = 0.0;
  double c2 = 0.0;
  double score2 = 0.0;
};

struct SearchResult {
  double c_star = 0.0;
  double score = 0.0;
  int evaluations = 0;                       // distinct calls of the objective
  std::vector<Evaluation> trace;             // every evaluation in call order
  std::vector<TernaryIteration> iterations;  // ternary search only
  double final_low = 0.0;
  double final_high = 0.0;
};

nlohmann::json to_json(const SearchResult& r);

using ScalarObjective = std::function<double(double)>;

/// Evaluates `n` evenly spaced points of [lo, hi] (endpoints included) and
/// returns the best; ties go to the lowest c.
SearchResult exhaustive_search(const ScalarObjective& f, double lo, double hi, int n);

/// Ternary search: each iteration scores c1 = low + w/3 and c2 = high - w/3
/// and moves low to c1 when f(c1) <= f(c2), else high to c2. Returns the
/// midpoint of the final bracket, whose width is (hi - lo) (2/3)^n. `score`
/// is the better of the two scores in the last iteration.
SearchResult ternary_search(const ScalarObjective& f, double lo, double hi, int n);

/// Generator output for a constant intensity.
ImageBatch<float> translate_constant(const Generator<float>& gen, const ImageBatch<float>& image, double c,
                                     bool oob_allowed = false);

Trajectory<float> make_trajectory(const Generator<float>& gen, const ImageBatch<float>& image,
                                  const std::vector<double>& intensities, bool oob_allowed = false);

/// The criterion as a function of intensity for one input (1xCxHxW).
ScalarObjective intensity_objective(const Generator<float>& gen, const ImageBatch<float>& image,
                                    const AestheticCriterion& criterion, const ImageBatch<float>* reference,
                                    bool oob_allowed = false);

SearchResult exhaustive_infer(const Generator<float>& gen, const ImageBatch<float>& image,
                              const AestheticCriterion& criterion, const ImageBatch<float>* reference, int n,
                              ControlBounds range = kNominalBounds);

SearchResult ternary_infer(const Generator<float>& gen, const ImageBatch<float>& image,
                           const AestheticCriterion& criterion, const ImageBatch<float>* reference, int n,
                           ControlBounds range = kNominalBounds);

/// Four stride-2 3x3 convolutions with leaky ReLU, global average pooling
/// and a linear head predicting one intensity per image.
struct ExpertSpec {
  int in_channels = 3;
  int base_channels = 8;
  int layers = 4;

  void validate() const;
};

struct Expert {
  ExpertSpec spec;
  ParamStore<float> params;
  std::vector<ops::ConvGeometry> convs;  // feature layers, then the head as a 1x1 conv
};

struct ExpertCache {
  std::vector<Tensor<float>> inputs;     // input of every conv, head included
  std::vector<Tensor<float>> activated;  // post-activation outputs of the feature layers
  Shape pooled_from;
};

Expert build_expert(const ExpertSpec& spec, std::uint64_t seed);

/// One prediction per image of the batch.
std::vector<double> expert_forward(const Expert& expert, const ImageBatch<float>& images, ExpertCache* cache);

void expert_backward(const Expert& expert, const ExpertCache& cache, const std::vector<double>& grad_out,
                     ParamStore<float>& grads);

struct ExpertTrainConfig {
  int epochs = 300;
  double lr = 1e-3;
  int batch_size = 8;
  int label_points = 11;  // exhaustive grid used for labels
  std::uint64_t seed = 0;
  ExpertSpec spec;

  void validate() const;
};

struct ExpertFit {
  Expert expert;
  std::vector<double> labels;
  std::vector<double> loss_curve;  // mean absolute error per epoch
};

/// Fits the expert to given labels with mean absolute error and Adam.
ExpertFit fit_expert(const std::vector<ImageBatch<float>>& inputs, const std::vector<double>& labels,
                     const ExpertTrainConfig& cfg);

/// Labels every (input, reference) pair with the exhaustive-search best
/// intensity of the frozen generator, then fits the expert.
ExpertFit train_expert(const Generator<float>& gen, const std::vector<ImageBatch<float>>& inputs,
                       const std::vector<ImageBatch<float>>& references, const AestheticCriterion& criterion,
                       const ExpertTrainConfig& cfg);

struct ExpertInference {
  ImageBatch<float> image;
  double c = 0.0;
};

/// Predicts an intensity (clamped to the nominal range) and runs one generator pass with it.
ExpertInference expert_infer(const Expert& expert, const Generator<float>& gen, const ImageBatch<float>& image);

}  // namespace monopix
