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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "monopix/data.hpp"
#include "monopix/inference.hpp"
#include "monopix/metrics.hpp"

namespace monopix {

struct HeldOutOptions {
  int trajectory_points = 11;
  int pairs_per_item = 20;
  int ternary_n = 7;
  int exhaustive_n = 11;
  double agreement_tolerance = 0.15;
  std::uint64_t seed = 0;
};

struct HeldOutReport {
  EvalReport linearity;           // per-item AL/Rg/RL/Sm under pixel_l2
  int pairs = 0;
  int positive_pairs = 0;         // pairs whose mean target-confidence gap is > 0
  int items = 0;
  int agreeing_items = 0;         // ternary within tolerance of the exhaustive best
  [[nodiscard]] double positive_fraction() const { return pairs ? double(positive_pairs) / pairs : 0.0; }
  [[nodiscard]] double agreement_fraction() const { return items ? double(agreeing_items) / items : 0.0; }
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Trajectory linearity, contrastive-pair ordering under `d_tar`, and
/// ternary-vs-exhaustive agreement (PSNR to the paired reference).
HeldOutReport evaluate_held_out(const Generator<float>& gen, const Discriminator<float>& d_tar,
                                const std::vector<PairedItem>& items, const HeldOutOptions& options);

/// Linearity only, for inputs without references.
EvalReport evaluate_linearity(const Generator<float>& gen, const std::vector<ImageBatch<float>>& inputs,
                              const std::vector<std::string>& ids, int trajectory_points);

}  // namespace monopix
