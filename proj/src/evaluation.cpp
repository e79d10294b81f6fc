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

#include "monopix/evaluation.hpp"

#include <cmath>

#include "monopix/losses.hpp"

namespace monopix {

nlohmann::json HeldOutReport::to_json() const {
  return {{"linearity", nlohmann::json::parse(linearity.json())},
          {"pairs", pairs},
          {"positive_pairs", positive_pairs},
          {"positive_fraction", positive_fraction()},
          {"items", items},
          {"agreeing_items", agreeing_items},
          {"agreement_fraction", agreement_fraction()}};
}

HeldOutReport evaluate_held_out(const Generator<float>& gen, const Discriminator<float>& d_tar,
                                const std::vector<PairedItem>& items, const HeldOutOptions& options) {
  HeldOutReport out;
  Rng rng(options.seed);
  const auto intensities = linspace(0.0, 1.0, options.trajectory_points);
  const AestheticCriterion psnr = psnr_to_reference();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const PairedItem& item = items[i];
    out.linearity.add(evaluate_trajectory("item_" + std::to_string(i), make_trajectory(gen, item.input, intensities)));
    for (int k = 0; k < options.pairs_per_item; ++k) {
      const ContrastivePair pair = cig_sample(rng, 1, 0.0);
      const auto delta = confidence_delta_target(d_tar, gen, item.input, pair);
      out.positive_pairs += delta.array().mean() > 0.0f;
      ++out.pairs;
    }
    const auto ex = exhaustive_infer(gen, item.input, psnr, &item.reference, options.exhaustive_n);
    const auto te = ternary_infer(gen, item.input, psnr, &item.reference, options.ternary_n);
    out.agreeing_items += std::abs(ex.c_star - te.c_star) <= options.agreement_tolerance;
    ++out.items;
  }
  out.linearity.finalize();
  return out;
}

EvalReport evaluate_linearity(const Generator<float>& gen, const std::vector<ImageBatch<float>>& inputs,
                              const std::vector<std::string>& ids, int trajectory_points) {
  if (ids.size() != inputs.size()) throw ConfigError("one id per input required");
  EvalReport report;
  const auto intensities = linspace(0.0, 1.0, trajectory_points);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    report.add(evaluate_trajectory(ids[i], make_trajectory(gen, inputs[i], intensities)));
  }
  report.finalize();
  return report;
}

}  // namespace monopix
