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

#include "monopix/losses.hpp"

#include <algorithm>

namespace monopix {

std::string to_string(Reduction r) { return r == Reduction::mean ? "mean" : "sum"; }

Reduction parse_reduction(const std::string& s) {
  if (s == "mean") return Reduction::mean;
  if (s == "sum") return Reduction::sum;
  throw ConfigError("unknown reduction '" + s + "'");
}

ContrastivePair cig_sample(Rng& rng, int batch_size, double delta_min) {
  if (delta_min < 0.0 || delta_min >= 1.0) throw ConfigError("delta_min must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  ContrastivePair pair;
  pair.low.reserve(batch_size);
  pair.high.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    double a = 0.0;
    double b = 0.0;
    do {
      a = uniform01(rng);
      b = uniform01(rng);
      if (a > b) std::swap(a, b);
    } while (b - a < delta_min || b == a);
    pair.low.push_back(a);
    pair.high.push_back(b);
  }
  return pair;
}

void LossWeights::validate() const {
  if (lambda_cyc < 0 || lambda_mn < 0 || lambda_df < 0 || lambda_adv < 0) {
    throw ConfigError("loss weights must be >= 0");
  }
  if (epsilon < 0) throw ConfigError("margin epsilon must be >= 0");
}

double total_generator_loss(const LossTerms& t, const LossWeights& w, bool bidirectional) {
  double total = w.lambda_adv * t.adv + w.lambda_cyc * t.cyc + w.lambda_mn * t.mono;
  if (bidirectional) total += w.lambda_df * t.df;
  return total;
}

double total_discriminator_loss(const LossTerms& t, const LossWeights& w, bool bidirectional) {
  double total = w.lambda_adv * t.adv + w.lambda_mn * t.mono;
  if (bidirectional) total += w.lambda_df * t.df;
  return total;
}

}  // namespace monopix
