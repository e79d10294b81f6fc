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
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "monopix/json_keys.hpp"
#include "monopix/objective.hpp"
#include "monopix/optim.hpp"

namespace monopix {

/// Training runs in single precision.
using Real = float;

enum class UpdateOrder { discriminator_first, generator_first };

struct TrainConfig {
  double lr = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  int epochs = 200;
  int lr_decay_start_epoch = 100;
  int batch_size = 4;      // images per step; each is translated under both intensities
  int pairs_per_item = 2;  // fixed: the low and high intensity of a contrastive pair
  int steps_per_epoch = 0; // 0 = derive from the dataset size
  long max_steps = 0;      // 0 = run all epochs
  bool bidirectional = true;
  std::uint64_t seed = 0;
  std::string preset_name = "custom";
  double delta_min = 0.0;
  UpdateOrder update_order = UpdateOrder::discriminator_first;
  double grad_clip = 0.0;  // 0 disables global-norm clipping
  bool hflip = true;
  int crop = 0;            // random square crop size; 0 disables

  void validate() const;
};

/// Learning rate: constant until the decay epoch, then linear to zero at
/// the final epoch.
double lr_schedule(int epoch, const TrainConfig& cfg);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossReport {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  LossTerms generator;       // adv / cyc / mono / df as seen by the generator update
  LossTerms discriminator;   // adv / mono / df as seen by the discriminator update
  double total_g = 0.0;
  double total_d = 0.0;
  double mean_delta_tar = 0.0;

  static std::string csv_header();
  [[nodiscard]] std::string csv_row() const;
  friend bool operator==(const LossReport&, const LossReport&) = default;
};

struct RollingStats {
  double total_g = 0.0;
  double total_d = 0.0;
  double mean_delta_tar = 0.0;
  long count = 0;

  void add(const LossReport& r, double decay = 0.98);
};

struct TrainState {
  long step = 0;
  int epoch = 0;
  Generator<Real> g_xy;
  Generator<Real> g_yx;
  Discriminator<Real> d_x;
  Discriminator<Real> d_y;
  AdamMoments<Real> adam_g_xy;
  AdamMoments<Real> adam_g_yx;
  AdamMoments<Real> adam_d_x;
  AdamMoments<Real> adam_d_y;
  long adam_t_g = 0;
  long adam_t_d = 0;
  Rng rng;
  RollingStats rolling;

  [[nodiscard]] TranslationModels<Real> models(bool bidirectional) const {
    return {&g_xy, bidirectional ? &g_yx : nullptr, bidirectional ? &d_x : nullptr, &d_y, bidirectional};
  }
};

/// Everything a run needs besides its state.
struct TrainSetup {
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;
  LossWeights weights;
  TrainConfig train;

  void validate() const;
};

/// Fresh networks and optimizer state. Each network gets its own seed
/// derived from `setup.train.seed`.
TrainState init_train_state(const TrainSetup& setup);

/// One discriminator update and one generator update on a batch pair,
/// using a fresh contrastive pair per item. Throws TrainingError (leaving
/// the state untouched) if a loss or gradient is non-finite.
LossReport train_step(TrainState& state, const TrainSetup& setup, const ImageBatch<Real>& batch_x,
                      const ImageBatch<Real>& batch_y);

// JSON (de)serialization of the configuration types.
void to_json(nlohmann::json& j, const GeneratorSpec& s);
void from_json(const nlohmann::json& j, GeneratorSpec& s);
void to_json(nlohmann::json& j, const DiscriminatorSpec& s);
void from_json(const nlohmann::json& j, DiscriminatorSpec& s);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const TrainSetup& s);
void from_json(const nlohmann::json& j, TrainSetup& s);

}  // namespace monopix
