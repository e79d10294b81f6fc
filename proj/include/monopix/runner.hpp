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

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "monopix/checkpoint.hpp"
#include "monopix/data.hpp"
#include "monopix/presets.hpp"

namespace monopix {

/// Raises glibc's mmap and trim thresholds so that the large per-step
/// temporaries are recycled instead of page-faulted in every step.
void tune_allocator();

struct TrainingData {
  std::unique_ptr<ImageSource> x;
  std::unique_ptr<ImageSource> y;
  std::vector<std::string> warnings;
};

/// Synthetic pairs are rendered in memory; folder pairs are decoded lazily.
TrainingData load_training_data(const DomainPairSpec& spec);

/// Batches per epoch for the larger of the two domains.
int derive_steps_per_epoch(std::size_t nx, std::size_t ny, int batch_size);

/// Step count of the whole run: max_steps when set, else epochs * steps_per_epoch.
long total_steps(const TrainConfig& cfg);

/// Augmentation draws for a step; a pure function of (seed, step).
Rng augment_rng(std::uint64_t seed, long step);

/// Assembles the (x, y) batches of one step, augmentation included.
std::pair<ImageBatch<Real>, ImageBatch<Real>> step_batches(const TrainingData& data, const TrainConfig& cfg, long step);

struct RunOptions {
  std::filesystem::path out_dir;  // empty keeps everything in memory
  long checkpoint_every = 0;      // 0 = only the final checkpoint
  long stop_after = 0;            // stop early at this step (0 = run to the end)
  std::filesystem::path resume;   // checkpoint to continue from
  std::function<void(const LossReport&)> on_step;
};

struct RunResult {
  TrainSetup setup;
  TrainState state;
  std::vector<LossReport> log;  // the steps run by this call
  std::filesystem::path final_checkpoint;
};

/// Trains per `config`. On resume the checkpoint's setup wins, except
/// train.max_steps which may be raised to extend a run.
RunResult run_training(const RunConfig& config, const TrainingData& data, const RunOptions& options);

inline std::filesystem::path step_checkpoint_path(const std::filesystem::path& dir, long step) {
  return dir / ("step_" + std::to_string(step) + ".ckpt");
}

}  // namespace monopix
