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

#include "monopix/runner.hpp"

#include <fstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace monopix {

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

TrainingData load_training_data(const DomainPairSpec& spec) {
  spec.validate();
  TrainingData out;
  if (spec.task == TaskKind::folder) {
    auto fx = load_folder(spec.path_x, spec.image_size, spec.strict);
    auto fy = load_folder(spec.path_y, spec.image_size, spec.strict);
    out.warnings = std::move(fx.warnings);
    out.warnings.insert(out.warnings.end(), fy.warnings.begin(), fy.warnings.end());
    if (fx.dataset->size() == 0 || fy.dataset->size() == 0) throw ConfigError("a training folder holds no images");
    out.x = std::move(fx.dataset);
    out.y = std::move(fy.dataset);
  } else {
    DomainPair pair = synth_generate(spec);
    out.x = std::make_unique<MemorySource>(std::move(pair.x.train));
    out.y = std::make_unique<MemorySource>(std::move(pair.y.train));
  }
  return out;
}

int derive_steps_per_epoch(std::size_t nx, std::size_t ny, int batch_size) {
  const std::size_t n = std::max(nx, ny);
  return static_cast<int>((n + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size));
}

long total_steps(const TrainConfig& cfg) {
  if (cfg.max_steps > 0) return cfg.max_steps;
  return static_cast<long>(cfg.epochs) * cfg.steps_per_epoch;
}

Rng augment_rng(std::uint64_t seed, long step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0xa0u,
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(static_cast<std::uint64_t>(step) >> 32)};
  return Rng(seq);
}

std::pair<ImageBatch<Real>, ImageBatch<Real>> step_batches(const TrainingData& data, const TrainConfig& cfg, long step) {
  const AugmentFlags flags{cfg.hflip, cfg.crop};
  Rng rng = augment_rng(cfg.seed, step);
  auto bx = augment(load_batch(*data.x, batch_indices(cfg.seed, 0, step, cfg.batch_size, data.x->size())), flags, rng);
  auto by = augment(load_batch(*data.y, batch_indices(cfg.seed, 1, step, cfg.batch_size, data.y->size())), flags, rng);
  return {std::move(bx), std::move(by)};
}

namespace {

// Keeps the log rows up to `step` so a resumed run appends where it left off.
void truncate_log(const std::filesystem::path& path, long step) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (keep.empty()) {
      keep.push_back(line);
      continue;
    }
    if (std::stol(line.substr(0, line.find(','))) <= step) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

}  // namespace

RunResult run_training(const RunConfig& config, const TrainingData& data, const RunOptions& options) {
  RunResult result;
  result.setup = config.setup;
  if (!options.resume.empty()) {
    Checkpoint ck = load_checkpoint(options.resume);
    const long max_steps = std::max(ck.setup.train.max_steps, config.setup.train.max_steps);
    result.setup = std::move(ck.setup);
    result.setup.train.max_steps = max_steps;
    result.state = std::move(ck.state);
  }
  TrainConfig& cfg = result.setup.train;
  if (cfg.steps_per_epoch == 0) cfg.steps_per_epoch = derive_steps_per_epoch(data.x->size(), data.y->size(), cfg.batch_size);
  result.setup.validate();
  if (options.resume.empty()) result.state = init_train_state(result.setup);

  const bool write = !options.out_dir.empty();
  const auto log_path = options.out_dir / "loss.csv";
  std::ofstream log;
  if (write) {
    std::filesystem::create_directories(options.out_dir);
    const std::string cfg_text = nlohmann::json(result.setup).dump(2);
    write_text(options.out_dir / "setup.json", cfg_text + "\n");
    if (!options.resume.empty() && std::filesystem::exists(log_path)) {
      truncate_log(log_path, result.state.step);
      log.open(log_path, std::ios::app);
    } else {
      log.open(log_path, std::ios::trunc);
      log << LossReport::csv_header() << '\n';
    }
  }

  TrainState& st = result.state;
  st.epoch = static_cast<int>(st.step / cfg.steps_per_epoch);
  long end = total_steps(cfg);
  if (options.stop_after > 0) end = std::min(end, options.stop_after);
  while (st.step < end) {
    const auto [bx, by] = step_batches(data, cfg, st.step);
    LossReport rep = train_step(st, result.setup, bx, by);
    if (write) log << rep.csv_row() << '\n';
    if (options.on_step) options.on_step(rep);
    result.log.push_back(std::move(rep));
    if (write && options.checkpoint_every > 0 && st.step % options.checkpoint_every == 0 && st.step < end) {
      log.flush();
      save_checkpoint(st, result.setup, step_checkpoint_path(options.out_dir, st.step));
    }
  }
  if (write) {
    log.flush();
    result.final_checkpoint = step_checkpoint_path(options.out_dir, st.step);
    save_checkpoint(st, result.setup, result.final_checkpoint);
    save_checkpoint(st, result.setup, options.out_dir / "final.ckpt");
  }
  return result;
}

}  // namespace monopix
