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
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "monopix/rng.hpp"
#include "monopix/tensor.hpp"

namespace monopix {

enum class TaskKind { brightness, noise, folder };

std::string to_string(TaskKind k);
TaskKind parse_task_kind(const std::string& s);

struct DomainPairSpec {
  TaskKind task = TaskKind::brightness;
  double x_param = 0.3;  // gain (brightness) or noise sigma, in [0, 1] pixel units
  double y_param = 1.0;
  int image_size = 64;
  int count = 200;       // images per domain, before the 90/10 split
  std::uint64_t seed = 0;
  std::string path_x;    // folder task only
  std::string path_y;
  bool strict = false;   // folder task: fail on unreadable files instead of skipping

  void validate() const;
};

void to_json(nlohmann::json& j, const DomainPairSpec& s);
void from_json(const nlohmann::json& j, DomainPairSpec& s);

/// One domain's images in [-1, 1], each 1x3xHxW.
struct DomainSet {
  std::vector<ImageBatch<float>> train;
  std::vector<ImageBatch<float>> test;
};

/// Held-out X content together with a rendering of the same content at an
/// intermediate domain parameter.
struct PairedItem {
  ImageBatch<float> input;
  ImageBatch<float> reference;
  ImageBatch<float> clean;  // the content before gain or noise
  double reference_param = 0.0;
};

struct DomainPair {
  DomainPairSpec spec;
  DomainSet x;
  DomainSet y;
  std::vector<PairedItem> paired_test;
};

/// Number of held-out items for `count` images (10%, at least one).
int test_count(int count);

/// Random anti-aliased ellipses and rectangles on mid-gray, values in [0, 1].
ImageBatch<float> render_shapes(Rng& rng, int size);

/// Applies a domain parameter to [0, 1] content and maps the result to [-1, 1].
ImageBatch<float> apply_domain(const ImageBatch<float>& content01, TaskKind task, double param, Rng& rng);

/// Deterministic synthetic domains; X and Y draw content from disjoint seed
/// streams, so the pair is unpaired.
DomainPair synth_generate(const DomainPairSpec& spec);

/// Read-only image collection.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  [[nodiscard]] virtual std::size_t size() const = 0;
  [[nodiscard]] virtual ImageBatch<float> get(std::size_t i) const = 0;
};

class MemorySource final : public ImageSource {
 public:
  explicit MemorySource(std::vector<ImageBatch<float>> images) : images_(std::move(images)) {}
  [[nodiscard]] std::size_t size() const override { return images_.size(); }
  [[nodiscard]] ImageBatch<float> get(std::size_t i) const override { return images_.at(i); }

 private:
  std::vector<ImageBatch<float>> images_;
};

/// PNG files of a directory in lexicographic order, decoded on access.
class FolderDataset final : public ImageSource {
 public:
  FolderDataset(std::vector<std::filesystem::path> files, int image_size)
      : files_(std::move(files)), image_size_(image_size) {}
  [[nodiscard]] std::size_t size() const override { return files_.size(); }
  [[nodiscard]] ImageBatch<float> get(std::size_t i) const override;
  [[nodiscard]] const std::vector<std::filesystem::path>& files() const { return files_; }

 private:
  std::vector<std::filesystem::path> files_;
  int image_size_;
};

struct FolderLoadResult {
  std::unique_ptr<FolderDataset> dataset;
  std::vector<std::string> warnings;  // one per skipped file
};

/// Lists and header-checks every *.png under `dir`. Unreadable files are
/// skipped with a warning, or raise IoError when `strict`.
FolderLoadResult load_folder(const std::filesystem::path& dir, int image_size, bool strict);

struct AugmentFlags {
  bool hflip = false;
  int crop = 0;  // 0 disables cropping
};

/// Mirrors the samples whose mask entry is set.
ImageBatch<float> hflip(const ImageBatch<float>& batch, const std::vector<bool>& mask);
ImageBatch<float> crop(const ImageBatch<float>& batch, int size, const std::vector<std::pair<int, int>>& offsets);

/// Random flip (p = 0.5 per sample) then a random crop; all draws come from `rng`.
ImageBatch<float> augment(const ImageBatch<float>& batch, const AugmentFlags& flags, Rng& rng);

/// Stacks single images into one batch.
ImageBatch<float> stack(const std::vector<ImageBatch<float>>& images);

/// Epoch permutation of `n` items; a pure function of (seed, stream, epoch).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t stream, long epoch, std::size_t n);

/// Item indices of batch `step` drawn through consecutive epoch permutations.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::uint64_t stream, long step, int batch_size,
                                       std::size_t n);

ImageBatch<float> load_batch(const ImageSource& source, const std::vector<std::size_t>& indices);

/// Writes every image as PNG plus manifest.json with per-file checksums.
void write_dataset(const DomainPair& pair, const std::filesystem::path& dir);

/// Re-hashes the files named in a manifest; returns the mismatching paths.
std::vector<std::string> verify_manifest(const std::filesystem::path& dir);

}  // namespace monopix
