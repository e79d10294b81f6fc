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
#include <map>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "monopix/inference.hpp"
#include "monopix/io.hpp"
#include "monopix/training.hpp"

namespace monopix {

inline constexpr int kCheckpointSchemaVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Code {
    missing_file,
    schema_mismatch,
    corrupt_metadata,
    corrupt_payload,
    checksum_mismatch,
    missing_array,
    shape_mismatch
  };

  CheckpointError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  [[nodiscard]] Code code() const { return code_; }

 private:
  Code code_;
};

std::string to_string(CheckpointError::Code c);

/// Named float arrays in a flat binary container ("MONOPIX" magic,
/// little-endian, shapes stored per array).
Bytes encode_arrays(const std::map<std::string, Tensor<float>>& arrays);
std::map<std::string, Tensor<float>> decode_arrays(const Bytes& payload);

struct Checkpoint {
  TrainSetup setup;
  TrainState state;
};

/// `<path>` holds the arrays; `<path>.json` the metadata sidecar. Both are
/// written through temporaries and renamed into place.
void save_checkpoint(const TrainState& state, const TrainSetup& setup, const std::filesystem::path& path);

/// Either returns a complete checkpoint or throws CheckpointError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Expert networks use the same container; the sidecar holds the spec.
void save_expert(const Expert& expert, const std::filesystem::path& path);
Expert load_expert(const std::filesystem::path& path);

}  // namespace monopix
