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

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "monopix/data.hpp"
#include "monopix/training.hpp"

namespace monopix {

/// Everything `train` needs: model/loss/optimizer setup plus the data source.
struct RunConfig {
  std::string preset;
  std::string description;
  std::string ablation;  // "", or one of a..e
  TrainSetup setup;
  DomainPairSpec data;

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);

/// The shipped presets (configs/presets.json, embedded at build time).
const nlohmann::json& builtin_presets();
std::vector<std::string> preset_names();

/// Ablation variants: a = no monotonicity or fidelity terms, b = monotonicity
/// only, c = full objective, d = margin 0, e = margin 1.
void apply_ablation(TrainSetup& setup, const std::string& variant);

/// Resolves a config object. `"preset"` names a base (itself possibly
/// derived through `"base"`); the remaining sections are merged over it
/// key by key. Throws ConfigError on unknown presets, keys or values.
RunConfig resolve_config(const nlohmann::json& config, const nlohmann::json& presets = builtin_presets());
RunConfig resolve_preset(const std::string& name, const nlohmann::json& presets = builtin_presets());

}  // namespace monopix
