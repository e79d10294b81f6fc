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

#include "monopix/presets.hpp"

#include <array>
#include <string_view>

#include "monopix/json_keys.hpp"

namespace monopix {

extern const char* const kBuiltinPresetsJson;

const nlohmann::json& builtin_presets() {
  static const nlohmann::json presets = nlohmann::json::parse(kBuiltinPresetsJson);
  return presets;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& item : builtin_presets().items()) out.push_back(item.key());
  return out;
}

void RunConfig::validate() const {
  setup.validate();
  data.validate();
  if (setup.generator.bidirectional != setup.train.bidirectional) {
    throw ConfigError("generator.bidirectional and train.bidirectional disagree");
  }
  if (setup.train.crop > data.image_size) throw ConfigError("crop exceeds image_size");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = c.setup;
  j["preset"] = c.preset;
  j["description"] = c.description;
  j["ablation"] = c.ablation;
  j["data"] = c.data;
}

void apply_ablation(TrainSetup& setup, const std::string& variant) {
  auto& w = setup.weights;
  if (variant.empty() || variant == "c") return;
  if (variant == "a") {
    w.lambda_mn = 0.0;
    w.lambda_df = 0.0;
  } else if (variant == "b") {
    w.lambda_df = 0.0;
  } else if (variant == "d") {
    w.epsilon = 0.0;
  } else if (variant == "e") {
    w.epsilon = 1.0;
  } else {
    throw ConfigError("unknown ablation variant '" + variant + "' (expected a..e)");
  }
}

namespace {

constexpr std::array<std::string_view, 5> kSections = {"generator", "discriminator", "loss_weights", "train", "data"};

// Flattens the inheritance chain of a named preset into one object.
nlohmann::json flatten(const std::string& name, const nlohmann::json& presets, int depth) {
  if (depth > 8) throw ConfigError("preset inheritance too deep at '" + name + "'");
  if (!presets.contains(name)) throw ConfigError("unknown preset '" + name + "'");
  const auto& p = presets.at(name);
  require_known_keys(p, {"description", "base", "generator", "discriminator", "loss_weights", "train", "data"},
                     "preset " + name);
  nlohmann::json out = nlohmann::json::object();
  if (p.contains("base")) out = flatten(p.at("base").get<std::string>(), presets, depth + 1);
  for (const auto& section : kSections) {
    const std::string key(section);
    if (!p.contains(key)) continue;
    if (!out.contains(key)) out[key] = nlohmann::json::object();
    out[key].merge_patch(p.at(key));
  }
  if (p.contains("description")) out["description"] = p.at("description");
  return out;
}

}  // namespace

RunConfig resolve_config(const nlohmann::json& config, const nlohmann::json& presets) {
  require_known_keys(config,
                     {"preset", "ablation", "description", "generator", "discriminator", "loss_weights", "train", "data"},
                     "config");
  nlohmann::json merged = nlohmann::json::object();
  RunConfig out;
  if (config.contains("preset")) {
    out.preset = config.at("preset").get<std::string>();
    merged = flatten(out.preset, presets, 0);
  }
  for (const auto& section : kSections) {
    const std::string key(section);
    if (!config.contains(key)) continue;
    if (!merged.contains(key)) merged[key] = nlohmann::json::object();
    merged[key].merge_patch(config.at(key));
  }
  out.description = config.value("description", merged.value("description", std::string()));
  try {
    nlohmann::json setup_json = nlohmann::json::object();
    for (const char* key : {"generator", "discriminator", "loss_weights", "train"}) {
      if (merged.contains(key)) setup_json[key] = merged.at(key);
    }
    out.setup = setup_json.get<TrainSetup>();
    if (merged.contains("data")) out.data = merged.at("data").get<DomainPairSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  if (!out.preset.empty() && out.setup.train.preset_name == TrainConfig{}.preset_name) {
    out.setup.train.preset_name = out.preset;
  }
  out.ablation = config.value("ablation", std::string());
  apply_ablation(out.setup, out.ablation);
  out.validate();
  return out;
}

RunConfig resolve_preset(const std::string& name, const nlohmann::json& presets) {
  return resolve_config({{"preset", name}}, presets);
}

}  // namespace monopix
