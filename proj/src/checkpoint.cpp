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

#include "monopix/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace monopix {

std::string to_string(CheckpointError::Code c) {
  switch (c) {
    case CheckpointError::Code::missing_file: return "missing_file";
    case CheckpointError::Code::schema_mismatch: return "schema_mismatch";
    case CheckpointError::Code::corrupt_metadata: return "corrupt_metadata";
    case CheckpointError::Code::corrupt_payload: return "corrupt_payload";
    case CheckpointError::Code::checksum_mismatch: return "checksum_mismatch";
    case CheckpointError::Code::missing_array: return "missing_array";
    case CheckpointError::Code::shape_mismatch: return "shape_mismatch";
  }
  return "?";
}

namespace {

constexpr char kMagic[8] = {'M', 'O', 'N', 'O', 'P', 'I', 'X', '\0'};
constexpr std::uint32_t kPayloadVersion = 1;

static_assert(sizeof(float) == 4);

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Reader {
  const Bytes& in;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > in.size()) throw CheckpointError(CheckpointError::Code::corrupt_payload, "checkpoint payload truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
};

}  // namespace

Bytes encode_arrays(const std::map<std::string, Tensor<float>>& arrays) {
  Bytes out(kMagic, kMagic + 8);
  put_u32(out, kPayloadVersion);
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, t] : arrays) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    for (int d : {t.n(), t.c(), t.h(), t.w()}) put_u32(out, static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, t.data() + i, 4);
      put_u32(out, bits);
    }
  }
  return out;
}

std::map<std::string, Tensor<float>> decode_arrays(const Bytes& payload) {
  using Code = CheckpointError::Code;
  if (payload.size() < 16 || std::memcmp(payload.data(), kMagic, 8) != 0) {
    throw CheckpointError(Code::corrupt_payload, "checkpoint payload has no MONOPIX header");
  }
  Reader r{payload, 8};
  if (r.u32() != kPayloadVersion) throw CheckpointError(Code::schema_mismatch, "unsupported payload version");
  const std::uint32_t count = r.u32();
  std::map<std::string, Tensor<float>> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = r.u32();
    r.need(len);
    std::string name(reinterpret_cast<const char*>(payload.data() + r.pos), len);
    r.pos += len;
    Shape s{static_cast<int>(r.u32()), static_cast<int>(r.u32()), static_cast<int>(r.u32()), static_cast<int>(r.u32())};
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw CheckpointError(Code::corrupt_payload, "negative dimension");
    r.need(static_cast<std::size_t>(s.numel()) * 4);
    Tensor<float> t(s);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const std::uint32_t bits = r.u32();
      std::memcpy(t.data() + i, &bits, 4);
    }
    out.emplace(std::move(name), std::move(t));
  }
  if (r.pos != payload.size()) throw CheckpointError(Code::corrupt_payload, "trailing bytes in checkpoint payload");
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

namespace {

// Works for const and mutable states alike.
template <typename State>
auto slots(State& s) {
  struct Slot {
    const char* name;
    decltype(&s.g_xy.params) params;
    decltype(&s.adam_g_xy) moments;
  };
  return std::vector<Slot>{{"g_xy", &s.g_xy.params, &s.adam_g_xy},
                           {"g_yx", &s.g_yx.params, &s.adam_g_yx},
                           {"d_x", &s.d_x.params, &s.adam_d_x},
                           {"d_y", &s.d_y.params, &s.adam_d_y}};
}

void write_atomic(const std::filesystem::path& path, const Bytes& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  write_file(tmp, bytes);
  std::filesystem::rename(tmp, path);
}

}  // namespace

void save_checkpoint(const TrainState& state, const TrainSetup& setup, const std::filesystem::path& path) {
  std::map<std::string, Tensor<float>> arrays;
  nlohmann::json networks = nlohmann::json::array();
  for (const auto& slot : slots(state)) {
    if (slot.params->size() == 0) continue;
    networks.push_back(slot.name);
    const std::string net = slot.name;
    for (std::size_t i = 0; i < slot.params->size(); ++i) {
      const auto& name = slot.params->names[i];
      arrays.emplace(net + "/" + name, (*slot.params)[i]);
      if (slot.moments->m.size() == slot.params->size()) {
        arrays.emplace("adam_m/" + net + "/" + name, slot.moments->m[i]);
        arrays.emplace("adam_v/" + net + "/" + name, slot.moments->v[i]);
      }
    }
  }
  const Bytes payload = encode_arrays(arrays);
  nlohmann::json meta = {
      {"schema_version", kCheckpointSchemaVersion},
      {"setup", setup},
      {"seed", setup.train.seed},
      {"step", state.step},
      {"epoch", state.epoch},
      {"adam_t_g", state.adam_t_g},
      {"adam_t_d", state.adam_t_d},
      {"rng_state", serialize_rng(state.rng)},
      {"init", to_string(setup.generator.init)},
      {"reduction", to_string(setup.weights.reduction)},
      {"loss_weights", setup.weights},
      {"networks", networks},
      {"rolling", {{"total_g", state.rolling.total_g}, {"total_d", state.rolling.total_d},
                   {"mean_delta_tar", state.rolling.mean_delta_tar}, {"count", state.rolling.count}}},
      {"payload_sha256", sha256_hex(payload)},
  };
  write_atomic(path, payload);
  const std::string text = meta.dump(2);
  write_atomic(sidecar_path(path), Bytes(text.begin(), text.end()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  using Code = CheckpointError::Code;
  Bytes payload;
  Bytes meta_bytes;
  try {
    payload = read_file(path);
    meta_bytes = read_file(sidecar_path(path));
  } catch (const IoError& e) {
    throw CheckpointError(Code::missing_file, e.what());
  }

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Code::corrupt_metadata, std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  if (!meta.is_object() || !meta.contains("schema_version") || !meta.at("schema_version").is_number_integer()) {
    throw CheckpointError(Code::corrupt_metadata, "checkpoint metadata lacks schema_version");
  }
  if (meta.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
    throw CheckpointError(Code::schema_mismatch, "checkpoint schema version " +
                                                     std::to_string(meta.at("schema_version").get<int>()) +
                                                     " is not supported (expected " +
                                                     std::to_string(kCheckpointSchemaVersion) + ")");
  }

  Checkpoint ck;
  std::vector<std::string> networks;
  try {
    ck.setup = meta.at("setup").get<TrainSetup>();
    ck.setup.validate();
    ck.state.step = meta.at("step").get<long>();
    ck.state.epoch = meta.at("epoch").get<int>();
    ck.state.adam_t_g = meta.at("adam_t_g").get<long>();
    ck.state.adam_t_d = meta.at("adam_t_d").get<long>();
    ck.state.rng = deserialize_rng(meta.at("rng_state").get<std::string>());
    const auto& roll = meta.at("rolling");
    ck.state.rolling.total_g = roll.at("total_g").get<double>();
    ck.state.rolling.total_d = roll.at("total_d").get<double>();
    ck.state.rolling.mean_delta_tar = roll.at("mean_delta_tar").get<double>();
    ck.state.rolling.count = roll.at("count").get<long>();
    networks = meta.at("networks").get<std::vector<std::string>>();
    if (meta.at("payload_sha256").get<std::string>() != sha256_hex(payload)) {
      throw CheckpointError(Code::checksum_mismatch, "checkpoint payload checksum mismatch");
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(Code::corrupt_metadata, std::string("checkpoint metadata invalid: ") + e.what());
  }

  const auto arrays = decode_arrays(payload);
  const bool bi = ck.setup.train.bidirectional;
  ck.state.g_xy = build_generator<Real>(ck.setup.generator, 0);
  ck.state.d_y = build_discriminator<Real>(ck.setup.discriminator, 0);
  if (bi) {
    ck.state.g_yx = build_generator<Real>(ck.setup.generator, 0);
    ck.state.d_x = build_discriminator<Real>(ck.setup.discriminator, 0);
  }
  for (const auto& slot : slots(ck.state)) {
    if (slot.params->size() == 0) continue;
    const std::string net = slot.name;
    if (std::find(networks.begin(), networks.end(), net) == networks.end()) {
      throw CheckpointError(Code::missing_array, "checkpoint lacks network " + net);
    }
    *slot.moments = AdamMoments<Real>::like(*slot.params);
    auto fetch = [&](const std::string& key, Tensor<float>& dst) {
      const auto it = arrays.find(key);
      if (it == arrays.end()) throw CheckpointError(Code::missing_array, "checkpoint lacks array " + key);
      if (!(it->second.shape() == dst.shape())) {
        throw CheckpointError(Code::shape_mismatch, "array " + key + " has shape " + it->second.shape().str() +
                                                        ", expected " + dst.shape().str());
      }
      dst = it->second;
    };
    for (std::size_t i = 0; i < slot.params->size(); ++i) {
      const auto& name = slot.params->names[i];
      fetch(net + "/" + name, (*slot.params)[i]);
      fetch("adam_m/" + net + "/" + name, slot.moments->m[i]);
      fetch("adam_v/" + net + "/" + name, slot.moments->v[i]);
    }
  }
  return ck;
}

void save_expert(const Expert& expert, const std::filesystem::path& path) {
  std::map<std::string, Tensor<float>> arrays;
  for (std::size_t i = 0; i < expert.params.size(); ++i) arrays.emplace(expert.params.names[i], expert.params[i]);
  const Bytes payload = encode_arrays(arrays);
  const nlohmann::json meta = {{"schema_version", kCheckpointSchemaVersion},
                               {"kind", "expert"},
                               {"spec", {{"in_channels", expert.spec.in_channels},
                                         {"base_channels", expert.spec.base_channels},
                                         {"layers", expert.spec.layers}}},
                               {"payload_sha256", sha256_hex(payload)}};
  write_atomic(path, payload);
  const std::string text = meta.dump(2);
  write_atomic(sidecar_path(path), Bytes(text.begin(), text.end()));
}

Expert load_expert(const std::filesystem::path& path) {
  using Code = CheckpointError::Code;
  Bytes payload;
  nlohmann::json meta;
  try {
    payload = read_file(path);
    const Bytes m = read_file(sidecar_path(path));
    meta = nlohmann::json::parse(m.begin(), m.end());
  } catch (const IoError& e) {
    throw CheckpointError(Code::missing_file, e.what());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Code::corrupt_metadata, std::string("expert metadata is not JSON: ") + e.what());
  }
  ExpertSpec spec;
  try {
    if (meta.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
      throw CheckpointError(Code::schema_mismatch, "expert schema version is not supported");
    }
    if (meta.at("kind").get<std::string>() != "expert") throw CheckpointError(Code::corrupt_metadata, "not an expert");
    const auto& s = meta.at("spec");
    spec = {s.at("in_channels").get<int>(), s.at("base_channels").get<int>(), s.at("layers").get<int>()};
    spec.validate();
    if (meta.at("payload_sha256").get<std::string>() != sha256_hex(payload)) {
      throw CheckpointError(Code::checksum_mismatch, "expert payload checksum mismatch");
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(Code::corrupt_metadata, std::string("expert metadata invalid: ") + e.what());
  }
  const auto arrays = decode_arrays(payload);
  Expert expert = build_expert(spec, 0);
  for (std::size_t i = 0; i < expert.params.size(); ++i) {
    const auto& name = expert.params.names[i];
    const auto it = arrays.find(name);
    if (it == arrays.end()) throw CheckpointError(Code::missing_array, "expert lacks array " + name);
    if (!(it->second.shape() == expert.params[i].shape())) {
      throw CheckpointError(Code::shape_mismatch, "expert array " + name + " has the wrong shape");
    }
    expert.params[i] = it->second;
  }
  return expert;
}

}  // namespace monopix
