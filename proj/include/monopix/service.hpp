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
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "monopix/inference.hpp"
#include "monopix/io.hpp"

namespace monopix {

/// Anything that maps (image, control map) to an image.
class Translator {
 public:
  virtual ~Translator() = default;
  [[nodiscard]] virtual ImageBatch<float> translate(const ImageBatch<float>& image,
                                                    const ControlMap<float>& control) const = 0;
  [[nodiscard]] virtual nlohmann::json describe() const = 0;
};

class GeneratorTranslator final : public Translator {
 public:
  explicit GeneratorTranslator(Generator<float> gen, nlohmann::json info = {})
      : gen_(std::move(gen)), info_(std::move(info)) {}
  [[nodiscard]] ImageBatch<float> translate(const ImageBatch<float>& image,
                                            const ControlMap<float>& control) const override;
  [[nodiscard]] nlohmann::json describe() const override { return info_; }
  [[nodiscard]] const Generator<float>& generator() const { return gen_; }

 private:
  Generator<float> gen_;
  nlohmann::json info_;
};

/// Pass-through stub: returns the input unchanged.
class IdentityTranslator final : public Translator {
 public:
  [[nodiscard]] ImageBatch<float> translate(const ImageBatch<float>& image,
                                            const ControlMap<float>& control) const override;
  [[nodiscard]] nlohmann::json describe() const override { return {{"kind", "identity"}}; }
};

enum class Direction { x_to_y, y_to_x };

/// Loads one generator of a training checkpoint.
std::shared_ptr<const GeneratorTranslator> load_translator(const std::filesystem::path& checkpoint,
                                                           Direction direction = Direction::x_to_y);

struct ModelEntry {
  std::string id;
  std::shared_ptr<const Translator> translator;
  std::shared_ptr<const Expert> expert;  // optional
};

/// Immutable entries behind a lock; put() replaces an entry whole.
class ModelRegistry {
 public:
  void put(ModelEntry entry);
  [[nodiscard]] std::shared_ptr<const ModelEntry> find(const std::string& id) const;
  [[nodiscard]] std::vector<std::shared_ptr<const ModelEntry>> list() const;

  /// Registers `<stem>` for every `<stem>.ckpt` in `dir` (plus `<stem>.yx`
  /// for bidirectional checkpoints) and attaches `<stem>.expert` if present.
  /// Returns the number of entries added.
  std::size_t load_directory(const std::filesystem::path& dir);

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const ModelEntry>> entries_;
};

/// Either a recipe or a grayscale PNG mapped linearly onto the active bounds.
struct ControlSpec {
  std::optional<ControlRecipe> recipe;
  Bytes png;

  static ControlSpec from_recipe(ControlRecipe r) { return {std::move(r), {}}; }
  static ControlSpec from_png(Bytes png) { return {std::nullopt, std::move(png)}; }
};

ControlMap<float> resolve_control(const ControlSpec& spec, int height, int width, bool oob_allowed);

/// The one inference path shared by the CLI and the HTTP service.
Bytes translate_png(const Translator& translator, const Bytes& image_png, const ControlSpec& control,
                    bool oob_allowed);

struct SearchStrategy {
  enum class Kind { exhaustive, ternary, expert };
  Kind kind = Kind::ternary;
  int n = 7;
};

SearchStrategy strategy_from_json(const nlohmann::json& j);

struct SearchOutcome {
  SearchResult result;
  Bytes png;  // translation at c_star
};

/// Searches the intensity maximizing `criterion` within `bounds`; bounds
/// outside [0, 1] need `oob_allowed`. The expert strategy requires an expert.
SearchOutcome search_png(const Translator& translator, const Expert* expert, const Bytes& image_png,
                         const Bytes* reference_png, const std::string& criterion, const SearchStrategy& strategy,
                         ControlBounds bounds, bool oob_allowed);

/// `count` translations at evenly spaced intensities over `bounds`.
std::vector<Bytes> trajectory_png(const Translator& translator, const Bytes& image_png, int count,
                                  ControlBounds bounds, bool oob_allowed);

struct ServiceOptions {
  std::size_t max_payload_bytes = 16u << 20;
  int max_trajectory = 101;
  int max_search_n = 64;
};

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Routes one request; transport-independent so it can be tested directly.
HttpReply handle_request(const ModelRegistry& registry, const ServiceOptions& options, const std::string& method,
                         const std::string& path, const std::string& body);

/// HTTP front end over handle_request. bind() with port 0 picks a free
/// port and returns it; run() blocks until stop().
class HttpServer {
 public:
  HttpServer(const ModelRegistry& registry, ServiceOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  int bind(const std::string& host, int port);
  void run();
  void stop();
  [[nodiscard]] bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocking HTTP server on `host:port`.
void serve(const ModelRegistry& registry, const std::string& host, int port, const ServiceOptions& options);

}  // namespace monopix
