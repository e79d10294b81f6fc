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

#include "monopix/service.hpp"

#include <algorithm>
#include <chrono>

#include "monopix/checkpoint.hpp"
#include "monopix/json_keys.hpp"

namespace monopix {

ImageBatch<float> GeneratorTranslator::translate(const ImageBatch<float>& image, const ControlMap<float>& control) const {
  return generator_forward(gen_, image, control);
}

ImageBatch<float> IdentityTranslator::translate(const ImageBatch<float>& image, const ControlMap<float>& control) const {
  if (control.values.h() != image.h() || control.values.w() != image.w()) {
    throw ShapeError("control map " + control.values.shape().str() + " does not match image " + image.shape().str());
  }
  return image;
}

std::shared_ptr<const GeneratorTranslator> load_translator(const std::filesystem::path& checkpoint, Direction direction) {
  Checkpoint ck = load_checkpoint(checkpoint);
  const bool yx = direction == Direction::y_to_x;
  if (yx && !ck.setup.train.bidirectional) throw ConfigError("checkpoint has no reverse generator");
  nlohmann::json info = {{"kind", "generator"},
                         {"direction", yx ? "y_to_x" : "x_to_y"},
                         {"checkpoint", checkpoint.filename().string()},
                         {"step", ck.state.step},
                         {"preset", ck.setup.train.preset_name},
                         {"generator", ck.setup.generator}};
  return std::make_shared<GeneratorTranslator>(yx ? std::move(ck.state.g_yx) : std::move(ck.state.g_xy),
                                               std::move(info));
}

void ModelRegistry::put(ModelEntry entry) {
  auto ptr = std::make_shared<const ModelEntry>(std::move(entry));
  std::lock_guard lock(mu_);
  entries_[ptr->id] = std::move(ptr);
}

std::shared_ptr<const ModelEntry> ModelRegistry::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : it->second;
}

std::vector<std::shared_ptr<const ModelEntry>> ModelRegistry::list() const {
  std::lock_guard lock(mu_);
  std::vector<std::shared_ptr<const ModelEntry>> out;
  for (const auto& [id, e] : entries_) out.push_back(e);
  return out;
}

std::size_t ModelRegistry::load_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("model directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ckpt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::size_t added = 0;
  for (const auto& f : files) {
    const std::string stem = f.stem().string();
    std::shared_ptr<const Expert> expert;
    const auto expert_path = dir / (stem + ".expert");
    if (std::filesystem::exists(expert_path)) expert = std::make_shared<const Expert>(load_expert(expert_path));
    auto fwd = load_translator(f, Direction::x_to_y);
    const bool bidirectional = fwd->describe().at("generator").value("bidirectional", true);
    put({stem, fwd, expert});
    ++added;
    if (bidirectional) {
      put({stem + ".yx", load_translator(f, Direction::y_to_x), nullptr});
      ++added;
    }
  }
  return added;
}

ControlMap<float> resolve_control(const ControlSpec& spec, int height, int width, bool oob_allowed) {
  if (spec.recipe) return make_control_map(*spec.recipe, height, width, oob_allowed);
  const ControlBounds b = active_bounds(oob_allowed);
  return make_control_map(ControlRecipe::painted(png_to_control_values(spec.png, b.lo, b.hi)), height, width,
                          oob_allowed);
}

Bytes translate_png(const Translator& translator, const Bytes& image_png, const ControlSpec& control,
                    bool oob_allowed) {
  const ImageBatch<float> image = png_to_image(image_png);
  const ControlMap<float> map = resolve_control(control, image.h(), image.w(), oob_allowed);
  return image_to_png(translator.translate(image, map));
}

SearchStrategy strategy_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"kind", "n"}, "strategy");
  SearchStrategy s;
  const auto kind = j.value("kind", std::string("ternary"));
  if (kind == "exhaustive") {
    s.kind = SearchStrategy::Kind::exhaustive;
    s.n = j.value("n", 11);
  } else if (kind == "ternary") {
    s.kind = SearchStrategy::Kind::ternary;
    s.n = j.value("n", 7);
  } else if (kind == "expert") {
    s.kind = SearchStrategy::Kind::expert;
    s.n = 1;
  } else {
    throw ConfigError("unknown search strategy '" + kind + "'");
  }
  return s;
}

namespace {

void check_range(ControlBounds bounds, bool oob_allowed) {
  if (!(bounds.lo < bounds.hi)) throw RangeError("search bounds need lo < hi");
  const ControlBounds active = active_bounds(oob_allowed);
  if (!active.contains(bounds.lo) || !active.contains(bounds.hi)) {
    throw RangeError("bounds [" + std::to_string(bounds.lo) + ", " + std::to_string(bounds.hi) +
                     "] exceed the active control range");
  }
}

ImageBatch<float> translate_at(const Translator& t, const ImageBatch<float>& image, double c, bool oob_allowed) {
  return t.translate(image, make_control_map(ControlRecipe::constant(c), image.h(), image.w(), oob_allowed));
}

}  // namespace

SearchOutcome search_png(const Translator& translator, const Expert* expert, const Bytes& image_png,
                         const Bytes* reference_png, const std::string& criterion_name, const SearchStrategy& strategy,
                         ControlBounds bounds, bool oob_allowed) {
  check_range(bounds, oob_allowed);
  const ImageBatch<float> image = png_to_image(image_png);
  SearchOutcome out;
  if (strategy.kind == SearchStrategy::Kind::expert) {
    if (expert == nullptr) throw UnsupportedError("model has no expert network");
    const double c = std::clamp(expert_forward(*expert, image, nullptr).front(), bounds.lo, bounds.hi);
    out.result.c_star = c;
    out.result.final_low = out.result.final_high = c;
    out.png = image_to_png(translate_at(translator, image, c, oob_allowed));
    return out;
  }
  const AestheticCriterion criterion = criterion_by_name(criterion_name);
  std::optional<ImageBatch<float>> reference;
  if (reference_png != nullptr) reference = png_to_image(*reference_png);
  if (criterion.needs_reference && !reference) throw ConfigError("criterion '" + criterion.name + "' needs a reference image");
  if (reference && !(reference->shape() == image.shape())) throw ShapeError("reference and image shapes differ");
  const CriterionContext ctx{&image, reference ? &*reference : nullptr};
  const ScalarObjective f = [&](double c) { return criterion.score(translate_at(translator, image, c, oob_allowed), ctx); };
  out.result = strategy.kind == SearchStrategy::Kind::exhaustive ? exhaustive_search(f, bounds.lo, bounds.hi, strategy.n)
                                                                  : ternary_search(f, bounds.lo, bounds.hi, strategy.n);
  out.png = image_to_png(translate_at(translator, image, out.result.c_star, oob_allowed));
  return out;
}

std::vector<Bytes> trajectory_png(const Translator& translator, const Bytes& image_png, int count, ControlBounds bounds,
                                  bool oob_allowed) {
  check_range(bounds, oob_allowed);
  if (count < 2) throw ConfigError("a trajectory needs at least 2 intensities");
  const ImageBatch<float> image = png_to_image(image_png);
  std::vector<Bytes> out;
  for (double c : linspace(bounds.lo, bounds.hi, count)) out.push_back(image_to_png(translate_at(translator, image, c, oob_allowed)));
  return out;
}

// ---- HTTP routing ----

namespace {

struct HttpError : std::runtime_error {
  int status;
  HttpError(int s, const std::string& what) : std::runtime_error(what), status(s) {}
};

HttpReply json_reply(int status, const nlohmann::json& j) { return {status, "application/json", j.dump()}; }

HttpReply error_reply(int status, const std::string& code, const std::string& message) {
  return json_reply(status, {{"error", {{"status", status}, {"code", code}, {"message", message}}}});
}

Bytes decode_field(const nlohmann::json& req, const char* key) {
  if (!req.contains(key) || !req.at(key).is_string()) throw HttpError(400, std::string("missing base64 field '") + key + "'");
  try {
    return base64_decode(req.at(key).get_ref<const std::string&>());
  } catch (const IoError& e) {
    throw HttpError(400, std::string("field '") + key + "': " + e.what());
  }
}

std::shared_ptr<const ModelEntry> lookup(const ModelRegistry& registry, const nlohmann::json& req) {
  if (!req.contains("model") || !req.at("model").is_string()) throw HttpError(400, "missing string field 'model'");
  const auto id = req.at("model").get<std::string>();
  auto entry = registry.find(id);
  if (!entry) throw HttpError(404, "unknown model '" + id + "'");
  return entry;
}

ControlBounds bounds_from(const nlohmann::json& req) {
  if (!req.contains("bounds")) return kNominalBounds;
  const auto& b = req.at("bounds");
  require_known_keys(b, {"lo", "hi"}, "bounds");
  return {b.at("lo").get<double>(), b.at("hi").get<double>()};
}

nlohmann::json bounds_json(ControlBounds b) { return {{"lo", b.lo}, {"hi", b.hi}}; }

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

HttpReply do_translate(const ModelRegistry& registry, const nlohmann::json& req) {
  require_known_keys(req, {"model", "image", "control", "control_png", "oob_allowed"}, "translate request");
  const auto entry = lookup(registry, req);
  const bool oob = req.value("oob_allowed", false);
  const Bytes image = decode_field(req, "image");
  ControlSpec control;
  if (req.contains("control") == req.contains("control_png")) {
    throw HttpError(400, "give exactly one of 'control' and 'control_png'");
  }
  if (req.contains("control")) {
    control = ControlSpec::from_recipe(recipe_from_json(req.at("control")));
  } else {
    control = ControlSpec::from_png(decode_field(req, "control_png"));
  }
  const auto t0 = std::chrono::steady_clock::now();
  const Bytes png = translate_png(*entry->translator, image, control, oob);
  return json_reply(200, {{"model", entry->id},
                          {"bounds", bounds_json(active_bounds(oob))},
                          {"image", base64_encode(png)},
                          {"elapsed_ms", elapsed_ms(t0)}});
}

HttpReply do_search(const ModelRegistry& registry, const ServiceOptions& options, const nlohmann::json& req) {
  require_known_keys(req, {"model", "image", "reference", "criterion", "strategy", "bounds", "oob_allowed"},
                     "search request");
  const auto entry = lookup(registry, req);
  const bool oob = req.value("oob_allowed", false);
  const Bytes image = decode_field(req, "image");
  std::optional<Bytes> reference;
  if (req.contains("reference")) reference = decode_field(req, "reference");
  const SearchStrategy strategy = strategy_from_json(req.value("strategy", nlohmann::json::object()));
  if (strategy.n < 1 || strategy.n > options.max_search_n) {
    throw HttpError(400, "strategy n must lie in [1, " + std::to_string(options.max_search_n) + "]");
  }
  const ControlBounds bounds = bounds_from(req);
  const auto t0 = std::chrono::steady_clock::now();
  const SearchOutcome out = search_png(*entry->translator, entry->expert.get(), image, reference ? &*reference : nullptr,
                                       req.value("criterion", std::string("psnr")), strategy, bounds, oob);
  return json_reply(200, {{"model", entry->id},
                          {"bounds", bounds_json(active_bounds(oob))},
                          {"result", to_json(out.result)},
                          {"image", base64_encode(out.png)},
                          {"elapsed_ms", elapsed_ms(t0)}});
}

HttpReply do_trajectory(const ModelRegistry& registry, const ServiceOptions& options, const nlohmann::json& req) {
  require_known_keys(req, {"model", "image", "count", "bounds", "oob_allowed"}, "trajectory request");
  const auto entry = lookup(registry, req);
  const bool oob = req.value("oob_allowed", false);
  const Bytes image = decode_field(req, "image");
  const int count = req.value("count", 11);
  if (count < 2 || count > options.max_trajectory) {
    throw HttpError(400, "count must lie in [2, " + std::to_string(options.max_trajectory) + "]");
  }
  const ControlBounds bounds = bounds_from(req);
  const auto t0 = std::chrono::steady_clock::now();
  const auto pngs = trajectory_png(*entry->translator, image, count, bounds, oob);
  nlohmann::json images = nlohmann::json::array();
  for (const auto& p : pngs) images.push_back(base64_encode(p));
  return json_reply(200, {{"model", entry->id},
                          {"bounds", bounds_json(active_bounds(oob))},
                          {"intensities", linspace(bounds.lo, bounds.hi, count)},
                          {"images", std::move(images)},
                          {"elapsed_ms", elapsed_ms(t0)}});
}

HttpReply do_models(const ModelRegistry& registry) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& e : registry.list()) {
    models.push_back({{"id", e->id}, {"info", e->translator->describe()}, {"expert", e->expert != nullptr}});
  }
  return json_reply(200, {{"models", std::move(models)},
                          {"bounds", {{"nominal", bounds_json(kNominalBounds)}, {"out_of_bound", bounds_json(kOutOfBoundBounds)}}}});
}

}  // namespace

HttpReply handle_request(const ModelRegistry& registry, const ServiceOptions& options, const std::string& method,
                         const std::string& path, const std::string& body) {
  try {
    if (path == "/v1/health") {
      if (method != "GET") throw HttpError(405, "use GET");
      return json_reply(200, {{"status", "ok"}, {"models", registry.list().size()}});
    }
    if (path == "/v1/models") {
      if (method != "GET") throw HttpError(405, "use GET");
      return do_models(registry);
    }
    if (path != "/v1/translate" && path != "/v1/search" && path != "/v1/trajectory") {
      throw HttpError(404, "no route for " + path);
    }
    if (method != "POST") throw HttpError(405, "use POST");
    if (body.size() > options.max_payload_bytes) throw HttpError(413, "payload exceeds the size cap");
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw HttpError(400, std::string("body is not JSON: ") + e.what());
    }
    if (!req.is_object()) throw HttpError(400, "body must be a JSON object");
    if (path == "/v1/translate") return do_translate(registry, req);
    if (path == "/v1/search") return do_search(registry, options, req);
    return do_trajectory(registry, options, req);
  } catch (const HttpError& e) {
    const char* code = e.status == 404 ? "not_found" : e.status == 413 ? "payload_too_large"
                       : e.status == 405 ? "method_not_allowed" : "bad_request";
    return error_reply(e.status, code, e.what());
  } catch (const RangeError& e) {
    return error_reply(422, "out_of_bounds", e.what());
  } catch (const UnsupportedError& e) {
    return error_reply(422, "unsupported", e.what());
  } catch (const ShapeError& e) {
    return error_reply(400, "shape_mismatch", e.what());
  } catch (const ConfigError& e) {
    return error_reply(400, "invalid_request", e.what());
  } catch (const IoError& e) {
    return error_reply(400, "invalid_image", e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_reply(400, "invalid_request", e.what());
  } catch (const std::exception& e) {
    return error_reply(500, "internal", e.what());
  }
}

}  // namespace monopix
