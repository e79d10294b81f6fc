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

#include "monopix/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "monopix/optim.hpp"

namespace monopix {

std::string to_string(ControlRecipe::Kind k) {
  switch (k) {
    case ControlRecipe::Kind::constant: return "constant";
    case ControlRecipe::Kind::horizontal_ramp: return "horizontal_ramp";
    case ControlRecipe::Kind::vertical_ramp: return "vertical_ramp";
    case ControlRecipe::Kind::mask_blend: return "mask_blend";
    case ControlRecipe::Kind::painted: return "painted";
  }
  return "?";
}

namespace {

void check_bound(double v, const ControlBounds& b, const char* what) {
  if (!std::isfinite(v) || !b.contains(v)) {
    throw RangeError(std::string(what) + " " + std::to_string(v) + " outside [" + std::to_string(b.lo) + ", " +
                     std::to_string(b.hi) + "]");
  }
}

void check_raster(const Tensor<float>& r, int height, int width, const char* what) {
  if (r.n() != 1 || r.c() != 1 || r.h() != height || r.w() != width) {
    throw ShapeError(std::string(what) + " raster " + r.shape().str() + " does not match 1x1x" +
                     std::to_string(height) + "x" + std::to_string(width));
  }
}

}  // namespace

ControlMap<float> make_control_map(const ControlRecipe& recipe, int height, int width, bool oob_allowed,
                                   ControlBounds oob) {
  if (height < 1 || width < 1) throw ShapeError("make_control_map: empty size");
  const ControlBounds b = active_bounds(oob_allowed, oob);
  ControlMap<float> map{Tensor<float>(1, 1, height, width), oob_allowed};
  auto& t = map.values;
  auto ramp = [](double a, double z, int i, int count) { return count == 1 ? a : a + (z - a) * i / (count - 1); };
  switch (recipe.kind) {
    case ControlRecipe::Kind::constant:
      check_bound(recipe.v0, b, "control value");
      t.array().setConstant(static_cast<float>(recipe.v0));
      break;
    case ControlRecipe::Kind::horizontal_ramp:
    case ControlRecipe::Kind::vertical_ramp: {
      check_bound(recipe.v0, b, "ramp start");
      check_bound(recipe.v1, b, "ramp end");
      const bool horizontal = recipe.kind == ControlRecipe::Kind::horizontal_ramp;
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          t(0, 0, y, x) = static_cast<float>(horizontal ? ramp(recipe.v0, recipe.v1, x, width)
                                                        : ramp(recipe.v0, recipe.v1, y, height));
        }
      }
      break;
    }
    case ControlRecipe::Kind::mask_blend: {
      check_bound(recipe.v0, b, "mask inside value");
      check_bound(recipe.v1, b, "mask outside value");
      check_raster(recipe.raster, height, width, "mask");
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double m = recipe.raster.array()[i];
        if (!(m >= 0.0 && m <= 1.0)) throw RangeError("mask entries must lie in [0, 1]");
        t.array()[i] = static_cast<float>(m * recipe.v0 + (1.0 - m) * recipe.v1);
      }
      break;
    }
    case ControlRecipe::Kind::painted:
      check_raster(recipe.raster, height, width, "painted");
      for (Eigen::Index i = 0; i < t.size(); ++i) check_bound(recipe.raster.array()[i], b, "painted value");
      t.array() = recipe.raster.array();
      break;
  }
  return map;
}

namespace {

Tensor<float> raster_from_json(const nlohmann::json& rows) {
  if (!rows.is_array() || rows.empty() || !rows.front().is_array() || rows.front().empty()) {
    throw ConfigError("raster must be a non-empty array of rows");
  }
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(rows.front().size());
  Tensor<float> t(1, 1, h, w);
  for (int y = 0; y < h; ++y) {
    const auto& row = rows[static_cast<std::size_t>(y)];
    if (!row.is_array() || static_cast<int>(row.size()) != w) throw ConfigError("raster rows must have equal length");
    for (int x = 0; x < w; ++x) {
      const auto& v = row[static_cast<std::size_t>(x)];
      if (!v.is_number()) throw ConfigError("raster entries must be numbers");
      t(0, 0, y, x) = v.get<float>();
    }
  }
  return t;
}

nlohmann::json raster_to_json(const Tensor<float>& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (int y = 0; y < t.h(); ++y) {
    nlohmann::json row = nlohmann::json::array();
    for (int x = 0; x < t.w(); ++x) row.push_back(t(0, 0, y, x));
    rows.push_back(std::move(row));
  }
  return rows;
}

double number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) throw ConfigError(std::string("recipe needs numeric '") + key + "'");
  return j.at(key).get<double>();
}

}  // namespace

ControlRecipe recipe_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) {
    throw ConfigError("control recipe needs a string 'kind'");
  }
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "constant") return ControlRecipe::constant(number(j, "v"));
  if (kind == "horizontal_ramp") return ControlRecipe::horizontal_ramp(number(j, "v0"), number(j, "v1"));
  if (kind == "vertical_ramp") return ControlRecipe::vertical_ramp(number(j, "v0"), number(j, "v1"));
  if (kind == "mask_blend") {
    if (!j.contains("mask")) throw ConfigError("mask_blend recipe needs 'mask'");
    return ControlRecipe::mask_blend(raster_from_json(j.at("mask")), number(j, "v_in"), number(j, "v_out"));
  }
  if (kind == "painted") {
    if (!j.contains("values")) throw ConfigError("painted recipe needs 'values'");
    return ControlRecipe::painted(raster_from_json(j.at("values")));
  }
  throw ConfigError("unknown control recipe kind '" + kind + "'");
}

nlohmann::json recipe_to_json(const ControlRecipe& r) {
  switch (r.kind) {
    case ControlRecipe::Kind::constant: return {{"kind", "constant"}, {"v", r.v0}};
    case ControlRecipe::Kind::horizontal_ramp:
    case ControlRecipe::Kind::vertical_ramp: return {{"kind", to_string(r.kind)}, {"v0", r.v0}, {"v1", r.v1}};
    case ControlRecipe::Kind::mask_blend:
      return {{"kind", "mask_blend"}, {"mask", raster_to_json(r.raster)}, {"v_in", r.v0}, {"v_out", r.v1}};
    case ControlRecipe::Kind::painted: return {{"kind", "painted"}, {"values", raster_to_json(r.raster)}};
  }
  return {};
}

AestheticCriterion psnr_to_reference() {
  return {"psnr_to_reference", true, [](const ImageBatch<float>& cand, const CriterionContext& ctx) {
            if (ctx.reference == nullptr) throw ConfigError("psnr_to_reference needs a reference image");
            return psnr(cand, *ctx.reference, 2.0);
          }};
}

AestheticCriterion negative_akld_to_reference() {
  return {"negative_akld_to_reference", true, [](const ImageBatch<float>& cand, const CriterionContext& ctx) {
            if (ctx.reference == nullptr || ctx.input == nullptr) {
              throw ConfigError("negative_akld_to_reference needs a reference and the input image");
            }
            return -akld(cand, *ctx.reference, *ctx.input).value;
          }};
}

AestheticCriterion criterion_by_name(const std::string& name) {
  if (name == "psnr_to_reference" || name == "psnr") return psnr_to_reference();
  if (name == "negative_akld_to_reference" || name == "akld") return negative_akld_to_reference();
  throw ConfigError("unknown criterion '" + name + "'");
}

nlohmann::json to_json(const SearchResult& r) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : r.trace) trace.push_back({{"c", e.c}, {"score", e.score}});
  nlohmann::json its = nlohmann::json::array();
  for (const auto& it : r.iterations) {
    its.push_back({{"low", it.low}, {"high", it.high}, {"c1", it.c1}, {"score1", it.score1}, {"c2", it.c2},
                   {"score2", it.score2}});
  }
  return {{"c_star", r.c_star},     {"score", r.score},         {"evaluations", r.evaluations},
          {"trace", trace},         {"iterations", its},        {"final_low", r.final_low},
          {"final_high", r.final_high}};
}

SearchResult exhaustive_search(const ScalarObjective& f, double lo, double hi, int n) {
  if (n < 2) throw ConfigError("exhaustive search needs at least 2 points");
  if (!(lo < hi)) throw RangeError("exhaustive search needs lo < hi");
  SearchResult out;
  for (double c : linspace(lo, hi, n)) {
    const double s = f(c);
    out.trace.push_back({c, s});
    if (out.trace.size() == 1 || s > out.score) {
      out.score = s;
      out.c_star = c;
    }
  }
  out.evaluations = n;
  out.final_low = lo;
  out.final_high = hi;
  return out;
}

SearchResult ternary_search(const ScalarObjective& f, double lo, double hi, int n) {
  if (!(lo < hi)) throw RangeError("ternary search needs c_left < c_right");
  if (n < 1) throw ConfigError("ternary search needs at least one iteration");
  SearchResult out;
  // Scores are memoized on the exact intensity. One-third splits never
  // revisit a point, so in practice every iteration costs two calls.
  std::map<double, double> memo;
  auto eval = [&](double c) {
    const auto it = memo.find(c);
    if (it != memo.end()) return it->second;
    const double s = f(c);
    memo.emplace(c, s);
    out.trace.push_back({c, s});
    ++out.evaluations;
    return s;
  };
  double low = lo;
  double high = hi;
  for (int i = 0; i < n; ++i) {
    const double third = (high - low) / 3.0;
    const double c1 = low + third;
    const double c2 = high - third;
    const double s1 = eval(c1);
    const double s2 = eval(c2);
    out.iterations.push_back({low, high, c1, s1, c2, s2});
    if (s1 <= s2) {
      low = c1;
    } else {
      high = c2;
    }
    out.score = std::max(s1, s2);
  }
  out.final_low = low;
  out.final_high = high;
  out.c_star = 0.5 * (low + high);
  return out;
}

ImageBatch<float> translate_constant(const Generator<float>& gen, const ImageBatch<float>& image, double c,
                                     bool oob_allowed) {
  if (image.n() != 1) throw ShapeError("translate_constant expects a single image, got " + image.shape().str());
  const auto map = make_control_map(ControlRecipe::constant(c), image.h(), image.w(), oob_allowed);
  return generator_forward(gen, image, map);
}

Trajectory<float> make_trajectory(const Generator<float>& gen, const ImageBatch<float>& image,
                                  const std::vector<double>& intensities, bool oob_allowed) {
  Trajectory<float> t{image, intensities, {}};
  for (double c : intensities) t.images.push_back(translate_constant(gen, image, c, oob_allowed));
  t.validate();
  return t;
}

ScalarObjective intensity_objective(const Generator<float>& gen, const ImageBatch<float>& image,
                                    const AestheticCriterion& criterion, const ImageBatch<float>* reference,
                                    bool oob_allowed) {
  if (criterion.needs_reference && reference == nullptr) {
    throw ConfigError("criterion '" + criterion.name + "' needs a reference image");
  }
  return [&gen, &image, criterion, reference, oob_allowed](double c) {
    const CriterionContext ctx{&image, reference};
    return criterion.score(translate_constant(gen, image, c, oob_allowed), ctx);
  };
}

namespace {

bool needs_oob(const ControlBounds& range) { return !kNominalBounds.contains(range.lo) || !kNominalBounds.contains(range.hi); }

}  // namespace

SearchResult exhaustive_infer(const Generator<float>& gen, const ImageBatch<float>& image,
                              const AestheticCriterion& criterion, const ImageBatch<float>* reference, int n,
                              ControlBounds range) {
  return exhaustive_search(intensity_objective(gen, image, criterion, reference, needs_oob(range)), range.lo, range.hi, n);
}

SearchResult ternary_infer(const Generator<float>& gen, const ImageBatch<float>& image,
                           const AestheticCriterion& criterion, const ImageBatch<float>* reference, int n,
                           ControlBounds range) {
  return ternary_search(intensity_objective(gen, image, criterion, reference, needs_oob(range)), range.lo, range.hi, n);
}

void ExpertSpec::validate() const {
  if (in_channels < 1 || base_channels < 1 || layers < 1) throw ConfigError("invalid expert spec");
}

void ExpertTrainConfig::validate() const {
  spec.validate();
  if (epochs < 1 || batch_size < 1 || !(lr > 0.0) || label_points < 2) throw ConfigError("invalid expert training config");
}

Expert build_expert(const ExpertSpec& spec, std::uint64_t seed) {
  spec.validate();
  Expert e;
  e.spec = spec;
  Rng rng(seed);
  int cin = spec.in_channels;
  for (int i = 0; i < spec.layers; ++i) {
    const int cout = spec.base_channels << std::min(i, 3);
    const ops::ConvGeometry g{cin, cout, 3, 2, 1};
    Tensor<float> w(cout, cin, 3, 3);
    fill_normal(w, rng, 0.0, std::sqrt(2.0 / static_cast<double>(g.patch())));
    e.params.add("expert.conv" + std::to_string(i + 1) + ".weight", std::move(w));
    e.params.add("expert.conv" + std::to_string(i + 1) + ".bias", Tensor<float>(1, cout, 1, 1));
    e.convs.push_back(g);
    cin = cout;
  }
  const ops::ConvGeometry head{cin, 1, 1, 1, 0};
  Tensor<float> w(1, cin, 1, 1);
  fill_normal(w, rng, 0.0, std::sqrt(1.0 / cin));
  e.params.add("expert.head.weight", std::move(w));
  // start at the middle of the nominal range
  e.params.add("expert.head.bias", Tensor<float>(Shape{1, 1, 1, 1}, 0.5f));
  e.convs.push_back(head);
  return e;
}

std::vector<double> expert_forward(const Expert& expert, const ImageBatch<float>& images, ExpertCache* cache) {
  Tensor<float> h = images;
  const std::size_t feature_layers = expert.convs.size() - 1;
  for (std::size_t i = 0; i < feature_layers; ++i) {
    if (cache != nullptr) cache->inputs.push_back(h);
    h = ops::leaky_relu_forward(ops::conv2d_forward(h, expert.params[2 * i], expert.params[2 * i + 1], expert.convs[i]),
                                static_cast<float>(kLeakySlope));
    if (cache != nullptr) cache->activated.push_back(h);
  }
  if (cache != nullptr) cache->pooled_from = h.shape();
  h = ops::global_average_forward(h);
  if (cache != nullptr) cache->inputs.push_back(h);
  const Tensor<float> y = ops::conv2d_forward(h, expert.params[2 * feature_layers], expert.params[2 * feature_layers + 1],
                                              expert.convs.back());
  std::vector<double> out(static_cast<std::size_t>(y.n()));
  for (int n = 0; n < y.n(); ++n) out[static_cast<std::size_t>(n)] = y(n, 0, 0, 0);
  return out;
}

void expert_backward(const Expert& expert, const ExpertCache& cache, const std::vector<double>& grad_out,
                     ParamStore<float>& grads) {
  const std::size_t feature_layers = expert.convs.size() - 1;
  Tensor<float> g(static_cast<int>(grad_out.size()), 1, 1, 1);
  for (std::size_t n = 0; n < grad_out.size(); ++n) g.array()[static_cast<Eigen::Index>(n)] = static_cast<float>(grad_out[n]);
  Tensor<float> dx;
  ops::conv2d_backward(cache.inputs.back(), expert.params[2 * feature_layers], expert.convs.back(), g,
                       &grads[2 * feature_layers], &grads[2 * feature_layers + 1], &dx);
  g = ops::global_average_backward(cache.pooled_from, dx);
  for (std::size_t i = feature_layers; i-- > 0;) {
    g = ops::leaky_relu_backward(cache.activated[i], std::move(g), static_cast<float>(kLeakySlope));
    Tensor<float>* want_dx = i > 0 ? &dx : nullptr;
    ops::conv2d_backward(cache.inputs[i], expert.params[2 * i], expert.convs[i], g, &grads[2 * i], &grads[2 * i + 1],
                         want_dx);
    if (i > 0) g = dx;
  }
}

ExpertFit fit_expert(const std::vector<ImageBatch<float>>& inputs, const std::vector<double>& labels,
                     const ExpertTrainConfig& cfg) {
  cfg.validate();
  if (inputs.empty()) throw ConfigError("expert training needs a non-empty paired subset");
  if (inputs.size() != labels.size()) throw ConfigError("expert training: input/label count mismatch");
  ExpertFit fit{build_expert(cfg.spec, cfg.seed), labels, {}};
  auto& ex = fit.expert;
  auto moments = AdamMoments<float>::like(ex.params);
  ParamStore<float> grads = ex.params.zeros_like();
  const AdamConfig adam{0.9, 0.999, 1e-8};
  Rng rng(cfg.seed + 1);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  long t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    double abs_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<ImageBatch<float>> items;
      for (std::size_t k = start; k < end; ++k) items.push_back(inputs[order[k]]);
      ImageBatch<float> batch = items.front();
      for (std::size_t k = 1; k < items.size(); ++k) batch = concat_batch(batch, items[k]);
      ExpertCache cache;
      const auto pred = expert_forward(ex, batch, &cache);
      std::vector<double> g(pred.size());
      for (std::size_t k = 0; k < pred.size(); ++k) {
        const double diff = pred[k] - labels[order[start + k]];
        abs_sum += std::abs(diff);
        g[k] = (diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0) / static_cast<double>(pred.size());
      }
      grads.set_zero();
      expert_backward(ex, cache, g, grads);
      adam_update(ex.params, grads, moments, adam, cfg.lr, ++t);
    }
    fit.loss_curve.push_back(abs_sum / static_cast<double>(inputs.size()));
  }
  return fit;
}

ExpertFit train_expert(const Generator<float>& gen, const std::vector<ImageBatch<float>>& inputs,
                       const std::vector<ImageBatch<float>>& references, const AestheticCriterion& criterion,
                       const ExpertTrainConfig& cfg) {
  cfg.validate();
  if (inputs.empty()) throw ConfigError("expert training needs a non-empty paired subset");
  if (inputs.size() != references.size()) throw ConfigError("expert training: input/reference count mismatch");
  std::vector<double> labels;
  labels.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    labels.push_back(exhaustive_infer(gen, inputs[i], criterion, &references[i], cfg.label_points).c_star);
  }
  return fit_expert(inputs, labels, cfg);
}

ExpertInference expert_infer(const Expert& expert, const Generator<float>& gen, const ImageBatch<float>& image) {
  const double c = std::clamp(expert_forward(expert, image, nullptr).front(), kNominalBounds.lo, kNominalBounds.hi);
  return {translate_constant(gen, image, c), c};
}

}  // namespace monopix
