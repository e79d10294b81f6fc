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

#include "monopix/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "monopix/io.hpp"
#include "monopix/json_keys.hpp"

namespace monopix {

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::brightness: return "brightness";
    case TaskKind::noise: return "noise";
    case TaskKind::folder: return "folder";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "brightness") return TaskKind::brightness;
  if (s == "noise") return TaskKind::noise;
  if (s == "folder") return TaskKind::folder;
  throw ConfigError("unknown task kind '" + s + "'");
}

void DomainPairSpec::validate() const {
  if (image_size < 16 || image_size % 16 != 0) throw ConfigError("image_size must be a positive multiple of 16");
  if (task == TaskKind::folder) {
    if (path_x.empty() || path_y.empty()) throw ConfigError("folder task needs path_x and path_y");
    return;
  }
  if (count < 2) throw ConfigError("count must be at least 2");
  if (task == TaskKind::brightness && (!(x_param > 0.0) || !(y_param > 0.0))) {
    throw ConfigError("brightness gains must be positive");
  }
  if (task == TaskKind::noise && (x_param < 0.0 || y_param < 0.0)) throw ConfigError("noise sigmas must be >= 0");
}

void to_json(nlohmann::json& j, const DomainPairSpec& s) {
  j = {{"task", to_string(s.task)}, {"x_param", s.x_param}, {"y_param", s.y_param}, {"image_size", s.image_size},
       {"count", s.count},          {"seed", s.seed},       {"path_x", s.path_x},   {"path_y", s.path_y},
       {"strict", s.strict}};
}

void from_json(const nlohmann::json& j, DomainPairSpec& s) {
  require_known_keys(j, {"task", "x_param", "y_param", "image_size", "count", "seed", "path_x", "path_y", "strict"},
                     "data");
  DomainPairSpec d;
  if (j.contains("task")) d.task = parse_task_kind(j.at("task").get<std::string>());
  d.x_param = j.value("x_param", d.x_param);
  d.y_param = j.value("y_param", d.y_param);
  d.image_size = j.value("image_size", d.image_size);
  d.count = j.value("count", d.count);
  d.seed = j.value("seed", d.seed);
  d.path_x = j.value("path_x", d.path_x);
  d.path_y = j.value("path_y", d.path_y);
  d.strict = j.value("strict", d.strict);
  s = d;
}

int test_count(int count) { return std::max(1, count / 10); }

namespace {

Rng stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

constexpr std::uint64_t kStreamContentX = 0;
constexpr std::uint64_t kStreamContentY = 1;
constexpr std::uint64_t kStreamNoiseX = 10;
constexpr std::uint64_t kStreamNoiseY = 11;
constexpr std::uint64_t kStreamRefParam = 20;
constexpr std::uint64_t kStreamRefNoise = 21;

}  // namespace

ImageBatch<float> render_shapes(Rng& rng, int size) {
  ImageBatch<float> img(Shape{1, 3, size, size}, 0.5f);
  const int shapes = uniform_int(rng, 2, 5);
  constexpr int kSuper = 4;
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = uniform01(rng) < 0.5;
    const double cx = uniform(rng, 0.15, 0.85) * size;
    const double cy = uniform(rng, 0.15, 0.85) * size;
    const double rx = uniform(rng, 0.08, 0.3) * size;
    const double ry = uniform(rng, 0.08, 0.3) * size;
    double color[3];
    for (double& c : color) c = uniform(rng, 0.15, 0.85);
    const int x0 = std::max(0, static_cast<int>(cx - rx) - 1);
    const int x1 = std::min(size - 1, static_cast<int>(cx + rx) + 1);
    const int y0 = std::max(0, static_cast<int>(cy - ry) - 1);
    const int y1 = std::min(size - 1, static_cast<int>(cy + ry) + 1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        int inside = 0;
        for (int sy = 0; sy < kSuper; ++sy) {
          for (int sx = 0; sx < kSuper; ++sx) {
            const double dx = (x + (sx + 0.5) / kSuper - cx) / rx;
            const double dy = (y + (sy + 0.5) / kSuper - cy) / ry;
            inside += ellipse ? (dx * dx + dy * dy <= 1.0) : (std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0);
          }
        }
        if (inside == 0) continue;
        const double cov = static_cast<double>(inside) / (kSuper * kSuper);
        for (int c = 0; c < 3; ++c) {
          float& v = img(0, c, y, x);
          v = static_cast<float>(v * (1.0 - cov) + color[c] * cov);
        }
      }
    }
  }
  return img;
}

ImageBatch<float> apply_domain(const ImageBatch<float>& content01, TaskKind task, double param, Rng& rng) {
  ImageBatch<float> out = content01;
  auto& a = out.array();
  switch (task) {
    case TaskKind::brightness:
      a *= static_cast<float>(param);
      break;
    case TaskKind::noise:
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        a[i] = static_cast<float>(std::clamp(a[i] + param * standard_normal(rng), 0.0, 1.0));
      }
      break;
    case TaskKind::folder:
      throw ConfigError("apply_domain: folder task has no synthetic transform");
  }
  a = a * 2.0f - 1.0f;
  return out;
}

DomainPair synth_generate(const DomainPairSpec& spec) {
  spec.validate();
  if (spec.task == TaskKind::folder) throw ConfigError("synth_generate: folder task is not synthetic");
  DomainPair out;
  out.spec = spec;
  const int n_test = test_count(spec.count);
  const int n_train = spec.count - n_test;
  auto build = [&](DomainSet& set, std::uint64_t content_stream, std::uint64_t noise_stream, double param,
                   std::vector<ImageBatch<float>>* contents) {
    for (int i = 0; i < spec.count; ++i) {
      Rng crng = stream_rng(spec.seed, content_stream, static_cast<std::uint64_t>(i));
      Rng nrng = stream_rng(spec.seed, noise_stream, static_cast<std::uint64_t>(i));
      ImageBatch<float> content = render_shapes(crng, spec.image_size);
      ImageBatch<float> img = apply_domain(content, spec.task, param, nrng);
      if (i < n_train) {
        set.train.push_back(std::move(img));
      } else {
        set.test.push_back(std::move(img));
        if (contents != nullptr) contents->push_back(std::move(content));
      }
    }
  };
  std::vector<ImageBatch<float>> x_test_content;
  build(out.x, kStreamContentX, kStreamNoiseX, spec.x_param, &x_test_content);
  build(out.y, kStreamContentY, kStreamNoiseY, spec.y_param, nullptr);

  for (int i = 0; i < n_test; ++i) {
    Rng prng = stream_rng(spec.seed, kStreamRefParam, static_cast<std::uint64_t>(i));
    Rng nrng = stream_rng(spec.seed, kStreamRefNoise, static_cast<std::uint64_t>(i));
    PairedItem item;
    item.input = out.x.test[static_cast<std::size_t>(i)];
    item.reference_param = uniform(prng, std::min(spec.x_param, spec.y_param), std::max(spec.x_param, spec.y_param));
    item.reference = apply_domain(x_test_content[static_cast<std::size_t>(i)], spec.task, item.reference_param, nrng);
    item.clean = x_test_content[static_cast<std::size_t>(i)];
    item.clean.array() = item.clean.array() * 2.0f - 1.0f;
    out.paired_test.push_back(std::move(item));
  }
  return out;
}

ImageBatch<float> FolderDataset::get(std::size_t i) const {
  const ImageBatch<float> img = png_to_image(read_file(files_.at(i)));
  return resize_bilinear(img, image_size_, image_size_);
}

FolderLoadResult load_folder(const std::filesystem::path& dir, int image_size, bool strict) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> all;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") all.push_back(e.path());
  }
  std::sort(all.begin(), all.end());
  FolderLoadResult out;
  std::vector<fs::path> ok;
  for (const auto& p : all) {
    try {
      // full decode up front catches truncated files; pixels are decoded again on access
      (void)decode_png(read_file(p));
      ok.push_back(p);
    } catch (const IoError& e) {
      if (strict) throw IoError("unreadable image " + p.string() + ": " + e.what());
      out.warnings.push_back("skipped " + p.string() + ": " + e.what());
    }
  }
  out.dataset = std::make_unique<FolderDataset>(std::move(ok), image_size);
  return out;
}

ImageBatch<float> hflip(const ImageBatch<float>& batch, const std::vector<bool>& mask) {
  if (mask.size() != static_cast<std::size_t>(batch.n())) throw ShapeError("hflip: mask size mismatch");
  ImageBatch<float> out = batch;
  for (int n = 0; n < batch.n(); ++n) {
    if (!mask[static_cast<std::size_t>(n)]) continue;
    for (int c = 0; c < batch.c(); ++c) {
      for (int y = 0; y < batch.h(); ++y) {
        for (int x = 0; x < batch.w(); ++x) out(n, c, y, x) = batch(n, c, y, batch.w() - 1 - x);
      }
    }
  }
  return out;
}

ImageBatch<float> crop(const ImageBatch<float>& batch, int size, const std::vector<std::pair<int, int>>& offsets) {
  if (size > batch.h() || size > batch.w() || size < 1) {
    throw ConfigError("crop size " + std::to_string(size) + " does not fit " + batch.shape().str());
  }
  if (offsets.size() != static_cast<std::size_t>(batch.n())) throw ShapeError("crop: offset count mismatch");
  ImageBatch<float> out(batch.n(), batch.c(), size, size);
  for (int n = 0; n < batch.n(); ++n) {
    const auto [oy, ox] = offsets[static_cast<std::size_t>(n)];
    if (oy < 0 || ox < 0 || oy + size > batch.h() || ox + size > batch.w()) throw RangeError("crop offset out of range");
    for (int c = 0; c < batch.c(); ++c) {
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) out(n, c, y, x) = batch(n, c, oy + y, ox + x);
      }
    }
  }
  return out;
}

ImageBatch<float> augment(const ImageBatch<float>& batch, const AugmentFlags& flags, Rng& rng) {
  if (flags.crop > 0 && (flags.crop > batch.h() || flags.crop > batch.w())) {
    throw ConfigError("crop size " + std::to_string(flags.crop) + " exceeds image " + batch.shape().str());
  }
  ImageBatch<float> out = batch;
  if (flags.hflip) {
    std::vector<bool> mask(static_cast<std::size_t>(batch.n()));
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = uniform01(rng) < 0.5;
    out = hflip(out, mask);
  }
  if (flags.crop > 0) {
    std::vector<std::pair<int, int>> offsets;
    for (int n = 0; n < batch.n(); ++n) {
      const int oy = uniform_int(rng, 0, batch.h() - flags.crop);
      const int ox = uniform_int(rng, 0, batch.w() - flags.crop);
      offsets.emplace_back(oy, ox);
    }
    out = crop(out, flags.crop, offsets);
  }
  return out;
}

ImageBatch<float> stack(const std::vector<ImageBatch<float>>& images) {
  if (images.empty()) throw ShapeError("stack: no images");
  const Shape s0 = images.front().shape();
  Shape s = s0;
  s.n = 0;
  for (const auto& im : images) {
    if (im.c() != s0.c || im.h() != s0.h || im.w() != s0.w) throw ShapeError("stack: mixed shapes");
    s.n += im.n();
  }
  typename Tensor<float>::Array data(s.numel());
  Eigen::Index off = 0;
  for (const auto& im : images) {
    data.segment(off, im.size()) = im.array();
    off += im.size();
  }
  return ImageBatch<float>(s, std::move(data));
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t stream, long epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = stream_rng(seed, 100 + stream, static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::uint64_t stream, long step, int batch_size,
                                       std::size_t n) {
  if (n == 0) throw ConfigError("batch_indices: empty dataset");
  if (batch_size < 1) throw ConfigError("batch_indices: batch_size must be >= 1");
  std::vector<std::size_t> out;
  long cached_epoch = -1;
  std::vector<std::size_t> order;
  for (int j = 0; j < batch_size; ++j) {
    const long pos = step * batch_size + j;
    const long epoch = pos / static_cast<long>(n);
    if (epoch != cached_epoch) {
      order = epoch_order(seed, stream, epoch, n);
      cached_epoch = epoch;
    }
    out.push_back(order[static_cast<std::size_t>(pos % static_cast<long>(n))]);
  }
  return out;
}

ImageBatch<float> load_batch(const ImageSource& source, const std::vector<std::size_t>& indices) {
  std::vector<ImageBatch<float>> imgs;
  imgs.reserve(indices.size());
  for (auto i : indices) imgs.push_back(source.get(i));
  return stack(imgs);
}

void write_dataset(const DomainPair& pair, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  nlohmann::json files = nlohmann::json::array();
  auto put = [&](const std::string& rel, const ImageBatch<float>& img, const std::string& split,
                 const std::string& domain) {
    const fs::path p = dir / rel;
    fs::create_directories(p.parent_path());
    const Bytes png = image_to_png(img);
    write_file(p, png);
    files.push_back({{"path", rel}, {"split", split}, {"domain", domain}, {"sha256", sha256_hex(png)}});
  };
  char name[32];
  auto emit = [&](const std::vector<ImageBatch<float>>& v, const std::string& domain, const std::string& split) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(name, sizeof(name), "%04zu.png", i);
      put(domain + "/" + split + "/" + name, v[i], split, domain);
    }
  };
  emit(pair.x.train, "x", "train");
  emit(pair.x.test, "x", "test");
  emit(pair.y.train, "y", "train");
  emit(pair.y.test, "y", "test");
  nlohmann::json ref_params = nlohmann::json::array();
  for (std::size_t i = 0; i < pair.paired_test.size(); ++i) {
    const auto& it = pair.paired_test[i];
    std::snprintf(name, sizeof(name), "%04zu", i);
    put(std::string("paired/") + name + "_reference.png", it.reference, "test", "paired");
    put(std::string("paired/") + name + "_clean.png", it.clean, "test", "paired");
    ref_params.push_back(it.reference_param);
  }
  nlohmann::json manifest = {{"spec", pair.spec}, {"files", files}, {"reference_params", ref_params}};
  write_text(dir / "manifest.json", manifest.dump(2));
}

std::vector<std::string> verify_manifest(const std::filesystem::path& dir) {
  const Bytes raw = read_file(dir / "manifest.json");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
  std::vector<std::string> bad;
  for (const auto& f : manifest.at("files")) {
    const auto rel = f.at("path").get<std::string>();
    try {
      if (sha256_hex(read_file(dir / rel)) != f.at("sha256").get<std::string>()) bad.push_back(rel);
    } catch (const IoError&) {
      bad.push_back(rel);
    }
  }
  return bad;
}

}  // namespace monopix
