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

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "monopix/checkpoint.hpp"
#include "monopix/objective.hpp"
#include "monopix/presets.hpp"
#include "monopix/runner.hpp"
#include "test_util.hpp"

using namespace monopix;
using testutil::central_difference;
using testutil::random_tensor;
using testutil::rel_error;
namespace fs = std::filesystem;

namespace {

struct DoubleModels {
  Generator<double> g_xy;
  Generator<double> g_yx;
  Discriminator<double> d_x;
  Discriminator<double> d_y;

  explicit DoubleModels(std::uint64_t seed) {
    GeneratorSpec gs;
    gs.base_channels = 2;
    gs.depth = 2;
    gs.init = InitScheme::kaiming_normal;
    DiscriminatorSpec ds;
    ds.base_channels = 2;
    ds.init = InitScheme::kaiming_normal;
    g_xy = build_generator<double>(gs, seed);
    g_yx = build_generator<double>(gs, seed + 1);
    d_x = build_discriminator<double>(ds, seed + 2);
    d_y = build_discriminator<double>(ds, seed + 3);
  }

  TranslationModels<double> view(bool bi) const { return {&g_xy, bi ? &g_yx : nullptr, bi ? &d_x : nullptr, &d_y, bi}; }
};

ModelGrads<double> zero_grads(const DoubleModels& m) {
  return {m.g_xy.params.zeros_like(), m.g_yx.params.zeros_like(), m.d_x.params.zeros_like(),
          m.d_y.params.zeros_like()};
}

// Samples a few entries of every trainable parameter of `params`. A bias
// step moves thousands of pre-activations at once, so steps of 1e-6 often
// straddle a leaky-ReLU kink; 1e-8 keeps clear of them in double.
void check_sampled(ParamStore<double>& params, const ParamStore<double>& grads, const std::function<double()>& loss,
                   Rng& rng, const char* who) {
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params.trainable[p]) continue;
    for (int k = 0; k < 2; ++k) {
      const Eigen::Index i = uniform_int(rng, 0, static_cast<int>(params[p].size()) - 1);
      const double num = central_difference(loss, params[p].array()[i], 1e-8);
      INFO(who << " " << params.names[p] << "[" << i << "]");
      CHECK(rel_error(grads[p].array()[i], num, 1e-4) < 1e-3);
    }
  }
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("monopix_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// A run small enough for unit tests: 32 px, two-channel networks.
RunConfig tiny_run() {
  return resolve_config({{"preset", "toy_brightness"},
                         {"generator", {{"base_channels", 2}, {"depth", 2}}},
                         {"discriminator", {{"base_channels", 2}}},
                         {"train", {{"max_steps", 6}, {"batch_size", 2}}},
                         {"data", {{"image_size", 32}, {"count", 12}}}});
}

void write_bytes(const fs::path& p, const Bytes& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("generator objective gradients match central differences") {
    DoubleModels m(41);
    Rng rng(42);
    const auto x = random_tensor(Shape{2, 3, 32, 32}, rng);
    const auto y = random_tensor(Shape{2, 3, 32, 32}, rng);
    const auto px = cig_sample(rng, 2, 0.0);
    const auto py = cig_sample(rng, 2, 0.0);
    const LossWeights w;
    auto grads = zero_grads(m);
    const auto rep = evaluate_generator_objective(m.view(true), x, y, px, py, w, Mode::train, &grads);
    CHECK(rep.terms.cyc > 0.0);
    auto loss = [&] {
      return evaluate_generator_objective<double>(m.view(true), x, y, px, py, w, Mode::train, nullptr).total;
    };
    CHECK(loss() == doctest::Approx(rep.total).epsilon(1e-12));
    check_sampled(m.g_xy.params, grads.g_xy, loss, rng, "g_xy");
    check_sampled(m.g_yx.params, grads.g_yx, loss, rng, "g_yx");
  }

  TEST_CASE("discriminator objective gradients match central differences") {
    DoubleModels m(51);
    Rng rng(52);
    const auto x = random_tensor(Shape{2, 3, 32, 32}, rng);
    const auto y = random_tensor(Shape{2, 3, 32, 32}, rng);
    const auto px = cig_sample(rng, 2, 0.0);
    const auto py = cig_sample(rng, 2, 0.0);
    const LossWeights w;
    auto grads = zero_grads(m);
    evaluate_discriminator_objective(m.view(true), x, y, px, py, w, Mode::train, &grads);
    auto loss = [&] {
      return evaluate_discriminator_objective<double>(m.view(true), x, y, px, py, w, Mode::train, nullptr).total;
    };
    check_sampled(m.d_x.params, grads.d_x, loss, rng, "d_x");
    check_sampled(m.d_y.params, grads.d_y, loss, rng, "d_y");
  }

  TEST_CASE("unidirectional objective drops cycle and fidelity terms") {
    DoubleModels m(61);
    Rng rng(62);
    const auto x = random_tensor(Shape{1, 3, 32, 32}, rng);
    const auto y = random_tensor(Shape{1, 3, 32, 32}, rng);
    const auto px = cig_sample(rng, 1, 0.0);
    const LossWeights w;
    auto grads = zero_grads(m);
    const auto g = evaluate_generator_objective(m.view(false), x, y, px, px, w, Mode::train, &grads);
    CHECK(g.terms.cyc == 0.0);
    CHECK(g.terms.df == 0.0);
    auto loss = [&] {
      return evaluate_generator_objective<double>(m.view(false), x, y, px, px, w, Mode::train, nullptr).total;
    };
    check_sampled(m.g_xy.params, grads.g_xy, loss, rng, "g_xy");
    const auto d = evaluate_discriminator_objective<double>(m.view(false), x, y, px, px, w, Mode::train, nullptr);
    CHECK(d.terms.df == 0.0);
    CHECK_THROWS_AS(TranslationModels<double>({&m.g_xy, nullptr, nullptr, &m.d_y, true}).validate(), ConfigError);
  }

  TEST_CASE("learning rate schedule") {
    TrainConfig c;
    c.lr = 2e-4;
    c.epochs = 200;
    c.lr_decay_start_epoch = 100;
    CHECK(lr_schedule(0, c) == 2e-4);
    CHECK(lr_schedule(99, c) == 2e-4);
    CHECK(lr_schedule(100, c) == doctest::Approx(2e-4));
    CHECK(lr_schedule(150, c) == doctest::Approx(1e-4));
    CHECK(lr_schedule(200, c) == 0.0);
    double prev = 1.0;
    for (int e = 0; e < 200; ++e) {
      CHECK(lr_schedule(e, c) <= prev);
      prev = lr_schedule(e, c);
    }
  }

  TEST_CASE("train steps are deterministic under a fixed seed") {
    const RunConfig cfg = tiny_run();
    const TrainingData data = load_training_data(cfg.data);
    TrainState a = init_train_state(cfg.setup);
    TrainState b = init_train_state(cfg.setup);
    for (long s = 0; s < 3; ++s) {
      const auto [bx, by] = step_batches(data, cfg.setup.train, s);
      const auto ra = train_step(a, cfg.setup, bx, by);
      const auto rb = train_step(b, cfg.setup, bx, by);
      CHECK(ra == rb);
      CHECK(std::isfinite(ra.total_g));
    }
    for (std::size_t p = 0; p < a.g_xy.params.size(); ++p) {
      CHECK(a.g_xy.params[p].array().isApprox(b.g_xy.params[p].array(), 0.0f));
    }
  }

  TEST_CASE("checkpoint round trip and corruption codes") {
    const fs::path dir = scratch_dir("ckpt");
    const RunConfig cfg = tiny_run();
    const TrainingData data = load_training_data(cfg.data);
    TrainState st = init_train_state(cfg.setup);
    const auto [bx, by] = step_batches(data, cfg.setup.train, 0);
    train_step(st, cfg.setup, bx, by);
    const fs::path path = dir / "a.ckpt";
    save_checkpoint(st, cfg.setup, path);
    const Checkpoint ck = load_checkpoint(path);
    CHECK(ck.state.step == st.step);
    CHECK(ck.state.adam_t_g == st.adam_t_g);
    CHECK(ck.state.rng == st.rng);
    CHECK(ck.setup.weights.epsilon == cfg.setup.weights.epsilon);
    for (std::size_t p = 0; p < st.d_y.params.size(); ++p) {
      CHECK(ck.state.d_y.params[p].array().isApprox(st.d_y.params[p].array(), 0.0f));
    }

    auto code_of = [](const fs::path& p) {
      try {
        load_checkpoint(p);
      } catch (const CheckpointError& e) {
        return e.code();
      }
      FAIL("checkpoint unexpectedly loaded");
      return CheckpointError::Code::missing_file;
    };
    CHECK(code_of(dir / "nope.ckpt") == CheckpointError::Code::missing_file);

    Bytes payload = read_file(path);
    const Bytes keep = payload;
    payload[payload.size() / 2] ^= 0x5a;
    write_bytes(path, payload);
    CHECK(code_of(path) == CheckpointError::Code::checksum_mismatch);
    write_bytes(path, keep);

    const Bytes meta = read_file(sidecar_path(path));
    write_text(sidecar_path(path), "{ not json");
    CHECK(code_of(path) == CheckpointError::Code::corrupt_metadata);
    auto j = nlohmann::json::parse(meta.begin(), meta.end());
    j["schema_version"] = kCheckpointSchemaVersion + 1;
    write_text(sidecar_path(path), j.dump());
    CHECK(code_of(path) == CheckpointError::Code::schema_mismatch);
    write_bytes(sidecar_path(path), meta);
    CHECK_NOTHROW(load_checkpoint(path));

    CHECK_THROWS_AS(decode_arrays(Bytes{'M', 'O', 'N'}), CheckpointError);
    fs::remove_all(dir);
  }

  TEST_CASE("resumed run reproduces the uninterrupted one") {
    const RunConfig cfg = tiny_run();
    const TrainingData data = load_training_data(cfg.data);
    const fs::path full_dir = scratch_dir("full");
    const fs::path part_dir = scratch_dir("part");
    RunOptions o;
    o.out_dir = full_dir;
    const RunResult full = run_training(cfg, data, o);
    REQUIRE(full.log.size() == 6);

    o.out_dir = part_dir;
    o.stop_after = 3;
    const RunResult first = run_training(cfg, data, o);
    CHECK(first.log.size() == 3);
    o.stop_after = 0;
    o.resume = step_checkpoint_path(part_dir, 3);
    const RunResult second = run_training(cfg, data, o);
    REQUIRE(second.log.size() == 3);
    for (int i = 0; i < 3; ++i) {
      CHECK(first.log[i] == full.log[i]);
      CHECK(second.log[i] == full.log[i + 3]);
    }
    for (std::size_t p = 0; p < full.state.g_xy.params.size(); ++p) {
      CHECK(second.state.g_xy.params[p].array().isApprox(full.state.g_xy.params[p].array(), 0.0f));
    }
    const std::string a = [&] {
      const Bytes b = read_file(full_dir / "loss.csv");
      return std::string(b.begin(), b.end());
    }();
    const std::string b = [&] {
      const Bytes raw = read_file(part_dir / "loss.csv");
      return std::string(raw.begin(), raw.end());
    }();
    CHECK(a == b);
    fs::remove_all(full_dir);
    fs::remove_all(part_dir);
  }

  TEST_CASE("presets and ablations") {
    const auto y = resolve_preset("yosemite");
    CHECK(y.setup.weights.lambda_cyc == 10.0);
    CHECK(y.setup.weights.lambda_mn == 1.0);
    CHECK(y.setup.weights.lambda_df == 0.25);
    CHECK(y.setup.weights.epsilon == 0.5);
    for (const auto& name : preset_names()) CHECK_NOTHROW(resolve_preset(name));

    const auto toy = resolve_preset("toy_brightness");
    CHECK(toy.setup.generator.base_channels == 8);
    CHECK(toy.data.image_size == 64);
    CHECK(resolve_preset("toy_brightness_eps0").setup.weights.epsilon == 0.0);

    TrainSetup s = toy.setup;
    apply_ablation(s, "a");
    CHECK(s.weights.lambda_mn == 0.0);
    CHECK(s.weights.lambda_df == 0.0);
    s = toy.setup;
    apply_ablation(s, "d");
    CHECK(s.weights.epsilon == 0.0);
    s = toy.setup;
    apply_ablation(s, "e");
    CHECK(s.weights.epsilon == 1.0);
    CHECK_THROWS_AS(apply_ablation(s, "z"), ConfigError);

    CHECK_THROWS_AS(resolve_config({{"preset", "nope"}}), ConfigError);
    CHECK_THROWS_AS(resolve_config({{"preset", "toy_brightness"}, {"trian", nlohmann::json::object()}}), ConfigError);
    CHECK_THROWS_AS(resolve_config({{"preset", "toy_brightness"}, {"train", {{"lrr", 1}}}}), ConfigError);
    CHECK_THROWS_AS(resolve_config({{"preset", "toy_brightness"}, {"loss_weights", {{"epsilon", "big"}}}}),
                    ConfigError);
    const auto c = resolve_config({{"preset", "toy_brightness"}, {"ablation", "b"}});
    CHECK(c.setup.weights.lambda_df == 0.0);
    CHECK(c.setup.weights.lambda_mn == 1.0);
  }

  TEST_CASE("config json round trip") {
    const auto c = resolve_preset("afhq");
    nlohmann::json j = c.setup;
    const auto back = j.get<TrainSetup>();
    CHECK(back.generator == c.setup.generator);
    CHECK(back.discriminator == c.setup.discriminator);
    CHECK(back.train.epochs == c.setup.train.epochs);
    CHECK(back.weights.lambda_df == c.setup.weights.lambda_df);
  }
}
