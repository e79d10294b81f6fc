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

// monopix command-line tool: train, eval, infer, expert-train, serve.
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "monopix/checkpoint.hpp"
#include "monopix/evaluation.hpp"
#include "monopix/presets.hpp"
#include "monopix/runner.hpp"
#include "monopix/service.hpp"

using namespace monopix;
namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& path) {
  const Bytes b = read_file(path);
  try {
    return nlohmann::json::parse(b.begin(), b.end());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
}

// A config file, or a bare preset name.
RunConfig load_run_config(const std::string& config, const std::string& preset) {
  nlohmann::json j = nlohmann::json::object();
  if (!config.empty()) j = read_json(config);
  if (!preset.empty()) j["preset"] = preset;
  if (j.empty()) throw ConfigError("give --config or --preset");
  return resolve_config(j);
}

ControlSpec parse_control(const std::string& text) {
  if (text.size() > 4 && text.substr(text.size() - 4) == ".png") return ControlSpec::from_png(read_file(text));
  nlohmann::json j;
  if (!text.empty() && text.front() == '@') {
    j = read_json(text.substr(1));
  } else {
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
      // A bare number is shorthand for a constant map.
      char* end = nullptr;
      const double v = std::strtod(text.c_str(), &end);
      if (end == text.c_str() || *end != '\0') throw ConfigError("control must be JSON, @file, a .png or a number");
      return ControlSpec::from_recipe(ControlRecipe::constant(v));
    }
  }
  if (j.is_number()) return ControlSpec::from_recipe(ControlRecipe::constant(j.get<double>()));
  return ControlSpec::from_recipe(recipe_from_json(j));
}

int fail(const std::string& code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", {{"code", code}, {"message", message}}}}.dump() << std::endl;
  return 2;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"MonoPix: monotonic pixel-level image translation"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  std::string config_path, preset, out_dir, resume, ablation;
  bool dry_run = false;
  long checkpoint_every = 0, max_steps = -1;
  long long seed = -1;
  train->add_option("--config", config_path, "JSON config file");
  train->add_option("--preset", preset, "Preset name (overrides the config's preset)");
  train->add_option("--out", out_dir, "Output directory");
  train->add_option("--resume", resume, "Checkpoint to continue from");
  train->add_option("--ablation", ablation, "Ablation variant a..e");
  train->add_option("--checkpoint-every", checkpoint_every, "Steps between checkpoints");
  train->add_option("--max-steps", max_steps, "Override train.max_steps");
  train->add_option("--seed", seed, "Override train.seed");
  train->add_flag("--dry-run", dry_run, "Print the resolved configuration and exit");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ckpt, dataset, metrics = "linearity", report_prefix, direction = "xy";
  int points = 11, image_size = 64;
  eval->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  eval->add_option("--dataset", dataset, "Config/preset JSON for synthetic data, or a folder of PNGs")->required();
  eval->add_option("--metrics", metrics, "linearity | held_out")->check(CLI::IsMember({"linearity", "held_out"}));
  eval->add_option("--points", points, "Trajectory length");
  eval->add_option("--size", image_size, "Resize folder images to this square size");
  eval->add_option("--report", report_prefix, "Write <prefix>.csv and <prefix>.json");

  // infer
  auto* infer = app.add_subcommand("infer", "Translate one image");
  std::string image_path, control = "1.0", out_path;
  bool oob = false;
  infer->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  infer->add_option("--image", image_path, "Input PNG")->required();
  infer->add_option("--control", control, "Number, recipe JSON, @recipe.json or grayscale .png");
  infer->add_option("--out", out_path, "Output PNG")->required();
  infer->add_option("--direction", direction, "xy | yx")->check(CLI::IsMember({"xy", "yx"}));
  infer->add_flag("--oob", oob, "Allow out-of-bound intensities");

  // expert-train
  auto* expert = app.add_subcommand("expert-train", "Fit an expert network to a frozen generator");
  int shots = 16, expert_epochs = 300;
  expert->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  expert->add_option("--config", config_path, "Config whose data section gives paired items");
  expert->add_option("--preset", preset, "Preset name");
  expert->add_option("--shots", shots, "Training items");
  expert->add_option("--epochs", expert_epochs, "Expert epochs");
  expert->add_option("--out", out_path, "Expert output path")->required();

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  std::string host = "127.0.0.1", model_dir = env_or("MONOPIX_MODEL_DIR", "models");
  int port = std::atoi(env_or("MONOPIX_PORT", "8080").c_str());
  std::size_t max_payload = 16u << 20;
  serve_cmd->add_option("--port", port, "Port (env MONOPIX_PORT)");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--model-dir", model_dir, "Directory of *.ckpt files (env MONOPIX_MODEL_DIR)");
  serve_cmd->add_option("--max-payload", max_payload, "Request size cap in bytes");

  app.add_subcommand("presets", "List the built-in presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      RunConfig cfg = load_run_config(config_path, preset);
      if (!ablation.empty()) {
        cfg.ablation = ablation;
        apply_ablation(cfg.setup, ablation);
      }
      if (max_steps >= 0) cfg.setup.train.max_steps = max_steps;
      if (seed >= 0) cfg.setup.train.seed = static_cast<std::uint64_t>(seed);
      cfg.validate();
      const auto& w = cfg.setup.weights;
      if (dry_run) {
        std::cout << nlohmann::json(cfg).dump(2) << "\n";
        std::cout << "lambda_cyc=" << w.lambda_cyc << " lambda_mn=" << w.lambda_mn << " lambda_df=" << w.lambda_df
                  << " epsilon=" << w.epsilon << "\n";
        return 0;
      }
      if (out_dir.empty()) throw ConfigError("train needs --out");
      const TrainingData data = load_training_data(cfg.data);
      for (const auto& warning : data.warnings) std::cerr << "warning: " << warning << "\n";
      RunOptions opts;
      opts.out_dir = out_dir;
      opts.checkpoint_every = checkpoint_every;
      opts.resume = resume;
      opts.on_step = [](const LossReport& r) {
        if (r.step % 50 == 0) std::cerr << "step " << r.step << " total_g " << r.total_g << " total_d " << r.total_d << "\n";
      };
      const RunResult res = run_training(cfg, data, opts);
      std::cout << res.final_checkpoint.string() << "\n";
      return 0;
    }
    if (*eval) {
      const Checkpoint ck = load_checkpoint(ckpt);
      const Generator<float>& gen = ck.state.g_xy;
      std::string report_csv, report_json;
      if (fs::is_directory(dataset)) {
        if (metrics != "linearity") throw ConfigError("held_out metrics need a synthetic dataset");
        auto folder = load_folder(dataset, image_size, false);
        for (const auto& w : folder.warnings) std::cerr << "warning: " << w << "\n";
        std::vector<ImageBatch<float>> inputs;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < folder.dataset->size(); ++i) {
          inputs.push_back(folder.dataset->get(i));
          ids.push_back(folder.dataset->files()[i].filename().string());
        }
        const EvalReport r = evaluate_linearity(gen, inputs, ids, points);
        report_csv = r.csv();
        report_json = r.json();
      } else {
        const RunConfig cfg = resolve_config(read_json(dataset));
        const DomainPair data = synth_generate(cfg.data);
        if (metrics == "held_out") {
          HeldOutOptions o;
          o.trajectory_points = points;
          const HeldOutReport r = evaluate_held_out(gen, ck.state.d_y, data.paired_test, o);
          report_csv = r.linearity.csv();
          report_json = r.to_json().dump(2);
        } else {
          std::vector<std::string> ids;
          for (std::size_t i = 0; i < data.x.test.size(); ++i) ids.push_back("x_test_" + std::to_string(i));
          const EvalReport r = evaluate_linearity(gen, data.x.test, ids, points);
          report_csv = r.csv();
          report_json = r.json();
        }
      }
      if (!report_prefix.empty()) {
        write_text(report_prefix + ".csv", report_csv);
        write_text(report_prefix + ".json", report_json + "\n");
      }
      std::cout << report_csv;
      return 0;
    }
    if (*infer) {
      const auto translator = load_translator(ckpt, direction == "yx" ? Direction::y_to_x : Direction::x_to_y);
      write_file(out_path, translate_png(*translator, read_file(image_path), parse_control(control), oob));
      return 0;
    }
    if (*expert) {
      const Checkpoint ck = load_checkpoint(ckpt);
      const RunConfig cfg = load_run_config(config_path, preset);
      DomainPairSpec spec = cfg.data;
      const DomainPair data = synth_generate(spec);
      std::vector<ImageBatch<float>> inputs, refs;
      for (int i = 0; i < shots && i < static_cast<int>(data.paired_test.size()); ++i) {
        inputs.push_back(data.paired_test[i].input);
        refs.push_back(data.paired_test[i].reference);
      }
      ExpertTrainConfig ec;
      ec.epochs = expert_epochs;
      const ExpertFit fit = train_expert(ck.state.g_xy, inputs, refs, psnr_to_reference(), ec);
      save_expert(fit.expert, out_path);
      std::cout << "final_mae " << (fit.loss_curve.empty() ? 0.0 : fit.loss_curve.back()) << "\n";
      return 0;
    }
    if (app.got_subcommand("presets")) {
      for (const auto& name : preset_names()) {
        std::cout << name << "\t" << builtin_presets().at(name).value("description", "") << "\n";
      }
      return 0;
    }
    if (*serve_cmd) {
      ModelRegistry registry;
      const std::size_t n = registry.load_directory(model_dir);
      std::cerr << "serving " << n << " model(s) from " << model_dir << " on " << host << ":" << port << "\n";
      ServiceOptions so;
      so.max_payload_bytes = max_payload;
      serve(registry, host, port, so);
      return 0;
    }
  } catch (const CheckpointError& e) {
    return fail("checkpoint_" + to_string(e.code()), e.what());
  } catch (const ConfigError& e) {
    return fail("config", e.what());
  } catch (const RangeError& e) {
    return fail("out_of_bounds", e.what());
  } catch (const IoError& e) {
    return fail("io", e.what());
  } catch (const std::exception& e) {
    return fail("error", e.what());
  }
  return 0;
}
