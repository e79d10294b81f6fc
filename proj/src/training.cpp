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

#include "monopix/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace monopix {

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (lr_decay_start_epoch < 0 || lr_decay_start_epoch > epochs) {
    throw ConfigError("lr_decay_start_epoch must lie in [0, epochs]");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (pairs_per_item != 2) throw ConfigError("pairs_per_item must be 2 (low and high intensity)");
  if (delta_min < 0 || delta_min >= 1) throw ConfigError("delta_min must lie in [0, 1)");
  if (grad_clip < 0) throw ConfigError("grad_clip must be >= 0");
  if (crop < 0) throw ConfigError("crop must be >= 0");
  if (max_steps < 0 || steps_per_epoch < 0) throw ConfigError("max_steps and steps_per_epoch must be >= 0");
  if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < cfg.lr_decay_start_epoch) return cfg.lr;
  if (epoch >= cfg.epochs) return 0.0;
  const double span = cfg.epochs - cfg.lr_decay_start_epoch;
  return cfg.lr * static_cast<double>(cfg.epochs - epoch) / span;
}

std::string LossReport::csv_header() {
  return "step,epoch,lr,g_adv,g_cyc,g_mono,g_df,total_g,d_adv,d_mono,d_df,total_d,mean_delta_tar";
}

std::string LossReport::csv_row() const {
  std::ostringstream out;
  out << std::setprecision(9) << step << ',' << epoch << ',' << lr << ',' << generator.adv << ',' << generator.cyc
      << ',' << generator.mono << ',' << generator.df << ',' << total_g << ',' << discriminator.adv << ','
      << discriminator.mono << ',' << discriminator.df << ',' << total_d << ',' << mean_delta_tar;
  return out.str();
}

void RollingStats::add(const LossReport& r, double decay) {
  if (count == 0) {
    total_g = r.total_g;
    total_d = r.total_d;
    mean_delta_tar = r.mean_delta_tar;
  } else {
    total_g = decay * total_g + (1 - decay) * r.total_g;
    total_d = decay * total_d + (1 - decay) * r.total_d;
    mean_delta_tar = decay * mean_delta_tar + (1 - decay) * r.mean_delta_tar;
  }
  ++count;
}

void TrainSetup::validate() const {
  generator.validate();
  discriminator.validate();
  weights.validate();
  train.validate();
  if (generator.image_channels() != discriminator.in_channels) {
    throw ConfigError("generator image channels and discriminator input channels differ");
  }
}

TrainState init_train_state(const TrainSetup& setup) {
  setup.validate();
  TrainState s;
  Rng seeder(setup.train.seed);
  const auto seed_gxy = seeder();
  const auto seed_gyx = seeder();
  const auto seed_dx = seeder();
  const auto seed_dy = seeder();
  s.g_xy = build_generator<Real>(setup.generator, seed_gxy);
  s.d_y = build_discriminator<Real>(setup.discriminator, seed_dy);
  s.adam_g_xy = AdamMoments<Real>::like(s.g_xy.params);
  s.adam_d_y = AdamMoments<Real>::like(s.d_y.params);
  if (setup.train.bidirectional) {
    s.g_yx = build_generator<Real>(setup.generator, seed_gyx);
    s.d_x = build_discriminator<Real>(setup.discriminator, seed_dx);
    s.adam_g_yx = AdamMoments<Real>::like(s.g_yx.params);
    s.adam_d_x = AdamMoments<Real>::like(s.d_x.params);
  }
  s.rng = Rng(seeder());
  return s;
}

namespace {

bool finite(const LossTerms& t) {
  return std::isfinite(t.adv) && std::isfinite(t.cyc) && std::isfinite(t.mono) && std::isfinite(t.df);
}

void require_finite(const ObjectiveReport& r, const ParamStore<Real>* a, const ParamStore<Real>* b,
                    const char* which, long step) {
  const bool ok = finite(r.terms) && std::isfinite(r.total) && (a == nullptr || a->all_finite()) &&
                  (b == nullptr || b->all_finite());
  if (!ok) {
    std::ostringstream msg;
    msg << "non-finite " << which << " loss or gradient at step " << step << " (adv=" << r.terms.adv
        << " cyc=" << r.terms.cyc << " mono=" << r.terms.mono << " df=" << r.terms.df << ")";
    throw TrainingError(msg.str());
  }
}

}  // namespace

LossReport train_step(TrainState& state, const TrainSetup& setup, const ImageBatch<Real>& batch_x,
                      const ImageBatch<Real>& batch_y) {
  const auto& cfg = setup.train;
  const bool bi = cfg.bidirectional;
  if (batch_x.n() != batch_y.n()) throw ShapeError("domain batches differ in size");
  if (!batch_x.all_finite() || !batch_y.all_finite()) throw TrainingError("non-finite input batch");

  // Work on copies of everything an update touches so a failed step leaves
  // the caller's state unchanged.
  Rng rng = state.rng;
  const ContrastivePair pair_x = cig_sample(rng, batch_x.n(), cfg.delta_min);
  const ContrastivePair pair_y = cig_sample(rng, batch_y.n(), cfg.delta_min);
  const double lr = lr_schedule(state.epoch, cfg);
  const AdamConfig adam{cfg.adam_beta1, cfg.adam_beta2, 1e-8};

  auto fakes_xy = generate_contrastive(state.g_xy, batch_x, pair_x, Mode::train);
  std::optional<ContrastiveFakes<Real>> fakes_yx;
  if (bi) fakes_yx = generate_contrastive(state.g_yx, batch_y, pair_y, Mode::train);
  const ContrastiveFakes<Real>* fyx = fakes_yx ? &*fakes_yx : nullptr;

  LossReport report;
  report.lr = lr;

  auto d_update = [&](TrainState& s) {
    ModelGrads<Real> g;
    g.d_y = s.d_y.params.zeros_like();
    if (bi) g.d_x = s.d_x.params.zeros_like();
    const auto r = discriminator_objective(s.models(bi), batch_x, batch_y, fakes_xy, fyx, setup.weights, &g);
    require_finite(r, &g.d_y, bi ? &g.d_x : nullptr, "discriminator", s.step);
    if (cfg.grad_clip > 0) {
      clip_grad_norm(g.d_y, cfg.grad_clip);
      if (bi) clip_grad_norm(g.d_x, cfg.grad_clip);
    }
    ++s.adam_t_d;
    adam_update(s.d_y.params, g.d_y, s.adam_d_y, adam, lr, s.adam_t_d);
    if (bi) adam_update(s.d_x.params, g.d_x, s.adam_d_x, adam, lr, s.adam_t_d);
    report.discriminator = r.terms;
    report.total_d = r.total;
  };

  auto g_update = [&](TrainState& s) {
    ModelGrads<Real> g;
    g.g_xy = s.g_xy.params.zeros_like();
    if (bi) g.g_yx = s.g_yx.params.zeros_like();
    const auto r = generator_objective(s.models(bi), fakes_xy, fyx, setup.weights, Mode::train, &g);
    require_finite(r, &g.g_xy, bi ? &g.g_yx : nullptr, "generator", s.step);
    if (cfg.grad_clip > 0) {
      clip_grad_norm(g.g_xy, cfg.grad_clip);
      if (bi) clip_grad_norm(g.g_yx, cfg.grad_clip);
    }
    ++s.adam_t_g;
    adam_update(s.g_xy.params, g.g_xy, s.adam_g_xy, adam, lr, s.adam_t_g);
    if (bi) adam_update(s.g_yx.params, g.g_yx, s.adam_g_yx, adam, lr, s.adam_t_g);
    update_running_stats(s.g_xy, fakes_xy.cache);
    if (bi) update_running_stats(s.g_yx, fakes_yx->cache);
    report.generator = r.terms;
    report.total_g = r.total;
    report.mean_delta_tar = r.mean_delta_tar;
  };

  TrainState next = state;
  if (cfg.update_order == UpdateOrder::discriminator_first) {
    d_update(next);
    g_update(next);
  } else {
    g_update(next);
    d_update(next);
  }
  next.rng = rng;
  ++next.step;
  report.step = next.step;
  report.epoch = next.epoch;
  if (cfg.steps_per_epoch > 0) next.epoch = static_cast<int>(next.step / cfg.steps_per_epoch);
  next.rolling.add(report);
  state = std::move(next);
  return report;
}

// ---- JSON -----------------------------------------------------------------

void to_json(nlohmann::json& j, const GeneratorSpec& s) {
  j = {{"in_channels", s.in_channels},
       {"base_channels", s.base_channels},
       {"depth", s.depth},
       {"norm_mode", to_string(s.norm_mode)},
       {"pre_norm_nonlinearity", to_string(s.pre_norm_nonlinearity)},
       {"output_activation", to_string(s.output_activation)},
       {"init", to_string(s.init)},
       {"bidirectional", s.bidirectional},
       {"allow_degenerate", s.allow_degenerate}};
}

void from_json(const nlohmann::json& j, GeneratorSpec& s) {
  require_known_keys(j,
                     {"in_channels", "base_channels", "depth", "norm_mode", "pre_norm_nonlinearity",
                      "output_activation", "init", "bidirectional", "allow_degenerate"},
                     "generator");
  GeneratorSpec d;
  s.in_channels = j.value("in_channels", d.in_channels);
  s.base_channels = j.value("base_channels", d.base_channels);
  s.depth = j.value("depth", d.depth);
  s.norm_mode = parse_norm_mode(j.value("norm_mode", to_string(d.norm_mode)));
  s.pre_norm_nonlinearity = parse_nonlinearity(j.value("pre_norm_nonlinearity", to_string(d.pre_norm_nonlinearity)));
  s.output_activation = parse_output_activation(j.value("output_activation", to_string(d.output_activation)));
  s.init = parse_init_scheme(j.value("init", to_string(d.init)));
  s.bidirectional = j.value("bidirectional", d.bidirectional);
  s.allow_degenerate = j.value("allow_degenerate", d.allow_degenerate);
}

void to_json(nlohmann::json& j, const DiscriminatorSpec& s) {
  j = {{"in_channels", s.in_channels}, {"base_channels", s.base_channels}, {"init", to_string(s.init)}};
}

void from_json(const nlohmann::json& j, DiscriminatorSpec& s) {
  require_known_keys(j, {"in_channels", "base_channels", "init"}, "discriminator");
  DiscriminatorSpec d;
  s.in_channels = j.value("in_channels", d.in_channels);
  s.base_channels = j.value("base_channels", d.base_channels);
  s.init = parse_init_scheme(j.value("init", to_string(d.init)));
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"lambda_cyc", w.lambda_cyc}, {"lambda_mn", w.lambda_mn},   {"lambda_df", w.lambda_df},
       {"epsilon", w.epsilon},       {"lambda_adv", w.lambda_adv}, {"adversarial_form", "least_squares"},
       {"reduction", to_string(w.reduction)}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  require_known_keys(j,
                     {"lambda_cyc", "lambda_mn", "lambda_df", "epsilon", "lambda_adv", "adversarial_form", "reduction"},
                     "loss_weights");
  LossWeights d;
  w.lambda_cyc = j.value("lambda_cyc", d.lambda_cyc);
  w.lambda_mn = j.value("lambda_mn", d.lambda_mn);
  w.lambda_df = j.value("lambda_df", d.lambda_df);
  w.epsilon = j.value("epsilon", d.epsilon);
  w.lambda_adv = j.value("lambda_adv", d.lambda_adv);
  if (j.value("adversarial_form", std::string("least_squares")) != "least_squares") {
    throw ConfigError("only the least_squares adversarial form is supported");
  }
  w.reduction = parse_reduction(j.value("reduction", to_string(d.reduction)));
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"epochs", c.epochs},
       {"lr_decay_start_epoch", c.lr_decay_start_epoch},
       {"batch_size", c.batch_size},
       {"pairs_per_item", c.pairs_per_item},
       {"steps_per_epoch", c.steps_per_epoch},
       {"max_steps", c.max_steps},
       {"bidirectional", c.bidirectional},
       {"seed", c.seed},
       {"preset_name", c.preset_name},
       {"delta_min", c.delta_min},
       {"update_order", c.update_order == UpdateOrder::discriminator_first ? "discriminator_first" : "generator_first"},
       {"grad_clip", c.grad_clip},
       {"hflip", c.hflip},
       {"crop", c.crop}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  require_known_keys(j,
                     {"lr", "adam_beta1", "adam_beta2", "epochs", "lr_decay_start_epoch", "batch_size",
                      "pairs_per_item", "steps_per_epoch", "max_steps", "bidirectional", "seed", "preset_name",
                      "delta_min", "update_order", "grad_clip", "hflip", "crop"},
                     "train");
  TrainConfig d;
  c.lr = j.value("lr", d.lr);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.epochs = j.value("epochs", d.epochs);
  c.lr_decay_start_epoch = j.value("lr_decay_start_epoch", d.lr_decay_start_epoch);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.pairs_per_item = j.value("pairs_per_item", d.pairs_per_item);
  c.steps_per_epoch = j.value("steps_per_epoch", d.steps_per_epoch);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.bidirectional = j.value("bidirectional", d.bidirectional);
  c.seed = j.value("seed", d.seed);
  c.preset_name = j.value("preset_name", d.preset_name);
  c.delta_min = j.value("delta_min", d.delta_min);
  const std::string order = j.value("update_order", std::string("discriminator_first"));
  if (order == "discriminator_first") {
    c.update_order = UpdateOrder::discriminator_first;
  } else if (order == "generator_first") {
    c.update_order = UpdateOrder::generator_first;
  } else {
    throw ConfigError("unknown update_order '" + order + "'");
  }
  c.grad_clip = j.value("grad_clip", d.grad_clip);
  c.hflip = j.value("hflip", d.hflip);
  c.crop = j.value("crop", d.crop);
}

void to_json(nlohmann::json& j, const TrainSetup& s) {
  j = {{"generator", s.generator},
       {"discriminator", s.discriminator},
       {"loss_weights", s.weights},
       {"train", s.train}};
}

void from_json(const nlohmann::json& j, TrainSetup& s) {
  require_known_keys(j, {"generator", "discriminator", "loss_weights", "train"}, "setup");
  if (j.contains("generator")) s.generator = j.at("generator").get<GeneratorSpec>();
  if (j.contains("discriminator")) s.discriminator = j.at("discriminator").get<DiscriminatorSpec>();
  if (j.contains("loss_weights")) s.weights = j.at("loss_weights").get<LossWeights>();
  if (j.contains("train")) s.train = j.at("train").get<TrainConfig>();
}

}  // namespace monopix
