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

#include "monopix/inference.hpp"
#include "test_util.hpp"

using namespace monopix;

TEST_SUITE("inference") {
  TEST_CASE("ternary bracket shrinks by exactly two thirds per iteration") {
    const ScalarObjective f = [](double c) { return -(c - 0.3) * (c - 0.3); };
    for (int n = 1; n <= 12; ++n) {
      const auto r = ternary_search(f, 0.0, 1.0, n);
      CHECK(r.final_high - r.final_low == doctest::Approx(std::pow(2.0 / 3.0, n)).epsilon(1e-12));
      CHECK(static_cast<int>(r.iterations.size()) == n);
      CHECK(r.evaluations == 2 * n);
      CHECK(r.c_star == doctest::Approx(0.5 * (r.final_low + r.final_high)));
    }
    const auto wide = ternary_search(f, -1.0, 2.0, 5);
    CHECK(wide.final_high - wide.final_low == doctest::Approx(3.0 * std::pow(2.0 / 3.0, 5)).epsilon(1e-12));
  }

  TEST_CASE("ternary search on random concave quadratics agrees with a fine grid") {
    Rng rng(21);
    const double step = 1e-4;
    for (int trial = 0; trial < 1000; ++trial) {
      const double peak = uniform(rng, -0.2, 1.2);
      const double k = uniform(rng, 0.1, 10.0);
      const double b = uniform(rng, -1.0, 1.0);
      const int n = uniform_int(rng, 3, 20);
      const ScalarObjective f = [&](double c) { return b - k * (c - peak) * (c - peak); };
      const auto r = ternary_search(f, 0.0, 1.0, n);
      const double half = 0.5 * (r.final_high - r.final_low);
      const double argmax = std::clamp(peak, 0.0, 1.0);
      REQUIRE(std::abs(r.c_star - argmax) <= half + 1e-12);

      double grid_best = 0.0;
      double grid_score = -std::numeric_limits<double>::infinity();
      for (int i = 0; i <= 10000; ++i) {
        const double c = i * step;
        if (f(c) > grid_score) grid_score = f(c), grid_best = c;
      }
      REQUIRE(std::abs(r.c_star - grid_best) <= half + step);
    }
  }

  TEST_CASE("ternary search rejects an empty bracket") {
    CHECK_THROWS_AS(ternary_search([](double) { return 0.0; }, 1.0, 1.0, 3), RangeError);
    CHECK_THROWS_AS(exhaustive_search([](double) { return 0.0; }, 1.0, 0.0, 3), RangeError);
  }

  TEST_CASE("exhaustive search covers the grid and breaks ties low") {
    int calls = 0;
    const auto r = exhaustive_search(
        [&](double c) {
          ++calls;
          return c > 0.25 && c < 0.45 ? 1.0 : 0.0;
        },
        0.0, 1.0, 11);
    CHECK(calls == 11);
    CHECK(r.evaluations == 11);
    CHECK(r.trace.front().c == 0.0);
    CHECK(r.trace.back().c == 1.0);
    // 0.3 and 0.4 tie
    CHECK(r.c_star == doctest::Approx(0.3));
    const auto flat = exhaustive_search([](double) { return 1.0; }, 0.0, 1.0, 5);
    CHECK(flat.c_star == 0.0);
  }

  TEST_CASE("control map recipes") {
    const auto c = make_control_map(ControlRecipe::constant(0.25), 4, 6, false);
    CHECK(c.shape() == Shape{1, 1, 4, 6});
    CHECK(c.values.array().minCoeff() == 0.25f);
    CHECK(c.values.array().maxCoeff() == 0.25f);

    const auto h = make_control_map(ControlRecipe::horizontal_ramp(0.0, 1.0), 3, 5, false);
    CHECK(h.values(0, 0, 2, 0) == 0.0f);
    CHECK(h.values(0, 0, 0, 2) == 0.5f);
    CHECK(h.values(0, 0, 1, 4) == 1.0f);
    const auto v = make_control_map(ControlRecipe::vertical_ramp(1.0, 0.0), 5, 3, false);
    CHECK(v.values(0, 0, 0, 1) == 1.0f);
    CHECK(v.values(0, 0, 4, 1) == 0.0f);

    Tensor<float> mask(Shape{1, 1, 2, 2}, 0.0f);
    mask(0, 0, 0, 0) = 1.0f;
    mask(0, 0, 1, 1) = 0.5f;
    const auto m = make_control_map(ControlRecipe::mask_blend(mask, 0.8, 0.2), 2, 2, false);
    CHECK(m.values(0, 0, 0, 0) == doctest::Approx(0.8));
    CHECK(m.values(0, 0, 0, 1) == doctest::Approx(0.2));
    CHECK(m.values(0, 0, 1, 1) == doctest::Approx(0.5));
    CHECK_THROWS_AS(make_control_map(ControlRecipe::mask_blend(mask, 0.8, 0.2), 3, 3, false), ShapeError);
  }

  TEST_CASE("out-of-bound intensities need the opt-in") {
    CHECK_THROWS_AS(make_control_map(ControlRecipe::constant(1.5), 2, 2, false), RangeError);
    CHECK_THROWS_AS(make_control_map(ControlRecipe::horizontal_ramp(-0.1, 0.5), 2, 2, false), RangeError);
    CHECK_NOTHROW(make_control_map(ControlRecipe::constant(1.5), 2, 2, true));
    CHECK_NOTHROW(make_control_map(ControlRecipe::constant(-1.0), 2, 2, true));
    CHECK_THROWS_AS(make_control_map(ControlRecipe::constant(2.5), 2, 2, true), RangeError);
    CHECK_NOTHROW(make_control_map(ControlRecipe::constant(2.5), 2, 2, true, ControlBounds{-3.0, 3.0}));
  }

  TEST_CASE("recipe json round trip") {
    Tensor<float> painted(Shape{1, 1, 2, 3}, 0.5f);
    painted(0, 0, 1, 2) = 0.75f;
    for (const auto& r : {ControlRecipe::constant(0.4), ControlRecipe::horizontal_ramp(0.1, 0.9),
                          ControlRecipe::vertical_ramp(0.0, 1.0), ControlRecipe::painted(painted)}) {
      const auto back = recipe_from_json(recipe_to_json(r));
      CHECK(back.kind == r.kind);
      const auto a = make_control_map(r, 2, 3, false);
      const auto b = make_control_map(back, 2, 3, false);
      CHECK(a.values.array().isApprox(b.values.array()));
    }
    CHECK_THROWS_AS(recipe_from_json({{"kind", "spiral"}}), ConfigError);
  }

  TEST_CASE("generator inference helpers") {
    GeneratorSpec spec;
    spec.base_channels = 4;
    spec.depth = 2;
    spec.init = InitScheme::kaiming_normal;
    const auto gen = build_generator<float>(spec, 3);
    Rng rng(4);
    ImageBatch<float> image(Shape{1, 3, 8, 8});
    for (Eigen::Index i = 0; i < image.size(); ++i) image.array()[i] = static_cast<float>(uniform(rng, -1, 1));
    const auto traj = make_trajectory(gen, image, linspace(0.0, 1.0, 5));
    CHECK(traj.images.size() == 5);
    CHECK(traj.images[2].array().isApprox(translate_constant(gen, image, 0.5).array()));
    CHECK_THROWS_AS(translate_constant(gen, image, 1.2), RangeError);

    // The reference is the output at c = 0.6, so PSNR peaks there.
    const auto ref = translate_constant(gen, image, 0.6);
    const auto ex = exhaustive_infer(gen, image, psnr_to_reference(), &ref, 11);
    CHECK(ex.c_star == doctest::Approx(0.6));
    CHECK(ex.score == kPsnrCap);
    const auto te = ternary_infer(gen, image, psnr_to_reference(), &ref, 7);
    CHECK(te.evaluations == 14);
    CHECK(std::abs(te.c_star - 0.6) < 0.15);
    CHECK_THROWS_AS(exhaustive_infer(gen, image, psnr_to_reference(), nullptr, 11), ConfigError);
  }

  TEST_CASE("expert forward and backward") {
    ExpertSpec spec;
    spec.in_channels = 1;
    spec.base_channels = 2;
    const auto expert = build_expert(spec, 5);
    Rng rng(6);
    ImageBatch<float> images(Shape{2, 1, 16, 16});
    for (Eigen::Index i = 0; i < images.size(); ++i) images.array()[i] = static_cast<float>(uniform(rng, -1, 1));
    ExpertCache cache;
    const auto pred = expert_forward(expert, images, &cache);
    CHECK(pred.size() == 2);
    ParamStore<float> grads = expert.params.zeros_like();
    expert_backward(expert, cache, {1.0, 1.0}, grads);
    double norm = 0.0;
    for (const auto& g : grads.values) norm += g.array().square().sum();
    CHECK(norm > 0.0);

    // Labels a constant the expert can learn from the bias alone.
    std::vector<ImageBatch<float>> inputs;
    for (int i = 0; i < 8; ++i) inputs.push_back(images.slice_batch(i % 2, 1));
    ExpertTrainConfig cfg;
    cfg.epochs = 150;
    cfg.spec = spec;
    const auto fit = fit_expert(inputs, std::vector<double>(8, 0.7), cfg);
    CHECK(fit.loss_curve.back() < fit.loss_curve.front());
    CHECK(fit.loss_curve.back() < 0.05);
  }
}
