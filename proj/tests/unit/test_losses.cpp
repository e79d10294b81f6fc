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

#include "monopix/losses.hpp"
#include "test_util.hpp"

using namespace monopix;
using testutil::central_difference;
using testutil::random_tensor;
using testutil::rel_error;

TEST_SUITE("losses") {
  TEST_CASE("hinge closed forms") {
    const Shape s{2, 1, 3, 3};
    CHECK(hinge_margin_loss(Tensor<double>(s, 0.7), 0.5) == 0.0);
    CHECK(hinge_margin_loss(Tensor<double>(s, 0.0), 0.5) == 0.25);
    CHECK(hinge_margin_loss(Tensor<double>(s, -0.5), 0.5) == 1.0);
    CHECK(hinge_margin_loss(Tensor<double>(s, 0.0), 0.5, Reduction::sum) == doctest::Approx(0.25 * 18));
  }

  TEST_CASE("hinge gradient matches central differences around the kink") {
    Rng rng(3);
    const double eps = 0.5;
    for (double base : {eps - 1e-2, eps + 1e-2}) {
      Tensor<double> d(Shape{1, 1, 4, 4});
      for (Eigen::Index i = 0; i < d.size(); ++i) d.array()[i] = base + uniform(rng, -5e-3, 5e-3);
      const auto g = hinge_margin_grad(d, eps);
      for (Eigen::Index i = 0; i < d.size(); ++i) {
        const double num = central_difference([&] { return hinge_margin_loss(d, eps); }, d.array()[i], 1e-6);
        if (base > eps) {
          CHECK(g.array()[i] == 0.0);
        } else {
          CHECK(rel_error(g.array()[i], num) < 1e-3);
        }
      }
    }
  }

  TEST_CASE("hinge gradient on random instances") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor<double> d = random_tensor(Shape{2, 1, 3, 3}, rng, -1.0, 1.5);
      const double eps = uniform(rng, 0.0, 1.0);
      for (Reduction red : {Reduction::mean, Reduction::sum}) {
        const auto g = hinge_margin_grad(d, eps, red);
        for (Eigen::Index i = 0; i < d.size(); ++i) {
          if (std::abs(d.array()[i] - eps) < 1e-4) continue;
          const double num = central_difference([&] { return hinge_margin_loss(d, eps, red); }, d.array()[i], 1e-6);
          CHECK(rel_error(g.array()[i], num) < 1e-3);
        }
      }
    }
  }

  TEST_CASE("hinge is zero-gradient above the margin and permutation invariant") {
    Rng rng(5);
    Tensor<double> d = random_tensor(Shape{1, 1, 5, 5}, rng, 0.6, 2.0);
    CHECK(hinge_margin_grad(d, 0.5).array().abs().maxCoeff() == 0.0);
    Tensor<double> e = random_tensor(Shape{1, 1, 5, 5}, rng, -1.0, 1.0);
    Tensor<double> p = e;
    std::reverse(p.data(), p.data() + p.size());
    CHECK(hinge_margin_loss(p, 0.5) == doctest::Approx(hinge_margin_loss(e, 0.5)).epsilon(1e-14));
  }

  TEST_CASE("least-squares adversarial values and gradients") {
    const Shape s{1, 1, 6, 6};
    auto a = adversarial_losses_from_outputs(Tensor<double>(s, 1.0), Tensor<double>(s, 0.0));
    CHECK(a.d_loss == 0.0);
    CHECK(a.g_loss == 1.0);
    Rng rng(7);
    Tensor<double> x = random_tensor(s, rng, -1.0, 2.0);
    for (double target : {0.0, 1.0}) {
      const auto g = squared_error_to_grad(x, target);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double num = central_difference([&] { return squared_error_to(x, target); }, x.array()[i], 1e-6);
        CHECK(rel_error(g.array()[i], num) < 1e-3);
      }
    }
  }

  TEST_CASE("cycle L1 gradient") {
    Rng rng(8);
    Tensor<double> a = random_tensor(Shape{2, 3, 4, 4}, rng);
    const Tensor<double> b = random_tensor(Shape{2, 3, 4, 4}, rng);
    const auto g = l1_mean_grad(a, b);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (std::abs(a.array()[i] - b.array()[i]) < 1e-4) continue;
      const double num = central_difference([&] { return l1_mean(a, b); }, a.array()[i], 1e-6);
      CHECK(rel_error(g.array()[i], num) < 1e-3);
    }
  }

  TEST_CASE("contrastive sampler keeps pairs ordered") {
    Rng rng(13);
    for (int i = 0; i < 10000; ++i) {
      const auto p = cig_sample(rng, 1, 0.0);
      REQUIRE(p.low[0] < p.high[0]);
      REQUIRE(p.low[0] >= 0.0);
      REQUIRE(p.high[0] <= 1.0);
    }
    const auto wide = cig_sample(rng, 500, 0.3);
    for (int i = 0; i < wide.size(); ++i) CHECK(wide.high[i] - wide.low[i] >= 0.3);
    CHECK_THROWS_AS(cig_sample(rng, 1, 1.0), ConfigError);
  }

  TEST_CASE("objective totals equal the weighted component sums") {
    LossWeights w;  // 10 / 1 / 0.25
    const LossTerms t{0.5, 0.02, 0.25, 0.04};
    CHECK(total_generator_loss(t, w, true) == doctest::Approx(0.96).epsilon(1e-12));
    CHECK(total_generator_loss(t, w, false) == doctest::Approx(0.5 + 0.2 + 0.25).epsilon(1e-12));
    CHECK(total_discriminator_loss(t, w, true) == doctest::Approx(0.5 + 0.25 + 0.01).epsilon(1e-12));
    CHECK(total_generator_loss(LossTerms{}, w, true) == 0.0);
  }
}
