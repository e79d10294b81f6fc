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

#include <nlohmann/json.hpp>

#include "monopix/metrics.hpp"
#include "test_util.hpp"

using namespace monopix;

namespace {

// Textbook Pearson: sum of co-deviations over the root of the product of squared deviations.
double pearson_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

Eigen::ArrayXd arr(const std::vector<double>& v) { return Eigen::Map<const Eigen::ArrayXd>(v.data(), v.size()); }

// A trajectory whose k-th image is the input plus a constant offset o_k.
Trajectory<double> offset_trajectory(const std::vector<double>& offsets) {
  Trajectory<double> t;
  t.input = Tensor<double>(Shape{1, 1, 4, 4}, 0.0);
  t.intensities = linspace(0.0, 1.0, static_cast<int>(offsets.size()));
  for (double o : offsets) t.images.emplace_back(Shape{1, 1, 4, 4}, o);
  return t;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("pearson kernel agrees with the direct formula") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = uniform_int(rng, 3, 40);
      std::vector<double> a(n), b(n);
      for (int i = 0; i < n; ++i) {
        a[i] = uniform(rng, -3, 3);
        b[i] = 0.3 * a[i] + uniform(rng, -1, 1);
      }
      const auto k = pearson(arr(a), arr(b));
      REQUIRE(k.has_value());
      CHECK(std::abs(*k - pearson_oracle(a, b)) < 1e-12);
    }
    CHECK_FALSE(pearson(arr({1, 1, 1}), arr({1, 2, 3})).has_value());
  }

  TEST_CASE("absolute linearity closed forms") {
    const auto prop = absolute_linearity_from({0, 0.5, 1}, {0, 0.1, 0.2});
    CHECK(*prop.al == doctest::Approx(1.0).epsilon(1e-14));
    const auto dec = absolute_linearity_from({0, 0.5, 1}, {0.2, 0.1, 0.0});
    CHECK(*dec.al == doctest::Approx(-1.0).epsilon(1e-14));
    const auto rg = absolute_linearity_from({0, 0.25, 0.5, 0.75, 1}, {0.0, 0.1, 0.3, 0.2, 0.15});
    CHECK(rg.rg == 0.3);
    const auto flat = absolute_linearity_from({0, 0.5, 1}, {0.4, 0.4, 0.4});
    CHECK_FALSE(flat.al.has_value());
    CHECK_FALSE(flat.diagnostic.empty());
  }

  TEST_CASE("relative linearity closed forms") {
    const auto eq = relative_linearity_from({0.1, 0.1, 0.1, 0.1});
    CHECK(*eq.rl == doctest::Approx(1.0).epsilon(1e-14));
    const auto sm = relative_linearity_from({0.01, 0.02, 0.05});
    CHECK(sm.sm == 0.05);
  }

  TEST_CASE("trajectory metrics under pixel_l2") {
    const auto t = offset_trajectory({0.0, 0.1, 0.2, 0.3});
    const auto a = absolute_linearity(t);
    CHECK(*a.al == doctest::Approx(1.0));
    CHECK(a.rg == doctest::Approx(0.3));
    const auto r = relative_linearity(t);
    CHECK(r.sm == doctest::Approx(0.1));
    CHECK(*r.rl == doctest::Approx(1.0));
    CHECK_THROWS_AS(absolute_linearity(offset_trajectory({0.0, 0.1})), ConfigError);
  }

  TEST_CASE("affine rescaling of the distance leaves AL and RL unchanged and scales Rg and Sm") {
    const auto t = offset_trajectory({0.0, 0.02, 0.1, 0.11, 0.3, 0.31});
    const auto scaled = [](const Tensor<double>& a, const Tensor<double>& b) { return 3.7 * pixel_l2(a, b); };
    const auto a1 = absolute_linearity(t);
    const auto a2 = absolute_linearity(t, scaled);
    const auto r1 = relative_linearity(t);
    const auto r2 = relative_linearity(t, scaled);
    CHECK(*a2.al == doctest::Approx(*a1.al).epsilon(1e-12));
    CHECK(*r2.rl == doctest::Approx(*r1.rl).epsilon(1e-12));
    CHECK(a2.rg == doctest::Approx(3.7 * a1.rg).epsilon(1e-12));
    CHECK(r2.sm == doctest::Approx(3.7 * r1.sm).epsilon(1e-12));
  }

  TEST_CASE("frechet distance") {
    Rng rng(2);
    Eigen::MatrixXd a(200, 3);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = standard_normal(rng);
    CHECK(std::abs(frechet_distance(a, a).value) < 1e-9);

    // N(0, 1) vs N(1, 4): (mu1 - mu2)^2 + (s1 - s2)^2 = 1 + 1.
    const int n = 100000;
    Eigen::MatrixXd x(n, 1), y(n, 1);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = standard_normal(rng);
      y(i, 0) = 1.0 + 2.0 * standard_normal(rng);
    }
    CHECK(std::abs(frechet_distance(x, y).value - 2.0) / 2.0 < 0.02);
  }

  TEST_CASE("fid harness on identical sets and without an embedding") {
    Rng rng(3);
    std::vector<Trajectory<double>> trajs;
    std::vector<ImageBatch<double>> real;
    for (int i = 0; i < 30; ++i) {
      Trajectory<double> t;
      t.input = testutil::random_tensor(Shape{1, 3, 8, 8}, rng);
      t.intensities = {1.0};
      t.images = {testutil::random_tensor(Shape{1, 3, 8, 8}, rng)};
      real.push_back(t.images.back());
      trajs.push_back(std::move(t));
    }
    const Embedding<double> emb = [](const ImageBatch<double>& im) { return pooled_pixel_embedding(im, 2); };
    CHECK(std::abs(fid_harness(trajs, real, emb, FidMode::last_intensity).value) < 1e-9);
    CHECK_THROWS_AS(fid_harness(trajs, real, Embedding<double>{}, FidMode::last_intensity), UnsupportedError);
  }

  TEST_CASE("acc needs a classifier plugin") {
    const auto t = offset_trajectory({0.0, 0.1, 0.2});
    CHECK_THROWS_AS(acc_metric<double>(t, {}), UnsupportedError);
    CHECK(acc_metric<double>(t, [](const ImageBatch<double>& im) { return im.array().mean(); }) ==
          doctest::Approx(0.2));
  }

  TEST_CASE("psnr and ssim") {
    Rng rng(4);
    const auto a = testutil::random_tensor(Shape{1, 3, 16, 16}, rng);
    CHECK(psnr(a, a, 2.0) == kPsnrCap);
    Tensor<double> b = a;
    b.array() += 0.1;
    CHECK(psnr(a, b, 2.0) == doctest::Approx(10.0 * std::log10(4.0 / 0.01)));
    CHECK(ssim(a, a) == doctest::Approx(1.0));
    CHECK(ssim(a, b) < 1.0);
    CHECK_THROWS_AS(ssim(Tensor<double>(Shape{1, 1, 8, 8}), Tensor<double>(Shape{1, 1, 8, 8})), ShapeError);
  }

  TEST_CASE("kl divergence and akld") {
    const Eigen::ArrayXd p = arr({0.5, 0.5});
    const Eigen::ArrayXd q = arr({0.25, 0.75});
    CHECK(kl_divergence(p, p) == 0.0);
    CHECK(kl_divergence(p, q) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(0.5 / 0.75)));
    const auto h = histogram_density(arr({-1.0, 0.0, 0.999, 5.0}), 4, -1.0, 1.0, 0.0);
    CHECK(h.sum() == doctest::Approx(1.0));
    CHECK(h[0] == doctest::Approx(0.25));
    CHECK(h[3] == doctest::Approx(0.5));

    Rng rng(5);
    const auto clean = testutil::random_tensor(Shape{2, 1, 16, 16}, rng, -0.5, 0.5);
    Tensor<double> noisy = clean;
    for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.array()[i] += 0.1 * standard_normal(rng);
    CHECK(akld(noisy, noisy, clean).value == doctest::Approx(0.0));
    CHECK(akld(clean, noisy, clean).value > 0.0);
  }

  TEST_CASE("evaluation report schema") {
    EvalReport r;
    r.add(evaluate_trajectory("a", offset_trajectory({0.0, 0.1, 0.2})));
    r.add(evaluate_trajectory("b", offset_trajectory({0.0, 0.2, 0.1})));
    r.finalize();
    const std::string csv = r.csv();
    CHECK(csv.rfind("id,AL,Rg,RL,Sm", 0) == 0);
    const auto j = nlohmann::json::parse(r.json());
    CHECK(j.at("rows").size() == 2);
    CHECK(j.at("mean").at("Rg").get<double>() == doctest::Approx(0.2));
  }
}
