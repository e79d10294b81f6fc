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

#include "monopix/model.hpp"
#include "test_util.hpp"

using namespace monopix;
using testutil::central_difference;
using testutil::random_tensor;
using testutil::rel_error;

namespace {

double dot(const Tensor<double>& a, const Tensor<double>& b) { return (a.array() * b.array()).sum(); }

GeneratorSpec tiny_generator(NormMode norm) {
  GeneratorSpec s;
  s.base_channels = 2;
  s.depth = 2;
  s.norm_mode = norm;
  s.init = InitScheme::kaiming_normal;
  return s;
}

// Checks a sample of parameter and input entries of L = <r, G(x, c)>.
void check_generator_gradients(NormMode norm, std::uint64_t seed) {
  Rng rng(seed);
  Generator<double> gen = build_generator<double>(tiny_generator(norm), seed);
  Tensor<double> x = random_tensor(Shape{2, 3, 8, 8}, rng);
  ControlMap<double> c{random_tensor(Shape{2, 1, 8, 8}, rng, 0.0, 1.0)};
  GeneratorCache<double> cache;
  const Tensor<double> y = forward(gen, x, c, Mode::train, &cache);
  const Tensor<double> r = random_tensor(y.shape(), rng);
  ParamStore<double> grads = gen.params.zeros_like();
  const Tensor<double> dx = backward(gen, cache, r, &grads);
  auto loss = [&] { return dot(r, forward(gen, x, c, Mode::train, static_cast<GeneratorCache<double>*>(nullptr))); };

  int checked = 0;
  for (std::size_t p = 0; p < gen.params.size(); ++p) {
    if (!gen.params.trainable[p]) continue;
    for (int k = 0; k < 3; ++k) {
      const Eigen::Index i = uniform_int(rng, 0, static_cast<int>(gen.params[p].size()) - 1);
      const double num = central_difference(loss, gen.params[p].array()[i], 1e-6);
      INFO(gen.params.names[p] << "[" << i << "]");
      CHECK(rel_error(grads[p].array()[i], num, 1e-6) < 1e-3);
      ++checked;
    }
  }
  for (int k = 0; k < 10; ++k) {
    const Eigen::Index i = uniform_int(rng, 0, static_cast<int>(x.size()) - 1);
    CHECK(rel_error(dx.array()[i], central_difference(loss, x.array()[i], 1e-6), 1e-6) < 1e-3);
  }
  CHECK(checked > 10);
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("conv2d gradients") {
    Rng rng(1);
    const ops::ConvGeometry g{3, 4, 3, 2, 1};
    Tensor<double> x = random_tensor(Shape{2, 3, 7, 7}, rng);
    Tensor<double> w = random_tensor(Shape{4, 3, 3, 3}, rng);
    Tensor<double> b = random_tensor(Shape{1, 4, 1, 1}, rng);
    const auto y = ops::conv2d_forward(x, w, b, g);
    CHECK(y.shape() == Shape{2, 4, 4, 4});
    const auto r = random_tensor(y.shape(), rng);
    Tensor<double> dw(w.shape()), db(b.shape()), dx(x.shape());
    ops::conv2d_backward(x, w, g, r, &dw, &db, &dx);
    auto loss = [&] { return dot(r, ops::conv2d_forward(x, w, b, g)); };
    for (Eigen::Index i = 0; i < w.size(); i += 7) CHECK(rel_error(dw.array()[i], central_difference(loss, w.array()[i], 1e-6)) < 1e-6);
    for (Eigen::Index i = 0; i < b.size(); ++i) CHECK(rel_error(db.array()[i], central_difference(loss, b.array()[i], 1e-6)) < 1e-6);
    for (Eigen::Index i = 0; i < x.size(); i += 5) CHECK(rel_error(dx.array()[i], central_difference(loss, x.array()[i], 1e-6)) < 1e-6);
  }

  TEST_CASE("conv2d against a direct loop") {
    Rng rng(2);
    const ops::ConvGeometry g{2, 3, 3, 1, 1};
    const auto x = random_tensor(Shape{1, 2, 5, 6}, rng);
    const auto w = random_tensor(Shape{3, 2, 3, 3}, rng);
    const auto b = random_tensor(Shape{1, 3, 1, 1}, rng);
    const auto y = ops::conv2d_forward(x, w, b, g);
    double worst = 0.0;
    for (int o = 0; o < 3; ++o) {
      for (int yy = 0; yy < 5; ++yy) {
        for (int xx = 0; xx < 6; ++xx) {
          double s = b(0, o, 0, 0);
          for (int c = 0; c < 2; ++c) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = yy + ky - 1, ix = xx + kx - 1;
                if (iy >= 0 && iy < 5 && ix >= 0 && ix < 6) s += w(o, c, ky, kx) * x(0, c, iy, ix);
              }
            }
          }
          worst = std::max(worst, std::abs(s - y(0, o, yy, xx)));
        }
      }
    }
    CHECK(worst < 1e-12);
  }

  TEST_CASE("norm, pooling and upsampling gradients") {
    Rng rng(4);
    Tensor<double> x = random_tensor(Shape{2, 3, 4, 4}, rng);
    const auto r = random_tensor(x.shape(), rng);
    {
      ops::NormCache<double> cache;
      ops::instance_norm_forward(x, &cache);
      const auto dx = ops::instance_norm_backward(cache, r);
      auto loss = [&] { return dot(r, ops::instance_norm_forward<double>(x, nullptr)); };
      for (Eigen::Index i = 0; i < x.size(); i += 3) CHECK(rel_error(dx.array()[i], central_difference(loss, x.array()[i], 1e-6)) < 1e-5);
    }
    {
      Tensor<double> gamma = random_tensor(Shape{1, 3, 1, 1}, rng, 0.5, 1.5);
      Tensor<double> beta = random_tensor(Shape{1, 3, 1, 1}, rng);
      const Tensor<double> rm(Shape{1, 3, 1, 1}), rv(Shape{1, 3, 1, 1}, 1.0);
      ops::NormCache<double> cache;
      ops::batch_norm_forward(x, gamma, beta, rm, rv, true, &cache);
      Tensor<double> dg(gamma.shape()), dbeta(beta.shape());
      const auto dx = ops::batch_norm_backward(cache, gamma, r, &dg, &dbeta);
      auto loss = [&] { return dot(r, ops::batch_norm_forward<double>(x, gamma, beta, rm, rv, true, nullptr)); };
      for (Eigen::Index i = 0; i < x.size(); i += 3) CHECK(rel_error(dx.array()[i], central_difference(loss, x.array()[i], 1e-6)) < 1e-5);
      for (Eigen::Index i = 0; i < 3; ++i) {
        CHECK(rel_error(dg.array()[i], central_difference(loss, gamma.array()[i], 1e-6)) < 1e-5);
        CHECK(rel_error(dbeta.array()[i], central_difference(loss, beta.array()[i], 1e-6)) < 1e-5);
      }
    }
    {
      std::vector<std::int32_t> argmax;
      const auto y = ops::max_pool2_forward(x, &argmax);
      CHECK(y.shape() == Shape{2, 3, 2, 2});
      const auto rp = random_tensor(y.shape(), rng);
      const auto dx = ops::max_pool2_backward(x.shape(), argmax, rp);
      auto loss = [&] { return dot(rp, ops::max_pool2_forward<double>(x, nullptr)); };
      for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(rel_error(dx.array()[i], central_difference(loss, x.array()[i], 1e-7)) < 1e-5);
    }
    {
      const auto y = ops::upsample2_forward(x);
      CHECK(y.shape() == Shape{2, 3, 8, 8});
      const auto ru = random_tensor(y.shape(), rng);
      const auto dx = ops::upsample2_backward(x.shape(), ru);
      auto loss = [&] { return dot(ru, ops::upsample2_forward(x)); };
      for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(rel_error(dx.array()[i], central_difference(loss, x.array()[i], 1e-6)) < 1e-6);
    }
  }

  TEST_CASE("leaky relu forward and backward") {
    Tensor<double> x(Shape{1, 1, 1, 4});
    x.array() << -2.0, -0.5, 0.5, 3.0;
    const auto y = ops::leaky_relu_forward(x, 0.2);
    CHECK(y.array()[0] == doctest::Approx(-0.4));
    CHECK(y.array()[3] == 3.0);
    Tensor<double> ones(x.shape(), 1.0);
    const auto d = ops::leaky_relu_backward(y, ones, 0.2);
    CHECK(d.array()[1] == doctest::Approx(0.2));
    CHECK(d.array()[2] == 1.0);
  }

  TEST_CASE("generator gradients, every norm mode") {
    check_generator_gradients(NormMode::identity, 21);
    check_generator_gradients(NormMode::instance, 22);
    check_generator_gradients(NormMode::batch, 23);
  }

  TEST_CASE("discriminator gradients and output size") {
    Rng rng(31);
    DiscriminatorSpec spec;
    spec.base_channels = 2;
    spec.init = InitScheme::kaiming_normal;
    Discriminator<double> d = build_discriminator<double>(spec, 31);
    Tensor<double> x = random_tensor(Shape{2, 3, 32, 32}, rng);
    DiscriminatorCache<double> cache;
    const auto y = forward(d, x, &cache);
    CHECK(y.h() == discriminator_output_size(32));
    const auto r = random_tensor(y.shape(), rng);
    ParamStore<double> grads = d.params.zeros_like();
    const auto dx = backward(d, cache, r, &grads, true);
    auto loss = [&] { return dot(r, discriminator_forward(d, x)); };
    for (std::size_t p = 0; p < d.params.size(); ++p) {
      for (int k = 0; k < 3; ++k) {
        const Eigen::Index i = uniform_int(rng, 0, static_cast<int>(d.params[p].size()) - 1);
        CHECK(rel_error(grads[p].array()[i], central_difference(loss, d.params[p].array()[i], 1e-6), 1e-6) < 1e-3);
      }
    }
    for (int k = 0; k < 10; ++k) {
      const Eigen::Index i = uniform_int(rng, 0, static_cast<int>(x.size()) - 1);
      CHECK(rel_error(dx.array()[i], central_difference(loss, x.array()[i], 1e-6), 1e-6) < 1e-3);
    }
  }

  TEST_CASE("patch discriminator maps 64 pixels to a 6x6 grid") {
    CHECK(discriminator_output_size(64) == 6);
    const auto d = build_discriminator<float>(DiscriminatorSpec::desk(), 1);
    CHECK(discriminator_forward(d, Tensor<float>(Shape{1, 3, 64, 64})).shape() == Shape{1, 1, 6, 6});
  }

  TEST_CASE("generator output shape, range and control sensitivity") {
    GeneratorSpec spec = GeneratorSpec::desk();
    spec.init = InitScheme::kaiming_normal;
    const auto g = build_generator<float>(spec, 3);
    Rng rng(3);
    Tensor<float> x = random_tensor(Shape{1, 3, 32, 32}, rng).cast<float>();
    const auto lo = generator_forward(g, x, ControlMap<float>{Tensor<float>(Shape{1, 1, 32, 32}, 0.0f)});
    const auto hi = generator_forward(g, x, ControlMap<float>{Tensor<float>(Shape{1, 1, 32, 32}, 1.0f)});
    CHECK(lo.shape() == x.shape());
    CHECK(lo.array().abs().maxCoeff() <= 1.0f);
    CHECK(max_abs_diff(lo, hi) > 1e-4f);
    CHECK_THROWS_AS(generator_forward(g, Tensor<float>(Shape{1, 3, 30, 30}),
                                      ControlMap<float>{Tensor<float>(Shape{1, 1, 30, 30})}),
                    ShapeError);
  }

  TEST_CASE("instance norm without a nonlinearity erases a constant control") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto none = in_degeneracy_probe(NormMode::instance, Nonlinearity::none, 0.1, 0.9, seed);
      CHECK(none.degenerate);
      CHECK(none.max_abs_diff < 1e-5);
      const auto leaky = in_degeneracy_probe(NormMode::instance, Nonlinearity::leaky_relu, 0.1, 0.9, seed);
      CHECK_FALSE(leaky.degenerate);
    }
  }

  TEST_CASE("degenerate generator specs are refused unless explicitly allowed") {
    GeneratorSpec s = GeneratorSpec::desk();
    s.norm_mode = NormMode::instance;
    s.pre_norm_nonlinearity = Nonlinearity::none;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.allow_degenerate = true;
    CHECK_NOTHROW(s.validate());
  }

  TEST_CASE("activated feature map lies in [0, 1]") {
    GeneratorSpec spec = GeneratorSpec::desk();
    spec.init = InitScheme::kaiming_normal;
    const auto g = build_generator<float>(spec, 9);
    Rng rng(9);
    const auto x = random_tensor(Shape{1, 3, 16, 16}, rng).cast<float>();
    const auto m = activated_feature_map(g, x, 0.0, 1.0);
    CHECK(m.c() == 1);
    CHECK(m.array().minCoeff() >= 0.0f);
    CHECK(m.array().maxCoeff() <= 1.0f);
    CHECK(activated_feature_map(g, x, 0.5, 0.5).array().maxCoeff() == 0.0f);
  }

  TEST_CASE("full widths give about 8.6M generator parameters") {
    const auto g = build_generator<float>(GeneratorSpec::full_width(), 0);
    const double n = static_cast<double>(g.params.trainable_count());
    CHECK(n > 8.0e6);
    CHECK(n < 9.2e6);
  }
}
