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
#include <set>

#include "monopix/data.hpp"
#include "monopix/io.hpp"
#include "test_util.hpp"

using namespace monopix;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("monopix_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

DomainPairSpec small_spec() {
  DomainPairSpec s;
  s.image_size = 16;
  s.count = 20;
  s.seed = 9;
  return s;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("synthetic domains are deterministic and split 90/10") {
    const auto a = synth_generate(small_spec());
    const auto b = synth_generate(small_spec());
    CHECK(a.x.train.size() == 18);
    CHECK(a.x.test.size() == 2);
    CHECK(a.paired_test.size() == 2);
    CHECK(test_count(5) == 1);
    for (std::size_t i = 0; i < a.x.train.size(); ++i) CHECK(a.x.train[i].array().isApprox(b.x.train[i].array(), 0.0f));
    auto other = small_spec();
    other.seed = 10;
    CHECK_FALSE(synth_generate(other).x.train[0].array().isApprox(a.x.train[0].array()));
    // X and Y content come from different streams
    CHECK_FALSE(a.x.train[0].array().isApprox(a.y.train[0].array()));
  }

  TEST_CASE("brightness domains and paired references") {
    const auto d = synth_generate(small_spec());
    for (const auto& im : d.x.train) {
      CHECK(im.shape() == Shape{1, 3, 16, 16});
      CHECK(im.array().minCoeff() >= -1.0f);
      CHECK(im.array().maxCoeff() <= 1.0f);
    }
    double mx = 0, my = 0;
    for (const auto& im : d.x.train) mx += im.array().mean();
    for (const auto& im : d.y.train) my += im.array().mean();
    CHECK(mx < my);
    for (const auto& p : d.paired_test) {
      CHECK(p.reference_param >= 0.3);
      CHECK(p.reference_param <= 1.0);
      Rng unused(0);
      ImageBatch<float> content = p.clean;
      content.array() = (content.array() + 1.0f) * 0.5f;
      const auto expect = apply_domain(content, TaskKind::brightness, p.reference_param, unused);
      CHECK(p.reference.array().isApprox(expect.array()));
    }
  }

  TEST_CASE("apply_domain maps content to the signed range") {
    Rng rng(1);
    const auto c = render_shapes(rng, 8);
    CHECK(c.array().minCoeff() >= 0.0f);
    CHECK(c.array().maxCoeff() <= 1.0f);
    const auto full = apply_domain(c, TaskKind::brightness, 1.0, rng);
    CHECK(full.array().isApprox(c.array() * 2.0f - 1.0f));
    const auto clean = apply_domain(c, TaskKind::noise, 0.0, rng);
    CHECK(clean.array().isApprox(full.array()));
    const auto noisy = apply_domain(c, TaskKind::noise, 0.1, rng);
    CHECK_FALSE(noisy.array().isApprox(full.array()));
  }

  TEST_CASE("spec validation and json") {
    auto s = small_spec();
    CHECK_NOTHROW(s.validate());
    s.image_size = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    nlohmann::json j = small_spec();
    CHECK(j.get<DomainPairSpec>().seed == 9);
    j["colour"] = 1;
    CHECK_THROWS_AS(j.get<DomainPairSpec>(), ConfigError);
  }

  TEST_CASE("png round trip is exact on 8-bit levels") {
    Rng rng(2);
    ImageBatch<float> im(Shape{1, 3, 5, 7});
    for (Eigen::Index i = 0; i < im.size(); ++i) im.array()[i] = from_level(static_cast<std::uint8_t>(uniform_int(rng, 0, 255)));
    const auto back = png_to_image(image_to_png(im));
    CHECK(back.shape() == im.shape());
    CHECK((back.array() - im.array()).abs().maxCoeff() == 0.0f);
    CHECK(to_level(-1.0f) == 0);
    CHECK(to_level(1.0f) == 255);
    CHECK(to_level(3.0f) == 255);
    CHECK(from_level(255) == 1.0f);
  }

  TEST_CASE("gray pngs replicate and map onto control bounds") {
    RasterImage r;
    r.width = 2;
    r.height = 1;
    r.channels = 1;
    r.samples = {0, 255};
    const Bytes png = encode_png(r);
    const auto im = png_to_image(png);
    CHECK(im.shape() == Shape{1, 3, 1, 2});
    CHECK(im(0, 2, 0, 1) == 1.0f);
    const auto c = png_to_control_values(png, -1.0, 2.0);
    CHECK(c(0, 0, 0, 0) == -1.0f);
    CHECK(c(0, 0, 0, 1) == 2.0f);
    r.bit_depth = 16;
    r.samples = {0, 65535};
    const auto c16 = png_to_control_values(encode_png(r), 0.0, 1.0);
    CHECK(c16(0, 0, 0, 1) == 1.0f);
    CHECK_THROWS_AS(decode_png(Bytes{1, 2, 3}), IoError);
  }

  TEST_CASE("base64 and sha256") {
    const Bytes man{'M', 'a', 'n'};
    CHECK(base64_encode(man) == "TWFu");
    CHECK(base64_encode(Bytes{'M', 'a'}) == "TWE=");
    CHECK(base64_decode("TWE=") == Bytes{'M', 'a'});
    CHECK_THROWS_AS(base64_decode("T!E="), IoError);
    Rng rng(3);
    Bytes blob(1000);
    for (auto& b : blob) b = static_cast<std::uint8_t>(uniform_int(rng, 0, 255));
    CHECK(base64_decode(base64_encode(blob)) == blob);
    CHECK(sha256_hex(Bytes{'a', 'b', 'c'}) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("bilinear resize keeps constants and identity") {
    ImageBatch<float> c(Shape{1, 3, 6, 6}, 0.25f);
    CHECK(resize_bilinear(c, 4, 9).array().isApproxToConstant(0.25f));
    Rng rng(4);
    ImageBatch<float> im(Shape{1, 1, 5, 5});
    for (Eigen::Index i = 0; i < im.size(); ++i) im.array()[i] = static_cast<float>(uniform(rng, -1, 1));
    CHECK(resize_bilinear(im, 5, 5).array().isApprox(im.array()));
  }

  TEST_CASE("epoch permutations and batch indices") {
    const auto p = epoch_order(1, 0, 3, 10);
    CHECK(std::set<std::size_t>(p.begin(), p.end()).size() == 10);
    CHECK(p == epoch_order(1, 0, 3, 10));
    CHECK(p != epoch_order(1, 0, 4, 10));
    CHECK(p != epoch_order(1, 1, 3, 10));
    // batches walk through the permutation and wrap into the next epoch
    const auto e0 = epoch_order(1, 0, 0, 10);
    const auto e1 = epoch_order(1, 0, 1, 10);
    CHECK(batch_indices(1, 0, 0, 4, 10) == std::vector<std::size_t>{e0[0], e0[1], e0[2], e0[3]});
    CHECK(batch_indices(1, 0, 2, 4, 10) == std::vector<std::size_t>{e0[8], e0[9], e1[0], e1[1]});
  }

  TEST_CASE("augmentation") {
    Rng rng(5);
    ImageBatch<float> b(Shape{2, 1, 4, 4});
    for (Eigen::Index i = 0; i < b.size(); ++i) b.array()[i] = static_cast<float>(i);
    const auto f = hflip(b, {true, false});
    CHECK(f(0, 0, 1, 0) == b(0, 0, 1, 3));
    CHECK(f(1, 0, 1, 0) == b(1, 0, 1, 0));
    const auto c = crop(b, 2, {{1, 2}, {0, 0}});
    CHECK(c.shape() == Shape{2, 1, 2, 2});
    CHECK(c(0, 0, 0, 0) == b(0, 0, 1, 2));
    CHECK_THROWS_AS(crop(b, 5, {{0, 0}, {0, 0}}), ConfigError);
    CHECK_THROWS_AS(crop(b, 2, {{3, 0}, {0, 0}}), RangeError);
    Rng r1(7), r2(7);
    const AugmentFlags flags{true, 3};
    CHECK(augment(b, flags, r1).array().isApprox(augment(b, flags, r2).array(), 0.0f));
    Rng r3(8);
    CHECK(augment(b, {}, r3).array().isApprox(b.array(), 0.0f));
  }

  TEST_CASE("dataset export, manifest and folder loading") {
    const fs::path dir = scratch_dir("export");
    const auto d = synth_generate(small_spec());
    write_dataset(d, dir);
    CHECK(verify_manifest(dir).empty());
    {
      std::ofstream(dir / "x" / "train" / "0003.png", std::ios::binary | std::ios::app) << "x";
    }
    const auto bad = verify_manifest(dir);
    REQUIRE(bad.size() == 1);
    CHECK(bad[0] == "x/train/0003.png");

    std::ofstream(dir / "x" / "test" / "zz_broken.png") << "not a png";
    CHECK_THROWS_AS(load_folder(dir / "x" / "test", 16, true), IoError);
    const auto loaded = load_folder(dir / "x" / "test", 16, false);
    CHECK(loaded.warnings.size() == 1);
    REQUIRE(loaded.dataset->size() == 2);
    CHECK(loaded.dataset->get(1).array().isApprox(d.x.test[1].array(), 1e-2f));
    CHECK(load_batch(*loaded.dataset, {0, 1}).shape() == Shape{2, 3, 16, 16});
    fs::remove_all(dir);
  }
}
