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

#include <thread>

#include "monopix/checkpoint.hpp"
#include "monopix/service.hpp"
#include "monopix/training.hpp"
#include "test_util.hpp"

// after Eigen, see src/server.cpp
#include <httplib.h>

using namespace monopix;
namespace fs = std::filesystem;

namespace {

Bytes sample_png(std::uint64_t seed, int size = 16) {
  Rng rng(seed);
  ImageBatch<float> im(Shape{1, 3, size, size});
  for (Eigen::Index i = 0; i < im.size(); ++i) im.array()[i] = from_level(static_cast<std::uint8_t>(uniform_int(rng, 0, 255)));
  return image_to_png(im);
}

std::shared_ptr<const GeneratorTranslator> small_generator() {
  GeneratorSpec spec;
  spec.base_channels = 4;
  spec.depth = 2;
  spec.init = InitScheme::kaiming_normal;
  return std::make_shared<const GeneratorTranslator>(build_generator<float>(spec, 5), nlohmann::json{{"kind", "test"}});
}

std::unique_ptr<ModelRegistry> make_registry() {
  auto r = std::make_unique<ModelRegistry>();
  r->put({"identity", std::make_shared<const IdentityTranslator>(), nullptr});
  r->put({"gen", small_generator(), nullptr});
  return r;
}

nlohmann::json call(const ModelRegistry& reg, const std::string& method, const std::string& path,
                    const nlohmann::json& body, int expect_status, const ServiceOptions& opts = {}) {
  const HttpReply r = handle_request(reg, opts, method, path, body.is_null() ? "" : body.dump());
  CHECK(r.status == expect_status);
  CHECK(r.content_type == "application/json");
  return nlohmann::json::parse(r.body);
}

std::string error_code(const nlohmann::json& j) { return j.at("error").at("code").get<std::string>(); }

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("identity stub round trips the image bit-exactly") {
    const auto owned = make_registry();
    const ModelRegistry& reg = *owned;
    const Bytes png = sample_png(1);
    const auto j = call(reg, "POST", "/v1/translate",
                        {{"model", "identity"}, {"image", base64_encode(png)}, {"control", {{"kind", "constant"}, {"v", 0.5}}}},
                        200);
    CHECK(base64_decode(j.at("image").get<std::string>()) == image_to_png(png_to_image(png)));
    CHECK(png_to_image(base64_decode(j.at("image").get<std::string>())).array().isApprox(png_to_image(png).array(), 0.0f));
    CHECK(j.at("bounds").at("hi") == 1.0);
    CHECK(j.at("elapsed_ms").get<double>() >= 0.0);
  }

  TEST_CASE("translate matches the shared inference path byte for byte") {
    const auto owned = make_registry();
    const ModelRegistry& reg = *owned;
    const Bytes png = sample_png(2);
    const auto gen = small_generator();
    for (double c : {0.0, 0.3, 1.0}) {
      const auto j = call(reg, "POST", "/v1/translate",
                          {{"model", "gen"}, {"image", base64_encode(png)}, {"control", {{"kind", "constant"}, {"v", c}}}},
                          200);
      CHECK(base64_decode(j.at("image").get<std::string>()) ==
            translate_png(*gen, png, ControlSpec::from_recipe(ControlRecipe::constant(c)), false));
    }
    // a grayscale control PNG maps 0 and 255 onto the bound ends
    RasterImage ctrl{16, 16, 1, 8, std::vector<std::uint16_t>(256, 255)};
    const Bytes ctrl_png = encode_png(ctrl);
    const auto j = call(reg, "POST", "/v1/translate",
                        {{"model", "gen"}, {"image", base64_encode(png)}, {"control_png", base64_encode(ctrl_png)}}, 200);
    CHECK(base64_decode(j.at("image").get<std::string>()) ==
          translate_png(*gen, png, ControlSpec::from_recipe(ControlRecipe::constant(1.0)), false));
  }

  TEST_CASE("error statuses") {
    const auto owned = make_registry();
    const ModelRegistry& reg = *owned;
    const std::string img = base64_encode(sample_png(3));
    const nlohmann::json half{{"kind", "constant"}, {"v", 0.5}};
    CHECK(error_code(call(reg, "GET", "/v1/nothing", nullptr, 404)) == "not_found");
    CHECK(error_code(call(reg, "GET", "/v1/translate", nullptr, 405)) == "method_not_allowed");
    CHECK(error_code(call(reg, "POST", "/v1/health", nlohmann::json::object(), 405)) == "method_not_allowed");
    CHECK(call(reg, "POST", "/v1/translate", {{"model", "nope"}, {"image", img}, {"control", half}}, 404)
              .at("error")
              .at("status") == 404);
    CHECK(handle_request(reg, {}, "POST", "/v1/translate", "{oops").status == 400);
    CHECK(error_code(call(reg, "POST", "/v1/translate", {{"model", "gen"}, {"image", "***"}, {"control", half}}, 400)) ==
          "bad_request");
    call(reg, "POST", "/v1/translate", {{"model", "gen"}, {"image", img}}, 400);
    call(reg, "POST", "/v1/translate", {{"model", "gen"}, {"image", img}, {"control", half}, {"colour", 1}}, 400);
    CHECK(error_code(call(reg, "POST", "/v1/translate",
                          {{"model", "gen"}, {"image", img}, {"control", {{"kind", "constant"}, {"v", 1.5}}}}, 422)) ==
          "out_of_bounds");
    call(reg, "POST", "/v1/translate",
         {{"model", "gen"}, {"image", img}, {"control", {{"kind", "constant"}, {"v", 1.5}}}, {"oob_allowed", true}}, 200);
    CHECK(error_code(call(reg, "POST", "/v1/search",
                          {{"model", "gen"}, {"image", img}, {"reference", img}, {"bounds", {{"lo", -1.0}, {"hi", 2.0}}}},
                          422)) == "out_of_bounds");
    CHECK(error_code(call(reg, "POST", "/v1/search",
                          {{"model", "gen"}, {"image", img}, {"strategy", {{"kind", "expert"}}}}, 422)) == "unsupported");
    ServiceOptions tiny;
    tiny.max_payload_bytes = 64;
    CHECK(error_code(call(reg, "POST", "/v1/translate", {{"model", "gen"}, {"image", img}, {"control", half}}, 413, tiny)) ==
          "payload_too_large");
    // an 18x18 image does not fit the generator's size multiple of 4
    CHECK(error_code(call(reg, "POST", "/v1/translate",
                          {{"model", "gen"}, {"image", base64_encode(sample_png(4, 18))}, {"control", half}}, 400)) ==
          "shape_mismatch");
  }

  TEST_CASE("search and trajectory") {
    const auto owned = make_registry();
    const ModelRegistry& reg = *owned;
    const Bytes png = sample_png(5);
    const auto gen = small_generator();
    const Bytes ref = translate_png(*gen, png, ControlSpec::from_recipe(ControlRecipe::constant(0.7)), false);
    const auto t = call(reg, "POST", "/v1/search",
                        {{"model", "gen"}, {"image", base64_encode(png)}, {"reference", base64_encode(ref)},
                         {"strategy", {{"kind", "ternary"}, {"n", 7}}}},
                        200);
    CHECK(t.at("result").at("iterations").size() == 7);
    CHECK(t.at("result").at("evaluations") == 14);
    const auto e = call(reg, "POST", "/v1/search",
                        {{"model", "gen"}, {"image", base64_encode(png)}, {"reference", base64_encode(ref)},
                         {"strategy", {{"kind", "exhaustive"}, {"n", 11}}}},
                        200);
    CHECK(e.at("result").at("c_star").get<double>() == doctest::Approx(0.7));
    CHECK(base64_decode(e.at("image").get<std::string>()) == ref);

    const auto tr = call(reg, "POST", "/v1/trajectory", {{"model", "gen"}, {"image", base64_encode(png)}}, 200);
    CHECK(tr.at("images").size() == 11);
    CHECK(tr.at("intensities").size() == 11);
    CHECK(base64_decode(tr.at("images")[7].get<std::string>()) == ref);
    call(reg, "POST", "/v1/trajectory", {{"model", "gen"}, {"image", base64_encode(png)}, {"count", 1000}}, 400);
  }

  TEST_CASE("models listing and checkpoint directory") {
    const fs::path dir = fs::temp_directory_path() / "monopix_test_models";
    fs::remove_all(dir);
    fs::create_directories(dir);
    TrainSetup setup;
    setup.generator.base_channels = 2;
    setup.generator.depth = 2;
    setup.discriminator.base_channels = 2;
    save_checkpoint(init_train_state(setup), setup, dir / "toy.ckpt");
    ModelRegistry reg;
    CHECK(reg.load_directory(dir) == 2);
    REQUIRE(reg.find("toy") != nullptr);
    REQUIRE(reg.find("toy.yx") != nullptr);
    const auto j = call(reg, "GET", "/v1/models", nullptr, 200);
    CHECK(j.at("models").size() == 2);
    CHECK(call(reg, "GET", "/v1/health", nullptr, 200).at("status") == "ok");
    fs::remove_all(dir);
  }

  TEST_CASE("http server round trip") {
    const auto owned = make_registry();
    const ModelRegistry& reg = *owned;
    HttpServer server(reg, {});
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread worker([&] { server.run(); });
    for (int i = 0; i < 200 && !server.running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));

    httplib::Client client("127.0.0.1", port);
    const auto health = client.Get("/v1/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    const auto missing = client.Get("/v1/unknown");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(nlohmann::json::parse(missing->body).at("error").at("code") == "not_found");

    const Bytes png = sample_png(6);
    const nlohmann::json body{
        {"model", "gen"}, {"image", base64_encode(png)}, {"control", {{"kind", "horizontal_ramp"}, {"v0", 0}, {"v1", 1}}}};
    const auto res = client.Post("/v1/translate", body.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(base64_decode(nlohmann::json::parse(res->body).at("image").get<std::string>()) ==
          translate_png(*small_generator(), png, ControlSpec::from_recipe(ControlRecipe::horizontal_ramp(0, 1)), false));
    server.stop();
    worker.join();
  }
}
