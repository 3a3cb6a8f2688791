// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fad/config.hpp"

using namespace fad;
using nlohmann::json;

TEST_CASE("defaults survive an empty config") {
    const RunConfig c = RunConfig::from_json(json::object());
    CHECK(c.T == 200);
    CHECK(c.beta_start == 1e-4);
    CHECK(c.beta_end == 0.02);
    CHECK(c.base_channels == 32);
    CHECK(c.channel_multipliers == std::vector<int>{1, 2, 4});
    CHECK(c.diffusion_epochs == 20);
    CHECK(c.diffusion_batch_size == 64);
    CHECK(c.diffusion_learning_rate == 1e-4);
    CHECK(c.mode == TrainMode::baseline);
    CHECK(c.w1 == 1.0);
    CHECK(c.w2 == 1.0);
    CHECK(c.align_target == AlignTarget::noisy);
    CHECK(c.data.num_classes == 8);
    CHECK(c.data.image_size == 32);
    CHECK(c.eval_seeds == 15);
    CHECK(c.eval_sample_per_class == 10);
    CHECK(c.expert_arch.conv_channels == std::vector<int>{16, 32, 64});
}

TEST_CASE("parse -> serialize -> parse is the identity") {
    json j = {{"data", {{"num_classes", 6}, {"samples_per_class", 50}, {"seed", 9}}},
              {"diffusion", {{"T", 100}, {"mode", "aligned"}, {"base_channels", 16}}},
              {"loss", {{"w1", 0.5}, {"w2", 2.0}}},
              {"align", {{"target", "clean"}}}};
    const RunConfig a = RunConfig::from_json(j);
    const RunConfig b = RunConfig::from_json(a.to_json());
    CHECK(a.to_json() == b.to_json());
    CHECK(b.mode == TrainMode::aligned);
    CHECK(b.align_target == AlignTarget::clean);
    CHECK(b.w2 == 2.0);
    CHECK(b.data.num_classes == 6);
}

TEST_CASE("unknown keys are rejected by name") {
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"bogus", json::object()}}),
                         doctest::Contains("bogus"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"diffusion", {{"lr", 0.1}}}}),
                         doctest::Contains("diffusion.lr"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"data", {{"classes", 3}}}}),
                         doctest::Contains("data.classes"), std::invalid_argument);
}

TEST_CASE("invalid values are rejected") {
    CHECK_THROWS_AS(RunConfig::from_json({{"diffusion", {{"T", 0}}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(RunConfig::from_json({{"diffusion", {{"beta_start", 0.5},
                                                         {"beta_end", 0.1}}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(RunConfig::from_json({{"loss", {{"w1", -1.0}}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(RunConfig::from_json({{"diffusion", {{"mode", "other"}}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(RunConfig::from_json({{"align", {{"target", "fuzzy"}}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(RunConfig::from_json({{"data", {{"samples_per_class", 1}}}}),
                    std::invalid_argument);
}

TEST_CASE("derived model configs") {
    json j = {{"data", {{"num_classes", 5}, {"image_size", 16}}},
              {"diffusion", {{"base_channels", 8}, {"channel_multipliers", {1, 2}}}}};
    const RunConfig c = RunConfig::from_json(j);
    const UNetConfig u = c.unet_config();
    CHECK(u.num_classes == 5);
    CHECK(u.image_size == 16);
    CHECK(u.bottleneck_channels() == 16);
    CHECK(u.bottleneck_size() == 8);
    const ExpertConfig e = c.expert_config();
    CHECK(e.num_classes == 5);
    CHECK(e.image_size == 16);
    CHECK(e.feature_dim() == 64);
}
