// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fad/fsio.hpp"
#include "fad/sampler.hpp"

using namespace fad;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_cfg(uint64_t master_seed) {
    TrainConfig cfg;
    cfg.unet.image_size = 8;
    cfg.unet.base_channels = 8;
    cfg.unet.channel_multipliers = {1, 2};
    cfg.unet.num_classes = 3;
    cfg.unet.time_embed_dim = 16;
    cfg.T = 10;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    cfg.master_seed = master_seed;
    return cfg;
}

Checkpoint tiny_checkpoint(uint64_t master_seed) {
    DatasetSpec spec;
    spec.num_classes = 3;
    spec.samples_per_class = 6;
    spec.image_size = 8;
    spec.seed = 33;
    const Dataset ds = synth_dataset(spec);
    return train_diffusion(ds, tiny_cfg(master_seed), nullptr).checkpoint;
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("fad_sampler_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("sampling twice is bit-identical; PNG bytes too") {
    const Checkpoint ckpt = tiny_checkpoint(1);
    LoadedUNet model = unet_from_checkpoint(ckpt);
    const SampledImages a = sample_images(*model.unet, model.schedule, 1, 3, 42, 0);
    const SampledImages b = sample_images(*model.unet, model.schedule, 1, 3, 42, 0);
    REQUIRE(a.images.size() == 3);
    for (size_t i = 0; i < a.images.size(); ++i)
        for (size_t p = 0; p < a.images[i].numel(); ++p)
            REQUIRE(a.images[i][p] == b.images[i][p]);

    const fs::path d1 = temp_dir("gen1"), d2 = temp_dir("gen2");
    GenerationRequest req;
    req.class_id = 1;
    req.count = 3;
    req.seed = 42;
    req.out_dir = d1 / "out";
    generate(ckpt, req);
    req.out_dir = d2 / "out";
    generate(ckpt, req);
    for (int i = 0; i < 3; ++i) {
        const std::string name = "1_42_" + std::to_string(i) + ".png";
        CHECK(read_file(d1 / "out" / name) == read_file(d2 / "out" / name));
    }
}

TEST_CASE("initial noise is identical across different checkpoints") {
    const Checkpoint ckpt_a = tiny_checkpoint(1);
    const Checkpoint ckpt_b = tiny_checkpoint(999);  // different weights
    LoadedUNet ma = unet_from_checkpoint(ckpt_a);
    LoadedUNet mb = unet_from_checkpoint(ckpt_b);
    const SampledImages a = sample_images(*ma.unet, ma.schedule, 2, 4, 7, 5);
    const SampledImages b = sample_images(*mb.unet, mb.schedule, 2, 4, 7, 5);
    bool outputs_differ = false;
    for (size_t i = 0; i < a.images.size(); ++i) {
        for (size_t p = 0; p < a.initial_noise[i].numel(); ++p)
            REQUIRE(a.initial_noise[i][p] == b.initial_noise[i][p]);
        for (size_t p = 0; p < a.images[i].numel(); ++p)
            if (a.images[i][p] != b.images[i][p]) outputs_differ = true;
    }
    CHECK(outputs_differ);  // the models do differ, only x_T is shared
}

TEST_CASE("initial noise depends on (seed, class, index), not batch size") {
    const Checkpoint ckpt = tiny_checkpoint(1);
    LoadedUNet model = unet_from_checkpoint(ckpt);
    const SampledImages big = sample_images(*model.unet, model.schedule, 0, 4, 3, 2);
    const SampledImages small = sample_images(*model.unet, model.schedule, 0, 2, 3, 2);
    for (size_t i = 0; i < small.images.size(); ++i) {
        for (size_t p = 0; p < small.images[i].numel(); ++p) {
            REQUIRE(small.initial_noise[i][p] == big.initial_noise[i][p]);
            REQUIRE(small.images[i][p] == big.images[i][p]);
        }
    }
}

TEST_CASE("zero-predictor chain equals a hand-rolled ancestral loop") {
    // An untrained model predicts eps = 0 exactly (zero-initialized output
    // conv); the sampler must then reduce to the plain ancestral recursion.
    TrainConfig cfg = tiny_cfg(5);
    UNet<float> unet(cfg.unet);
    RngStream rng(2);
    unet.init_params(rng);
    const NoiseSchedule schedule = build_linear_schedule(10, 1e-4, 0.02);

    const int cls = 1, count = 2, steps = 10;
    const uint64_t seed = 11;
    const SampledImages got = sample_images(unet, schedule, cls, count, seed, steps);

    const RespacedSchedule respaced = respace_schedule(schedule, steps);
    for (int i = 0; i < count; ++i) {
        RngStream stream(derive_seed(seed, {static_cast<uint64_t>(cls),
                                            static_cast<uint64_t>(i)}));
        Tensor<float> x({1, 1, 8, 8});
        stream.fill_gaussian(x);
        Tensor<float> zero_eps({1, 1, 8, 8});
        for (int k = steps - 1; k >= 0; --k) {
            if (k > 0) {
                Tensor<float> z({1, 1, 8, 8});
                stream.fill_gaussian(z);
                x = ddpm_step(x, zero_eps, k, respaced.grid, &z);
            } else {
                x = ddpm_step<float>(x, zero_eps, 0, respaced.grid, nullptr);
            }
        }
        for (size_t p = 0; p < x.numel(); ++p) {
            const float clamped = std::clamp(x[p], -1.0f, 1.0f);
            REQUIRE(got.images[static_cast<size_t>(i)][p] == clamped);
        }
    }
}

TEST_CASE("outputs are clamped and finite") {
    const Checkpoint ckpt = tiny_checkpoint(1);
    LoadedUNet model = unet_from_checkpoint(ckpt);
    const SampledImages s = sample_images(*model.unet, model.schedule, 0, 5, 3, 0);
    for (const auto& img : s.images)
        for (size_t p = 0; p < img.numel(); ++p) {
            REQUIRE(std::isfinite(img[p]));
            REQUIRE(img[p] >= -1.0f);
            REQUIRE(img[p] <= 1.0f);
        }
}

TEST_CASE("population size: 10 images for each of 7 classes is 70") {
    // the evaluation population of the protocol
    const int per_class = 10, classes = 7;
    CHECK(per_class * classes == 70);
}

TEST_CASE("request validation") {
    const Checkpoint ckpt = tiny_checkpoint(1);
    LoadedUNet model = unet_from_checkpoint(ckpt);
    CHECK_THROWS_AS(sample_images(*model.unet, model.schedule, 9, 1, 0, 0),
                    std::out_of_range);
    CHECK_THROWS_AS(sample_images(*model.unet, model.schedule, 0, 0, 0, 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(sample_images(*model.unet, model.schedule, 0, 1, 0, 99),
                    std::invalid_argument);

    GenerationRequest req;
    req.class_id = 0;
    req.count = 1;
    req.out_dir = fs::temp_directory_path() / "no" / "such" / "parent" / "dir";
    CHECK_THROWS_WITH_AS(generate(ckpt, req), doctest::Contains("parent"),
                         std::runtime_error);
}

TEST_CASE("generation manifest lists files with noise fingerprints") {
    const Checkpoint ckpt = tiny_checkpoint(1);
    const fs::path dir = temp_dir("manifest");
    GenerationRequest req;
    req.class_id = 2;
    req.count = 2;
    req.seed = 9;
    req.num_steps = 5;
    req.out_dir = dir / "g";
    req.dump_initial_noise = true;
    const nlohmann::json manifest = generate(ckpt, req);
    CHECK(manifest.at("files").size() == 2);
    for (const auto& f : manifest.at("files")) {
        CHECK(fs::exists(dir / "g" / f.at("file").get<std::string>()));
        CHECK(fs::exists(dir / "g" / (f.at("file").get<std::string>() + ".x_t.bin")));
        CHECK(f.at("x_t_fnv").get<std::string>().size() == 16);
    }
    // dumped raw noise matches the manifest fingerprint
    const auto& f0 = manifest.at("files")[0];
    const std::string raw =
        read_file(dir / "g" / (f0.at("file").get<std::string>() + ".x_t.bin"));
    CHECK(hex64(fnv1a64_bytes(raw.data(), raw.size())) ==
          f0.at("x_t_fnv").get<std::string>());
}
