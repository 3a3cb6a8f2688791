// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fad/trainer.hpp"
#include "fd_check.hpp"

using namespace fad;

namespace {

DatasetSpec tiny_data_spec() {
    DatasetSpec spec;
    spec.num_classes = 3;
    spec.samples_per_class = 8;
    spec.image_size = 8;
    spec.seed = 19;
    return spec;
}

TrainConfig tiny_train_config(TrainMode mode) {
    TrainConfig cfg;
    cfg.unet.image_size = 8;
    cfg.unet.base_channels = 8;
    cfg.unet.channel_multipliers = {1, 2};
    cfg.unet.num_classes = 3;
    cfg.unet.time_embed_dim = 16;
    cfg.T = 10;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.learning_rate = 1e-3;
    cfg.mode = mode;
    cfg.master_seed = 77;
    return cfg;
}

ExpertConfig tiny_expert_config() {
    ExpertConfig cfg;
    cfg.conv_channels = {4, 8};
    cfg.num_classes = 3;
    cfg.image_size = 8;
    return cfg;
}

Expert<float> make_expert() {
    Expert<float> expert(tiny_expert_config());
    RngStream rng(5);
    expert.init_params(rng);
    return expert;
}

template <typename S>
StepInputs<S> make_inputs(uint64_t seed) {
    StepInputs<S> in;
    in.x0 = Tensor<S>({2, 1, 8, 8});
    in.eps = Tensor<S>({2, 1, 8, 8});
    RngStream rng(seed);
    rng.fill_gaussian(in.x0);
    rng.fill_gaussian(in.eps);
    in.labels = {0, 2};
    in.t = {3, 7};
    return in;
}

}  // namespace

TEST_CASE("baseline mode reports zero alignment and l_total = w1 * l_noise") {
    TrainConfig cfg = tiny_train_config(TrainMode::baseline);
    cfg.w1 = 0.7;
    UNet<float> unet(cfg.unet);
    RngStream rng(1);
    unet.init_params(rng);
    const NoiseSchedule s = build_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    const auto in = make_inputs<float>(2);
    const LossBreakdown lb = compute_losses<float>(unet, nullptr, nullptr, s, in,
                                                   TrainMode::baseline,
                                                   AlignTarget::noisy, cfg.w1, 1.0,
                                                   /*with_grads=*/false);
    CHECK(lb.l_align == 0.0);
    CHECK(lb.l_total == cfg.w1 * lb.l_noise);
}

TEST_CASE("clean vs noisy targets share l_noise but differ in l_align") {
    TrainConfig cfg = tiny_train_config(TrainMode::aligned);
    UNet<float> unet(cfg.unet);
    RngStream rng(3);
    unet.init_params(rng);
    Expert<float> expert = make_expert();
    AlignmentHead<float> head(expert.config().feature_dim(),
                              cfg.unet.bottleneck_channels());
    RngStream hrng(4);
    head.init_params(hrng);
    const NoiseSchedule s = build_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    const auto in = make_inputs<float>(6);

    const LossBreakdown noisy =
        compute_losses(unet, &expert, &head, s, in, TrainMode::aligned,
                       AlignTarget::noisy, 1.0, 1.0, false);
    const LossBreakdown clean =
        compute_losses(unet, &expert, &head, s, in, TrainMode::aligned,
                       AlignTarget::clean, 1.0, 1.0, false);
    CHECK(noisy.l_noise == clean.l_noise);
    CHECK(noisy.l_align != clean.l_align);
}

TEST_CASE("training is bit-deterministic given the master seed") {
    const Dataset ds = synth_dataset(tiny_data_spec());
    const TrainConfig cfg = tiny_train_config(TrainMode::baseline);
    const TrainingArtifacts a = train_diffusion(ds, cfg, nullptr);
    const TrainingArtifacts b = train_diffusion(ds, cfg, nullptr);
    CHECK(a.checkpoint.to_bytes() == b.checkpoint.to_bytes());
    REQUIRE(a.curve.size() == b.curve.size());
    for (size_t i = 0; i < a.curve.size(); ++i)
        CHECK(a.curve[i].loss.l_total == b.curve[i].loss.l_total);
}

TEST_CASE("baseline and aligned runs draw identical timestep sequences") {
    const Dataset ds = synth_dataset(tiny_data_spec());
    Expert<float> expert = make_expert();
    const TrainingArtifacts base =
        train_diffusion(ds, tiny_train_config(TrainMode::baseline), nullptr);
    const TrainingArtifacts aligned =
        train_diffusion(ds, tiny_train_config(TrainMode::aligned), &expert);
    CHECK(base.timestep_trace == aligned.timestep_trace);
    // identical first-step noise loss: same params, same (t, eps) draws
    CHECK(base.curve.front().loss.l_noise == aligned.curve.front().loss.l_noise);
}

TEST_CASE("aligned run with w2 = 0 reproduces the baseline U-Net bit-for-bit") {
    const Dataset ds = synth_dataset(tiny_data_spec());
    Expert<float> expert = make_expert();
    TrainConfig aligned_cfg = tiny_train_config(TrainMode::aligned);
    aligned_cfg.w2 = 0.0;
    const TrainingArtifacts base =
        train_diffusion(ds, tiny_train_config(TrainMode::baseline), nullptr);
    const TrainingArtifacts aligned = train_diffusion(ds, aligned_cfg, &expert);

    CHECK_FALSE(base.checkpoint.has("align.w_p"));
    const TensorRecord* wp = aligned.checkpoint.find("align.w_p");
    REQUIRE(wp != nullptr);
    CHECK(wp->value.shape() ==
          std::vector<int>{expert.config().feature_dim(),
                           aligned_cfg.unet.bottleneck_channels()});

    for (const TensorRecord& rec : base.checkpoint.tensors) {
        const TensorRecord* other = aligned.checkpoint.find(rec.name);
        REQUIRE(other != nullptr);
        REQUIRE(other->value.same_shape(rec.value));
        for (size_t i = 0; i < rec.value.numel(); ++i)
            REQUIRE(other->value[i] == rec.value[i]);
    }
}

TEST_CASE("expert parameters are untouched by diffusion training") {
    const Dataset ds = synth_dataset(tiny_data_spec());
    Expert<float> expert = make_expert();
    const uint64_t before = params_fingerprint(expert.params());
    train_diffusion(ds, tiny_train_config(TrainMode::aligned), &expert);
    CHECK(params_fingerprint(expert.params()) == before);
}

TEST_CASE("aligned mode requires an expert") {
    const Dataset ds = synth_dataset(tiny_data_spec());
    CHECK_THROWS_WITH_AS(train_diffusion(ds, tiny_train_config(TrainMode::aligned), nullptr),
                         doctest::Contains("expert"), std::invalid_argument);
}

TEST_CASE("class-count mismatch is a config inconsistency") {
    const Dataset ds = synth_dataset(tiny_data_spec());
    TrainConfig cfg = tiny_train_config(TrainMode::baseline);
    cfg.unet.num_classes = 5;
    CHECK_THROWS_WITH_AS(train_diffusion(ds, cfg, nullptr), doctest::Contains("classes"),
                         std::invalid_argument);
}

TEST_CASE("non-finite loss aborts with the step index") {
    Dataset ds = synth_dataset(tiny_data_spec());
    ds.train[0].pixels[0] = std::numeric_limits<float>::quiet_NaN();
    const TrainConfig cfg = tiny_train_config(TrainMode::baseline);
    CHECK_THROWS_WITH_AS(train_diffusion(ds, cfg, nullptr),
                         doctest::Contains("step"), std::runtime_error);
}

TEST_CASE("loss curve length and csv shape") {
    const Dataset ds = synth_dataset(tiny_data_spec());
    const TrainConfig cfg = tiny_train_config(TrainMode::baseline);
    const TrainingArtifacts art = train_diffusion(ds, cfg, nullptr);
    // 3 classes x 8 samples -> 21 train images (val split takes 1 per 10,
    // rounded to at least one, leaving 7 per class); batches of 4 -> 6 steps
    // per epoch, 2 epochs.
    const size_t steps_per_epoch =
        (ds.train.size() + cfg.batch_size - 1) / static_cast<size_t>(cfg.batch_size);
    CHECK(art.curve.size() == steps_per_epoch * static_cast<size_t>(cfg.epochs));
    const std::string csv = loss_curve_csv(art.curve);
    CHECK(csv.starts_with("step,epoch,l_noise,l_align,l_total\n"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + art.curve.size());
}

TEST_CASE("checkpoint carries schedule and config for bit-exact reload") {
    const Dataset ds = synth_dataset(tiny_data_spec());
    const TrainConfig cfg = tiny_train_config(TrainMode::baseline);
    const TrainingArtifacts art = train_diffusion(ds, cfg, nullptr);
    const LoadedUNet loaded = unet_from_checkpoint(art.checkpoint);
    CHECK(loaded.config.num_classes == 3);
    CHECK(loaded.schedule.T == cfg.T);
    CHECK(loaded.class_names == ds.class_names);
    // loaded parameters match the stored tensors exactly
    auto params = loaded.unet->params();
    for (auto& p : params) {
        const TensorRecord* rec = art.checkpoint.find(p.name);
        REQUIRE(rec != nullptr);
        for (size_t i = 0; i < rec->value.numel(); ++i)
            REQUIRE((*p.value)[i] == rec->value[i]);
    }
}

TEST_CASE("combined gradient distributes linearly over the two terms") {
    TrainConfig cfg = tiny_train_config(TrainMode::aligned);
    const NoiseSchedule s = build_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    const auto in = make_inputs<double>(21);

    Expert<double> expert(tiny_expert_config());
    RngStream erng(5);
    expert.init_params(erng);

    const double w1 = 0.7, w2 = 1.3;
    auto run = [&](double a, double b, std::vector<double>& flat) {
        UNet<double> unet(cfg.unet);
        RngStream rng(9);
        unet.init_params(rng);
        AlignmentHead<double> head(expert.config().feature_dim(),
                                   cfg.unet.bottleneck_channels());
        RngStream hrng(10);
        head.init_params(hrng);
        unet.zero_grad();
        head.g_w_p.zero();
        compute_losses(unet, &expert, &head, s, in, TrainMode::aligned,
                       AlignTarget::noisy, a, b, true);
        flat.clear();
        for (auto& p : unet.params())
            for (size_t i = 0; i < p.grad->numel(); ++i) flat.push_back((*p.grad)[i]);
        for (size_t i = 0; i < head.g_w_p.numel(); ++i) flat.push_back(head.g_w_p[i]);
    };

    std::vector<double> g_both, g_noise, g_align;
    run(w1, w2, g_both);
    run(1.0, 0.0, g_noise);
    run(0.0, 1.0, g_align);
    REQUIRE(g_both.size() == g_noise.size());
    REQUIRE(g_both.size() == g_align.size());
    for (size_t i = 0; i < g_both.size(); i += 17) {
        const double want = w1 * g_noise[i] + w2 * g_align[i];
        CHECK(std::abs(g_both[i] - want) <=
              1e-6 * std::max(1.0, std::abs(want)));
    }
}
