// SPDX-License-Identifier: Apache-2.0

#include "fad/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "fad/fsio.hpp"
#include "fad/optimizer.hpp"

namespace fad {

TrainConfig TrainConfig::from_run_config(const RunConfig& rc, uint64_t master_seed) {
    TrainConfig c;
    c.unet = rc.unet_config();
    c.T = rc.T;
    c.beta_start = rc.beta_start;
    c.beta_end = rc.beta_end;
    c.epochs = rc.diffusion_epochs;
    c.batch_size = rc.diffusion_batch_size;
    c.learning_rate = rc.diffusion_learning_rate;
    c.mode = rc.mode;
    c.align_target = rc.align_target;
    c.w1 = rc.w1;
    c.w2 = rc.w2;
    c.master_seed = master_seed;
    return c;
}

nlohmann::json TrainConfig::to_json() const {
    return {{"T", T},
            {"beta_start", beta_start},
            {"beta_end", beta_end},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"mode", to_string(mode)},
            {"align_target", to_string(align_target)},
            {"w1", w1},
            {"w2", w2},
            {"master_seed", master_seed}};
}

namespace {

template <typename S>
Tensor<S> slice_sample(const Tensor<S>& batch, int bi) {
    Tensor<S> out({1, batch.dim(1), batch.dim(2), batch.dim(3)});
    const size_t n = out.numel();
    std::copy(batch.data() + static_cast<size_t>(bi) * n,
              batch.data() + static_cast<size_t>(bi + 1) * n, out.data());
    return out;
}

template <typename S>
void place_sample(Tensor<S>& batch, int bi, const Tensor<S>& sample) {
    const size_t n = sample.numel();
    std::copy(sample.data(), sample.data() + n,
              batch.data() + static_cast<size_t>(bi) * n);
}

}  // namespace

template <typename S>
LossBreakdown compute_losses(UNet<S>& unet, const Expert<S>* expert,
                             AlignmentHead<S>* head, const NoiseSchedule& schedule,
                             const StepInputs<S>& in, TrainMode mode,
                             AlignTarget target, double w1, double w2,
                             bool with_grads) {
    const int batch = in.x0.dim(0);
    const bool aligned = mode == TrainMode::aligned;
    if (aligned && (!expert || !head))
        throw std::invalid_argument("training: aligned mode requires expert and head");

    Tensor<S> x_t(in.x0.shape());
    for (int bi = 0; bi < batch; ++bi) {
        NoisySample<S> ns = add_noise(slice_sample(in.x0, bi), slice_sample(in.eps, bi),
                                      in.t[static_cast<size_t>(bi)], schedule);
        place_sample(x_t, bi, ns.x_t);
    }

    UNetCache<S> cache;
    UNetOutput<S> out = unet.forward(x_t, in.t, in.labels, cache);

    LossBreakdown lb;
    Tensor<S> d_eps;
    if (with_grads) d_eps = Tensor<S>(out.eps_pred.shape());
    lb.l_noise = noise_loss(in.eps, out.eps_pred, with_grads ? &d_eps : nullptr, w1);

    Tensor<S> d_bottleneck;
    bool has_bottleneck_grad = false;
    if (aligned) {
        const Tensor<S>& expert_input = target == AlignTarget::noisy ? x_t : in.x0;
        ExpertOutput<S> eo = expert->forward(expert_input);  // frozen, no gradients
        Tensor<S> bn_pooled = pool_bottleneck(out.bottleneck);
        if (with_grads && w2 != 0.0) {
            Tensor<S> d_bn_pooled(bn_pooled.shape());
            lb.l_align = alignment_loss(eo.pooled, bn_pooled, head->w_p, &d_bn_pooled,
                                        &head->g_w_p, w2);
            d_bottleneck =
                nn::global_avg_pool_backward(out.bottleneck.shape(), d_bn_pooled);
            has_bottleneck_grad = true;
        } else {
            lb.l_align = alignment_loss(eo.pooled, bn_pooled, head->w_p);
        }
    }

    lb.l_total = combined_loss(lb.l_noise, lb.l_align, w1, w2);
    if (with_grads)
        unet.backward(d_eps, has_bottleneck_grad ? &d_bottleneck : nullptr, cache);
    return lb;
}

TrainingArtifacts train_diffusion(const Dataset& dataset, const TrainConfig& cfg,
                                  const Expert<float>* expert) {
    if (dataset.num_classes != cfg.unet.num_classes)
        throw std::invalid_argument(
            "train_diffusion: dataset has " + std::to_string(dataset.num_classes) +
            " classes but the model is configured for " +
            std::to_string(cfg.unet.num_classes));
    const bool aligned = cfg.mode == TrainMode::aligned;
    if (aligned && expert == nullptr)
        throw std::invalid_argument(
            "train_diffusion: aligned mode requires an expert checkpoint");
    if (dataset.train.empty())
        throw std::invalid_argument("train_diffusion: empty training split");

    RngStreams streams(cfg.master_seed);
    UNet<float> unet(cfg.unet);
    unet.init_params(streams.init);

    std::optional<AlignmentHead<float>> head;
    if (aligned) {
        head.emplace(expert->config().feature_dim(), cfg.unet.bottleneck_channels());
        head->w1 = cfg.w1;
        head->w2 = cfg.w2;
        head->target_mode = cfg.align_target;
        head->init_params(streams.init);
    }

    const NoiseSchedule schedule = build_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);

    std::vector<ParamRef<float>> params = unet.params();
    if (head)
        for (auto& p : head->params()) params.push_back(p);
    Adam<float> opt(cfg.learning_rate);
    opt.attach(params);

    const uint64_t expert_fingerprint =
        expert ? params_fingerprint(const_cast<Expert<float>*>(expert)->params()) : 0;

    TrainingArtifacts artifacts;
    std::vector<size_t> order(dataset.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    const int h = dataset.image_size;
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        streams.shuffle.shuffle(order);
        for (size_t begin = 0; begin < order.size();
             begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t end =
                std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
            const int b = static_cast<int>(end - begin);

            StepInputs<float> in;
            in.x0 = Tensor<float>({b, 1, h, h});
            for (int bi = 0; bi < b; ++bi) {
                const LabeledImage& img = dataset.train[order[begin + bi]];
                std::copy(img.pixels.data(), img.pixels.data() + img.pixels.numel(),
                          in.x0.data() + static_cast<size_t>(bi) * img.pixels.numel());
                in.labels.push_back(img.label);
            }
            for (int bi = 0; bi < b; ++bi) {
                const int t = static_cast<int>(
                    streams.timestep.next_below(static_cast<uint64_t>(cfg.T)));
                in.t.push_back(t);
                artifacts.timestep_trace.push_back(t);
            }
            in.eps = Tensor<float>(in.x0.shape());
            streams.noise.fill_gaussian(in.eps);

            unet.zero_grad();
            if (head) head->g_w_p.zero();
            LossBreakdown lb;
            try {
                lb = compute_losses(unet, aligned ? expert : nullptr,
                                    head ? &*head : nullptr, schedule, in, cfg.mode,
                                    cfg.align_target, cfg.w1, cfg.w2,
                                    /*with_grads=*/true);
            } catch (const std::invalid_argument& e) {
                throw std::runtime_error("train_diffusion: non-finite loss at step " +
                                         std::to_string(step) + " (" + e.what() + ")");
            }
            if (!std::isfinite(lb.l_total))
                throw std::runtime_error("train_diffusion: non-finite loss at step " +
                                         std::to_string(step));
            opt.step(params);
            artifacts.curve.push_back({step, epoch, lb});
            ++step;
        }
    }

    if (expert) {
        const uint64_t after =
            params_fingerprint(const_cast<Expert<float>*>(expert)->params());
        if (after != expert_fingerprint)
            throw std::logic_error("train_diffusion: expert parameters changed");
    }

    artifacts.checkpoint = pack_unet_checkpoint(unet, head ? &*head : nullptr, schedule,
                                                cfg, dataset.class_names);
    return artifacts;
}

std::string loss_curve_csv(const std::vector<StepRecord>& curve) {
    std::string out = "step,epoch,l_noise,l_align,l_total\n";
    char line[160];
    for (const auto& r : curve) {
        std::snprintf(line, sizeof(line), "%d,%d,%.17g,%.17g,%.17g\n", r.step, r.epoch,
                      r.loss.l_noise, r.loss.l_align, r.loss.l_total);
        out += line;
    }
    return out;
}

nlohmann::json unet_config_to_json(const UNetConfig& cfg) {
    return {{"image_size", cfg.image_size},
            {"in_channels", cfg.in_channels},
            {"base_channels", cfg.base_channels},
            {"channel_multipliers", cfg.channel_multipliers},
            {"num_classes", cfg.num_classes},
            {"time_embed_dim", cfg.time_embed_dim}};
}

UNetConfig unet_config_from_json(const nlohmann::json& j) {
    UNetConfig cfg;
    cfg.image_size = j.at("image_size").get<int>();
    cfg.in_channels = j.at("in_channels").get<int>();
    cfg.base_channels = j.at("base_channels").get<int>();
    cfg.channel_multipliers = j.at("channel_multipliers").get<std::vector<int>>();
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.time_embed_dim = j.at("time_embed_dim").get<int>();
    return cfg;
}

Checkpoint pack_unet_checkpoint(UNet<float>& unet, const AlignmentHead<float>* head,
                                const NoiseSchedule& schedule, const TrainConfig& cfg,
                                const std::vector<std::string>& class_names) {
    Checkpoint ckpt;
    ckpt.manifest["model_kind"] = "unet";
    ckpt.manifest["config"] = {{"unet", unet_config_to_json(unet.config())},
                               {"train", cfg.to_json()}};
    ckpt.manifest["class_names"] = class_names;
    ckpt.manifest["schedule"] = schedule_to_json(schedule, cfg.beta_start, cfg.beta_end);
    for (const auto& p : unet.params())
        ckpt.tensors.push_back({p.name, *p.value});
    if (head) ckpt.tensors.push_back({"align.w_p", head->w_p});
    return ckpt;
}

LoadedUNet unet_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.model_kind() != "unet")
        throw std::runtime_error("checkpoint is not a diffusion model (kind '" +
                                 ckpt.model_kind() + "')");
    LoadedUNet out;
    out.config = unet_config_from_json(ckpt.manifest.at("config").at("unet"));
    out.unet = std::make_unique<UNet<float>>(out.config);
    for (auto& p : out.unet->params()) {
        const TensorRecord* rec = ckpt.find(p.name);
        if (!rec)
            throw std::runtime_error("corrupt checkpoint: missing tensor " + p.name);
        if (!rec->value.same_shape(*p.value))
            throw std::runtime_error("corrupt checkpoint: shape mismatch for " + p.name);
        *p.value = rec->value;
    }
    out.schedule = schedule_from_json(ckpt.manifest.at("schedule"));
    if (ckpt.manifest.contains("class_names"))
        out.class_names = ckpt.manifest.at("class_names").get<std::vector<std::string>>();
    return out;
}

Checkpoint pack_expert_checkpoint(Expert<float>& expert, const ExpertConfig& cfg,
                                  const std::vector<std::string>& class_names,
                                  const ExpertMetrics& metrics) {
    Checkpoint ckpt;
    ckpt.manifest["model_kind"] = "expert";
    ckpt.manifest["config"] = {{"conv_channels", cfg.conv_channels},
                               {"in_channels", cfg.in_channels},
                               {"num_classes", cfg.num_classes},
                               {"image_size", cfg.image_size}};
    ckpt.manifest["class_names"] = class_names;
    ckpt.manifest["metrics"] = {{"train_loss", metrics.train_loss},
                                {"val_accuracy", metrics.val_accuracy}};
    for (const auto& p : expert.params())
        ckpt.tensors.push_back({p.name, *p.value});
    return ckpt;
}

LoadedExpert expert_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.model_kind() != "expert")
        throw std::runtime_error("checkpoint is not an expert (kind '" +
                                 ckpt.model_kind() + "')");
    const auto& cj = ckpt.manifest.at("config");
    LoadedExpert out;
    out.config.conv_channels = cj.at("conv_channels").get<std::vector<int>>();
    out.config.in_channels = cj.at("in_channels").get<int>();
    out.config.num_classes = cj.at("num_classes").get<int>();
    out.config.image_size = cj.at("image_size").get<int>();
    out.expert = std::make_unique<Expert<float>>(out.config);
    for (auto& p : out.expert->params()) {
        const TensorRecord* rec = ckpt.find(p.name);
        if (!rec)
            throw std::runtime_error("corrupt checkpoint: missing tensor " + p.name);
        if (!rec->value.same_shape(*p.value))
            throw std::runtime_error("corrupt checkpoint: shape mismatch for " + p.name);
        *p.value = rec->value;
    }
    if (ckpt.manifest.contains("class_names"))
        out.class_names = ckpt.manifest.at("class_names").get<std::vector<std::string>>();
    if (ckpt.manifest.contains("metrics"))
        out.val_accuracy =
            ckpt.manifest.at("metrics").at("val_accuracy").get<std::vector<double>>();
    return out;
}

uint64_t params_fingerprint(const std::vector<ParamRef<float>>& params) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params) {
        const uint64_t part = fnv1a64_bytes(p.value->data(), p.value->numel() * sizeof(float));
        h ^= part;
        h *= 0x100000001b3ULL;
    }
    return h;
}

template LossBreakdown compute_losses(UNet<float>&, const Expert<float>*,
                                      AlignmentHead<float>*, const NoiseSchedule&,
                                      const StepInputs<float>&, TrainMode, AlignTarget,
                                      double, double, bool);
template LossBreakdown compute_losses(UNet<double>&, const Expert<double>*,
                                      AlignmentHead<double>*, const NoiseSchedule&,
                                      const StepInputs<double>&, TrainMode, AlignTarget,
                                      double, double, bool);

}  // namespace fad
