// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>

#include "fad/alignment.hpp"
#include "fad/checkpoint.hpp"
#include "fad/config.hpp"
#include "fad/data.hpp"
#include "fad/expert.hpp"
#include "fad/schedule.hpp"
#include "fad/unet.hpp"

namespace fad {

struct TrainConfig {
    UNetConfig unet;
    int T = 200;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int epochs = 20;
    int batch_size = 64;
    double learning_rate = 1e-4;
    TrainMode mode = TrainMode::baseline;
    AlignTarget align_target = AlignTarget::noisy;
    double w1 = 1.0;
    double w2 = 1.0;
    uint64_t master_seed = 0;

    static TrainConfig from_run_config(const RunConfig& rc, uint64_t master_seed);
    nlohmann::json to_json() const;
};

struct StepRecord {
    int step = 0;
    int epoch = 0;
    LossBreakdown loss;
};

struct TrainingArtifacts {
    Checkpoint checkpoint;
    std::vector<StepRecord> curve;
    std::vector<int> timestep_trace;  // every t drawn, in draw order
};

/// One batch worth of pre-drawn training inputs. Splitting the draws from the
/// loss lets the gradient-check harness re-evaluate the loss at perturbed
/// parameters with frozen (t, eps).
template <typename S>
struct StepInputs {
    Tensor<S> x0;  // (B,1,H,W)
    std::vector<int> labels;
    std::vector<int> t;
    Tensor<S> eps;  // same shape as x0
};

/// Forward (and optionally backward) of one training step: forms x_t, runs
/// the U-Net once for both outputs, evaluates the expert on x_t or x0 in
/// aligned mode, and combines the losses. Gradients are accumulated into the
/// U-Net and W_p only; the expert never receives gradients. When w2 == 0 the
/// alignment term is reported but contributes no gradient at all, making the
/// parameter updates bit-identical to a baseline run.
template <typename S>
LossBreakdown compute_losses(UNet<S>& unet, const Expert<S>* expert,
                             AlignmentHead<S>* head, const NoiseSchedule& schedule,
                             const StepInputs<S>& in, TrainMode mode,
                             AlignTarget target, double w1, double w2, bool with_grads);

/// Full training run; deterministic given cfg.master_seed. Throws a
/// missing-expert error in aligned mode without expert, a config-inconsistency
/// error on class-count mismatch, and aborts with the step index if the loss
/// goes non-finite.
TrainingArtifacts train_diffusion(const Dataset& dataset, const TrainConfig& cfg,
                                  const Expert<float>* expert);

/// losses.csv: step, epoch, l_noise, l_align, l_total (full precision).
std::string loss_curve_csv(const std::vector<StepRecord>& curve);

// --- checkpoint packing -----------------------------------------------------

nlohmann::json unet_config_to_json(const UNetConfig& cfg);
UNetConfig unet_config_from_json(const nlohmann::json& j);

Checkpoint pack_unet_checkpoint(UNet<float>& unet, const AlignmentHead<float>* head,
                                const NoiseSchedule& schedule, const TrainConfig& cfg,
                                const std::vector<std::string>& class_names);

struct LoadedUNet {
    UNetConfig config;
    std::unique_ptr<UNet<float>> unet;
    NoiseSchedule schedule;
    std::vector<std::string> class_names;
};

LoadedUNet unet_from_checkpoint(const Checkpoint& ckpt);

Checkpoint pack_expert_checkpoint(Expert<float>& expert, const ExpertConfig& cfg,
                                  const std::vector<std::string>& class_names,
                                  const ExpertMetrics& metrics);

struct LoadedExpert {
    ExpertConfig config;
    std::unique_ptr<Expert<float>> expert;
    std::vector<std::string> class_names;
    std::vector<double> val_accuracy;
};

LoadedExpert expert_from_checkpoint(const Checkpoint& ckpt);

/// FNV-1a fingerprint over all parameter bytes, in registry order.
uint64_t params_fingerprint(const std::vector<ParamRef<float>>& params);

}  // namespace fad
