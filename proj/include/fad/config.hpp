// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <json.hpp>

#include "fad/alignment.hpp"
#include "fad/data.hpp"
#include "fad/expert.hpp"
#include "fad/unet.hpp"

namespace fad {

enum class TrainMode { baseline, aligned };

std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

/// Full run configuration, sections {data, expert, diffusion, loss, align,
/// sample, eval}. Parsing rejects unknown keys; serialization emits every key
/// so parse(serialize(x)) == x.
struct RunConfig {
    // data
    DatasetSpec data;

    // expert
    ExpertConfig expert_arch;          // conv_channels (num_classes/image_size follow data)
    ExpertTrainConfig expert_train;

    // diffusion
    int T = 200;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int base_channels = 32;
    std::vector<int> channel_multipliers = {1, 2, 4};
    int time_embed_dim = 128;
    int diffusion_epochs = 20;
    int diffusion_batch_size = 64;
    double diffusion_learning_rate = 1e-4;
    TrainMode mode = TrainMode::baseline;

    // loss
    double w1 = 1.0;
    double w2 = 1.0;

    // align
    AlignTarget align_target = AlignTarget::noisy;

    // sample
    int sample_num_steps = 0;  // 0 = checkpoint T
    int sample_count_per_class = 10;

    // eval
    int eval_seeds = 15;
    int eval_sample_per_class = 10;

    UNetConfig unet_config() const;
    ExpertConfig expert_config() const;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);

    /// Reads a JSON config file; missing keys keep defaults, unknown keys are
    /// an error that names the offending key.
    static RunConfig load(const std::string& path);

    void validate() const;
};

}  // namespace fad
