// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include <json.hpp>

#include "fad/trainer.hpp"

namespace fad {

struct GenerationRequest {
    int class_id = 0;
    int count = 1;
    uint64_t seed = 0;
    int num_steps = 0;  // 0 = use the checkpoint's full T
    std::filesystem::path out_dir;
    bool dump_initial_noise = false;
};

struct SampledImages {
    std::vector<TensorF> images;         // (1,H,W) each, clamped to [-1,1]
    std::vector<TensorF> initial_noise;  // x_T per image, pre-model
};

/// Ancestral sampling chain. Each image draws x_T and all per-step noise from
/// its own stream keyed by (seed, class_id, index), so results are identical
/// whether images are generated singly or batched, and x_T never depends on
/// the model. Raises on non-finite values before any clamping.
SampledImages sample_images(UNet<float>& unet, const NoiseSchedule& schedule,
                            int class_id, int count, uint64_t seed, int num_steps);

/// Full generate command: sample, write `<class>_<seed>_<index>.png` files and
/// a manifest.json; returns the manifest.
nlohmann::json generate(const Checkpoint& checkpoint, const GenerationRequest& request);

}  // namespace fad
