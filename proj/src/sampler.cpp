// SPDX-License-Identifier: Apache-2.0

#include "fad/sampler.hpp"

#include <cmath>

#include "fad/fsio.hpp"
#include "fad/image_io.hpp"

namespace fad {

SampledImages sample_images(UNet<float>& unet, const NoiseSchedule& schedule,
                            int class_id, int count, uint64_t seed, int num_steps) {
    const UNetConfig& cfg = unet.config();
    if (class_id < 0 || class_id >= cfg.num_classes)
        throw std::out_of_range("generate: class id " + std::to_string(class_id) +
                                " out of range [0, " + std::to_string(cfg.num_classes) +
                                ")");
    if (count < 1) throw std::invalid_argument("generate: count must be >= 1");
    const int steps = num_steps == 0 ? schedule.T : num_steps;
    const RespacedSchedule respaced = respace_schedule(schedule, steps);
    const int h = cfg.image_size;

    // Per-image noise streams: x_T first, then the ancestral z draws. Keyed by
    // (seed, class, index) so batch composition can never change an image.
    std::vector<RngStream> streams;
    streams.reserve(static_cast<size_t>(count));
    SampledImages out;
    std::vector<Tensor<float>> x(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        streams.emplace_back(derive_seed(seed, {static_cast<uint64_t>(class_id),
                                                static_cast<uint64_t>(i)}));
        x[static_cast<size_t>(i)] = Tensor<float>({1, 1, h, h});
        streams.back().fill_gaussian(x[static_cast<size_t>(i)]);
        out.initial_noise.push_back(x[static_cast<size_t>(i)]);
    }

    Tensor<float> batch({count, 1, h, h});
    UNetCache<float> cache;
    for (int k = steps - 1; k >= 0; --k) {
        for (int i = 0; i < count; ++i)
            std::copy(x[static_cast<size_t>(i)].data(),
                      x[static_cast<size_t>(i)].data() + x[static_cast<size_t>(i)].numel(),
                      batch.data() + static_cast<size_t>(i) * x[0].numel());
        const std::vector<int> t(static_cast<size_t>(count),
                                 respaced.tau[static_cast<size_t>(k)]);
        const std::vector<int> y(static_cast<size_t>(count), class_id);
        UNetOutput<float> pred = unet.forward(batch, t, y, cache);
        for (int i = 0; i < count; ++i) {
            Tensor<float> eps({1, 1, h, h});
            std::copy(pred.eps_pred.data() + static_cast<size_t>(i) * eps.numel(),
                      pred.eps_pred.data() + static_cast<size_t>(i + 1) * eps.numel(),
                      eps.data());
            if (k > 0) {
                Tensor<float> z({1, 1, h, h});
                streams[static_cast<size_t>(i)].fill_gaussian(z);
                x[static_cast<size_t>(i)] =
                    ddpm_step(x[static_cast<size_t>(i)], eps, k, respaced.grid, &z);
            } else {
                x[static_cast<size_t>(i)] = ddpm_step<float>(x[static_cast<size_t>(i)],
                                                             eps, 0, respaced.grid, nullptr);
            }
        }
    }

    for (int i = 0; i < count; ++i) {
        Tensor<float>& img = x[static_cast<size_t>(i)];
        for (size_t p = 0; p < img.numel(); ++p)
            if (!std::isfinite(img[p]))
                throw std::runtime_error("generate: non-finite sample value before clamp");
        TensorF flat({1, h, h});
        for (size_t p = 0; p < flat.numel(); ++p)
            flat[p] = std::clamp(img[p], -1.0f, 1.0f);
        out.images.push_back(std::move(flat));
    }
    return out;
}

nlohmann::json generate(const Checkpoint& checkpoint, const GenerationRequest& request) {
    LoadedUNet model = unet_from_checkpoint(checkpoint);
    if (request.num_steps < 0 || request.num_steps > model.schedule.T)
        throw std::invalid_argument("generate: num_steps must lie in [1, T]");

    const std::filesystem::path parent = request.out_dir.parent_path();
    if (!parent.empty() && !std::filesystem::exists(parent))
        throw std::runtime_error("generate: parent directory does not exist: " +
                                 parent.string());
    std::filesystem::create_directories(request.out_dir);

    SampledImages sampled = sample_images(*model.unet, model.schedule, request.class_id,
                                          request.count, request.seed, request.num_steps);

    nlohmann::json manifest;
    manifest["class_id"] = request.class_id;
    manifest["seed"] = request.seed;
    manifest["num_steps"] =
        request.num_steps == 0 ? model.schedule.T : request.num_steps;
    if (!model.class_names.empty()) manifest["class_names"] = model.class_names;
    nlohmann::json files = nlohmann::json::array();
    for (int i = 0; i < request.count; ++i) {
        char name[96];
        std::snprintf(name, sizeof(name), "%d_%llu_%d.png", request.class_id,
                      static_cast<unsigned long long>(request.seed), i);
        const TensorF& img = sampled.images[static_cast<size_t>(i)];
        const auto bytes = image_to_bytes(img);
        write_gray_png(request.out_dir / name, bytes.data(), img.dim(2), img.dim(1));

        const TensorF& xt = sampled.initial_noise[static_cast<size_t>(i)];
        const uint64_t xt_hash = fnv1a64_bytes(xt.data(), xt.numel() * sizeof(float));
        if (request.dump_initial_noise) {
            std::string raw(reinterpret_cast<const char*>(xt.data()),
                            xt.numel() * sizeof(float));
            atomic_write_file(request.out_dir / (std::string(name) + ".x_t.bin"), raw);
        }
        files.push_back({{"file", name},
                         {"class_id", request.class_id},
                         {"seed", request.seed},
                         {"index", i},
                         {"x_t_fnv", hex64(xt_hash)}});
    }
    manifest["files"] = std::move(files);
    atomic_write_file(request.out_dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

}  // namespace fad
