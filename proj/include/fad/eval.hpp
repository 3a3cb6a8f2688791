// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "fad/expert.hpp"
#include "fad/trainer.hpp"

namespace fad {

/// Canonical SSIM parameters: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range L = 1 on [0,1] images, valid windows only.
struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    nlohmann::json to_json() const;
};

/// Mean SSIM index over all valid window positions. Inputs are (H,W) in [0,1].
double ssim(const Tensor<double>& a, const Tensor<double>& b, const SsimParams& params);

struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<long long> counts;  // row = true class, column = predicted

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int n)
        : num_classes(n), counts(static_cast<size_t>(n) * n, 0) {}

    long long& at(int truth, int predicted) {
        return counts[static_cast<size_t>(truth) * num_classes + predicted];
    }
    long long at(int truth, int predicted) const {
        return counts[static_cast<size_t>(truth) * num_classes + predicted];
    }
    long long row_sum(int truth) const;
    long long trace() const;
    long long total() const;
    double accuracy() const;  // trace / total
    void add(const ConfusionMatrix& other);
    std::string to_csv(const std::vector<std::string>& class_names) const;
};

/// Pixel-quantized evaluation unit: evaluation always happens on the 8-bit
/// values that PNG export produces, so reports are reproducible from emitted
/// files alone.
struct EvalImage {
    std::vector<uint8_t> bytes;  // row-major grayscale
    int height = 0;
    int width = 0;
    int label = 0;  // intended class
};

EvalImage quantize_for_eval(const TensorF& pixels, int label);
EvalImage eval_image_from_png(const std::filesystem::path& path, int label);

/// Fraction of images the expert assigns to their intended class.
double generation_accuracy(const Expert<float>& expert,
                           const std::vector<EvalImage>& images);

ConfusionMatrix confusion(const Expert<float>& expert,
                          const std::vector<EvalImage>& images);

struct SsimDiversity {
    std::vector<int> class_ids;       // ascending
    std::vector<double> per_class;    // mean pairwise SSIM within class
    double overall = 0.0;             // mean across classes
};

/// Mean pairwise SSIM within each class (all unordered pairs); throws on a
/// singleton class.
SsimDiversity ssim_diversity(const std::vector<EvalImage>& images,
                             const SsimParams& params);

struct SeedEval {
    uint64_t seed = 0;
    double accuracy = 0.0;
    SsimDiversity ssim;
    ConfusionMatrix confusion;
};

struct EvalReport {
    std::string model_tag;
    std::vector<SeedEval> per_seed;
    double mean_accuracy = 0.0;
    double min_accuracy = 0.0;
    double max_accuracy = 0.0;
    double mean_overall_ssim = 0.0;
    ConfusionMatrix total_confusion;
    nlohmann::json metadata;

    nlohmann::json to_json() const;
};

EvalReport aggregate_report(std::string model_tag, std::vector<SeedEval> per_seed);

/// Generates `per_class` images for every id in eval_class_ids at each seed
/// and evaluates them. Initial noise depends only on (seed, class, index),
/// so two checkpoints evaluated with the same seeds see matched noise.
EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const Expert<float>& expert,
                               const std::vector<uint64_t>& seeds, int per_class,
                               const std::vector<int>& eval_class_ids, int num_steps,
                               const SsimParams& params, std::string model_tag);

/// Side-by-side matched-noise comparison of two trained models.
std::pair<EvalReport, EvalReport> seed_sweep(const Checkpoint& baseline,
                                             const Checkpoint& aligned,
                                             const Expert<float>& expert,
                                             const std::vector<uint64_t>& seeds,
                                             int per_class,
                                             const std::vector<int>& eval_class_ids,
                                             int num_steps, const SsimParams& params);

/// per_seed.csv rows for one or more reports (model,seed,accuracy,ssim).
std::string per_seed_csv(const std::vector<const EvalReport*>& reports);

}  // namespace fad
