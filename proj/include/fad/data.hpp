// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fad/tensor.hpp"

namespace fad {

/// Procedural dataset description. Every image is a pure function of
/// (seed, class, index); jitter scales the per-class parameter ranges and
/// noise_level is the per-pixel Gaussian sigma added on top.
struct DatasetSpec {
    int num_classes = 8;
    int samples_per_class = 200;
    int image_size = 32;
    uint64_t seed = 0;
    double jitter = 1.0;
    double noise_level = 0.05;

    void validate() const;
};

/// Grayscale image in diffusion space [-1, 1] with its class id.
struct LabeledImage {
    TensorF pixels;  // (1, H, W)
    int label = 0;
};

struct Dataset {
    int num_classes = 0;
    int image_size = 0;
    std::vector<std::string> class_names;
    std::vector<LabeledImage> train;
    std::vector<LabeledImage> val;

    /// Index of the degenerate "empty" class, or -1 when absent.
    int constant_class_id() const;
    std::vector<size_t> train_count_per_class() const;
};

/// The eight class generators, in id order. The final "constant" class plays
/// the role of the empty class and is excluded from generation evaluation.
const std::vector<std::string>& builtin_class_names();

/// Renders one procedural image; exposed for oracle tests.
TensorF synth_image(const DatasetSpec& spec, int class_id, int index);

/// Deterministic procedural dataset with a per-class 90/10 train/val split.
Dataset synth_dataset(const DatasetSpec& spec);

/// Writes the dataset as <root>/<class>/*.png plus dataset.json.
void export_dataset(const Dataset& dataset, const DatasetSpec& spec,
                    const std::filesystem::path& root);

/// Loads <root>/<class-name>/*.png; ids follow sorted class-name order. The
/// dataset.json split lists are honored when present, else 90/10 by index.
Dataset load_image_folder(const std::filesystem::path& root);

}  // namespace fad
