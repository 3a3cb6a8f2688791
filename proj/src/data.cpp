// SPDX-License-Identifier: Apache-2.0

#include "fad/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "fad/fsio.hpp"
#include "fad/image_io.hpp"
#include "fad/rng.hpp"

namespace fad {

void DatasetSpec::validate() const {
    if (num_classes < 2 ||
        num_classes > static_cast<int>(builtin_class_names().size()))
        throw std::invalid_argument("dataset: num_classes must lie in [2, 8]");
    if (samples_per_class < 2)
        throw std::invalid_argument("dataset: samples_per_class must be >= 2");
    if (image_size < 8) throw std::invalid_argument("dataset: image_size must be >= 8");
    if (jitter < 0.0 || jitter > 1.0)
        throw std::invalid_argument("dataset: jitter must lie in [0, 1]");
    if (noise_level < 0.0) throw std::invalid_argument("dataset: noise_level must be >= 0");
}

const std::vector<std::string>& builtin_class_names() {
    static const std::vector<std::string> names = {
        "h-stripes", "v-stripes", "checker",    "dots",
        "radial-rings", "gradient", "blob-noise", "constant"};
    return names;
}

int Dataset::constant_class_id() const {
    for (size_t i = 0; i < class_names.size(); ++i)
        if (class_names[i] == "constant") return static_cast<int>(i);
    return -1;
}

std::vector<size_t> Dataset::train_count_per_class() const {
    std::vector<size_t> counts(static_cast<size_t>(num_classes), 0);
    for (const auto& img : train) counts[static_cast<size_t>(img.label)]++;
    return counts;
}

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

// Uniform draw from [lo, lo + jitter * (hi - lo)); jitter 0 collapses to lo.
double jittered(RngStream& rng, double lo, double hi, double jitter) {
    return lo + rng.next_unit() * jitter * (hi - lo);
}

}  // namespace

TensorF synth_image(const DatasetSpec& spec, int class_id, int index) {
    const int n = spec.image_size;
    const double jit = spec.jitter;
    RngStream rng(derive_seed(spec.seed, {static_cast<uint64_t>(class_id),
                                          static_cast<uint64_t>(index)}));
    TensorF img({1, n, n});
    auto px = [&](int r, int c) -> float& {
        return img[static_cast<size_t>(r) * n + c];
    };

    const std::string& name = builtin_class_names()[static_cast<size_t>(class_id)];
    if (name == "h-stripes" || name == "v-stripes") {
        const double f = jittered(rng, 2.0, 3.0, jit);
        const double phase = jittered(rng, 0.0, 1.0, jit);
        const double amp = jittered(rng, 0.7, 0.9, jit);
        const bool horiz = name == "h-stripes";
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                const int k = horiz ? r : c;
                px(r, c) = static_cast<float>(amp * std::sin(kTau * f * k / n + phase));
            }
    } else if (name == "checker") {
        const double f = jittered(rng, 1.5, 2.5, jit);
        const double pr = jittered(rng, 0.0, 0.8, jit);
        const double pc = jittered(rng, 0.0, 0.8, jit);
        const double amp = jittered(rng, 0.7, 0.9, jit);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                px(r, c) = static_cast<float>(amp * std::sin(kTau * f * r / n + pr) *
                                              std::sin(kTau * f * c / n + pc));
    } else if (name == "dots") {
        const double spacing = jittered(rng, 6.0, 9.0, jit) * n / 32.0;
        const double off_r = jittered(rng, 0.0, spacing, jit);
        const double off_c = jittered(rng, 0.0, spacing, jit);
        const double amp = jittered(rng, 0.7, 0.9, jit);
        const double sigma = spacing / 4.0;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                // distance to nearest dot of the (wrapped) grid
                const double fr = std::fmod(r - off_r + 8.0 * spacing, spacing);
                const double fc = std::fmod(c - off_c + 8.0 * spacing, spacing);
                const double dr = std::min(fr, spacing - fr);
                const double dc = std::min(fc, spacing - fc);
                const double d2 = dr * dr + dc * dc;
                const double bump = std::exp(-d2 / (2.0 * sigma * sigma));
                px(r, c) = static_cast<float>(amp * (2.0 * bump - 1.0));
            }
    } else if (name == "radial-rings") {
        const double f = jittered(rng, 2.0, 3.0, jit);
        const double phase = jittered(rng, 0.0, 1.0, jit);
        const double amp = jittered(rng, 0.7, 0.9, jit);
        const double cy = (n - 1) / 2.0 + jittered(rng, -2.0, 2.0, jit) * n / 32.0;
        const double cx = (n - 1) / 2.0 + jittered(rng, -2.0, 2.0, jit) * n / 32.0;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                const double rho = std::hypot(r - cy, c - cx);
                px(r, c) = static_cast<float>(amp * std::sin(kTau * f * rho / n + phase));
            }
    } else if (name == "gradient") {
        const double theta = jittered(rng, 0.0, kTau / 4.0, jit);
        const double offset = jittered(rng, -0.15, 0.15, jit);
        const double amp = jittered(rng, 0.8, 0.9, jit);
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                const double u =
                    (ct * (c - (n - 1) / 2.0) + st * (r - (n - 1) / 2.0)) / n;
                px(r, c) = static_cast<float>(
                    amp * std::clamp(2.0 * u + offset, -1.0, 1.0));
            }
    } else if (name == "blob-noise") {
        constexpr int kWaves = 6;
        double fx[kWaves], fy[kWaves], ph[kWaves];
        for (int k = 0; k < kWaves; ++k) {
            fx[k] = jittered(rng, 0.5, 2.5, jit);
            fy[k] = jittered(rng, 0.5, 2.5, jit);
            ph[k] = rng.next_unit() * jit * kTau;
        }
        const double amp = 0.8 / std::sqrt(static_cast<double>(kWaves));
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                double v = 0.0;
                for (int k = 0; k < kWaves; ++k)
                    v += std::sin(kTau * (fx[k] * c + fy[k] * r) / n + ph[k]);
                px(r, c) = static_cast<float>(std::clamp(amp * v, -1.0, 1.0));
            }
    } else if (name == "constant") {
        // level jitter centered on the class constant -0.8
        const double level = -0.8 - 0.1 * jit + jittered(rng, 0.0, 0.2, jit);
        for (size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(level);
    } else {
        throw std::invalid_argument("dataset: class id out of range");
    }

    if (spec.noise_level > 0.0) {
        TensorF noise({1, n, n});
        rng.fill_gaussian(noise);
        for (size_t i = 0; i < img.numel(); ++i)
            img[i] = static_cast<float>(img[i] + spec.noise_level * noise[i]);
    }
    for (size_t i = 0; i < img.numel(); ++i) img[i] = std::clamp(img[i], -1.0f, 1.0f);
    return img;
}

Dataset synth_dataset(const DatasetSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.num_classes = spec.num_classes;
    ds.image_size = spec.image_size;
    ds.class_names.assign(builtin_class_names().begin(),
                          builtin_class_names().begin() + spec.num_classes);

    const int val_count = std::max(1, spec.samples_per_class / 10);
    const int train_count = spec.samples_per_class - val_count;
    for (int c = 0; c < spec.num_classes; ++c)
        for (int i = 0; i < spec.samples_per_class; ++i) {
            LabeledImage img{synth_image(spec, c, i), c};
            if (i < train_count)
                ds.train.push_back(std::move(img));
            else
                ds.val.push_back(std::move(img));
        }
    return ds;
}

void export_dataset(const Dataset& dataset, const DatasetSpec& spec,
                    const std::filesystem::path& root) {
    if (!std::filesystem::exists(root.parent_path()) && root.has_parent_path())
        throw std::runtime_error("export_dataset: parent directory does not exist: " +
                                 root.parent_path().string());
    std::filesystem::create_directories(root);

    nlohmann::json manifest;
    manifest["spec"] = {{"num_classes", spec.num_classes},
                        {"samples_per_class", spec.samples_per_class},
                        {"image_size", spec.image_size},
                        {"seed", spec.seed},
                        {"jitter", spec.jitter},
                        {"noise_level", spec.noise_level}};
    manifest["class_names"] = dataset.class_names;
    nlohmann::json train_list = nlohmann::json::array();
    nlohmann::json val_list = nlohmann::json::array();

    std::vector<int> next_index(static_cast<size_t>(dataset.num_classes), 0);
    auto write_split = [&](const std::vector<LabeledImage>& images,
                           nlohmann::json& list) {
        for (const auto& img : images) {
            const std::string& cls = dataset.class_names[static_cast<size_t>(img.label)];
            const int idx = next_index[static_cast<size_t>(img.label)]++;
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%04d.png", cls.c_str(), idx);
            std::filesystem::create_directories(root / cls);
            const auto bytes = image_to_bytes(img.pixels);
            write_gray_png(root / cls / name, bytes.data(), img.pixels.dim(2),
                           img.pixels.dim(1));
            list.push_back(cls + "/" + name);
        }
    };
    write_split(dataset.train, train_list);
    write_split(dataset.val, val_list);
    manifest["train"] = std::move(train_list);
    manifest["val"] = std::move(val_list);
    atomic_write_file(root / "dataset.json", manifest.dump(2) + "\n");
}

namespace {

LabeledImage load_labeled(const std::filesystem::path& file, int label) {
    LoadedImage li = load_png_unit(file);
    LabeledImage out;
    out.label = label;
    out.pixels = TensorF({1, li.height, li.width});
    for (size_t i = 0; i < li.unit.size(); ++i)
        out.pixels[i] = static_cast<float>(li.unit[i] * 2.0 - 1.0);
    return out;
}

}  // namespace

Dataset load_image_folder(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root))
        throw std::runtime_error("load_image_folder: not a directory: " + root.string());

    std::vector<std::string> class_names;
    for (const auto& entry : std::filesystem::directory_iterator(root))
        if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
    std::sort(class_names.begin(), class_names.end());
    if (class_names.empty())
        throw std::runtime_error("load_image_folder: no class directories in " +
                                 root.string());

    Dataset ds;
    ds.num_classes = static_cast<int>(class_names.size());
    ds.class_names = class_names;

    // dataset.json split lists take precedence when present.
    const std::filesystem::path manifest_path = root / "dataset.json";
    if (std::filesystem::exists(manifest_path)) {
        nlohmann::json manifest = nlohmann::json::parse(read_file(manifest_path));
        auto label_of = [&](const std::string& rel) {
            const std::string cls = rel.substr(0, rel.find('/'));
            const auto it = std::find(class_names.begin(), class_names.end(), cls);
            if (it == class_names.end())
                throw std::runtime_error("dataset.json references unknown class: " + cls);
            return static_cast<int>(it - class_names.begin());
        };
        for (const auto& rel : manifest.at("train"))
            ds.train.push_back(load_labeled(root / rel.get<std::string>(),
                                            label_of(rel.get<std::string>())));
        for (const auto& rel : manifest.at("val"))
            ds.val.push_back(load_labeled(root / rel.get<std::string>(),
                                          label_of(rel.get<std::string>())));
    } else {
        for (int label = 0; label < ds.num_classes; ++label) {
            std::vector<std::filesystem::path> files;
            for (const auto& entry : std::filesystem::directory_iterator(
                     root / class_names[static_cast<size_t>(label)]))
                if (entry.is_regular_file() && entry.path().extension() == ".png")
                    files.push_back(entry.path());
            std::sort(files.begin(), files.end());
            if (files.empty())
                throw std::runtime_error("load_image_folder: class '" +
                                         class_names[static_cast<size_t>(label)] +
                                         "' has no images");
            const int val_count = std::max(1, static_cast<int>(files.size()) / 10);
            const int train_count = static_cast<int>(files.size()) - val_count;
            for (size_t i = 0; i < files.size(); ++i) {
                LabeledImage img = load_labeled(files[i], label);
                if (static_cast<int>(i) < train_count)
                    ds.train.push_back(std::move(img));
                else
                    ds.val.push_back(std::move(img));
            }
        }
    }

    if (ds.train.empty()) throw std::runtime_error("load_image_folder: empty dataset");
    ds.image_size = ds.train.front().pixels.dim(1);
    for (const auto& img : ds.train)
        if (img.pixels.dim(1) != ds.image_size || img.pixels.dim(2) != ds.image_size)
            throw std::runtime_error("load_image_folder: inconsistent image sizes");
    const auto counts = ds.train_count_per_class();
    for (size_t c = 0; c < counts.size(); ++c)
        if (counts[c] == 0)
            throw std::runtime_error("load_image_folder: class '" + class_names[c] +
                                     "' has no training images");
    return ds;
}

}  // namespace fad
