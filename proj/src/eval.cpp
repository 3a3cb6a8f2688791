// SPDX-License-Identifier: Apache-2.0

#include "fad/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "fad/image_io.hpp"
#include "fad/sampler.hpp"

namespace fad {

nlohmann::json SsimParams::to_json() const {
    return {{"window", window},
            {"sigma", sigma},
            {"k1", k1},
            {"k2", k2},
            {"dynamic_range", dynamic_range}};
}

namespace {

std::vector<double> gaussian_window_1d(int window, double sigma) {
    std::vector<double> w(static_cast<size_t>(window));
    const double c = (window - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < window; ++i) {
        w[static_cast<size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        sum += w[static_cast<size_t>(i)];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Valid-mode separable filter: rows then columns.
Tensor<double> filter_valid(const Tensor<double>& img, const std::vector<double>& w) {
    const int h = img.dim(0), wd = img.dim(1);
    const int k = static_cast<int>(w.size());
    Tensor<double> rows({h, wd - k + 1});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + k <= wd; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i)
                s += w[static_cast<size_t>(i)] * img[static_cast<size_t>(y) * wd + x + i];
            rows[static_cast<size_t>(y) * (wd - k + 1) + x] = s;
        }
    const int w2 = wd - k + 1;
    Tensor<double> out({h - k + 1, w2});
    for (int y = 0; y + k <= h; ++y)
        for (int x = 0; x < w2; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i)
                s += w[static_cast<size_t>(i)] * rows[static_cast<size_t>(y + i) * w2 + x];
            out[static_cast<size_t>(y) * w2 + x] = s;
        }
    return out;
}

Tensor<double> hadamard(const Tensor<double>& a, const Tensor<double>& b) {
    Tensor<double> out(a.shape());
    for (size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

}  // namespace

double ssim(const Tensor<double>& a, const Tensor<double>& b, const SsimParams& params) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
    if (a.ndim() != 2) throw std::invalid_argument("ssim: expected (H,W) images");
    if (a.dim(0) < params.window || a.dim(1) < params.window)
        throw std::invalid_argument("ssim: image smaller than the window");

    const std::vector<double> w = gaussian_window_1d(params.window, params.sigma);
    const double c1 = params.k1 * params.dynamic_range * params.k1 * params.dynamic_range;
    const double c2 = params.k2 * params.dynamic_range * params.k2 * params.dynamic_range;

    const Tensor<double> mu1 = filter_valid(a, w);
    const Tensor<double> mu2 = filter_valid(b, w);
    const Tensor<double> m11 = filter_valid(hadamard(a, a), w);
    const Tensor<double> m22 = filter_valid(hadamard(b, b), w);
    const Tensor<double> m12 = filter_valid(hadamard(a, b), w);

    double sum = 0.0;
    for (size_t i = 0; i < mu1.numel(); ++i) {
        const double mu1v = mu1[i], mu2v = mu2[i];
        const double sigma1 = m11[i] - mu1v * mu1v;
        const double sigma2 = m22[i] - mu2v * mu2v;
        const double sigma12 = m12[i] - mu1v * mu2v;
        const double num = (2.0 * mu1v * mu2v + c1) * (2.0 * sigma12 + c2);
        const double den = (mu1v * mu1v + mu2v * mu2v + c1) * (sigma1 + sigma2 + c2);
        sum += num / den;
    }
    return sum / static_cast<double>(mu1.numel());
}

long long ConfusionMatrix::row_sum(int truth) const {
    long long s = 0;
    for (int p = 0; p < num_classes; ++p) s += at(truth, p);
    return s;
}

long long ConfusionMatrix::trace() const {
    long long s = 0;
    for (int i = 0; i < num_classes; ++i) s += at(i, i);
    return s;
}

long long ConfusionMatrix::total() const {
    long long s = 0;
    for (long long v : counts) s += v;
    return s;
}

double ConfusionMatrix::accuracy() const {
    const long long n = total();
    if (n == 0) throw std::invalid_argument("confusion: empty matrix");
    return static_cast<double>(trace()) / static_cast<double>(n);
}

void ConfusionMatrix::add(const ConfusionMatrix& other) {
    if (num_classes == 0) *this = ConfusionMatrix(other.num_classes);
    if (other.num_classes != num_classes)
        throw std::invalid_argument("confusion: class count mismatch");
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

std::string ConfusionMatrix::to_csv(const std::vector<std::string>& class_names) const {
    auto name = [&](int i) {
        return i < static_cast<int>(class_names.size()) ? class_names[static_cast<size_t>(i)]
                                                        : std::to_string(i);
    };
    std::string out = "true\\pred";
    for (int p = 0; p < num_classes; ++p) out += "," + name(p);
    out += "\n";
    for (int t = 0; t < num_classes; ++t) {
        out += name(t);
        for (int p = 0; p < num_classes; ++p) out += "," + std::to_string(at(t, p));
        out += "\n";
    }
    return out;
}

EvalImage quantize_for_eval(const TensorF& pixels, int label) {
    EvalImage out;
    out.height = pixels.dim(1);
    out.width = pixels.dim(2);
    out.bytes = image_to_bytes(pixels);
    out.label = label;
    return out;
}

EvalImage eval_image_from_png(const std::filesystem::path& path, int label) {
    LoadedImage li = load_png_unit(path);
    EvalImage out;
    out.height = li.height;
    out.width = li.width;
    out.label = label;
    out.bytes.resize(li.unit.size());
    for (size_t i = 0; i < li.unit.size(); ++i)
        out.bytes[i] = static_cast<uint8_t>(std::lround(li.unit[i] * 255.0));
    return out;
}

namespace {

Tensor<float> eval_image_to_model_input(const EvalImage& img) {
    Tensor<float> t({1, 1, img.height, img.width});
    for (size_t i = 0; i < img.bytes.size(); ++i)
        t[i] = byte_to_diffusion(img.bytes[i]);
    return t;
}

Tensor<double> eval_image_to_unit(const EvalImage& img) {
    Tensor<double> t({img.height, img.width});
    for (size_t i = 0; i < img.bytes.size(); ++i)
        t[i] = static_cast<double>(img.bytes[i]) / 255.0;
    return t;
}

}  // namespace

double generation_accuracy(const Expert<float>& expert,
                           const std::vector<EvalImage>& images) {
    if (images.empty()) throw std::invalid_argument("generation_accuracy: empty set");
    size_t correct = 0;
    for (const auto& img : images)
        if (classify(expert, eval_image_to_model_input(img)) == img.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(images.size());
}

ConfusionMatrix confusion(const Expert<float>& expert,
                          const std::vector<EvalImage>& images) {
    const int n = expert.config().num_classes;
    ConfusionMatrix cm(n);
    for (const auto& img : images) {
        if (img.label < 0 || img.label >= n)
            throw std::out_of_range("confusion: label out of range");
        cm.at(img.label, classify(expert, eval_image_to_model_input(img)))++;
    }
    return cm;
}

SsimDiversity ssim_diversity(const std::vector<EvalImage>& images,
                             const SsimParams& params) {
    std::map<int, std::vector<const EvalImage*>> by_class;
    for (const auto& img : images) by_class[img.label].push_back(&img);

    SsimDiversity out;
    double total = 0.0;
    for (const auto& [cls, members] : by_class) {
        if (members.size() < 2)
            throw std::invalid_argument("ssim_diversity: class " + std::to_string(cls) +
                                        " has fewer than two images");
        std::vector<Tensor<double>> unit;
        unit.reserve(members.size());
        for (const EvalImage* m : members) unit.push_back(eval_image_to_unit(*m));
        double sum = 0.0;
        size_t pairs = 0;
        for (size_t i = 0; i < unit.size(); ++i)
            for (size_t j = i + 1; j < unit.size(); ++j) {
                sum += ssim(unit[i], unit[j], params);
                ++pairs;
            }
        out.class_ids.push_back(cls);
        out.per_class.push_back(sum / static_cast<double>(pairs));
        total += out.per_class.back();
    }
    out.overall = total / static_cast<double>(out.per_class.size());
    return out;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : per_seed) {
        nlohmann::json jc;
        jc["seed"] = s.seed;
        jc["accuracy"] = s.accuracy;
        jc["overall_ssim"] = s.ssim.overall;
        nlohmann::json pc = nlohmann::json::object();
        for (size_t i = 0; i < s.ssim.class_ids.size(); ++i)
            pc[std::to_string(s.ssim.class_ids[i])] = s.ssim.per_class[i];
        jc["per_class_ssim"] = std::move(pc);
        per.push_back(std::move(jc));
    }
    nlohmann::json j;
    j["model"] = model_tag;
    j["per_seed"] = std::move(per);
    j["mean_accuracy"] = mean_accuracy;
    j["min_accuracy"] = min_accuracy;
    j["max_accuracy"] = max_accuracy;
    j["mean_overall_ssim"] = mean_overall_ssim;
    j["confusion"] = total_confusion.counts;
    j["confusion_classes"] = total_confusion.num_classes;
    j["metadata"] = metadata;
    return j;
}

EvalReport aggregate_report(std::string model_tag, std::vector<SeedEval> per_seed) {
    if (per_seed.empty()) throw std::invalid_argument("aggregate_report: no seeds");
    EvalReport r;
    r.model_tag = std::move(model_tag);
    r.per_seed = std::move(per_seed);
    double acc_sum = 0.0, ssim_sum = 0.0;
    r.min_accuracy = r.per_seed.front().accuracy;
    r.max_accuracy = r.per_seed.front().accuracy;
    for (const auto& s : r.per_seed) {
        acc_sum += s.accuracy;
        ssim_sum += s.ssim.overall;
        r.min_accuracy = std::min(r.min_accuracy, s.accuracy);
        r.max_accuracy = std::max(r.max_accuracy, s.accuracy);
        r.total_confusion.add(s.confusion);
    }
    r.mean_accuracy = acc_sum / static_cast<double>(r.per_seed.size());
    r.mean_overall_ssim = ssim_sum / static_cast<double>(r.per_seed.size());
    return r;
}

EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const Expert<float>& expert,
                               const std::vector<uint64_t>& seeds, int per_class,
                               const std::vector<int>& eval_class_ids, int num_steps,
                               const SsimParams& params, std::string model_tag) {
    LoadedUNet model = unet_from_checkpoint(ckpt);
    std::vector<SeedEval> evals;
    for (uint64_t seed : seeds) {
        std::vector<EvalImage> images;
        for (int cls : eval_class_ids) {
            SampledImages sampled = sample_images(*model.unet, model.schedule, cls,
                                                  per_class, seed, num_steps);
            for (const TensorF& img : sampled.images)
                images.push_back(quantize_for_eval(img, cls));
        }
        SeedEval se;
        se.seed = seed;
        se.accuracy = generation_accuracy(expert, images);
        se.ssim = ssim_diversity(images, params);
        se.confusion = confusion(expert, images);
        evals.push_back(std::move(se));
    }
    EvalReport r = aggregate_report(std::move(model_tag), std::move(evals));
    r.metadata = {{"seeds", seeds},
                  {"sample_per_class", per_class},
                  {"num_steps", num_steps},
                  {"eval_class_ids", eval_class_ids},
                  {"ssim", params.to_json()}};
    return r;
}

std::pair<EvalReport, EvalReport> seed_sweep(const Checkpoint& baseline,
                                             const Checkpoint& aligned,
                                             const Expert<float>& expert,
                                             const std::vector<uint64_t>& seeds,
                                             int per_class,
                                             const std::vector<int>& eval_class_ids,
                                             int num_steps, const SsimParams& params) {
    const auto base_classes = unet_from_checkpoint(baseline).config.num_classes;
    const auto aligned_classes = unet_from_checkpoint(aligned).config.num_classes;
    if (base_classes != aligned_classes)
        throw std::invalid_argument("seed_sweep: checkpoints trained on different class sets");
    EvalReport rb = evaluate_checkpoint(baseline, expert, seeds, per_class,
                                        eval_class_ids, num_steps, params, "baseline");
    EvalReport ra = evaluate_checkpoint(aligned, expert, seeds, per_class,
                                        eval_class_ids, num_steps, params, "aligned");
    return {std::move(rb), std::move(ra)};
}

std::string per_seed_csv(const std::vector<const EvalReport*>& reports) {
    std::string out = "model,seed,accuracy,overall_ssim\n";
    char line[160];
    for (const EvalReport* r : reports)
        for (const auto& s : r->per_seed) {
            std::snprintf(line, sizeof(line), "%s,%llu,%.17g,%.17g\n",
                          r->model_tag.c_str(), static_cast<unsigned long long>(s.seed),
                          s.accuracy, s.ssim.overall);
            out += line;
        }
    return out;
}

}  // namespace fad
