// SPDX-License-Identifier: Apache-2.0
//
// fad — feature-aligned diffusion at desk scale.
// Pipeline: make-data -> train-expert -> train-diffusion -> generate ->
// evaluate, plus the sweep command that runs the full baseline vs. aligned
// comparison across seeds.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>

#include "fad/config.hpp"
#include "fad/eval.hpp"
#include "fad/fsio.hpp"
#include "fad/sampler.hpp"
#include "fad/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class RunLog {
public:
    RunLog(std::string command, json config, uint64_t seed)
        : start_(std::chrono::steady_clock::now()) {
        doc_["command"] = std::move(command);
        doc_["config"] = std::move(config);
        doc_["seed"] = seed;
    }

    void note(const std::string& key, json value) { doc_[key] = std::move(value); }

    void artifact(const fs::path& path) {
        const std::string bytes = fad::read_file(path);
        doc_["artifacts"][path.string()] =
            fad::hex64(fad::fnv1a64_bytes(bytes.data(), bytes.size()));
    }

    void write(const fs::path& path) {
        const double secs = std::chrono::duration<double>(
                                std::chrono::steady_clock::now() - start_)
                                .count();
        doc_["wall_time_seconds"] = secs;
        fad::atomic_write_file(path, doc_.dump(2) + "\n");
    }

private:
    json doc_;
    std::chrono::steady_clock::time_point start_;
};

fad::RunConfig load_config(const std::string& path) {
    return path.empty() ? fad::RunConfig() : fad::RunConfig::load(path);
}

void ensure_parent_exists(const fs::path& dir) {
    const fs::path parent = dir.parent_path();
    if (!parent.empty() && !fs::exists(parent))
        throw std::runtime_error("parent directory does not exist: " + parent.string());
    fs::create_directories(dir);
}

// --- make-data --------------------------------------------------------------

int cmd_make_data(const std::string& config_path, uint64_t seed, bool seed_set,
                  const std::string& out) {
    fad::RunConfig rc = load_config(config_path);
    if (seed_set) rc.data.seed = seed;
    RunLog log("make-data", rc.to_json(), rc.data.seed);

    fad::Dataset ds = fad::synth_dataset(rc.data);
    fad::export_dataset(ds, rc.data, out);
    log.artifact(fs::path(out) / "dataset.json");
    log.write(fs::path(out) / "run.json");
    std::printf("wrote %zu train + %zu val images across %d classes to %s\n",
                ds.train.size(), ds.val.size(), ds.num_classes, out.c_str());
    return 0;
}

// --- train-expert -----------------------------------------------------------

int cmd_train_expert(const std::string& config_path, uint64_t seed,
                     const std::string& data_dir, const std::string& out) {
    fad::RunConfig rc = load_config(config_path);
    fad::Dataset ds = fad::load_image_folder(data_dir);
    rc.data.num_classes = ds.num_classes;
    rc.data.image_size = ds.image_size;
    RunLog log("train-expert", rc.to_json(), seed);

    fad::ExpertConfig cfg = rc.expert_config();
    fad::Expert<float> expert(cfg);
    fad::ExpertMetrics metrics = fad::train_expert(expert, ds, rc.expert_train, seed);

    fad::Checkpoint ckpt =
        fad::pack_expert_checkpoint(expert, cfg, ds.class_names, metrics);
    ckpt.save(out);

    std::string csv = "epoch,train_loss,val_accuracy\n";
    char line[96];
    for (size_t e = 0; e < metrics.train_loss.size(); ++e) {
        std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g\n", e, metrics.train_loss[e],
                      metrics.val_accuracy[e]);
        csv += line;
    }
    fad::atomic_write_file(out + ".metrics.csv", csv);

    log.artifact(out);
    log.artifact(out + ".metrics.csv");
    log.write(out + ".run.json");
    std::printf("expert trained: final val accuracy %.4f (%s)\n",
                metrics.val_accuracy.back(), out.c_str());
    return 0;
}

// --- train-diffusion --------------------------------------------------------

int cmd_train_diffusion(const std::string& config_path, uint64_t seed,
                        const std::string& data_dir, const std::string& expert_path,
                        const std::string& mode, const std::string& align_target,
                        const std::string& out) {
    fad::RunConfig rc = load_config(config_path);
    if (!mode.empty()) rc.mode = fad::train_mode_from_string(mode);
    if (!align_target.empty())
        rc.align_target = fad::align_target_from_string(align_target);

    fad::Dataset ds = fad::load_image_folder(data_dir);
    rc.data.num_classes = ds.num_classes;
    rc.data.image_size = ds.image_size;
    RunLog log("train-diffusion", rc.to_json(), seed);

    fad::LoadedExpert expert;
    if (rc.mode == fad::TrainMode::aligned) {
        if (expert_path.empty())
            throw std::runtime_error(
                "aligned mode requires --expert <checkpoint> (train-expert first)");
        expert = fad::expert_from_checkpoint(fad::Checkpoint::load(expert_path));
    }

    fad::TrainConfig cfg = fad::TrainConfig::from_run_config(rc, seed);
    fad::TrainingArtifacts artifacts =
        fad::train_diffusion(ds, cfg, expert.expert ? expert.expert.get() : nullptr);

    artifacts.checkpoint.save(out);
    fad::atomic_write_file(out + ".losses.csv", fad::loss_curve_csv(artifacts.curve));

    log.artifact(out);
    log.artifact(out + ".losses.csv");
    log.write(out + ".run.json");
    std::printf("diffusion model trained (%s, %zu steps): %s\n",
                fad::to_string(rc.mode).c_str(), artifacts.curve.size(), out.c_str());
    return 0;
}

// --- generate ---------------------------------------------------------------

int cmd_generate(const std::string& ckpt_path, int class_id, int count, uint64_t seed,
                 int num_steps, bool dump_noise, const std::string& out) {
    fad::Checkpoint ckpt = fad::Checkpoint::load(ckpt_path);
    fad::GenerationRequest req;
    req.class_id = class_id;
    req.count = count;
    req.seed = seed;
    req.num_steps = num_steps;
    req.out_dir = out;
    req.dump_initial_noise = dump_noise;

    RunLog log("generate",
               json{{"checkpoint", ckpt_path},
                    {"class_id", class_id},
                    {"count", count},
                    {"num_steps", num_steps}},
               seed);
    json manifest = fad::generate(ckpt, req);
    log.artifact(fs::path(out) / "manifest.json");
    log.write(fs::path(out) / "run.json");
    std::printf("generated %d images for class %d into %s\n", count, class_id,
                out.c_str());
    return 0;
}

// --- evaluate ---------------------------------------------------------------

std::vector<fs::path> find_manifests(const fs::path& root) {
    std::vector<fs::path> out;
    if (fs::is_regular_file(root / "manifest.json")) out.push_back(root / "manifest.json");
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file() && entry.path().filename() == "manifest.json" &&
            entry.path() != root / "manifest.json")
            out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

fad::EvalReport evaluate_image_dir(const fs::path& images_dir,
                                   const fad::Expert<float>& expert,
                                   const fad::SsimParams& params,
                                   const std::string& tag) {
    const auto manifests = find_manifests(images_dir);
    if (manifests.empty())
        throw std::runtime_error("no manifest.json found under " + images_dir.string());

    std::map<uint64_t, std::vector<fad::EvalImage>> by_seed;
    for (const fs::path& mpath : manifests) {
        json manifest = json::parse(fad::read_file(mpath));
        for (const auto& f : manifest.at("files"))
            by_seed[f.at("seed").get<uint64_t>()].push_back(fad::eval_image_from_png(
                mpath.parent_path() / f.at("file").get<std::string>(),
                f.at("class_id").get<int>()));
    }

    std::vector<fad::SeedEval> evals;
    for (auto& [seed, images] : by_seed) {
        fad::SeedEval se;
        se.seed = seed;
        se.accuracy = fad::generation_accuracy(expert, images);
        se.ssim = fad::ssim_diversity(images, params);
        se.confusion = fad::confusion(expert, images);
        evals.push_back(std::move(se));
    }
    fad::EvalReport report = fad::aggregate_report(tag, std::move(evals));
    report.metadata = {{"images_dir", images_dir.string()}, {"ssim", params.to_json()}};
    return report;
}

int cmd_evaluate(const std::string& images_dir, const std::string& expert_path,
                 const std::string& out) {
    fad::LoadedExpert expert = fad::expert_from_checkpoint(fad::Checkpoint::load(expert_path));
    RunLog log("evaluate", json{{"images", images_dir}, {"expert", expert_path}}, 0);

    fad::SsimParams params;
    fad::EvalReport report =
        evaluate_image_dir(images_dir, *expert.expert, params, "images");

    ensure_parent_exists(out);
    fad::atomic_write_file(fs::path(out) / "eval_report.json",
                           report.to_json().dump(2) + "\n");
    fad::atomic_write_file(fs::path(out) / "per_seed.csv", fad::per_seed_csv({&report}));
    fad::atomic_write_file(fs::path(out) / "confusion.csv",
                           report.total_confusion.to_csv(expert.class_names));
    log.artifact(fs::path(out) / "eval_report.json");
    log.artifact(fs::path(out) / "per_seed.csv");
    log.write(fs::path(out) / "run.json");
    std::printf("evaluated %zu seed groups: mean accuracy %.4f, mean SSIM %.4f\n",
                report.per_seed.size(), report.mean_accuracy, report.mean_overall_ssim);
    return 0;
}

// --- sweep ------------------------------------------------------------------

struct SweepArm {
    std::string tag;
    fad::TrainMode mode;
    fad::AlignTarget target;
};

int cmd_sweep(const std::string& config_path, uint64_t seed, const std::string& data_dir,
              const std::string& expert_path, int num_seeds, bool reuse,
              const std::string& out) {
    fad::RunConfig rc = load_config(config_path);
    fad::Dataset ds = fad::load_image_folder(data_dir);
    rc.data.num_classes = ds.num_classes;
    rc.data.image_size = ds.image_size;

    fad::LoadedExpert expert = fad::expert_from_checkpoint(fad::Checkpoint::load(expert_path));
    RunLog log("sweep", rc.to_json(), seed);
    ensure_parent_exists(out);
    const fs::path root(out);

    const std::vector<SweepArm> arms = {
        {"baseline", fad::TrainMode::baseline, fad::AlignTarget::noisy},
        {"aligned-noisy", fad::TrainMode::aligned, fad::AlignTarget::noisy},
        {"aligned-clean", fad::TrainMode::aligned, fad::AlignTarget::clean},
    };

    // Train the three arms with one master seed: identical RNG streams make
    // every (t, eps) draw match across arms.
    std::map<std::string, fad::Checkpoint> ckpts;
    for (const SweepArm& arm : arms) {
        const fs::path ckpt_path = root / ("model_" + arm.tag + ".ckpt");
        if (reuse && fs::exists(ckpt_path)) {
            ckpts.emplace(arm.tag, fad::Checkpoint::load(ckpt_path));
            std::printf("[sweep] reusing %s\n", ckpt_path.c_str());
            continue;
        }
        fad::TrainConfig cfg = fad::TrainConfig::from_run_config(rc, seed);
        cfg.mode = arm.mode;
        cfg.align_target = arm.target;
        std::printf("[sweep] training %s ...\n", arm.tag.c_str());
        std::fflush(stdout);
        fad::TrainingArtifacts artifacts = fad::train_diffusion(
            ds, cfg, cfg.mode == fad::TrainMode::aligned ? expert.expert.get() : nullptr);
        artifacts.checkpoint.save(ckpt_path);
        fad::atomic_write_file(ckpt_path.string() + ".losses.csv",
                               fad::loss_curve_csv(artifacts.curve));
        log.artifact(ckpt_path);
        ckpts.emplace(arm.tag, std::move(artifacts.checkpoint));
    }

    // Evaluation population: every class except the degenerate "empty" one.
    std::vector<int> eval_classes;
    const int constant_id = ds.constant_class_id();
    for (int c = 0; c < ds.num_classes; ++c)
        if (c != constant_id) eval_classes.push_back(c);

    std::vector<uint64_t> seeds;
    for (int i = 0; i < num_seeds; ++i) seeds.push_back(seed + static_cast<uint64_t>(i));

    const int num_steps = rc.sample_num_steps;
    const fad::SsimParams params;

    // Generate to disk, then evaluate strictly from the emitted PNGs.
    std::map<std::string, fad::EvalReport> reports;
    std::map<std::string, std::map<std::string, std::string>> noise_hashes;  // arm -> img -> hash
    for (const SweepArm& arm : arms) {
        std::printf("[sweep] generating + evaluating %s ...\n", arm.tag.c_str());
        std::fflush(stdout);
        for (uint64_t s : seeds)
            for (int cls : eval_classes) {
                fad::GenerationRequest req;
                req.class_id = cls;
                req.count = rc.eval_sample_per_class;
                req.seed = s;
                req.num_steps = num_steps;
                req.out_dir = root / "gen" / arm.tag / ("s" + std::to_string(s)) /
                              ("c" + std::to_string(cls));
                fs::create_directories(req.out_dir);
                json manifest = fad::generate(ckpts.at(arm.tag), req);
                for (const auto& f : manifest.at("files"))
                    noise_hashes[arm.tag][std::to_string(s) + "/" +
                                          f.at("file").get<std::string>()] =
                        f.at("x_t_fnv").get<std::string>();
            }
        reports.emplace(arm.tag, evaluate_image_dir(root / "gen" / arm.tag,
                                                    *expert.expert, params, arm.tag));
    }

    // Matched-noise audit: identical (seed, class, index) must give identical
    // x_T across arms.
    bool matched_noise = true;
    for (const auto& [img, hash] : noise_hashes.at("baseline"))
        for (const SweepArm& arm : arms)
            if (noise_hashes.at(arm.tag).at(img) != hash) matched_noise = false;

    const fad::EvalReport& base = reports.at("baseline");
    const fad::EvalReport& noisy = reports.at("aligned-noisy");
    const fad::EvalReport& clean = reports.at("aligned-clean");

    json sweep_report;
    sweep_report["expert_val_accuracy"] =
        expert.val_accuracy.empty() ? json() : json(expert.val_accuracy.back());
    sweep_report["seeds"] = seeds;
    sweep_report["eval_classes"] = eval_classes;
    sweep_report["sample_per_class"] = rc.eval_sample_per_class;
    sweep_report["num_steps"] = num_steps == 0 ? rc.T : num_steps;
    sweep_report["chance_accuracy"] = 1.0 / static_cast<double>(eval_classes.size());
    sweep_report["matched_initial_noise"] = matched_noise;
    for (const auto& [tag, rep] : reports)
        sweep_report["models"][tag] = {{"mean_accuracy", rep.mean_accuracy},
                                       {"min_accuracy", rep.min_accuracy},
                                       {"max_accuracy", rep.max_accuracy},
                                       {"mean_overall_ssim", rep.mean_overall_ssim}};
    sweep_report["headline"] = {
        {"baseline_mean_accuracy", base.mean_accuracy},
        {"aligned_noisy_mean_accuracy", noisy.mean_accuracy},
        {"aligned_clean_mean_accuracy", clean.mean_accuracy},
        {"aligned_minus_baseline", noisy.mean_accuracy - base.mean_accuracy},
        {"directional_expectation_met", noisy.mean_accuracy >= base.mean_accuracy}};
    json flags = json::array();
    if (noisy.mean_accuracy < base.mean_accuracy)
        flags.push_back(
            "aligned-noisy mean accuracy below baseline in this regime (directional "
            "expectation not met)");
    sweep_report["flags"] = std::move(flags);

    std::vector<const fad::EvalReport*> all = {&base, &noisy, &clean};
    fad::atomic_write_file(root / "per_seed.csv", fad::per_seed_csv(all));
    json report_array = json::array();
    for (const fad::EvalReport* r : all) report_array.push_back(r->to_json());
    fad::atomic_write_file(root / "eval_report.json", report_array.dump(2) + "\n");
    for (const auto& [tag, rep] : reports)
        fad::atomic_write_file(root / ("confusion_" + tag + ".csv"),
                               rep.total_confusion.to_csv(ds.class_names));
    fad::atomic_write_file(root / "sweep_report.json", sweep_report.dump(2) + "\n");

    log.artifact(root / "per_seed.csv");
    log.artifact(root / "eval_report.json");
    log.artifact(root / "sweep_report.json");
    log.write(root / "run.json");

    std::printf("sweep done: baseline %.4f, aligned-noisy %.4f, aligned-clean %.4f "
                "(chance %.4f)\n",
                base.mean_accuracy, noisy.mean_accuracy, clean.mean_accuracy,
                1.0 / static_cast<double>(eval_classes.size()));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"feature-aligned diffusion: train, generate and evaluate"};
    app.require_subcommand(1);

    std::string config_path, data_dir, expert_path, ckpt_path, images_dir, out;
    std::string mode, align_target;
    uint64_t seed = 0;
    bool seed_set = false;
    int class_id = 0, count = 10, num_steps = 0, num_seeds = 15;
    bool dump_noise = false, reuse = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--seed", seed, "master seed")->each([&](const std::string&) {
            seed_set = true;
        });
        cmd->add_option("--out", out, "output path")->required();
    };

    CLI::App* mk = app.add_subcommand("make-data", "write the procedural dataset");
    add_common(mk);

    CLI::App* te = app.add_subcommand("train-expert", "train the expert classifier");
    add_common(te);
    te->add_option("--data", data_dir, "dataset directory")->required();

    CLI::App* td = app.add_subcommand("train-diffusion", "train the diffusion model");
    add_common(td);
    td->add_option("--data", data_dir, "dataset directory")->required();
    td->add_option("--expert", expert_path, "expert checkpoint (aligned mode)");
    td->add_option("--mode", mode, "baseline|aligned");
    td->add_option("--align-target", align_target, "noisy|clean");

    CLI::App* gen = app.add_subcommand("generate", "sample images from a checkpoint");
    add_common(gen);
    gen->add_option("--checkpoint", ckpt_path, "diffusion checkpoint")->required();
    gen->add_option("--class-id", class_id, "class to generate")->required();
    gen->add_option("--count", count, "images to generate");
    gen->add_option("--num-steps", num_steps, "sampling steps (0 = full T)");
    gen->add_flag("--dump-initial-noise", dump_noise, "write raw x_T tensors");

    CLI::App* ev = app.add_subcommand("evaluate", "evaluate generated images");
    add_common(ev);
    ev->add_option("--images", images_dir, "directory of generated images")->required();
    ev->add_option("--expert", expert_path, "expert checkpoint")->required();

    CLI::App* sw = app.add_subcommand("sweep", "baseline vs aligned seed sweep");
    add_common(sw);
    sw->add_option("--data", data_dir, "dataset directory")->required();
    sw->add_option("--expert", expert_path, "expert checkpoint")->required();
    sw->add_option("--seeds", num_seeds, "number of generation seeds");
    sw->add_flag("--reuse", reuse, "reuse existing checkpoints in --out");

    CLI11_PARSE(app, argc, argv);

    try {
        if (mk->parsed()) return cmd_make_data(config_path, seed, seed_set, out);
        if (te->parsed()) return cmd_train_expert(config_path, seed, data_dir, out);
        if (td->parsed())
            return cmd_train_diffusion(config_path, seed, data_dir, expert_path, mode,
                                       align_target, out);
        if (gen->parsed())
            return cmd_generate(ckpt_path, class_id, count, seed, num_steps, dump_noise,
                                out);
        if (ev->parsed()) return cmd_evaluate(images_dir, expert_path, out);
        if (sw->parsed())
            return cmd_sweep(config_path, seed, data_dir, expert_path, num_seeds, reuse,
                             out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
