// SPDX-License-Identifier: Apache-2.0

#include "fad/config.hpp"

#include <fstream>
#include <set>

#include "fad/fsio.hpp"

namespace fad {

std::string to_string(TrainMode m) {
    return m == TrainMode::baseline ? "baseline" : "aligned";
}

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "baseline") return TrainMode::baseline;
    if (s == "aligned") return TrainMode::aligned;
    throw std::invalid_argument("diffusion.mode must be 'baseline' or 'aligned', got '" +
                                s + "'");
}

namespace {

/// Applies known keys from a JSON object and rejects anything else.
class SectionReader {
public:
    SectionReader(nlohmann::json j, std::string name)
        : j_(std::move(j)), name_(std::move(name)) {}

    template <typename T>
    void read(const char* key, T& out) {
        known_.insert(key);
        if (j_.contains(key)) out = j_.at(key).get<T>();
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!known_.count(it.key()))
                throw std::invalid_argument("config: unknown key '" + name_ + "." +
                                            it.key() + "'");
    }

private:
    nlohmann::json j_;
    std::string name_;
    std::set<std::string> known_;
};

nlohmann::json section(const nlohmann::json& j, const char* key) {
    return j.contains(key) ? j.at(key) : nlohmann::json::object();
}

}  // namespace

UNetConfig RunConfig::unet_config() const {
    UNetConfig u;
    u.image_size = data.image_size;
    u.in_channels = 1;
    u.base_channels = base_channels;
    u.channel_multipliers = channel_multipliers;
    u.num_classes = data.num_classes;
    u.time_embed_dim = time_embed_dim;
    return u;
}

ExpertConfig RunConfig::expert_config() const {
    ExpertConfig e = expert_arch;
    e.in_channels = 1;
    e.num_classes = data.num_classes;
    e.image_size = data.image_size;
    return e;
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["data"] = {{"num_classes", data.num_classes},
                 {"samples_per_class", data.samples_per_class},
                 {"image_size", data.image_size},
                 {"seed", data.seed},
                 {"jitter", data.jitter},
                 {"noise_level", data.noise_level}};
    j["expert"] = {{"conv_channels", expert_arch.conv_channels},
                   {"epochs", expert_train.epochs},
                   {"batch_size", expert_train.batch_size},
                   {"learning_rate", expert_train.learning_rate}};
    j["diffusion"] = {{"T", T},
                      {"beta_start", beta_start},
                      {"beta_end", beta_end},
                      {"base_channels", base_channels},
                      {"channel_multipliers", channel_multipliers},
                      {"time_embed_dim", time_embed_dim},
                      {"epochs", diffusion_epochs},
                      {"batch_size", diffusion_batch_size},
                      {"learning_rate", diffusion_learning_rate},
                      {"mode", to_string(mode)}};
    j["loss"] = {{"w1", w1}, {"w2", w2}};
    j["align"] = {{"target", to_string(align_target)}};
    j["sample"] = {{"num_steps", sample_num_steps},
                   {"count_per_class", sample_count_per_class}};
    j["eval"] = {{"seeds", eval_seeds}, {"sample_per_class", eval_sample_per_class}};
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    static const std::set<std::string> kSections = {"data",  "expert", "diffusion",
                                                    "loss",  "align",  "sample",
                                                    "eval"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!kSections.count(it.key()))
            throw std::invalid_argument("config: unknown section '" + it.key() + "'");

    RunConfig c;
    {
        SectionReader r(section(j, "data"), "data");
        r.read("num_classes", c.data.num_classes);
        r.read("samples_per_class", c.data.samples_per_class);
        r.read("image_size", c.data.image_size);
        r.read("seed", c.data.seed);
        r.read("jitter", c.data.jitter);
        r.read("noise_level", c.data.noise_level);
        r.finish();
    }
    {
        SectionReader r(section(j, "expert"), "expert");
        r.read("conv_channels", c.expert_arch.conv_channels);
        r.read("epochs", c.expert_train.epochs);
        r.read("batch_size", c.expert_train.batch_size);
        r.read("learning_rate", c.expert_train.learning_rate);
        r.finish();
    }
    {
        SectionReader r(section(j, "diffusion"), "diffusion");
        r.read("T", c.T);
        r.read("beta_start", c.beta_start);
        r.read("beta_end", c.beta_end);
        r.read("base_channels", c.base_channels);
        r.read("channel_multipliers", c.channel_multipliers);
        r.read("time_embed_dim", c.time_embed_dim);
        r.read("epochs", c.diffusion_epochs);
        r.read("batch_size", c.diffusion_batch_size);
        r.read("learning_rate", c.diffusion_learning_rate);
        std::string mode = to_string(c.mode);
        r.read("mode", mode);
        c.mode = train_mode_from_string(mode);
        r.finish();
    }
    {
        SectionReader r(section(j, "loss"), "loss");
        r.read("w1", c.w1);
        r.read("w2", c.w2);
        r.finish();
    }
    {
        SectionReader r(section(j, "align"), "align");
        std::string target = to_string(c.align_target);
        r.read("target", target);
        c.align_target = align_target_from_string(target);
        r.finish();
    }
    {
        SectionReader r(section(j, "sample"), "sample");
        r.read("num_steps", c.sample_num_steps);
        r.read("count_per_class", c.sample_count_per_class);
        r.finish();
    }
    {
        SectionReader r(section(j, "eval"), "eval");
        r.read("seeds", c.eval_seeds);
        r.read("sample_per_class", c.eval_sample_per_class);
        r.finish();
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path));
    return from_json(j);
}

void RunConfig::validate() const {
    data.validate();
    if (T < 1) throw std::invalid_argument("config: diffusion.T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument("config: need 0 < beta_start <= beta_end < 1");
    if (diffusion_epochs < 1 || diffusion_batch_size < 1)
        throw std::invalid_argument("config: diffusion epochs/batch_size must be >= 1");
    if (diffusion_learning_rate <= 0.0)
        throw std::invalid_argument("config: diffusion.learning_rate must be > 0");
    if (!(w1 >= 0.0) || !(w2 >= 0.0) || !std::isfinite(w1) || !std::isfinite(w2))
        throw std::invalid_argument("config: loss weights must be finite and >= 0");
    if (sample_num_steps < 0 || sample_num_steps > T)
        throw std::invalid_argument("config: sample.num_steps must lie in [0, T]");
    if (sample_count_per_class < 1)
        throw std::invalid_argument("config: sample.count_per_class must be >= 1");
    if (eval_seeds < 1) throw std::invalid_argument("config: eval.seeds must be >= 1");
    if (eval_sample_per_class < 1)
        throw std::invalid_argument("config: eval.sample_per_class must be >= 1");
    unet_config().validate();
}

}  // namespace fad
