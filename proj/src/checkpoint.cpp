// SPDX-License-Identifier: Apache-2.0

#include "fad/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "fad/fsio.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian; big-endian hosts unsupported");

namespace fad {

namespace {
constexpr char kMagic[8] = {'F', 'A', 'D', 'C', 'K', 'P', 'T', '1'};
}

const TensorRecord* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

std::string Checkpoint::model_kind() const {
    return manifest.value("model_kind", std::string());
}

std::string Checkpoint::to_bytes() const {
    nlohmann::json m = manifest;
    m["format_version"] = kCheckpointVersion;
    nlohmann::json descs = nlohmann::json::array();
    for (const auto& t : tensors) {
        nlohmann::json d;
        d["name"] = t.name;
        d["dtype"] = "float32";
        d["shape"] = t.value.shape();
        descs.push_back(std::move(d));
    }
    m["tensors"] = std::move(descs);
    const std::string manifest_bytes = m.dump();

    std::string out(kMagic, sizeof(kMagic));
    uint64_t len = manifest_bytes.size();
    out.append(reinterpret_cast<const char*>(&len), sizeof(len));
    out += manifest_bytes;
    for (const auto& t : tensors)
        out.append(reinterpret_cast<const char*>(t.value.data()),
                   t.value.numel() * sizeof(float));
    return out;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    atomic_write_file(path, to_bytes());
}

Checkpoint Checkpoint::from_bytes(const std::string& bytes) {
    if (bytes.size() < sizeof(kMagic) + sizeof(uint64_t) ||
        std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("corrupt checkpoint: bad magic");
    uint64_t mlen = 0;
    std::memcpy(&mlen, bytes.data() + sizeof(kMagic), sizeof(mlen));
    const size_t header = sizeof(kMagic) + sizeof(uint64_t);
    if (bytes.size() < header + mlen)
        throw std::runtime_error("corrupt checkpoint: truncated manifest");

    Checkpoint ckpt;
    ckpt.manifest = nlohmann::json::parse(bytes.substr(header, mlen));
    const int version = ckpt.manifest.value("format_version", -1);
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint format version " +
                                 std::to_string(version));

    // Length check across all payloads before any tensor is materialized.
    size_t expected = header + mlen;
    for (const auto& d : ckpt.manifest.at("tensors")) {
        if (d.value("dtype", std::string()) != "float32")
            throw std::runtime_error("corrupt checkpoint: unsupported dtype");
        size_t n = 1;
        for (int dim : d.at("shape").get<std::vector<int>>())
            n *= static_cast<size_t>(dim);
        expected += n * sizeof(float);
    }
    if (bytes.size() != expected)
        throw std::runtime_error("corrupt checkpoint: payload length mismatch (have " +
                                 std::to_string(bytes.size()) + ", need " +
                                 std::to_string(expected) + " bytes)");

    size_t off = header + mlen;
    for (const auto& d : ckpt.manifest.at("tensors")) {
        TensorRecord rec;
        rec.name = d.at("name").get<std::string>();
        rec.value = TensorF(d.at("shape").get<std::vector<int>>());
        std::memcpy(rec.value.data(), bytes.data() + off,
                    rec.value.numel() * sizeof(float));
        off += rec.value.numel() * sizeof(float);
        ckpt.tensors.push_back(std::move(rec));
    }
    return ckpt;
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    return from_bytes(read_file(path));
}

nlohmann::json schedule_to_json(const NoiseSchedule& s, double beta_start,
                                double beta_end) {
    nlohmann::json j;
    j["T"] = s.T;
    j["beta_start"] = beta_start;
    j["beta_end"] = beta_end;
    j["beta"] = s.beta;
    j["alpha_bar"] = s.alpha_bar;
    return j;
}

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
    NoiseSchedule s = schedule_from_betas(j.at("beta").get<std::vector<double>>());
    // Realized alpha_bar wins over recomputation, guarding bit-exact resume.
    const auto stored = j.at("alpha_bar").get<std::vector<double>>();
    if (stored.size() != s.alpha_bar.size())
        throw std::runtime_error("checkpoint schedule: alpha_bar length mismatch");
    s.alpha_bar = stored;
    if (s.T != j.at("T").get<int>())
        throw std::runtime_error("checkpoint schedule: T mismatch");
    return s;
}

}  // namespace fad
