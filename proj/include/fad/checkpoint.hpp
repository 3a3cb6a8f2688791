// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fad/schedule.hpp"
#include "fad/tensor.hpp"

namespace fad {

inline constexpr int kCheckpointVersion = 1;

/// Single-file model container: a JSON manifest (model kind, config snapshot,
/// schedule arrays, format version) followed by named float32 tensors in
/// little-endian raw form. Round-trips bit-exactly.
struct Checkpoint {
    nlohmann::json manifest;
    std::vector<TensorRecord> tensors;

    const TensorRecord* find(const std::string& name) const;
    bool has(const std::string& name) const { return find(name) != nullptr; }

    std::string model_kind() const;

    /// Serializes; the manifest's "tensors" descriptor list is rebuilt.
    std::string to_bytes() const;
    void save(const std::filesystem::path& path) const;  // atomic

    /// Validates magic, version and payload lengths before touching data.
    static Checkpoint from_bytes(const std::string& bytes);
    static Checkpoint load(const std::filesystem::path& path);
};

/// Schedule <-> manifest JSON. alpha_bar is stored realized, so resumption
/// and sampling are bit-exact regardless of how beta was built.
nlohmann::json schedule_to_json(const NoiseSchedule& s, double beta_start,
                                double beta_end);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

}  // namespace fad
