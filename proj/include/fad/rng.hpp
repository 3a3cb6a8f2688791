// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "fad/tensor.hpp"

namespace fad {

/// splitmix64 mixing step; used to derive stream seeds from the master seed.
uint64_t splitmix64(uint64_t& state);

/// Derives a child seed from a base seed and a stream name ("init", "noise", ...).
uint64_t derive_seed(uint64_t base, std::string_view name);

/// Derives a child seed from a base seed and integer words, e.g. (class_id, index).
uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> words);

/// Deterministic random stream: mt19937_64 engine with fixed, self-contained
/// uniform/Gaussian conversions so draws are bit-stable across platforms
/// (std::normal_distribution is implementation-defined and never used here).
class RngStream {
public:
    explicit RngStream(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1): top 53 bits of the engine output.
    double next_unit();

    /// Uniform in (0, 1]; safe to feed into log().
    double next_unit_open();

    /// Unbiased uniform integer in [0, n), rejection sampled.
    uint64_t next_below(uint64_t n);

    /// Standard normal pair via Box-Muller (two uniforms -> two normals).
    void next_gaussian_pair(double& a, double& b);

    /// Fills a tensor with iid standard normals, consuming uniforms pairwise.
    template <typename S>
    void fill_gaussian(Tensor<S>& t);

    /// Deterministic Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// The named streams a training run derives from its master seed. Baseline and
/// aligned runs draw the same (t, eps) sequences because each concern has its
/// own stream.
struct RngStreams {
    RngStream init;
    RngStream timestep;
    RngStream noise;
    RngStream shuffle;
    RngStream sampler;

    explicit RngStreams(uint64_t master_seed)
        : init(derive_seed(master_seed, "init")),
          timestep(derive_seed(master_seed, "timestep")),
          noise(derive_seed(master_seed, "noise")),
          shuffle(derive_seed(master_seed, "shuffle")),
          sampler(derive_seed(master_seed, "sampler")) {}
};

}  // namespace fad
