// SPDX-License-Identifier: Apache-2.0

#include "fad/rng.hpp"

#include <cmath>

namespace fad {

uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

static uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t derive_seed(uint64_t base, std::string_view name) {
    uint64_t state = base ^ fnv1a64(name);
    return splitmix64(state);
}

uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> words) {
    uint64_t state = base;
    uint64_t out = splitmix64(state);
    for (uint64_t w : words) {
        state ^= w;
        out = splitmix64(state);
    }
    return out;
}

double RngStream::next_unit() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::next_unit_open() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
}

uint64_t RngStream::next_below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_below(0)");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
}

void RngStream::next_gaussian_pair(double& a, double& b) {
    const double u1 = next_unit_open();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    a = r * std::cos(theta);
    b = r * std::sin(theta);
}

template <typename S>
void RngStream::fill_gaussian(Tensor<S>& t) {
    const size_t n = t.numel();
    size_t i = 0;
    double a, b;
    for (; i + 1 < n; i += 2) {
        next_gaussian_pair(a, b);
        t[i] = static_cast<S>(a);
        t[i + 1] = static_cast<S>(b);
    }
    if (i < n) {
        next_gaussian_pair(a, b);
        t[i] = static_cast<S>(a);
    }
}

template void RngStream::fill_gaussian<float>(Tensor<float>&);
template void RngStream::fill_gaussian<double>(Tensor<double>&);

}  // namespace fad
