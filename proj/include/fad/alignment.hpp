// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "fad/rng.hpp"
#include "fad/tensor.hpp"

namespace fad {

enum class AlignTarget { noisy, clean };

std::string to_string(AlignTarget t);
AlignTarget align_target_from_string(const std::string& s);

/// Trainable projection from expert feature space (E_e) into the diffusion
/// bottleneck space (E_d), plus the loss weights. Trained jointly with the
/// U-Net; saved in training checkpoints, never needed at generation time.
template <typename S>
struct AlignmentHead {
    Tensor<S> w_p;    // (E_e, E_d)
    Tensor<S> g_w_p;  // gradient
    double w1 = 1.0;
    double w2 = 1.0;
    AlignTarget target_mode = AlignTarget::noisy;

    AlignmentHead() = default;
    AlignmentHead(int expert_dim, int bottleneck_dim)
        : w_p({expert_dim, bottleneck_dim}), g_w_p({expert_dim, bottleneck_dim}) {}

    /// normal(0, 1/sqrt(E_e)).
    void init_params(RngStream& rng);

    std::vector<ParamRef<S>> params();
};

/// Numerical floor for the cosine denominators; zero vectors yield cosine 0
/// instead of NaN.
inline constexpr double kCosineEpsilon = 1e-8;

/// Exact global spatial mean: (B, E, H', W') -> (B, E).
template <typename S>
Tensor<S> pool_bottleneck(const Tensor<S>& bottleneck);

template <typename S>
S cosine_similarity(const S* a, const S* b, int n);

template <typename S>
S cosine_similarity(const std::vector<S>& a, const std::vector<S>& b);

/// L_align = -(1/B) sum_b cos(expert_pooled[b] * W_p, bottleneck_pooled[b]).
/// The expert features are constants; gradients reach only W_p and the
/// bottleneck. Gradient outputs are optional and accumulated when present.
template <typename S>
S alignment_loss(const Tensor<S>& expert_pooled, const Tensor<S>& bottleneck_pooled,
                 const Tensor<S>& w_p, Tensor<S>* d_bottleneck_pooled = nullptr,
                 Tensor<S>* d_w_p = nullptr, double scale = 1.0);

/// Mean squared error over every element of the pair.
template <typename S>
S noise_loss(const Tensor<S>& eps, const Tensor<S>& eps_pred,
             Tensor<S>* d_eps_pred = nullptr, double scale = 1.0);

/// L = w1 * l_noise + w2 * l_align, exactly.
double combined_loss(double l_noise, double l_align, double w1, double w2);

struct LossBreakdown {
    double l_noise = 0.0;
    double l_align = 0.0;
    double l_total = 0.0;
};

}  // namespace fad
