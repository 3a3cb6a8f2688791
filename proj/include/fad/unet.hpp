// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <vector>

#include "fad/nn.hpp"

namespace fad {

struct UNetConfig {
    int image_size = 32;
    int in_channels = 1;
    int base_channels = 32;
    std::vector<int> channel_multipliers = {1, 2, 4};
    int num_classes = 8;
    int time_embed_dim = 128;

    int levels() const { return static_cast<int>(channel_multipliers.size()); }
    int level_channels(int i) const {
        return base_channels * channel_multipliers[static_cast<size_t>(i)];
    }
    /// E_d: channel count of the bottleneck feature tap.
    int bottleneck_channels() const { return level_channels(levels() - 1); }
    /// H' = W': spatial side of the bottleneck tap.
    int bottleneck_size() const { return image_size >> (levels() - 1); }

    void validate() const;
};

/// Both outputs of one forward pass: the noise estimate and the activation at
/// the end of the downsampling path (the alignment feature tap).
template <typename S>
struct UNetOutput {
    Tensor<S> eps_pred;    // (B, in_channels, H, W)
    Tensor<S> bottleneck;  // (B, E_d, H', W')
};

/// Deterministic sinusoidal position embedding; sin half then cos half,
/// frequency i (of dim/2) scaled by base^(-2i/dim).
template <typename S>
Tensor<S> time_embedding_batch(const std::vector<int>& t, int dim);

/// Convenience single-timestep form used by tests.
template <typename S>
std::vector<S> time_embedding(int t, int dim);

template <typename S>
struct ResBlockCache {
    Tensor<S> x;    // block input
    nn::GroupNormCache<S> gn1;
    Tensor<S> h1;   // norm1 output (silu input)
    Tensor<S> s1;   // conv1 input
    Tensor<S> c1e;  // conv1 output + embedding bias (norm2 input)
    nn::GroupNormCache<S> gn2;
    Tensor<S> h2;   // norm2 output
    Tensor<S> s2;   // conv2 input
};

/// norm -> silu -> conv -> +emb bias -> norm -> silu -> conv, plus residual
/// skip (1x1 conv when the channel count changes).
template <typename S>
struct ResBlock {
    nn::GroupNorm<S> norm1;
    nn::Conv2d<S> conv1;
    nn::Linear<S> emb_proj;
    nn::GroupNorm<S> norm2;
    nn::Conv2d<S> conv2;
    nn::Conv2d<S> skip;
    bool channel_change = false;

    ResBlock() = default;
    ResBlock(int cin, int cout, int emb_dim);

    Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& emb_act,
                      ResBlockCache<S>& cache) const;
    /// Returns dx; accumulates parameter grads and the shared embedding grad.
    Tensor<S> backward(const Tensor<S>& dy, const ResBlockCache<S>& cache,
                       const Tensor<S>& emb_act, Tensor<S>& d_emb_act);
    void collect(const std::string& prefix, std::vector<ParamRef<S>>& out);
};

template <typename S>
struct UNetCache {
    std::vector<int> t_ids, class_ids;
    Tensor<S> x;
    Tensor<S> sin_emb, m1, sm1, emb_sum, emb_act;  // embedding pipeline
    Tensor<S> stem_out;
    std::vector<std::array<ResBlockCache<S>, 2>> down;  // per level
    std::vector<Tensor<S>> skips;                       // per level output
    std::array<ResBlockCache<S>, 2> mid;
    Tensor<S> mid_out;
    // Up path, stored in processing order (deepest level first).
    std::vector<std::array<ResBlockCache<S>, 2>> up;  // per processed level
    std::vector<Tensor<S>> upsampled;                 // transition conv inputs
    Tensor<S> final_h;
    nn::GroupNormCache<S> out_gn;
    Tensor<S> out_h, out_s;
    Tensor<S> bottleneck;
};

/// Class-conditioned denoising U-Net. Forward passes never mutate parameters;
/// gradient buffers are touched only by backward() on the training thread.
template <typename S>
class UNet {
public:
    explicit UNet(UNetConfig cfg);

    /// normal(0, 0.02) weights, zero biases, zero final output convolution.
    void init_params(RngStream& rng);

    UNetOutput<S> forward(const Tensor<S>& x, const std::vector<int>& t,
                          const std::vector<int>& class_ids, UNetCache<S>& cache) const;

    /// d_bottleneck may be null (noise loss only). Accumulates into grads.
    void backward(const Tensor<S>& d_eps, const Tensor<S>* d_bottleneck,
                  UNetCache<S>& cache);

    std::vector<ParamRef<S>> params();
    void zero_grad();
    size_t param_count();

    const UNetConfig& config() const { return cfg_; }

private:
    UNetConfig cfg_;
    nn::Conv2d<S> stem_;
    nn::Linear<S> time_mlp1_, time_mlp2_;
    nn::Embedding<S> class_embed_;
    std::vector<std::array<ResBlock<S>, 2>> down_;
    std::vector<nn::Conv2d<S>> down_conv_;
    std::array<ResBlock<S>, 2> mid_;
    std::vector<std::array<ResBlock<S>, 2>> up_;  // indexed by level
    // up_conv_[i]: post-upsample conv of the transition into level i, mapping
    // the deeper level's channels onto level i so the skip adds residually.
    std::vector<nn::Conv2d<S>> up_conv_;
    nn::GroupNorm<S> out_norm_;
    nn::Conv2d<S> out_conv_;
};

/// Closed-form parameter count implied by the architecture; unit tests assert
/// it equals the allocated count.
size_t unet_param_count(const UNetConfig& cfg);

using UNetF = UNet<float>;

}  // namespace fad
