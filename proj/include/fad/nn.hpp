// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "fad/rng.hpp"
#include "fad/tensor.hpp"

namespace fad::nn {

/// Fills a tensor with iid normal(0, std) draws.
template <typename S>
void init_normal(Tensor<S>& t, RngStream& rng, double std_dev);

// ---------------------------------------------------------------------------
// Stateless ops. Backward functions accumulate into parameter gradients and
// return (or write) input gradients; callers keep the forward inputs alive.
// ---------------------------------------------------------------------------

/// 2D convolution, NCHW. x (B,Cin,H,W), w (Cout,Cin,kh,kw), b (Cout).
template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                         int stride, int pad);

template <typename S>
Tensor<S> conv2d_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy,
                          int stride, int pad, Tensor<S>& dw, Tensor<S>& db);

/// y = x * silu_sigmoid(x); smooth activation used throughout.
template <typename S>
Tensor<S> silu_forward(const Tensor<S>& x);

template <typename S>
Tensor<S> silu_backward(const Tensor<S>& x, const Tensor<S>& dy);

/// Group normalization over channel groups, per sample. gamma/beta per channel.
template <typename S>
struct GroupNormCache {
    Tensor<S> mean;  // (B, G)
    Tensor<S> rstd;  // (B, G)
};

template <typename S>
Tensor<S> group_norm_forward(const Tensor<S>& x, const Tensor<S>& gamma,
                             const Tensor<S>& beta, int groups, double eps,
                             GroupNormCache<S>& cache);

template <typename S>
Tensor<S> group_norm_backward(const Tensor<S>& x, const Tensor<S>& gamma, int groups,
                              const GroupNormCache<S>& cache, const Tensor<S>& dy,
                              Tensor<S>& dgamma, Tensor<S>& dbeta);

/// Fully connected layer: x (B,in), w (out,in), b (out) -> y (B,out).
template <typename S>
Tensor<S> linear_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b);

template <typename S>
Tensor<S> linear_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy,
                          Tensor<S>& dw, Tensor<S>& db);

/// Embedding lookup: table (N,D), ids (B) -> y (B,D).
template <typename S>
Tensor<S> embedding_forward(const Tensor<S>& table, const std::vector<int>& ids);

template <typename S>
void embedding_backward(const std::vector<int>& ids, const Tensor<S>& dy,
                        Tensor<S>& dtable);

/// Global spatial mean: (B,C,H,W) -> (B,C). The "adaptive average pool to 1x1".
template <typename S>
Tensor<S> global_avg_pool_forward(const Tensor<S>& x);

template <typename S>
Tensor<S> global_avg_pool_backward(const std::vector<int>& x_shape, const Tensor<S>& dy);

/// Nearest-neighbour 2x upsampling.
template <typename S>
Tensor<S> upsample2x_forward(const Tensor<S>& x);

template <typename S>
Tensor<S> upsample2x_backward(const Tensor<S>& dy);

/// Channel concatenation [a; b] and its two-way split for the backward pass.
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
void split_channels(const Tensor<S>& d, int c_a, Tensor<S>& da, Tensor<S>& db);

/// Adds v[b][c] to every spatial position of channel c (embedding injection).
template <typename S>
void add_channel_bias(Tensor<S>& x, const Tensor<S>& v);

template <typename S>
Tensor<S> channel_bias_backward(const Tensor<S>& dy);

/// Mean cross-entropy over the batch from raw logits; writes dlogits.
template <typename S>
S softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels,
                        Tensor<S>* dlogits);

// ---------------------------------------------------------------------------
// Parameterized layers. Gradients live next to the weights; backward is only
// ever called from the single training thread.
// ---------------------------------------------------------------------------

template <typename S>
struct Conv2d {
    Tensor<S> w, b, gw, gb;
    int stride = 1;
    int pad = 1;

    Conv2d() = default;
    Conv2d(int cin, int cout, int k, int stride_, int pad_)
        : w({cout, cin, k, k}), b({cout}), gw({cout, cin, k, k}), gb({cout}),
          stride(stride_), pad(pad_) {}

    Tensor<S> forward(const Tensor<S>& x) const { return conv2d_forward(x, w, b, stride, pad); }
    Tensor<S> backward(const Tensor<S>& x, const Tensor<S>& dy) {
        return conv2d_backward(x, w, dy, stride, pad, gw, gb);
    }
    void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
        out.push_back({prefix + ".w", &w, &gw});
        out.push_back({prefix + ".b", &b, &gb});
    }
};

template <typename S>
struct Linear {
    Tensor<S> w, b, gw, gb;

    Linear() = default;
    Linear(int in, int out) : w({out, in}), b({out}), gw({out, in}), gb({out}) {}

    Tensor<S> forward(const Tensor<S>& x) const { return linear_forward(x, w, b); }
    Tensor<S> backward(const Tensor<S>& x, const Tensor<S>& dy) {
        return linear_backward(x, w, dy, gw, gb);
    }
    void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
        out.push_back({prefix + ".w", &w, &gw});
        out.push_back({prefix + ".b", &b, &gb});
    }
};

template <typename S>
struct GroupNorm {
    Tensor<S> gamma, beta, ggamma, gbeta;
    int groups = 1;
    double eps = 1e-5;

    GroupNorm() = default;
    GroupNorm(int channels, int groups_)
        : gamma({channels}), beta({channels}), ggamma({channels}), gbeta({channels}),
          groups(groups_) {
        gamma.fill(S(1));
    }

    Tensor<S> forward(const Tensor<S>& x, GroupNormCache<S>& cache) const {
        return group_norm_forward(x, gamma, beta, groups, eps, cache);
    }
    Tensor<S> backward(const Tensor<S>& x, const GroupNormCache<S>& cache,
                       const Tensor<S>& dy) {
        return group_norm_backward(x, gamma, groups, cache, dy, ggamma, gbeta);
    }
    void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
        out.push_back({prefix + ".gamma", &gamma, &ggamma});
        out.push_back({prefix + ".beta", &beta, &gbeta});
    }
};

template <typename S>
struct Embedding {
    Tensor<S> table, gtable;

    Embedding() = default;
    Embedding(int count, int dim) : table({count, dim}), gtable({count, dim}) {}

    Tensor<S> forward(const std::vector<int>& ids) const {
        return embedding_forward(table, ids);
    }
    void backward(const std::vector<int>& ids, const Tensor<S>& dy) {
        embedding_backward(ids, dy, gtable);
    }
    void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
        out.push_back({prefix + ".table", &table, &gtable});
    }
};

/// Largest of {8, 4, 2, 1} dividing the channel count.
int norm_groups_for(int channels);

}  // namespace fad::nn
