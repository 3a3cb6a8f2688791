// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "fad/data.hpp"
#include "fad/nn.hpp"

namespace fad {

struct ExpertConfig {
    int in_channels = 1;
    std::vector<int> conv_channels = {16, 32, 64};
    int num_classes = 8;
    int image_size = 32;

    /// E_e: dimensionality of the pooled feature vector.
    int feature_dim() const { return conv_channels.back(); }
    void validate() const;
};

template <typename S>
struct ExpertOutput {
    Tensor<S> logits;  // (B, num_classes)
    Tensor<S> pooled;  // (B, E_e): global spatial mean of the last conv map
};

template <typename S>
struct ExpertCache {
    std::vector<Tensor<S>> conv_in;   // input of each conv
    std::vector<Tensor<S>> pre_act;   // conv outputs (silu inputs)
    std::vector<int> feat_shape;      // shape of the pooled feature map
    Tensor<S> pooled;
};

/// Small stride-2 CNN classifier consuming images in diffusion space [-1, 1].
/// Frozen during diffusion training; the pooled features are the alignment
/// target and the logits judge generated images.
template <typename S>
class Expert {
public:
    explicit Expert(ExpertConfig cfg);

    ExpertOutput<S> forward(const Tensor<S>& x, ExpertCache<S>& cache) const;
    ExpertOutput<S> forward(const Tensor<S>& x) const {
        ExpertCache<S> scratch;
        return forward(x, scratch);
    }

    /// Training-time backward from logits gradient; accumulates into grads.
    void backward(const Tensor<S>& dlogits, const ExpertCache<S>& cache);

    /// Kaiming-style init for from-scratch training.
    void init_params(RngStream& rng);

    std::vector<ParamRef<S>> params();
    void zero_grad();

    const ExpertConfig& config() const { return cfg_; }

private:
    ExpertConfig cfg_;
    std::vector<nn::Conv2d<S>> convs_;
    nn::Linear<S> head_;
};

using ExpertF = Expert<float>;

/// Argmax with ties broken toward the lowest class index.
template <typename S>
int argmax_lowest(const S* values, int n);

/// Classifies one (1, C, H, W) image or each row of a batch.
template <typename S>
int classify(const Expert<S>& expert, const Tensor<S>& image);

/// Desk-scale training profile. The large-scale reference regime this stands
/// in for fine-tuned a pretrained backbone at 224x224 with lr 1e-4, batch 64,
/// 15 epochs and weight decay 0.7; those values are documentation only and
/// deliberately not adopted here.
struct ExpertTrainConfig {
    int epochs = 10;
    int batch_size = 64;
    double learning_rate = 1e-3;
};

struct ExpertMetrics {
    std::vector<double> train_loss;    // per epoch
    std::vector<double> val_accuracy;  // per epoch
};

/// Trains the expert on the dataset's train split; deterministic given seed.
/// Throws on a degenerate dataset (fewer than two classes or an empty class).
ExpertMetrics train_expert(Expert<float>& expert, const Dataset& dataset,
                           const ExpertTrainConfig& cfg, uint64_t seed);

}  // namespace fad
