// SPDX-License-Identifier: Apache-2.0

#include "fad/expert.hpp"

#include <cmath>
#include <stdexcept>

#include "fad/optimizer.hpp"

namespace fad {

void ExpertConfig::validate() const {
    if (conv_channels.empty()) throw std::invalid_argument("expert: no conv channels");
    if (num_classes < 2) throw std::invalid_argument("expert: num_classes must be >= 2");
    if (image_size % (1 << conv_channels.size()) != 0 &&
        image_size >> conv_channels.size() < 1)
        throw std::invalid_argument("expert: image too small for conv stack");
}

template <typename S>
Expert<S>::Expert(ExpertConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    int prev = cfg_.in_channels;
    for (int c : cfg_.conv_channels) {
        convs_.emplace_back(prev, c, 3, 2, 1);
        prev = c;
    }
    head_ = nn::Linear<S>(cfg_.feature_dim(), cfg_.num_classes);
}

template <typename S>
ExpertOutput<S> Expert<S>::forward(const Tensor<S>& x, ExpertCache<S>& cache) const {
    if (x.ndim() != 4 || x.dim(1) != cfg_.in_channels)
        throw std::invalid_argument("expert: input shape mismatch " + shape_string(x));
    cache.conv_in.clear();
    cache.pre_act.clear();
    Tensor<S> h = x;
    for (const auto& conv : convs_) {
        cache.conv_in.push_back(h);
        Tensor<S> c = conv.forward(h);
        cache.pre_act.push_back(c);
        h = nn::silu_forward(c);
    }
    cache.feat_shape = h.shape();
    ExpertOutput<S> out;
    out.pooled = nn::global_avg_pool_forward(h);
    cache.pooled = out.pooled;
    out.logits = head_.forward(out.pooled);
    return out;
}

template <typename S>
void Expert<S>::backward(const Tensor<S>& dlogits, const ExpertCache<S>& cache) {
    Tensor<S> d = head_.backward(cache.pooled, dlogits);
    Tensor<S> dh = nn::global_avg_pool_backward(cache.feat_shape, d);
    for (int i = static_cast<int>(convs_.size()) - 1; i >= 0; --i) {
        dh = nn::silu_backward(cache.pre_act[static_cast<size_t>(i)], dh);
        dh = convs_[static_cast<size_t>(i)].backward(cache.conv_in[static_cast<size_t>(i)],
                                                     dh);
    }
}

template <typename S>
void Expert<S>::init_params(RngStream& rng) {
    for (auto& conv : convs_) {
        const double fan_in = static_cast<double>(conv.w.dim(1)) * conv.w.dim(2) *
                              conv.w.dim(3);
        nn::init_normal(conv.w, rng, std::sqrt(2.0 / fan_in));
        conv.b.zero();
    }
    nn::init_normal(head_.w, rng, std::sqrt(1.0 / cfg_.feature_dim()));
    head_.b.zero();
}

template <typename S>
std::vector<ParamRef<S>> Expert<S>::params() {
    std::vector<ParamRef<S>> out;
    for (size_t i = 0; i < convs_.size(); ++i)
        convs_[i].collect("expert.conv" + std::to_string(i), out);
    head_.collect("expert.head", out);
    return out;
}

template <typename S>
void Expert<S>::zero_grad() {
    for (auto& p : params()) p.grad->zero();
}

template <typename S>
int argmax_lowest(const S* values, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

template <typename S>
int classify(const Expert<S>& expert, const Tensor<S>& image) {
    ExpertOutput<S> out = expert.forward(image);
    return argmax_lowest(out.logits.data(), out.logits.dim(1));
}

namespace {

Tensor<float> gather_batch(const std::vector<LabeledImage>& images,
                           const std::vector<size_t>& order, size_t begin, size_t end,
                           std::vector<int>& labels) {
    const auto& first = images[order[begin]].pixels;
    const int h = first.dim(1), w = first.dim(2);
    Tensor<float> batch({static_cast<int>(end - begin), 1, h, w});
    labels.clear();
    for (size_t i = begin; i < end; ++i) {
        const LabeledImage& img = images[order[i]];
        std::copy(img.pixels.data(), img.pixels.data() + img.pixels.numel(),
                  batch.data() + (i - begin) * img.pixels.numel());
        labels.push_back(img.label);
    }
    return batch;
}

}  // namespace

ExpertMetrics train_expert(Expert<float>& expert, const Dataset& dataset,
                           const ExpertTrainConfig& cfg, uint64_t seed) {
    if (dataset.num_classes < 2)
        throw std::invalid_argument("train_expert: need at least two classes");
    const auto counts = dataset.train_count_per_class();
    for (size_t c = 0; c < counts.size(); ++c)
        if (counts[c] == 0)
            throw std::invalid_argument("train_expert: class " + std::to_string(c) +
                                        " has zero samples");
    if (dataset.val.empty())
        throw std::invalid_argument("train_expert: empty validation split");

    RngStream init_rng(derive_seed(seed, "init"));
    RngStream shuffle_rng(derive_seed(seed, "shuffle"));
    expert.init_params(init_rng);

    Adam<float> opt(cfg.learning_rate);
    auto params = expert.params();
    opt.attach(params);

    ExpertMetrics metrics;
    std::vector<size_t> order(dataset.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        size_t steps = 0;
        for (size_t begin = 0; begin < order.size();
             begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t end =
                std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
            std::vector<int> labels;
            Tensor<float> batch = gather_batch(dataset.train, order, begin, end, labels);
            ExpertCache<float> cache;
            ExpertOutput<float> out = expert.forward(batch, cache);
            Tensor<float> dlogits;
            const float loss = nn::softmax_cross_entropy(out.logits, labels, &dlogits);
            expert.zero_grad();
            expert.backward(dlogits, cache);
            opt.step(params);
            loss_sum += loss;
            ++steps;
        }
        metrics.train_loss.push_back(loss_sum / static_cast<double>(steps));

        size_t correct = 0;
        for (const LabeledImage& img : dataset.val) {
            Tensor<float> one({1, 1, img.pixels.dim(1), img.pixels.dim(2)});
            std::copy(img.pixels.data(), img.pixels.data() + img.pixels.numel(),
                      one.data());
            if (classify(expert, one) == img.label) ++correct;
        }
        metrics.val_accuracy.push_back(static_cast<double>(correct) /
                                       static_cast<double>(dataset.val.size()));
    }
    return metrics;
}

template class Expert<float>;
template class Expert<double>;
template int argmax_lowest(const float*, int);
template int argmax_lowest(const double*, int);
template int classify(const Expert<float>&, const Tensor<float>&);
template int classify(const Expert<double>&, const Tensor<double>&);

}  // namespace fad
