// SPDX-License-Identifier: Apache-2.0

#include "fad/unet.hpp"

#include <cmath>
#include <stdexcept>

namespace fad {

void UNetConfig::validate() const {
    if (levels() < 1) throw std::invalid_argument("unet: need at least one level");
    if (num_classes < 1) throw std::invalid_argument("unet: num_classes must be >= 1");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
        throw std::invalid_argument("unet: time_embed_dim must be even and >= 2");
    const int factor = 1 << (levels() - 1);
    if (image_size % factor != 0)
        throw std::invalid_argument("unet: image_size must be divisible by 2^(levels-1)");
    if (bottleneck_size() < 1) throw std::invalid_argument("unet: image too small for levels");
}

template <typename S>
Tensor<S> time_embedding_batch(const std::vector<int>& t, int dim) {
    if (dim % 2 != 0) throw std::invalid_argument("time_embedding: dim must be even");
    const int half = dim / 2;
    Tensor<S> out({static_cast<int>(t.size()), dim});
    for (size_t bi = 0; bi < t.size(); ++bi) {
        if (t[bi] < 0) throw std::invalid_argument("time_embedding: negative timestep");
        for (int i = 0; i < half; ++i) {
            const double freq = std::pow(10000.0, -2.0 * i / dim);
            const double phase = t[bi] * freq;
            out.at2(static_cast<int>(bi), i) = static_cast<S>(std::sin(phase));
            out.at2(static_cast<int>(bi), half + i) = static_cast<S>(std::cos(phase));
        }
    }
    return out;
}

template <typename S>
std::vector<S> time_embedding(int t, int dim) {
    Tensor<S> e = time_embedding_batch<S>({t}, dim);
    return std::vector<S>(e.data(), e.data() + e.numel());
}

// ---------------------------------------------------------------------------
// ResBlock
// ---------------------------------------------------------------------------

template <typename S>
ResBlock<S>::ResBlock(int cin, int cout, int emb_dim)
    : norm1(cin, nn::norm_groups_for(cin)),
      conv1(cin, cout, 3, 1, 1),
      emb_proj(emb_dim, cout),
      norm2(cout, nn::norm_groups_for(cout)),
      conv2(cout, cout, 3, 1, 1),
      channel_change(cin != cout) {
    if (channel_change) skip = nn::Conv2d<S>(cin, cout, 1, 1, 0);
}

template <typename S>
Tensor<S> ResBlock<S>::forward(const Tensor<S>& x, const Tensor<S>& emb_act,
                               ResBlockCache<S>& cache) const {
    cache.x = x;
    cache.h1 = norm1.forward(x, cache.gn1);
    cache.s1 = nn::silu_forward(cache.h1);
    Tensor<S> h = conv1.forward(cache.s1);
    Tensor<S> eb = emb_proj.forward(emb_act);
    nn::add_channel_bias(h, eb);
    cache.c1e = h;
    cache.h2 = norm2.forward(cache.c1e, cache.gn2);
    cache.s2 = nn::silu_forward(cache.h2);
    Tensor<S> y = conv2.forward(cache.s2);
    if (channel_change)
        y += skip.forward(x);
    else
        y += x;
    return y;
}

template <typename S>
Tensor<S> ResBlock<S>::backward(const Tensor<S>& dy, const ResBlockCache<S>& cache,
                                const Tensor<S>& emb_act, Tensor<S>& d_emb_act) {
    Tensor<S> d = conv2.backward(cache.s2, dy);
    d = nn::silu_backward(cache.h2, d);
    d = norm2.backward(cache.c1e, cache.gn2, d);
    Tensor<S> deb = nn::channel_bias_backward(d);
    d_emb_act += emb_proj.backward(emb_act, deb);
    d = conv1.backward(cache.s1, d);
    d = nn::silu_backward(cache.h1, d);
    Tensor<S> dx = norm1.backward(cache.x, cache.gn1, d);
    if (channel_change)
        dx += skip.backward(cache.x, dy);
    else
        dx += dy;
    return dx;
}

template <typename S>
void ResBlock<S>::collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    norm1.collect(prefix + ".norm1", out);
    conv1.collect(prefix + ".conv1", out);
    emb_proj.collect(prefix + ".emb_proj", out);
    norm2.collect(prefix + ".norm2", out);
    conv2.collect(prefix + ".conv2", out);
    if (channel_change) skip.collect(prefix + ".skip", out);
}

// ---------------------------------------------------------------------------
// UNet
// ---------------------------------------------------------------------------

template <typename S>
UNet<S>::UNet(UNetConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int levels = cfg_.levels();
    const int c0 = cfg_.level_channels(0);
    const int dim = cfg_.time_embed_dim;

    stem_ = nn::Conv2d<S>(cfg_.in_channels, c0, 3, 1, 1);
    time_mlp1_ = nn::Linear<S>(dim, dim);
    time_mlp2_ = nn::Linear<S>(dim, dim);
    class_embed_ = nn::Embedding<S>(cfg_.num_classes, dim);

    int prev = c0;
    for (int i = 0; i < levels; ++i) {
        const int ci = cfg_.level_channels(i);
        down_.push_back({ResBlock<S>(prev, ci, dim), ResBlock<S>(ci, ci, dim)});
        if (i < levels - 1) down_conv_.emplace_back(ci, ci, 3, 2, 1);
        prev = ci;
    }

    const int e = cfg_.bottleneck_channels();
    mid_ = {ResBlock<S>(e, e, dim), ResBlock<S>(e, e, dim)};

    up_.resize(static_cast<size_t>(levels));
    up_conv_.resize(static_cast<size_t>(levels - 1));
    for (int i = levels - 1; i >= 0; --i) {
        const int ci = cfg_.level_channels(i);
        up_[static_cast<size_t>(i)] = {ResBlock<S>(ci, ci, dim),
                                       ResBlock<S>(ci, ci, dim)};
        if (i < levels - 1)
            up_conv_[static_cast<size_t>(i)] =
                nn::Conv2d<S>(cfg_.level_channels(i + 1), ci, 3, 1, 1);
    }

    out_norm_ = nn::GroupNorm<S>(c0, nn::norm_groups_for(c0));
    out_conv_ = nn::Conv2d<S>(c0, cfg_.in_channels, 3, 1, 1);
}

template <typename S>
std::vector<ParamRef<S>> UNet<S>::params() {
    std::vector<ParamRef<S>> out;
    stem_.collect("unet.stem", out);
    time_mlp1_.collect("unet.time_mlp1", out);
    time_mlp2_.collect("unet.time_mlp2", out);
    class_embed_.collect("unet.class_embed", out);
    for (size_t i = 0; i < down_.size(); ++i) {
        const std::string p = "unet.down" + std::to_string(i);
        down_[i][0].collect(p + ".block0", out);
        down_[i][1].collect(p + ".block1", out);
        if (i < down_conv_.size()) down_conv_[i].collect(p + ".down", out);
    }
    mid_[0].collect("unet.mid.block0", out);
    mid_[1].collect("unet.mid.block1", out);
    for (int i = cfg_.levels() - 1; i >= 0; --i) {
        const std::string p = "unet.up" + std::to_string(i);
        if (i < cfg_.levels() - 1) up_conv_[static_cast<size_t>(i)].collect(p + ".in", out);
        up_[static_cast<size_t>(i)][0].collect(p + ".block0", out);
        up_[static_cast<size_t>(i)][1].collect(p + ".block1", out);
    }
    out_norm_.collect("unet.out_norm", out);
    out_conv_.collect("unet.out_conv", out);
    return out;
}

template <typename S>
void UNet<S>::init_params(RngStream& rng) {
    for (auto& p : params()) {
        const std::string& n = p.name;
        const bool is_weight = n.ends_with(".w") || n.ends_with(".table");
        if (is_weight)
            nn::init_normal(*p.value, rng, 0.02);
        else if (n.ends_with(".gamma"))
            p.value->fill(S(1));
        else
            p.value->zero();
    }
    // Zero output convolution: eps_pred == 0 before the first optimizer step.
    out_conv_.w.zero();
    out_conv_.b.zero();
}

template <typename S>
void UNet<S>::zero_grad() {
    for (auto& p : params()) p.grad->zero();
}

template <typename S>
size_t UNet<S>::param_count() {
    size_t n = 0;
    for (auto& p : params()) n += p.value->numel();
    return n;
}

template <typename S>
UNetOutput<S> UNet<S>::forward(const Tensor<S>& x, const std::vector<int>& t,
                               const std::vector<int>& class_ids,
                               UNetCache<S>& cache) const {
    const int batch = x.dim(0);
    if (x.ndim() != 4 || x.dim(1) != cfg_.in_channels || x.dim(2) != cfg_.image_size ||
        x.dim(3) != cfg_.image_size)
        throw std::invalid_argument("unet: input shape mismatch " + shape_string(x));
    if (static_cast<int>(t.size()) != batch || static_cast<int>(class_ids.size()) != batch)
        throw std::invalid_argument("unet: batch dims of x, t, class_id disagree");
    for (int c : class_ids)
        if (c < 0 || c >= cfg_.num_classes)
            throw std::out_of_range("unet: unknown class id " + std::to_string(c));

    const int levels = cfg_.levels();
    cache.t_ids = t;
    cache.class_ids = class_ids;
    cache.x = x;

    // Conditioning vector: time MLP plus learned class embedding.
    cache.sin_emb = time_embedding_batch<S>(t, cfg_.time_embed_dim);
    cache.m1 = time_mlp1_.forward(cache.sin_emb);
    cache.sm1 = nn::silu_forward(cache.m1);
    cache.emb_sum = time_mlp2_.forward(cache.sm1);
    cache.emb_sum += class_embed_.forward(class_ids);
    cache.emb_act = nn::silu_forward(cache.emb_sum);

    cache.down.resize(static_cast<size_t>(levels));
    cache.skips.resize(static_cast<size_t>(levels));

    cache.stem_out = stem_.forward(x);
    Tensor<S> h = cache.stem_out;
    for (int i = 0; i < levels; ++i) {
        h = down_[static_cast<size_t>(i)][0].forward(h, cache.emb_act,
                                                     cache.down[static_cast<size_t>(i)][0]);
        h = down_[static_cast<size_t>(i)][1].forward(h, cache.emb_act,
                                                     cache.down[static_cast<size_t>(i)][1]);
        cache.skips[static_cast<size_t>(i)] = h;
        if (i < levels - 1) h = down_conv_[static_cast<size_t>(i)].forward(h);
    }
    cache.bottleneck = cache.skips[static_cast<size_t>(levels - 1)];

    h = mid_[0].forward(h, cache.emb_act, cache.mid[0]);
    h = mid_[1].forward(h, cache.emb_act, cache.mid[1]);
    cache.mid_out = h;

    cache.up.resize(static_cast<size_t>(levels));
    cache.upsampled.resize(static_cast<size_t>(levels));
    for (int i = levels - 1; i >= 0; --i) {
        const size_t p = static_cast<size_t>(levels - 1 - i);
        if (i < levels - 1) {
            cache.upsampled[p] = nn::upsample2x_forward(h);
            h = up_conv_[static_cast<size_t>(i)].forward(cache.upsampled[p]);
        }
        h += cache.skips[static_cast<size_t>(i)];  // residual merge of the two paths
        h = up_[static_cast<size_t>(i)][0].forward(h, cache.emb_act, cache.up[p][0]);
        h = up_[static_cast<size_t>(i)][1].forward(h, cache.emb_act, cache.up[p][1]);
    }

    cache.final_h = h;
    cache.out_h = out_norm_.forward(cache.final_h, cache.out_gn);
    cache.out_s = nn::silu_forward(cache.out_h);

    UNetOutput<S> out;
    out.eps_pred = out_conv_.forward(cache.out_s);
    out.bottleneck = cache.bottleneck;
    return out;
}

template <typename S>
void UNet<S>::backward(const Tensor<S>& d_eps, const Tensor<S>* d_bottleneck,
                       UNetCache<S>& cache) {
    const int levels = cfg_.levels();
    Tensor<S> d_emb_act({cache.x.dim(0), cfg_.time_embed_dim});

    Tensor<S> d = out_conv_.backward(cache.out_s, d_eps);
    d = nn::silu_backward(cache.out_h, d);
    d = out_norm_.backward(cache.final_h, cache.out_gn, d);

    // Up path, reverse of processing order: level 0 first. The residual merge
    // sends the same gradient into the skip branch and the deeper path.
    std::vector<Tensor<S>> d_skip(static_cast<size_t>(levels));
    for (int i = 0; i < levels; ++i) {
        const size_t p = static_cast<size_t>(levels - 1 - i);
        d = up_[static_cast<size_t>(i)][1].backward(d, cache.up[p][1], cache.emb_act,
                                                    d_emb_act);
        d = up_[static_cast<size_t>(i)][0].backward(d, cache.up[p][0], cache.emb_act,
                                                    d_emb_act);
        d_skip[static_cast<size_t>(i)] = d;
        if (i < levels - 1) {
            d = up_conv_[static_cast<size_t>(i)].backward(cache.upsampled[p], d);
            d = nn::upsample2x_backward(d);
        }
        // at the deepest level, d is now the gradient w.r.t. mid_out
    }

    d = mid_[1].backward(d, cache.mid[1], cache.emb_act, d_emb_act);
    d = mid_[0].backward(d, cache.mid[0], cache.emb_act, d_emb_act);

    // The tap feeds the middle path, the deepest skip concat and (optionally)
    // the external alignment head; gradients from all consumers sum here.
    d += d_skip[static_cast<size_t>(levels - 1)];
    if (d_bottleneck) d += *d_bottleneck;

    for (int i = levels - 1; i >= 0; --i) {
        d = down_[static_cast<size_t>(i)][1].backward(d, cache.down[static_cast<size_t>(i)][1],
                                                      cache.emb_act, d_emb_act);
        d = down_[static_cast<size_t>(i)][0].backward(d, cache.down[static_cast<size_t>(i)][0],
                                                      cache.emb_act, d_emb_act);
        if (i > 0) {
            d = down_conv_[static_cast<size_t>(i - 1)].backward(
                cache.skips[static_cast<size_t>(i - 1)], d);
            d += d_skip[static_cast<size_t>(i - 1)];
        }
    }
    stem_.backward(cache.x, d);

    // Conditioning pipeline.
    Tensor<S> d_sum = nn::silu_backward(cache.emb_sum, d_emb_act);
    class_embed_.backward(cache.class_ids, d_sum);
    Tensor<S> dm = time_mlp2_.backward(cache.sm1, d_sum);
    dm = nn::silu_backward(cache.m1, dm);
    time_mlp1_.backward(cache.sin_emb, dm);
}

size_t unet_param_count(const UNetConfig& cfg) {
    auto conv = [](int cin, int cout, int k) {
        return static_cast<size_t>(cin) * cout * k * k + cout;
    };
    auto gn = [](int c) { return static_cast<size_t>(2) * c; };
    auto lin = [](int in, int out) { return static_cast<size_t>(in) * out + out; };
    auto rb = [&](int cin, int cout, int d) {
        size_t n = gn(cin) + conv(cin, cout, 3) + lin(d, cout) + gn(cout) +
                   conv(cout, cout, 3);
        if (cin != cout) n += conv(cin, cout, 1);
        return n;
    };

    const int levels = cfg.levels();
    const int c0 = cfg.level_channels(0);
    const int d = cfg.time_embed_dim;
    const int e = cfg.bottleneck_channels();

    size_t n = conv(cfg.in_channels, c0, 3);                     // stem
    n += lin(d, d) * 2;                                          // time MLP
    n += static_cast<size_t>(cfg.num_classes) * d;               // class table
    int prev = c0;
    for (int i = 0; i < levels; ++i) {
        const int ci = cfg.level_channels(i);
        n += rb(prev, ci, d) + rb(ci, ci, d);
        if (i < levels - 1) n += conv(ci, ci, 3);
        prev = ci;
    }
    n += 2 * rb(e, e, d);                                        // middle
    for (int i = levels - 1; i >= 0; --i) {
        const int ci = cfg.level_channels(i);
        n += 2 * rb(ci, ci, d);
        if (i < levels - 1) n += conv(cfg.level_channels(i + 1), ci, 3);
    }
    n += gn(c0) + conv(c0, cfg.in_channels, 3);                  // output head
    return n;
}

template Tensor<float> time_embedding_batch<float>(const std::vector<int>&, int);
template Tensor<double> time_embedding_batch<double>(const std::vector<int>&, int);
template std::vector<float> time_embedding<float>(int, int);
template std::vector<double> time_embedding<double>(int, int);
template struct ResBlock<float>;
template struct ResBlock<double>;
template class UNet<float>;
template class UNet<double>;

}  // namespace fad
