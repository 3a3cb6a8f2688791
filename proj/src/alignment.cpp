// SPDX-License-Identifier: Apache-2.0

#include "fad/alignment.hpp"

#include <cmath>
#include <stdexcept>

#include "fad/nn.hpp"

namespace fad {

std::string to_string(AlignTarget t) {
    return t == AlignTarget::noisy ? "noisy" : "clean";
}

AlignTarget align_target_from_string(const std::string& s) {
    if (s == "noisy") return AlignTarget::noisy;
    if (s == "clean") return AlignTarget::clean;
    throw std::invalid_argument("align.target must be 'noisy' or 'clean', got '" + s + "'");
}

template <typename S>
void AlignmentHead<S>::init_params(RngStream& rng) {
    nn::init_normal(w_p, rng, 1.0 / std::sqrt(static_cast<double>(w_p.dim(0))));
}

template <typename S>
std::vector<ParamRef<S>> AlignmentHead<S>::params() {
    return {{"align.w_p", &w_p, &g_w_p}};
}

template <typename S>
Tensor<S> pool_bottleneck(const Tensor<S>& bottleneck) {
    if (bottleneck.ndim() != 4 || bottleneck.dim(2) < 1 || bottleneck.dim(3) < 1)
        throw std::invalid_argument("pool_bottleneck: expected (B, E, H', W')");
    return nn::global_avg_pool_forward(bottleneck);
}

template <typename S>
S cosine_similarity(const S* a, const S* b, int n) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < n; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    const double da = std::max(std::sqrt(na), kCosineEpsilon);
    const double db = std::max(std::sqrt(nb), kCosineEpsilon);
    return static_cast<S>(dot / (da * db));
}

template <typename S>
S cosine_similarity(const std::vector<S>& a, const std::vector<S>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    return cosine_similarity(a.data(), b.data(), static_cast<int>(a.size()));
}

template <typename S>
S alignment_loss(const Tensor<S>& expert_pooled, const Tensor<S>& bottleneck_pooled,
                 const Tensor<S>& w_p, Tensor<S>* d_bottleneck_pooled, Tensor<S>* d_w_p,
                 double scale) {
    const int batch = expert_pooled.dim(0);
    const int e_e = expert_pooled.dim(1);
    const int e_d = bottleneck_pooled.dim(1);
    if (bottleneck_pooled.dim(0) != batch)
        throw std::invalid_argument("alignment_loss: batch mismatch");
    if (w_p.dim(0) != e_e || w_p.dim(1) != e_d)
        throw std::invalid_argument("alignment_loss: W_p shape mismatch");

    std::vector<double> proj(static_cast<size_t>(e_d));
    double loss = 0.0;
    for (int bi = 0; bi < batch; ++bi) {
        const S* ep = expert_pooled.data() + static_cast<size_t>(bi) * e_e;
        const S* q = bottleneck_pooled.data() + static_cast<size_t>(bi) * e_d;
        for (int d = 0; d < e_d; ++d) {
            double s = 0.0;
            for (int e = 0; e < e_e; ++e)
                s += static_cast<double>(ep[e]) * w_p.at2(e, d);
            proj[static_cast<size_t>(d)] = s;
        }
        double dot = 0.0, np2 = 0.0, nq2 = 0.0;
        for (int d = 0; d < e_d; ++d) {
            dot += proj[static_cast<size_t>(d)] * q[d];
            np2 += proj[static_cast<size_t>(d)] * proj[static_cast<size_t>(d)];
            nq2 += static_cast<double>(q[d]) * q[d];
        }
        const double np_raw = std::sqrt(np2), nq_raw = std::sqrt(nq2);
        const double np = std::max(np_raw, kCosineEpsilon);
        const double nq = std::max(nq_raw, kCosineEpsilon);
        const double cos_b = dot / (np * nq);
        loss -= cos_b;

        if (d_bottleneck_pooled || d_w_p) {
            // d cos / d proj = q/(np*nq) - cos * proj/np^2  (zero if clamped)
            // d cos / d q    = proj/(np*nq) - cos * q/nq^2  (zero if clamped)
            const double g = -scale / batch;
            if (d_bottleneck_pooled) {
                S* dq = d_bottleneck_pooled->data() + static_cast<size_t>(bi) * e_d;
                for (int d = 0; d < e_d; ++d) {
                    double v = proj[static_cast<size_t>(d)] / (np * nq);
                    if (nq_raw > kCosineEpsilon) v -= cos_b * q[d] / nq2;
                    dq[d] += static_cast<S>(g * v);
                }
            }
            if (d_w_p) {
                for (int d = 0; d < e_d; ++d) {
                    double v = q[d] / (np * nq);
                    if (np_raw > kCosineEpsilon)
                        v -= cos_b * proj[static_cast<size_t>(d)] / np2;
                    const double gd = g * v;
                    for (int e = 0; e < e_e; ++e)
                        d_w_p->at2(e, d) += static_cast<S>(gd * ep[e]);
                }
            }
        }
    }
    return static_cast<S>(loss / batch);
}

template <typename S>
S noise_loss(const Tensor<S>& eps, const Tensor<S>& eps_pred, Tensor<S>* d_eps_pred,
             double scale) {
    if (!eps.same_shape(eps_pred))
        throw std::invalid_argument("noise_loss: shape mismatch");
    const size_t n = eps.numel();
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(eps_pred[i]) - eps[i];
        sum += d * d;
    }
    if (d_eps_pred) {
        const double g = 2.0 * scale / static_cast<double>(n);
        for (size_t i = 0; i < n; ++i)
            (*d_eps_pred)[i] +=
                static_cast<S>(g * (static_cast<double>(eps_pred[i]) - eps[i]));
    }
    return static_cast<S>(sum / static_cast<double>(n));
}

double combined_loss(double l_noise, double l_align, double w1, double w2) {
    if (!std::isfinite(l_noise) || !std::isfinite(l_align))
        throw std::invalid_argument("combined_loss: non-finite input");
    return w1 * l_noise + w2 * l_align;
}

#define FAD_INSTANTIATE_ALIGN(S)                                                      \
    template struct AlignmentHead<S>;                                                 \
    template Tensor<S> pool_bottleneck(const Tensor<S>&);                             \
    template S cosine_similarity(const S*, const S*, int);                            \
    template S cosine_similarity(const std::vector<S>&, const std::vector<S>&);       \
    template S alignment_loss(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,   \
                              Tensor<S>*, Tensor<S>*, double);                        \
    template S noise_loss(const Tensor<S>&, const Tensor<S>&, Tensor<S>*, double);

FAD_INSTANTIATE_ALIGN(float)
FAD_INSTANTIATE_ALIGN(double)

#undef FAD_INSTANTIATE_ALIGN

}  // namespace fad
