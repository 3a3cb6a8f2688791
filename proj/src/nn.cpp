// SPDX-License-Identifier: Apache-2.0

#include "fad/nn.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace fad::nn {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapMat = Eigen::Map<RowMat<S>>;
template <typename S>
using CMapMat = Eigen::Map<const RowMat<S>>;

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Valid output-column range for one kernel offset: ox such that
// 0 <= ox*stride - pad + kx < w.
inline void valid_range(int kx, int w, int stride, int pad, int wout, int& lo, int& hi) {
    lo = 0;
    while (lo < wout && lo * stride - pad + kx < 0) ++lo;
    hi = wout;
    while (hi > lo && (hi - 1) * stride - pad + kx >= w) --hi;
}

// Grow-only scratch buffers for the conv lowering; thread_local so concurrent
// inference never shares them.
template <typename S>
AlignedVec<S>& conv_scratch(int which, size_t n) {
    thread_local AlignedVec<S> bufs[3];
    AlignedVec<S>& b = bufs[which];
    if (b.size() < n) b.resize(n);
    return b;
}

// Unfolds one sample into (Cin*k*k, Hout*Wout) laid out with an arbitrary row
// stride, so several samples can share one matrix. Interior rows reduce to
// memcpy at stride 1.
template <typename S>
void im2col(const S* x, int cin, int h, int w, int k, int stride, int pad,
            int hout, int wout, S* cols, size_t row_stride) {
    for (int ci = 0; ci < cin; ++ci) {
        const S* xc = x + static_cast<size_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                S* row = cols + (static_cast<size_t>(ci) * k * k + ky * k + kx) * row_stride;
                int lo, hi;
                valid_range(kx, w, stride, pad, wout, lo, hi);
                for (int oy = 0; oy < hout; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    S* dst = row + static_cast<size_t>(oy) * wout;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + wout, S(0));
                        continue;
                    }
                    const S* src = xc + static_cast<size_t>(iy) * w;
                    std::fill(dst, dst + lo, S(0));
                    if (stride == 1) {
                        std::copy(src + lo - pad + kx, src + hi - pad + kx, dst + lo);
                    } else {
                        for (int ox = lo; ox < hi; ++ox)
                            dst[ox] = src[ox * stride - pad + kx];
                    }
                    std::fill(dst + hi, dst + wout, S(0));
                }
            }
        }
    }
}

// Scatter-adds one sample's (Cin*k*k, Hout*Wout) gradient slice back onto dx.
template <typename S>
void col2im_add(const S* cols, int cin, int h, int w, int k, int stride, int pad,
                int hout, int wout, S* dx, size_t row_stride) {
    for (int ci = 0; ci < cin; ++ci) {
        S* dxc = dx + static_cast<size_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const S* row =
                    cols + (static_cast<size_t>(ci) * k * k + ky * k + kx) * row_stride;
                int lo, hi;
                valid_range(kx, w, stride, pad, wout, lo, hi);
                for (int oy = 0; oy < hout; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const S* src = row + static_cast<size_t>(oy) * wout;
                    S* dst = dxc + static_cast<size_t>(iy) * w - pad + kx;
                    for (int ox = lo; ox < hi; ++ox) dst[ox * stride] += src[ox];
                }
            }
        }
    }
}

}  // namespace

template <typename S>
void init_normal(Tensor<S>& t, RngStream& rng, double std_dev) {
    rng.fill_gaussian(t);
    for (size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(t[i] * std_dev);
}

template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                         int stride, int pad) {
    if (x.ndim() != 4 || w.ndim() != 4)
        throw std::invalid_argument("conv2d: expected 4D input and weight");
    if (x.dim(1) != w.dim(1))
        throw std::invalid_argument("conv2d: input channels mismatch weight");
    const int batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), k = w.dim(2);
    const int hout = conv_out_dim(h, k, stride, pad);
    const int wout = conv_out_dim(wd, k, stride, pad);
    const int hw_out = hout * wout;
    const int ck = cin * k * k;

    Tensor<S> y = Tensor<S>::uninitialized({batch, cout, hout, wout});
    AlignedVec<S>& cols = conv_scratch<S>(0, static_cast<size_t>(ck) * hw_out);
    CMapMat<S> wm(w.data(), cout, ck);
    // Per-sample lowering keeps each image's result independent of the batch
    // it happens to share, which the sampler's determinism contract relies on.
    for (int bi = 0; bi < batch; ++bi) {
        im2col(x.data() + static_cast<size_t>(bi) * cin * h * wd, cin, h, wd, k, stride,
               pad, hout, wout, cols.data(), static_cast<size_t>(hw_out));
        CMapMat<S> cm(cols.data(), ck, hw_out);
        MapMat<S> ym(y.data() + static_cast<size_t>(bi) * cout * hw_out, cout, hw_out);
        ym.noalias() = wm * cm;
        for (int co = 0; co < cout; ++co) ym.row(co).array() += b[static_cast<size_t>(co)];
    }
    return y;
}

template <typename S>
Tensor<S> conv2d_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy,
                          int stride, int pad, Tensor<S>& dw, Tensor<S>& db) {
    const int batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), k = w.dim(2);
    const int hout = dy.dim(2), wout = dy.dim(3);
    const int hw_out = hout * wout;
    const int ck = cin * k * k;

    Tensor<S> dx(x.shape());
    // Whole-batch lowering: one matrix per operand with a column block per
    // sample, so the weight-gradient and input-gradient products run as a
    // single large GEMM each.
    const size_t n_all = static_cast<size_t>(batch) * hw_out;
    AlignedVec<S>& cols = conv_scratch<S>(0, static_cast<size_t>(ck) * n_all);
    AlignedVec<S>& dcols = conv_scratch<S>(1, static_cast<size_t>(ck) * n_all);
    AlignedVec<S>& dy_all = conv_scratch<S>(2, static_cast<size_t>(cout) * n_all);
    for (int bi = 0; bi < batch; ++bi) {
        im2col(x.data() + static_cast<size_t>(bi) * cin * h * wd, cin, h, wd, k, stride,
               pad, hout, wout, cols.data() + static_cast<size_t>(bi) * hw_out, n_all);
        for (int co = 0; co < cout; ++co) {
            const S* src = dy.data() + (static_cast<size_t>(bi) * cout + co) * hw_out;
            std::copy(src, src + hw_out,
                      dy_all.data() + static_cast<size_t>(co) * n_all +
                          static_cast<size_t>(bi) * hw_out);
        }
    }
    CMapMat<S> wm(w.data(), cout, ck);
    MapMat<S> dwm(dw.data(), cout, ck);
    CMapMat<S> cm(cols.data(), ck, static_cast<Eigen::Index>(n_all));
    CMapMat<S> dym(dy_all.data(), cout, static_cast<Eigen::Index>(n_all));
    dwm.noalias() += dym * cm.transpose();
    for (int co = 0; co < cout; ++co) db[static_cast<size_t>(co)] += dym.row(co).sum();
    MapMat<S> dcm(dcols.data(), ck, static_cast<Eigen::Index>(n_all));
    dcm.noalias() = wm.transpose() * dym;
    for (int bi = 0; bi < batch; ++bi)
        col2im_add(dcols.data() + static_cast<size_t>(bi) * hw_out, cin, h, wd, k,
                   stride, pad, hout, wout,
                   dx.data() + static_cast<size_t>(bi) * cin * h * wd, n_all);
    return dx;
}

template <typename S>
Tensor<S> silu_forward(const Tensor<S>& x) {
    using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;
    Tensor<S> y = Tensor<S>::uninitialized(x.shape());
    Eigen::Map<const Arr> xa(x.data(), static_cast<Eigen::Index>(x.numel()));
    Eigen::Map<Arr> ya(y.data(), static_cast<Eigen::Index>(y.numel()));
    ya = xa / (S(1) + (-xa).exp());
    return y;
}

template <typename S>
Tensor<S> silu_backward(const Tensor<S>& x, const Tensor<S>& dy) {
    using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;
    Tensor<S> dx = Tensor<S>::uninitialized(x.shape());
    Eigen::Map<const Arr> xa(x.data(), static_cast<Eigen::Index>(x.numel()));
    Eigen::Map<const Arr> da(dy.data(), static_cast<Eigen::Index>(dy.numel()));
    Eigen::Map<Arr> ga(dx.data(), static_cast<Eigen::Index>(dx.numel()));
    ga = S(1) / (S(1) + (-xa).exp());
    ga = da * ga * (S(1) + xa * (S(1) - ga));
    return dx;
}

template <typename S>
Tensor<S> group_norm_forward(const Tensor<S>& x, const Tensor<S>& gamma,
                             const Tensor<S>& beta, int groups, double eps,
                             GroupNormCache<S>& cache) {
    const int batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (c % groups != 0) throw std::invalid_argument("group_norm: groups must divide channels");
    const int cg = c / groups;
    const size_t m = static_cast<size_t>(cg) * h * w;

    cache.mean = Tensor<S>::uninitialized({batch, groups});
    cache.rstd = Tensor<S>::uninitialized({batch, groups});
    Tensor<S> y = Tensor<S>::uninitialized(x.shape());
    for (int bi = 0; bi < batch; ++bi) {
        for (int g = 0; g < groups; ++g) {
            const S* xs = x.data() + (static_cast<size_t>(bi) * c + g * cg) * h * w;
            double sum = 0.0, sq = 0.0;
            for (size_t i = 0; i < m; ++i) {
                sum += xs[i];
                sq += static_cast<double>(xs[i]) * xs[i];
            }
            const double mu = sum / static_cast<double>(m);
            const double var = sq / static_cast<double>(m) - mu * mu;
            const double rstd = 1.0 / std::sqrt(var + eps);
            cache.mean.at2(bi, g) = static_cast<S>(mu);
            cache.rstd.at2(bi, g) = static_cast<S>(rstd);
            S* ys = y.data() + (static_cast<size_t>(bi) * c + g * cg) * h * w;
            for (int cc = 0; cc < cg; ++cc) {
                const S ga = gamma[static_cast<size_t>(g * cg + cc)];
                const S be = beta[static_cast<size_t>(g * cg + cc)];
                const S* xp = xs + static_cast<size_t>(cc) * h * w;
                S* yp = ys + static_cast<size_t>(cc) * h * w;
                for (int i = 0; i < h * w; ++i)
                    yp[i] = ga * static_cast<S>((xp[i] - mu) * rstd) + be;
            }
        }
    }
    return y;
}

template <typename S>
Tensor<S> group_norm_backward(const Tensor<S>& x, const Tensor<S>& gamma, int groups,
                              const GroupNormCache<S>& cache, const Tensor<S>& dy,
                              Tensor<S>& dgamma, Tensor<S>& dbeta) {
    const int batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int cg = c / groups;
    const size_t m = static_cast<size_t>(cg) * h * w;
    const int hw = h * w;

    Tensor<S> dx = Tensor<S>::uninitialized(x.shape());
    for (int bi = 0; bi < batch; ++bi) {
        for (int g = 0; g < groups; ++g) {
            const double mu = cache.mean.at2(bi, g);
            const double rstd = cache.rstd.at2(bi, g);
            const S* xs = x.data() + (static_cast<size_t>(bi) * c + g * cg) * hw;
            const S* dys = dy.data() + (static_cast<size_t>(bi) * c + g * cg) * hw;
            // Two reductions over the group: mean(dxhat), mean(dxhat * xhat).
            double s1 = 0.0, s2 = 0.0;
            for (int cc = 0; cc < cg; ++cc) {
                const double ga = gamma[static_cast<size_t>(g * cg + cc)];
                const S* xp = xs + static_cast<size_t>(cc) * hw;
                const S* dp = dys + static_cast<size_t>(cc) * hw;
                for (int i = 0; i < hw; ++i) {
                    const double xhat = (xp[i] - mu) * rstd;
                    const double dxhat = dp[i] * ga;
                    s1 += dxhat;
                    s2 += dxhat * xhat;
                }
            }
            s1 /= static_cast<double>(m);
            s2 /= static_cast<double>(m);
            S* dxs = dx.data() + (static_cast<size_t>(bi) * c + g * cg) * hw;
            for (int cc = 0; cc < cg; ++cc) {
                const int ch = g * cg + cc;
                const double ga = gamma[static_cast<size_t>(ch)];
                const S* xp = xs + static_cast<size_t>(cc) * hw;
                const S* dp = dys + static_cast<size_t>(cc) * hw;
                S* dxp = dxs + static_cast<size_t>(cc) * hw;
                double dg = 0.0, dbv = 0.0;
                for (int i = 0; i < hw; ++i) {
                    const double xhat = (xp[i] - mu) * rstd;
                    const double dxhat = dp[i] * ga;
                    dxp[i] = static_cast<S>(rstd * (dxhat - s1 - xhat * s2));
                    dg += dp[i] * xhat;
                    dbv += dp[i];
                }
                dgamma[static_cast<size_t>(ch)] += static_cast<S>(dg);
                dbeta[static_cast<size_t>(ch)] += static_cast<S>(dbv);
            }
        }
    }
    return dx;
}

template <typename S>
Tensor<S> linear_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    const int batch = x.dim(0), in = x.dim(1), out = w.dim(0);
    if (w.dim(1) != in) throw std::invalid_argument("linear: weight shape mismatch");
    Tensor<S> y = Tensor<S>::uninitialized({batch, out});
    CMapMat<S> wm(w.data(), out, in);
    using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
    // Row-wise GEMV keeps each sample's result independent of its batch.
    for (int bi = 0; bi < batch; ++bi) {
        Eigen::Map<const Vec> xv(x.data() + static_cast<size_t>(bi) * in, in);
        Eigen::Map<Vec> yv(y.data() + static_cast<size_t>(bi) * out, out);
        yv.noalias() = wm * xv;
        for (int o = 0; o < out; ++o) yv[o] += b[static_cast<size_t>(o)];
    }
    return y;
}

template <typename S>
Tensor<S> linear_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy,
                          Tensor<S>& dw, Tensor<S>& db) {
    const int batch = x.dim(0), in = x.dim(1), out = w.dim(0);
    Tensor<S> dx({batch, in});
    CMapMat<S> xm(x.data(), batch, in);
    CMapMat<S> wm(w.data(), out, in);
    CMapMat<S> dym(dy.data(), batch, out);
    MapMat<S> dxm(dx.data(), batch, in);
    MapMat<S> dwm(dw.data(), out, in);
    dxm.noalias() = dym * wm;
    dwm.noalias() += dym.transpose() * xm;
    for (int bi = 0; bi < batch; ++bi)
        for (int o = 0; o < out; ++o) db[static_cast<size_t>(o)] += dy.at2(bi, o);
    return dx;
}

template <typename S>
Tensor<S> embedding_forward(const Tensor<S>& table, const std::vector<int>& ids) {
    const int count = table.dim(0), dim = table.dim(1);
    Tensor<S> y({static_cast<int>(ids.size()), dim});
    for (size_t bi = 0; bi < ids.size(); ++bi) {
        if (ids[bi] < 0 || ids[bi] >= count)
            throw std::out_of_range("embedding: id out of range");
        const S* row = table.data() + static_cast<size_t>(ids[bi]) * dim;
        std::copy(row, row + dim, y.data() + bi * static_cast<size_t>(dim));
    }
    return y;
}

template <typename S>
void embedding_backward(const std::vector<int>& ids, const Tensor<S>& dy,
                        Tensor<S>& dtable) {
    const int dim = dtable.dim(1);
    for (size_t bi = 0; bi < ids.size(); ++bi) {
        S* row = dtable.data() + static_cast<size_t>(ids[bi]) * dim;
        const S* g = dy.data() + bi * static_cast<size_t>(dim);
        for (int d = 0; d < dim; ++d) row[d] += g[d];
    }
}

template <typename S>
Tensor<S> global_avg_pool_forward(const Tensor<S>& x) {
    const int batch = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor<S> y = Tensor<S>::uninitialized({batch, c});
    for (int bi = 0; bi < batch; ++bi)
        for (int ci = 0; ci < c; ++ci) {
            const S* p = x.data() + (static_cast<size_t>(bi) * c + ci) * hw;
            double sum = 0.0;
            for (int i = 0; i < hw; ++i) sum += p[i];
            y.at2(bi, ci) = static_cast<S>(sum / hw);
        }
    return y;
}

template <typename S>
Tensor<S> global_avg_pool_backward(const std::vector<int>& x_shape, const Tensor<S>& dy) {
    Tensor<S> dx(x_shape);
    const int batch = x_shape[0], c = x_shape[1], hw = x_shape[2] * x_shape[3];
    for (int bi = 0; bi < batch; ++bi)
        for (int ci = 0; ci < c; ++ci) {
            const S g = dy.at2(bi, ci) / static_cast<S>(hw);
            S* p = dx.data() + (static_cast<size_t>(bi) * c + ci) * hw;
            for (int i = 0; i < hw; ++i) p[i] = g;
        }
    return dx;
}

template <typename S>
Tensor<S> upsample2x_forward(const Tensor<S>& x) {
    const int batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<S> y = Tensor<S>::uninitialized({batch, c, 2 * h, 2 * w});
    for (int bc = 0; bc < batch * c; ++bc) {
        const S* xp = x.data() + static_cast<size_t>(bc) * h * w;
        S* yp = y.data() + static_cast<size_t>(bc) * 4 * h * w;
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < w; ++ix) {
                const S v = xp[iy * w + ix];
                S* d = yp + (2 * iy) * (2 * w) + 2 * ix;
                d[0] = v;
                d[1] = v;
                d[2 * w] = v;
                d[2 * w + 1] = v;
            }
    }
    return y;
}

template <typename S>
Tensor<S> upsample2x_backward(const Tensor<S>& dy) {
    const int batch = dy.dim(0), c = dy.dim(1), h2 = dy.dim(2), w2 = dy.dim(3);
    const int h = h2 / 2, w = w2 / 2;
    Tensor<S> dx = Tensor<S>::uninitialized({batch, c, h, w});
    for (int bc = 0; bc < batch * c; ++bc) {
        const S* dp = dy.data() + static_cast<size_t>(bc) * h2 * w2;
        S* xp = dx.data() + static_cast<size_t>(bc) * h * w;
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < w; ++ix) {
                const S* s = dp + (2 * iy) * w2 + 2 * ix;
                xp[iy * w + ix] = s[0] + s[1] + s[w2] + s[w2 + 1];
            }
    }
    return dx;
}

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    const int batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    if (b.dim(0) != batch || b.dim(2) != h || b.dim(3) != w)
        throw std::invalid_argument("concat_channels: shape mismatch");
    Tensor<S> y = Tensor<S>::uninitialized({batch, ca + cb, h, w});
    const size_t hw = static_cast<size_t>(h) * w;
    for (int bi = 0; bi < batch; ++bi) {
        std::copy(a.data() + static_cast<size_t>(bi) * ca * hw,
                  a.data() + static_cast<size_t>(bi + 1) * ca * hw,
                  y.data() + static_cast<size_t>(bi) * (ca + cb) * hw);
        std::copy(b.data() + static_cast<size_t>(bi) * cb * hw,
                  b.data() + static_cast<size_t>(bi + 1) * cb * hw,
                  y.data() + static_cast<size_t>(bi) * (ca + cb) * hw + ca * hw);
    }
    return y;
}

template <typename S>
void split_channels(const Tensor<S>& d, int c_a, Tensor<S>& da, Tensor<S>& db) {
    const int batch = d.dim(0), c = d.dim(1), h = d.dim(2), w = d.dim(3);
    const int c_b = c - c_a;
    da = Tensor<S>::uninitialized({batch, c_a, h, w});
    db = Tensor<S>::uninitialized({batch, c_b, h, w});
    const size_t hw = static_cast<size_t>(h) * w;
    for (int bi = 0; bi < batch; ++bi) {
        const S* src = d.data() + static_cast<size_t>(bi) * c * hw;
        std::copy(src, src + c_a * hw, da.data() + static_cast<size_t>(bi) * c_a * hw);
        std::copy(src + c_a * hw, src + c * hw,
                  db.data() + static_cast<size_t>(bi) * c_b * hw);
    }
}

template <typename S>
void add_channel_bias(Tensor<S>& x, const Tensor<S>& v) {
    const int batch = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    for (int bi = 0; bi < batch; ++bi)
        for (int ci = 0; ci < c; ++ci) {
            const S bias = v.at2(bi, ci);
            S* p = x.data() + (static_cast<size_t>(bi) * c + ci) * hw;
            for (int i = 0; i < hw; ++i) p[i] += bias;
        }
}

template <typename S>
Tensor<S> channel_bias_backward(const Tensor<S>& dy) {
    const int batch = dy.dim(0), c = dy.dim(1), hw = dy.dim(2) * dy.dim(3);
    Tensor<S> dv({batch, c});
    for (int bi = 0; bi < batch; ++bi)
        for (int ci = 0; ci < c; ++ci) {
            const S* p = dy.data() + (static_cast<size_t>(bi) * c + ci) * hw;
            double sum = 0.0;
            for (int i = 0; i < hw; ++i) sum += p[i];
            dv.at2(bi, ci) = static_cast<S>(sum);
        }
    return dv;
}

template <typename S>
S softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels,
                        Tensor<S>* dlogits) {
    const int batch = logits.dim(0), k = logits.dim(1);
    if (static_cast<int>(labels.size()) != batch)
        throw std::invalid_argument("cross_entropy: label count mismatch");
    if (dlogits) *dlogits = Tensor<S>({batch, k});
    double loss = 0.0;
    std::vector<double> prob(static_cast<size_t>(k));
    for (int bi = 0; bi < batch; ++bi) {
        double mx = logits.at2(bi, 0);
        for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(logits.at2(bi, j)));
        double denom = 0.0;
        for (int j = 0; j < k; ++j) {
            prob[static_cast<size_t>(j)] = std::exp(logits.at2(bi, j) - mx);
            denom += prob[static_cast<size_t>(j)];
        }
        const int y = labels[static_cast<size_t>(bi)];
        if (y < 0 || y >= k) throw std::out_of_range("cross_entropy: label out of range");
        loss -= std::log(prob[static_cast<size_t>(y)] / denom);
        if (dlogits)
            for (int j = 0; j < k; ++j) {
                const double p = prob[static_cast<size_t>(j)] / denom;
                dlogits->at2(bi, j) =
                    static_cast<S>((p - (j == y ? 1.0 : 0.0)) / batch);
            }
    }
    return static_cast<S>(loss / batch);
}

int norm_groups_for(int channels) {
    for (int g : {8, 4, 2})
        if (channels % g == 0) return g;
    return 1;
}

#define FAD_INSTANTIATE_NN(S)                                                           \
    template void init_normal(Tensor<S>&, RngStream&, double);                         \
    template Tensor<S> conv2d_forward(const Tensor<S>&, const Tensor<S>&,              \
                                      const Tensor<S>&, int, int);                     \
    template Tensor<S> conv2d_backward(const Tensor<S>&, const Tensor<S>&,             \
                                       const Tensor<S>&, int, int, Tensor<S>&,         \
                                       Tensor<S>&);                                    \
    template Tensor<S> silu_forward(const Tensor<S>&);                                 \
    template Tensor<S> silu_backward(const Tensor<S>&, const Tensor<S>&);              \
    template Tensor<S> group_norm_forward(const Tensor<S>&, const Tensor<S>&,          \
                                          const Tensor<S>&, int, double,               \
                                          GroupNormCache<S>&);                         \
    template Tensor<S> group_norm_backward(const Tensor<S>&, const Tensor<S>&, int,    \
                                           const GroupNormCache<S>&, const Tensor<S>&, \
                                           Tensor<S>&, Tensor<S>&);                    \
    template Tensor<S> linear_forward(const Tensor<S>&, const Tensor<S>&,              \
                                      const Tensor<S>&);                               \
    template Tensor<S> linear_backward(const Tensor<S>&, const Tensor<S>&,             \
                                       const Tensor<S>&, Tensor<S>&, Tensor<S>&);      \
    template Tensor<S> embedding_forward(const Tensor<S>&, const std::vector<int>&);   \
    template void embedding_backward(const std::vector<int>&, const Tensor<S>&,        \
                                     Tensor<S>&);                                      \
    template Tensor<S> global_avg_pool_forward(const Tensor<S>&);                      \
    template Tensor<S> global_avg_pool_backward(const std::vector<int>&,               \
                                                const Tensor<S>&);                     \
    template Tensor<S> upsample2x_forward(const Tensor<S>&);                           \
    template Tensor<S> upsample2x_backward(const Tensor<S>&);                          \
    template Tensor<S> concat_channels(const Tensor<S>&, const Tensor<S>&);            \
    template void split_channels(const Tensor<S>&, int, Tensor<S>&, Tensor<S>&);       \
    template void add_channel_bias(Tensor<S>&, const Tensor<S>&);                      \
    template Tensor<S> channel_bias_backward(const Tensor<S>&);                        \
    template S softmax_cross_entropy(const Tensor<S>&, const std::vector<int>&,        \
                                     Tensor<S>*);

FAD_INSTANTIATE_NN(float)
FAD_INSTANTIATE_NN(double)

#undef FAD_INSTANTIATE_NN

}  // namespace fad::nn
