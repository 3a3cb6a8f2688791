// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fad/tensor.hpp"

namespace fad {

/// Adam with bias correction; element math in double for stable, deterministic
/// float32 parameter updates. One instance per model; attach() fixes the
/// parameter list and ordering.
template <typename S>
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        if (lr <= 0.0) throw std::invalid_argument("adam: learning rate must be > 0");
    }

    void attach(const std::vector<ParamRef<S>>& params) {
        m_.clear();
        v_.clear();
        for (const auto& p : params) {
            m_.emplace_back(p.value->shape());
            v_.emplace_back(p.value->shape());
        }
        step_count_ = 0;
    }

    void step(const std::vector<ParamRef<S>>& params) {
        if (params.size() != m_.size())
            throw std::invalid_argument("adam: parameter list changed after attach");
        ++step_count_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
        for (size_t pi = 0; pi < params.size(); ++pi) {
            Tensor<S>& value = *params[pi].value;
            const Tensor<S>& grad = *params[pi].grad;
            Tensor<S>& m = m_[pi];
            Tensor<S>& v = v_[pi];
            for (size_t i = 0; i < value.numel(); ++i) {
                const double g = grad[i];
                const double mi = beta1_ * m[i] + (1.0 - beta1_) * g;
                const double vi = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                m[i] = static_cast<S>(mi);
                v[i] = static_cast<S>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                value[i] = static_cast<S>(value[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    double learning_rate() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::vector<Tensor<S>> m_, v_;
    long step_count_ = 0;
};

}  // namespace fad
