// SPDX-License-Identifier: Apache-2.0

#include "fad/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace fad {

NoiseSchedule build_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
        throw std::invalid_argument("schedule: need 0 < beta_start <= beta_end < 1");

    std::vector<double> beta(static_cast<size_t>(T));
    if (T == 1) {
        beta[0] = beta_start;
    } else {
        const double step = (beta_end - beta_start) / static_cast<double>(T - 1);
        for (int t = 0; t < T; ++t) beta[static_cast<size_t>(t)] = beta_start + step * t;
        beta.back() = beta_end;  // endpoint exact
    }
    return schedule_from_betas(std::move(beta));
}

NoiseSchedule schedule_from_betas(std::vector<double> beta) {
    NoiseSchedule s;
    s.T = static_cast<int>(beta.size());
    if (s.T < 1) throw std::invalid_argument("schedule: empty beta array");
    s.beta = std::move(beta);
    s.alpha.resize(s.beta.size());
    s.alpha_bar.resize(s.beta.size());
    double running = 1.0;
    for (size_t t = 0; t < s.beta.size(); ++t) {
        if (!(s.beta[t] > 0.0 && s.beta[t] < 1.0))
            throw std::invalid_argument("schedule: beta values must lie in (0, 1)");
        s.alpha[t] = 1.0 - s.beta[t];
        running *= s.alpha[t];
        s.alpha_bar[t] = running;
        if (!(s.alpha_bar[t] > 0.0 && s.alpha_bar[t] < 1.0))
            throw std::invalid_argument("schedule: alpha_bar left (0, 1)");
    }
    return s;
}

RespacedSchedule respace_schedule(const NoiseSchedule& s, int num_steps) {
    if (num_steps < 1 || num_steps > s.T)
        throw std::invalid_argument("respace: num_steps must lie in [1, T]");
    RespacedSchedule r;
    r.tau.resize(static_cast<size_t>(num_steps));
    if (num_steps == 1) {
        r.tau[0] = s.T - 1;
    } else {
        for (int i = 0; i < num_steps; ++i)
            r.tau[static_cast<size_t>(i)] =
                static_cast<int>(std::llround(static_cast<double>(i) * (s.T - 1) /
                                              (num_steps - 1)));
    }
    std::vector<double> beta(static_cast<size_t>(num_steps));
    double prev_bar = 1.0;
    for (int i = 0; i < num_steps; ++i) {
        const double bar = s.alpha_bar[static_cast<size_t>(r.tau[static_cast<size_t>(i)])];
        beta[static_cast<size_t>(i)] = 1.0 - bar / prev_bar;
        prev_bar = bar;
    }
    r.grid = schedule_from_betas(std::move(beta));
    return r;
}

template <typename S>
NoisySample<S> add_noise(const Tensor<S>& x0, const Tensor<S>& eps, int t,
                         const NoiseSchedule& s) {
    if (!x0.same_shape(eps))
        throw std::invalid_argument("add_noise: x0 and eps shapes differ");
    s.validate_timestep(t);
    const double bar = s.alpha_bar[static_cast<size_t>(t)];
    const S a = static_cast<S>(std::sqrt(bar));
    const S b = static_cast<S>(std::sqrt(1.0 - bar));
    NoisySample<S> out;
    out.t = t;
    out.eps = eps;
    out.x_t = Tensor<S>(x0.shape());
    for (size_t i = 0; i < x0.numel(); ++i) out.x_t[i] = a * x0[i] + b * eps[i];
    return out;
}

template <typename S>
Tensor<S> ddpm_step(const Tensor<S>& x_t, const Tensor<S>& eps_pred, int t,
                    const NoiseSchedule& s, const Tensor<S>* z) {
    if (!x_t.same_shape(eps_pred))
        throw std::invalid_argument("ddpm_step: x_t and eps_pred shapes differ");
    s.validate_timestep(t);
    if (t > 0 && z == nullptr)
        throw std::invalid_argument("ddpm_step: noise z required for t > 0");
    if (z != nullptr && !z->same_shape(x_t))
        throw std::invalid_argument("ddpm_step: z shape differs from x_t");

    const double beta = s.beta[static_cast<size_t>(t)];
    const double bar = s.alpha_bar[static_cast<size_t>(t)];
    const S eps_coef = static_cast<S>(beta / std::sqrt(1.0 - bar));
    const S inv_sqrt_alpha = static_cast<S>(1.0 / std::sqrt(s.alpha[static_cast<size_t>(t)]));
    const S sigma = static_cast<S>(std::sqrt(beta));

    Tensor<S> out(x_t.shape());
    for (size_t i = 0; i < x_t.numel(); ++i)
        out[i] = inv_sqrt_alpha * (x_t[i] - eps_coef * eps_pred[i]);
    if (t > 0)
        for (size_t i = 0; i < out.numel(); ++i) out[i] += sigma * (*z)[i];
    return out;
}

template NoisySample<float> add_noise(const Tensor<float>&, const Tensor<float>&, int,
                                      const NoiseSchedule&);
template NoisySample<double> add_noise(const Tensor<double>&, const Tensor<double>&, int,
                                       const NoiseSchedule&);
template Tensor<float> ddpm_step(const Tensor<float>&, const Tensor<float>&, int,
                                 const NoiseSchedule&, const Tensor<float>*);
template Tensor<double> ddpm_step(const Tensor<double>&, const Tensor<double>&, int,
                                  const NoiseSchedule&, const Tensor<double>*);

}  // namespace fad
