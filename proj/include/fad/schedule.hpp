// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "fad/tensor.hpp"

namespace fad {

/// Variance schedule of the forward process: beta[t], alpha[t] = 1 - beta[t]
/// and the cumulative product alpha_bar[t]. All arrays are computed and kept
/// in double precision; checkpoints store them verbatim.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    void validate_timestep(int t) const {
        if (t < 0 || t >= T) throw std::out_of_range("timestep out of range [0, T)");
    }
};

/// Forward-noised sample x_t together with the noise that produced it.
template <typename S>
struct NoisySample {
    Tensor<S> x_t;
    Tensor<S> eps;
    int t = 0;
};

/// Linear beta schedule, endpoints inclusive. Throws std::invalid_argument on
/// T < 1 or beta endpoints outside (0, 1) or beta_start > beta_end.
NoiseSchedule build_linear_schedule(int T, double beta_start, double beta_end);

/// Builds a schedule directly from a beta array (used for checkpoint reload
/// and for respaced sampling grids); only positivity of alpha_bar is checked.
NoiseSchedule schedule_from_betas(std::vector<double> beta);

/// Strided sub-grid for sampling with num_steps < T: picks original timestep
/// indices tau (endpoint-inclusive linspace) and the matching effective betas
/// beta'_i = 1 - alpha_bar[tau_i] / alpha_bar[tau_{i-1}].
struct RespacedSchedule {
    std::vector<int> tau;    // original timestep index per sampling step
    NoiseSchedule grid;      // schedule over the sub-grid (length num_steps)
};

RespacedSchedule respace_schedule(const NoiseSchedule& s, int num_steps);

/// Forward process x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
/// Pure: the noise is supplied by the caller.
template <typename S>
NoisySample<S> add_noise(const Tensor<S>& x0, const Tensor<S>& eps, int t,
                         const NoiseSchedule& s);

/// One ancestral reverse step x_t -> x_{t-1}:
///   mean = (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps_pred) / sqrt(alpha_t)
///   x_{t-1} = mean + sqrt(beta_t) * z    (z omitted at t = 0)
/// z must be present iff t > 0.
template <typename S>
Tensor<S> ddpm_step(const Tensor<S>& x_t, const Tensor<S>& eps_pred, int t,
                    const NoiseSchedule& s, const Tensor<S>* z);

}  // namespace fad
