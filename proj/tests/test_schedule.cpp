// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fad/rng.hpp"
#include "fad/schedule.hpp"

using namespace fad;

namespace {

NoiseSchedule synthetic_schedule(double alpha_bar_value) {
    // Single-step schedule with a forced alpha_bar, bypassing validation; used
    // for the degenerate alpha_bar in {0, 1} cases.
    NoiseSchedule s;
    s.T = 1;
    s.beta = {0.5};
    s.alpha = {0.5};
    s.alpha_bar = {alpha_bar_value};
    return s;
}

}  // namespace

TEST_CASE("single step schedule") {
    const NoiseSchedule s = build_linear_schedule(1, 0.5, 0.5);
    CHECK(s.beta == std::vector<double>{0.5});
    CHECK(s.alpha_bar == std::vector<double>{0.5});
}

TEST_CASE("two step schedule accumulates the product") {
    const NoiseSchedule s = build_linear_schedule(2, 0.1, 0.3);
    CHECK(s.alpha_bar[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha_bar[1] == doctest::Approx(0.63).epsilon(1e-15));
}

TEST_CASE("alpha_bar matches an independent sequential product at T=1000") {
    const NoiseSchedule s = build_linear_schedule(1000, 1e-4, 0.02);
    double product = 1.0;
    for (int t = 0; t < 1000; ++t) {
        const double beta = 1e-4 + (0.02 - 1e-4) * t / 999.0;
        product *= 1.0 - beta;
    }
    CHECK(std::abs(s.alpha_bar[999] - product) / product < 1e-12);
    // invariants
    for (int t = 0; t < 1000; ++t) {
        CHECK(s.beta[static_cast<size_t>(t)] > 0.0);
        CHECK(s.beta[static_cast<size_t>(t)] < 1.0);
        if (t > 0) {
            CHECK(s.beta[static_cast<size_t>(t)] >= s.beta[static_cast<size_t>(t - 1)]);
            CHECK(s.alpha_bar[static_cast<size_t>(t)] <
                  s.alpha_bar[static_cast<size_t>(t - 1)]);
        }
        CHECK(s.alpha_bar[static_cast<size_t>(t)] > 0.0);
        CHECK(s.alpha_bar[static_cast<size_t>(t)] < 1.0);
    }
}

TEST_CASE("schedule precondition violations throw") {
    CHECK_THROWS_AS(build_linear_schedule(0, 0.1, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(build_linear_schedule(10, 0.0, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(build_linear_schedule(10, 0.3, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(build_linear_schedule(10, 0.3, 1.0), std::invalid_argument);
}

TEST_CASE("add_noise degenerate mixing weights") {
    TensorF x0({1, 1, 2, 2});
    TensorF eps({1, 1, 2, 2});
    for (size_t i = 0; i < 4; ++i) {
        x0[i] = 0.25f * static_cast<float>(i) - 0.3f;
        eps[i] = 1.0f - 0.5f * static_cast<float>(i);
    }
    SUBCASE("alpha_bar = 1 keeps x0") {
        const auto ns = add_noise(x0, eps, 0, synthetic_schedule(1.0));
        for (size_t i = 0; i < 4; ++i) CHECK(ns.x_t[i] == x0[i]);
    }
    SUBCASE("alpha_bar = 0 returns pure noise") {
        const auto ns = add_noise(x0, eps, 0, synthetic_schedule(0.0));
        for (size_t i = 0; i < 4; ++i) CHECK(ns.x_t[i] == eps[i]);
    }
    SUBCASE("x0 = 0, alpha_bar = 0.36 scales eps by 0.8") {
        x0.zero();
        const auto ns = add_noise(x0, eps, 0, synthetic_schedule(0.36));
        for (size_t i = 0; i < 4; ++i)
            CHECK(ns.x_t[i] == doctest::Approx(0.8f * eps[i]).epsilon(1e-7));
    }
}

TEST_CASE("add_noise validates shapes and timestep") {
    const NoiseSchedule s = build_linear_schedule(10, 1e-4, 0.02);
    TensorF x0({1, 1, 2, 2}), eps_bad({1, 1, 2, 3}), eps({1, 1, 2, 2});
    CHECK_THROWS_AS(add_noise(x0, eps_bad, 0, s), std::invalid_argument);
    CHECK_THROWS_AS(add_noise(x0, eps, 10, s), std::out_of_range);
    CHECK_THROWS_AS(add_noise(x0, eps, -1, s), std::out_of_range);
}

TEST_CASE("add_noise is linear in x0 and eps") {
    const NoiseSchedule s = build_linear_schedule(50, 1e-4, 0.05);
    RngStream rng(3);
    TensorF a({1, 1, 4, 4}), b({1, 1, 4, 4}), e1({1, 1, 4, 4}), e2({1, 1, 4, 4});
    rng.fill_gaussian(a);
    rng.fill_gaussian(b);
    rng.fill_gaussian(e1);
    rng.fill_gaussian(e2);
    TensorF ab(a.shape()), e12(a.shape());
    for (size_t i = 0; i < a.numel(); ++i) {
        ab[i] = a[i] + b[i];
        e12[i] = e1[i] + e2[i];
    }
    const auto lhs = add_noise(ab, e12, 20, s);
    const auto r1 = add_noise(a, e1, 20, s);
    const auto r2 = add_noise(b, e2, 20, s);
    for (size_t i = 0; i < a.numel(); ++i)
        CHECK(lhs.x_t[i] == doctest::Approx(r1.x_t[i] + r2.x_t[i]).epsilon(1e-6));
}

TEST_CASE("ddpm_step posterior mean cases") {
    const NoiseSchedule s = build_linear_schedule(10, 1e-3, 0.05);
    RngStream rng(17);
    TensorF x({1, 1, 3, 3}), eps({1, 1, 3, 3});
    rng.fill_gaussian(x);
    rng.fill_gaussian(eps);

    SUBCASE("t = 0 is the deterministic posterior mean") {
        const TensorF out = ddpm_step<float>(x, eps, 0, s, nullptr);
        const double coef = s.beta[0] / std::sqrt(1.0 - s.alpha_bar[0]);
        const double inv = 1.0 / std::sqrt(s.alpha[0]);
        for (size_t i = 0; i < x.numel(); ++i)
            CHECK(out[i] == doctest::Approx(inv * (x[i] - coef * eps[i])).epsilon(1e-6));
    }
    SUBCASE("z = 0 at t > 0 equals the posterior mean") {
        TensorF z({1, 1, 3, 3});
        const TensorF with_zero = ddpm_step(x, eps, 5, s, &z);
        const double coef = s.beta[5] / std::sqrt(1.0 - s.alpha_bar[5]);
        const double inv = 1.0 / std::sqrt(s.alpha[5]);
        for (size_t i = 0; i < x.numel(); ++i)
            CHECK(with_zero[i] ==
                  doctest::Approx(inv * (x[i] - coef * eps[i])).epsilon(1e-6));
    }
    SUBCASE("missing noise at t > 0 throws") {
        CHECK_THROWS_AS(ddpm_step<float>(x, eps, 5, s, nullptr), std::invalid_argument);
    }
}

TEST_CASE("one-step chain inverts the forward process") {
    const NoiseSchedule s = build_linear_schedule(1, 0.2, 0.2);
    RngStream rng(23);
    TensorF x0({1, 1, 4, 4}), eps({1, 1, 4, 4});
    rng.fill_gaussian(x0);
    rng.fill_gaussian(eps);
    const auto noised = add_noise(x0, eps, 0, s);
    const TensorF recovered = ddpm_step<float>(noised.x_t, eps, 0, s, nullptr);
    for (size_t i = 0; i < x0.numel(); ++i)
        CHECK(std::abs(recovered[i] - x0[i]) < 1e-6);
}

TEST_CASE("multi-step chain with oracle noise is a smoke test only") {
    const int T = 8;
    const NoiseSchedule s = build_linear_schedule(T, 1e-3, 0.05);
    RngStream rng(29);
    TensorF x0({1, 1, 4, 4}), eps({1, 1, 4, 4});
    rng.fill_gaussian(x0);
    rng.fill_gaussian(eps);
    TensorF x = add_noise(x0, eps, T - 1, s).x_t;
    for (int t = T - 1; t >= 0; --t) {
        if (t > 0) {
            TensorF z({1, 1, 4, 4});
            x = ddpm_step(x, eps, t, s, &z);
        } else {
            x = ddpm_step<float>(x, eps, 0, s, nullptr);
        }
        for (size_t i = 0; i < x.numel(); ++i) REQUIRE(std::isfinite(x[i]));
    }
}

TEST_CASE("forward statistics approach the closed form (small-sample smoke)") {
    const NoiseSchedule s = build_linear_schedule(200, 1e-4, 0.02);
    const int t = 100;
    const int draws = 20000;
    TensorF x0({1, 1, 2, 2});
    x0[0] = 0.5f;
    x0[1] = -0.25f;
    x0[2] = 0.8f;
    x0[3] = -0.6f;
    RngStream rng(31);
    std::vector<double> sum(4, 0.0), sq(4, 0.0);
    for (int d = 0; d < draws; ++d) {
        TensorF eps({1, 1, 2, 2});
        rng.fill_gaussian(eps);
        const auto ns = add_noise(x0, eps, t, s);
        for (size_t i = 0; i < 4; ++i) {
            sum[i] += ns.x_t[i];
            sq[i] += static_cast<double>(ns.x_t[i]) * ns.x_t[i];
        }
    }
    const double bar = s.alpha_bar[static_cast<size_t>(t)];
    const double want_var = 1.0 - bar;
    for (size_t i = 0; i < 4; ++i) {
        const double mean = sum[i] / draws;
        const double var = sq[i] / draws - mean * mean;
        const double mean_se = std::sqrt(want_var / draws);
        const double var_se = want_var * std::sqrt(2.0 / draws);
        CHECK(std::abs(mean - std::sqrt(bar) * x0[i]) < 3.0 * mean_se);
        CHECK(std::abs(var - want_var) < 3.0 * var_se);
    }
}

TEST_CASE("respaced schedule picks matching alpha_bar values") {
    const NoiseSchedule s = build_linear_schedule(100, 1e-4, 0.02);
    SUBCASE("full-length respacing is the identity grid") {
        const RespacedSchedule r = respace_schedule(s, 100);
        for (int i = 0; i < 100; ++i) {
            CHECK(r.tau[static_cast<size_t>(i)] == i);
            CHECK(r.grid.alpha_bar[static_cast<size_t>(i)] ==
                  doctest::Approx(s.alpha_bar[static_cast<size_t>(i)]).epsilon(1e-12));
        }
    }
    SUBCASE("strided grid keeps endpoint alpha_bar exactly") {
        const RespacedSchedule r = respace_schedule(s, 10);
        CHECK(r.tau.front() == 0);
        CHECK(r.tau.back() == 99);
        for (size_t i = 0; i < r.tau.size(); ++i)
            CHECK(r.grid.alpha_bar[i] ==
                  doctest::Approx(s.alpha_bar[static_cast<size_t>(r.tau[i])])
                      .epsilon(1e-12));
    }
    CHECK_THROWS_AS(respace_schedule(s, 0), std::invalid_argument);
    CHECK_THROWS_AS(respace_schedule(s, 101), std::invalid_argument);
}
