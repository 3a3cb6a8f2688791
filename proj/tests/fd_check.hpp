// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>

namespace fd {

/// Central finite difference of eval() with respect to *p.
template <typename S, typename F>
double central(S* p, double h, F&& eval) {
    const S orig = *p;
    *p = static_cast<S>(orig + h);
    const double fp = eval();
    *p = static_cast<S>(orig - h);
    const double fm = eval();
    *p = orig;
    return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    if (scale < 1e-10) return 0.0;  // both vanish: agreement
    return std::abs(a - b) / scale;
}

}  // namespace fd
