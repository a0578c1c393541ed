#pragma once

// Test-only oracles, kept independent of the library's forward/backward
// implementation paths they are checking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "glucast/array.hpp"

namespace oracles {

/// Relative error with a floor so near-zero gradients compare sanely.
inline double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-4});
}

/// Max relative error between analytic gradients and central finite
/// differences of `loss_fn` over every entry of every array in `params`.
/// `loss_fn` must re-evaluate the full forward pass from current param values.
inline double max_grad_rel_err(const std::vector<glucast::Array*>& params,
                               const std::vector<const glucast::Array*>& analytic,
                               const std::function<double()>& loss_fn,
                               double h = 1e-4) {
    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        glucast::Array& a = *params[p];
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double keep = a[i];
            a[i] = keep + h;
            const double up = loss_fn();
            a[i] = keep - h;
            const double dn = loss_fn();
            a[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            worst = std::max(worst, rel_err((*analytic[p])[i], fd));
        }
    }
    return worst;
}

/// Direct double-loop temporal convolution, z[m,o] = sum_i sum_c x_pad[m+i,c]*k[i,c,o] + b[o].
inline glucast::Array conv1d_direct(const glucast::Array& x, const glucast::Array& k,
                                    const glucast::Array& b, std::size_t pad_left) {
    const std::size_t T = x.extent(0), C = x.extent(1);
    const std::size_t K = k.extent(0), O = k.extent(2);
    const std::size_t TO = T + pad_left - K + 1;
    glucast::Array z({TO, O});
    for (std::size_t m = 0; m < TO; ++m)
        for (std::size_t o = 0; o < O; ++o) {
            double s = b[o];
            for (std::size_t i = 0; i < K; ++i)
                for (std::size_t c = 0; c < C; ++c) {
                    const long ti = static_cast<long>(m + i) - static_cast<long>(pad_left);
                    const double xv = (ti >= 0 && ti < static_cast<long>(T))
                                          ? x.at2(static_cast<std::size_t>(ti), c)
                                          : 0.0;
                    s += xv * k.at3(i, c, o);
                }
            z.at2(m, o) = s;
        }
    return z;
}

} // namespace oracles
