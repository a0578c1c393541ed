#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "glucast/array.hpp"
#include "glucast/tape.hpp"

namespace glucast {

/// Single-array RMSprop update:
///   s <- rho*s + (1-rho)*g^2
///   p <- p - lr * g / (sqrt(s) + eps)
inline void rmsprop_update(Array& param, const Array& grad, Array& sq_avg,
                           double lr, double rho, double eps) {
    if (!param.same_shape(grad) || !param.same_shape(sq_avg))
        throw std::invalid_argument("rmsprop_update: shape mismatch");
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        sq_avg[i] = rho * sq_avg[i] + (1.0 - rho) * g * g;
        param[i] -= lr * g / (std::sqrt(sq_avg[i]) + eps);
    }
}

/// Moving average of squared gradients, one slot per parameter.
struct RmspropState {
    double lr = 1e-3;
    double rho = 0.9;
    double eps = 1e-8;
    std::vector<Array> sq_avg;

    RmspropState() = default;
    RmspropState(double lr_, double rho_, double eps_) : lr(lr_), rho(rho_), eps(eps_) {}

    void step(const std::vector<Array*>& params, const Gradients& grads) {
        if (sq_avg.empty()) {
            sq_avg.reserve(params.size());
            for (const Array* p : params) sq_avg.emplace_back(p->shape());
        }
        if (params.size() != grads.size() || params.size() != sq_avg.size())
            throw std::invalid_argument("RmspropState::step: parameter count mismatch");
        for (std::size_t i = 0; i < params.size(); ++i)
            rmsprop_update(*params[i], grads[i], sq_avg[i], lr, rho, eps);
    }
};

} // namespace glucast
