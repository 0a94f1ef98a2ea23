#pragma once

#include <cstdint>

#include "vaentropy/autodiff/params.hpp"

namespace vaentropy::autodiff {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::uint64_t step = 0;
    ParamVector first_moment;
    ParamVector second_moment;
    AdamConfig config;

    /// Zeroed moments laid out like `params`.
    static AdamState for_params(const ParamVector& params, AdamConfig config = {});
};

/// One bias-corrected Adam update that *descends* along `grads`:
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps).
/// Callers maximizing an objective pass the negated gradient.
void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state, double lr);

}  // namespace vaentropy::autodiff
