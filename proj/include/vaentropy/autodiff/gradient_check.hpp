#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vaentropy/autodiff/params.hpp"

namespace vaentropy::autodiff {

/// Evaluates a scalar loss at a point. When `grad` is non-null the callee
/// also writes its reverse-mode gradient there (same layout as the point).
using LossFn = std::function<double(const ParamVector& point, ParamVector* grad)>;

struct CoordinateMismatch {
    std::string slot;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double relative_error = 0.0;
};

struct GradientCheckResult {
    double max_relative_error = 0.0;
    CoordinateMismatch worst;
    /// Every coordinate whose relative error exceeded the tolerance.
    std::vector<CoordinateMismatch> failures;
    bool passed = true;
};

/// Compares the loss's own gradient with central differences
///   (f(p + h e_i) - f(p - h e_i)) / 2h
/// coordinate by coordinate. Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8).
///
/// At non-differentiable points (a relu pre-activation sitting exactly on 0)
/// the two sides legitimately disagree; those coordinates show up in
/// `failures` and the check reports failure there.
GradientCheckResult gradient_check(const LossFn& loss, const ParamVector& point, double step,
                                   double tolerance);

}  // namespace vaentropy::autodiff
