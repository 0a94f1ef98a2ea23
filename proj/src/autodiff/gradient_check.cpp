#include "vaentropy/autodiff/gradient_check.hpp"

#include <algorithm>
#include <cmath>

#include "vaentropy/errors.hpp"

namespace vaentropy::autodiff {

namespace {

double finite_loss(const LossFn& loss, const ParamVector& p, ParamVector* grad)
{
    const double v = loss(p, grad);
    if (!std::isfinite(v)) throw NumericError("gradient_check: loss returned a non-finite value");
    return v;
}

}  // namespace

GradientCheckResult gradient_check(const LossFn& loss, const ParamVector& point, double step,
                                   double tolerance)
{
    ParamVector analytic = point.zeros_like();
    finite_loss(loss, point, &analytic);
    if (!analytic.same_layout(point)) throw ShapeError("gradient_check: gradient layout mismatch");

    GradientCheckResult result;
    ParamVector probe = point;
    for (auto& [name, tensor] : probe) {
        const Tensor& a = analytic.at(name);
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            const double original = tensor[i];
            tensor[i] = original + step;
            const double up = finite_loss(loss, probe, nullptr);
            tensor[i] = original - step;
            const double down = finite_loss(loss, probe, nullptr);
            tensor[i] = original;

            const double numeric = (up - down) / (2.0 * step);
            const double denom = std::max({std::abs(a[i]), std::abs(numeric), 1e-8});
            const double rel = std::abs(a[i] - numeric) / denom;
            CoordinateMismatch c{name, i, a[i], numeric, rel};
            if (rel > result.max_relative_error) {
                result.max_relative_error = rel;
                result.worst = c;
            }
            if (rel > tolerance) result.failures.push_back(std::move(c));
        }
    }
    result.passed = result.failures.empty();
    return result;
}

}  // namespace vaentropy::autodiff
