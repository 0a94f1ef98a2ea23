#include "vaentropy/autodiff/adam.hpp"

#include <cmath>

#include "vaentropy/errors.hpp"

namespace vaentropy::autodiff {

AdamState AdamState::for_params(const ParamVector& params, AdamConfig config)
{
    AdamState s;
    s.first_moment = params.zeros_like();
    s.second_moment = params.zeros_like();
    s.config = config;
    return s;
}

void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state, double lr)
{
    if (!params.same_layout(grads) || !params.same_layout(state.first_moment) ||
        !params.same_layout(state.second_moment))
        throw ShapeError("adam_step: parameter, gradient and moment layouts differ");
    for (const auto& [name, g] : grads)
        if (!g.all_finite()) throw NumericError("adam_step: non-finite gradient in '" + name + "'");

    const auto& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);

    auto g_it = grads.begin();
    auto m_it = state.first_moment.begin();
    auto v_it = state.second_moment.begin();
    for (auto p_it = params.begin(); p_it != params.end(); ++p_it, ++g_it, ++m_it, ++v_it) {
        Tensor& p = p_it->second;
        const Tensor& g = g_it->second;
        Tensor& m = m_it->second;
        Tensor& v = v_it->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            p[i] -= lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
}

}  // namespace vaentropy::autodiff
