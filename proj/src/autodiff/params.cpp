#include "vaentropy/autodiff/params.hpp"

#include <algorithm>

#include "vaentropy/errors.hpp"

namespace vaentropy::autodiff {

Tensor& ParamVector::at(const std::string& name)
{
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ShapeError("no parameter slot named '" + name + "'");
    return it->second;
}

const Tensor& ParamVector::at(const std::string& name) const
{
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ShapeError("no parameter slot named '" + name + "'");
    return it->second;
}

std::size_t ParamVector::total_size() const noexcept
{
    std::size_t n = 0;
    for (const auto& [_, t] : slots_) n += t.size();
    return n;
}

std::vector<double> ParamVector::flatten() const
{
    std::vector<double> flat;
    flat.reserve(total_size());
    for (const auto& [_, t] : slots_) flat.insert(flat.end(), t.values().begin(), t.values().end());
    return flat;
}

void ParamVector::unflatten(std::span<const double> flat)
{
    if (flat.size() != total_size())
        throw ShapeError("unflatten: expected " + std::to_string(total_size()) + " values, got " +
                         std::to_string(flat.size()));
    std::size_t offset = 0;
    for (auto& [_, t] : slots_) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.data());
        offset += t.size();
    }
}

ParamVector ParamVector::zeros_like() const
{
    ParamVector z;
    for (const auto& [name, t] : slots_) z.set(name, Tensor(t.shape()));
    return z;
}

bool ParamVector::same_layout(const ParamVector& other) const
{
    if (slots_.size() != other.slots_.size()) return false;
    auto a = slots_.begin();
    auto b = other.slots_.begin();
    for (; a != slots_.end(); ++a, ++b)
        if (a->first != b->first || !a->second.same_shape(b->second)) return false;
    return true;
}

void ParamVector::add_scaled(const ParamVector& other, double scale)
{
    if (!same_layout(other)) throw ShapeError("add_scaled: parameter layouts differ");
    auto b = other.slots_.begin();
    for (auto a = slots_.begin(); a != slots_.end(); ++a, ++b)
        for (std::size_t i = 0; i < a->second.size(); ++i) a->second[i] += scale * b->second[i];
}

void ParamVector::accumulate(const std::string& name, const Tensor& value)
{
    auto [it, inserted] = slots_.try_emplace(name, value.shape());
    if (!it->second.same_shape(value))
        throw ShapeError("accumulate: shape mismatch for slot '" + name + "'");
    for (std::size_t i = 0; i < value.size(); ++i) it->second[i] += value[i];
}

}  // namespace vaentropy::autodiff
