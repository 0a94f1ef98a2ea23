#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "vaentropy/autodiff/tensor.hpp"

namespace vaentropy::autodiff {

/// Named parameter tensors. Iteration and flattening follow lexicographic
/// name order, so the flat layout is a pure function of the slot names and shapes.
class ParamVector {
public:
    using Slots = std::map<std::string, Tensor>;

    void set(const std::string& name, Tensor value) { slots_[name] = std::move(value); }
    bool contains(const std::string& name) const { return slots_.count(name) != 0; }
    void erase(const std::string& name) { slots_.erase(name); }

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;

    std::size_t slot_count() const noexcept { return slots_.size(); }
    std::size_t total_size() const noexcept;

    Slots::iterator begin() noexcept { return slots_.begin(); }
    Slots::iterator end() noexcept { return slots_.end(); }
    Slots::const_iterator begin() const noexcept { return slots_.begin(); }
    Slots::const_iterator end() const noexcept { return slots_.end(); }

    std::vector<double> flatten() const;
    /// Overwrites every slot from `flat`, which must hold total_size() values.
    void unflatten(std::span<const double> flat);

    ParamVector zeros_like() const;
    /// True when both vectors have the same names with the same shapes.
    bool same_layout(const ParamVector& other) const;

    /// this += scale * other; layouts must agree.
    void add_scaled(const ParamVector& other, double scale);
    /// Adds `value` into slot `name`, creating a zero slot of matching shape first.
    void accumulate(const std::string& name, const Tensor& value);

    friend bool operator==(const ParamVector&, const ParamVector&) = default;

private:
    Slots slots_;
};

}  // namespace vaentropy::autodiff
