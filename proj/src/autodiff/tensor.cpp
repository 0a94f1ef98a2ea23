#include "vaentropy/autodiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vaentropy/errors.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace vaentropy::autodiff {

namespace {

#ifdef __GLIBC__
// Batch-sized tensors are freed and reallocated every step. Serving them from
// fresh mmaps page-faults on each fill, so keep them on the reusable heap.
const bool heap_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
}();
#endif

}  // namespace

std::size_t shape_product(const std::vector<std::size_t>& shape)
{
    std::size_t n = 1;
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill)
{
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data))
{
    if (shape_product(shape_) != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape product " +
                         std::to_string(shape_product(shape_)));
    }
}

Tensor Tensor::vector(std::initializer_list<double> values)
{
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows)
{
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const
{
    if (begin >= end || end > rows()) throw ShapeError("row slice out of range");
    auto shape = shape_;
    shape.front() = end - begin;
    const std::size_t c = cols();
    return Tensor(std::move(shape),
                  std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                      data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const
{
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(std::string_view what) const
{
    if (!all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

void require_matrix(const Tensor& t, std::size_t cols, std::string_view what)
{
    if (t.rank() != 2 || t.cols() != cols) {
        throw ShapeError(std::string(what) + ": expected a matrix with " + std::to_string(cols) +
                         " columns");
    }
}

}  // namespace vaentropy::autodiff
