#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace vaentropy::autodiff {

/// Dense row-major array of doubles. Every dimension is positive and the
/// flat buffer always holds exactly product(shape) entries.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor vector(std::initializer_list<double> values);
    /// Row-major matrix from nested initializer lists; rows must be equal length.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor scalar(double value);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    /// Leading dimension; 1 for a scalar.
    std::size_t rows() const noexcept { return shape_.empty() ? 1 : shape_.front(); }
    /// Product of the trailing dimensions.
    std::size_t cols() const noexcept
    {
        if (shape_.size() == 2) return shape_[1];
        std::size_t c = 1;
        for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
        return c;
    }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols(), cols()};
    }

    /// Copy of rows [begin, end) keeping the trailing dimensions.
    Tensor slice_rows(std::size_t begin, std::size_t end) const;
    /// Same data, new shape; the element count must match.
    Tensor reshaped(std::vector<std::size_t> shape) const;

    void fill(double value) noexcept;
    bool all_finite() const noexcept;
    /// Throws NumericError naming `what` when any entry is NaN or Inf.
    void require_finite(std::string_view what) const;

    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

/// Rank-2 shape check used at module boundaries.
void require_matrix(const Tensor& t, std::size_t cols, std::string_view what);

}  // namespace vaentropy::autodiff
