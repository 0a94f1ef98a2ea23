#pragma once

#include <cstddef>
#include <span>

#include "vaentropy/autodiff/tensor.hpp"

namespace vaentropy::ppca {

using autodiff::Tensor;

/// Eigenpairs of a symmetric matrix. values descend; column j of `vectors`
/// pairs with values[j] and has its largest-magnitude entry positive.
struct SymmetricEigen {
    Tensor values;   // [D]
    Tensor vectors;  // [D x D]
    std::size_t sweeps = 0;
};

/// Cyclic Jacobi rotations in row-major (p, q) order until the off-diagonal
/// Frobenius norm drops below rel_tol * ||S||_F.
SymmetricEigen jacobi_eigen(const Tensor& s, double rel_tol = 1e-12, std::size_t max_sweeps = 100);

/// Lower-triangular L with A = L L^T. Throws DegenerateError unless A is positive definite.
class Cholesky {
public:
    explicit Cholesky(const Tensor& a);

    const Tensor& lower() const noexcept { return l_; }
    double log_det() const;
    Tensor inverse() const;

private:
    Tensor l_;
};

/// Sample mean and population (1/N) covariance.
struct Moments {
    Tensor mean;  // [D]
    Tensor cov;   // [D x D]
    std::size_t n = 0;
};

/// Throws DataError for N < 2.
Moments data_covariance(const Tensor& x);

struct PpcaSolution {
    Tensor w_ml;   // [D x H]
    Tensor mu_ml;  // [D]
    double sigma2_ml = 0.0;
    Tensor eigvals;  // [D], descending
    double loglik_per_point = 0.0;
};

/// Closed-form maximum likelihood with rotation fixed to identity:
/// sigma2 = mean of the D - H smallest eigenvalues, W = U_H (L_H - sigma2 I)^(1/2).
/// Throws DegenerateError when lambda_H <= sigma2.
PpcaSolution ppca_ml_fit(const Moments& m, std::size_t h);
PpcaSolution ppca_ml_fit(const Tensor& x, std::size_t h);

/// Per-point log-likelihood of N(mu, W W^T + sigma2 I) given the data moments:
/// -(D/2) log 2pi - 0.5 log det C - 0.5 tr(C^-1 S_mu), S_mu the scatter about mu.
double ppca_loglik(const Tensor& w, std::span<const double> mu, double sigma2, const Moments& m);

}  // namespace vaentropy::ppca
