#pragma once

// Independent reference computations. None of these call into the library's
// math; they exist to be compared against it.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vaentropy/autodiff/mlp.hpp"
#include "vaentropy/models/vae.hpp"

namespace oracle {

using vaentropy::autodiff::MlpNetwork;
using vaentropy::autodiff::Tensor;

Eigen::MatrixXd to_eigen(const Tensor& m);
Tensor from_eigen(const Eigen::MatrixXd& m);

/// Straight-line forward pass of one input row.
std::vector<double> mlp_row(const MlpNetwork& net, std::span<const double> x);

/// Closed-form linear-model ELBO per point (every expectation is Gaussian).
double linear_elbo_analytic(const vaentropy::models::VaeModel& model, const Tensor& x);

/// Mean over rows of log N(x_n; mu, W W^T + sigma2 I), via Eigen's LLT.
double gaussian_density_mean(const Tensor& x, const Tensor& w, std::span<const double> mu,
                             double sigma2);

/// KL(N(nu, t2) || N(0, 1)) in one dimension by trapezoid quadrature.
double kl_quadrature_1d(double nu, double tau2);

/// Simple seeded uniform source independent of the library's generator.
class SplitMix {
public:
    explicit SplitMix(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next();
    double uniform();              // [0, 1)
    double uniform(double lo, double hi);
    double normal();

private:
    std::uint64_t state_;
};

/// Net with weights from `rng`, redrawn until no hidden pre-activation on
/// `inputs` lies within 1e-4 of a relu kink.
MlpNetwork random_net(const std::vector<std::size_t>& widths, const Tensor& inputs, SplitMix& rng,
                      double scale = 1.0);

}  // namespace oracle
