#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>

#include "vaentropy/autodiff/tensor.hpp"
#include "vaentropy/data/rng.hpp"

namespace vaentropy::data {

using autodiff::Tensor;

enum class Provenance { ppca_synthetic, ring_synthetic, file };

/// Parameters of the linear-Gaussian generator x = W z + mu + sigma * eps.
struct GenerativeParams {
    Tensor w;   // [D x H]
    Tensor mu;  // [D]
    double sigma = 0.1;
};

struct Dataset {
    Tensor x;  // [N x D]
    std::string name;
    Provenance provenance = Provenance::file;
    std::optional<GenerativeParams> generator;

    std::size_t size() const noexcept { return x.rows(); }
    std::size_t dim() const noexcept { return x.cols(); }

    /// Throws DataError unless N >= 1, x is a matrix and every entry is finite.
    void validate() const;
};

struct TrainTest {
    Dataset train;
    Dataset test;
};

/// W_gen and mu_gen entrywise Uniform(0, 1).
GenerativeParams draw_generator(std::size_t d, std::size_t h, double sigma, RngStream& rng);

/// N draws of W z + offset + sigma * eps with z ~ N(0, I_H), eps ~ N(0, I_D).
/// `with_mean` selects offset = mu (true) or 0 (false).
Tensor sample_linear_gaussian(const GenerativeParams& g, std::size_t n, RngStream& rng,
                              bool with_mean = true);

/// Synthetic p-PCA data. Defaults follow the reference protocol: N = 10000,
/// D = 10, H = 2, sigma = 0.1.
Dataset gen_ppca(std::size_t n, std::size_t d, std::size_t h, double sigma, RngStream& rng);

/// x' = mu + x / 10 + x / ||x|| applied row-wise.
Tensor ring_transform(const Tensor& x, std::span<const double> mu);

/// Zero-mean p-PCA draws pushed through ring_transform; rows with
/// ||x|| <= 1e-9 are redrawn before the transform.
Dataset gen_ring(std::size_t n, std::size_t d, std::size_t h, double sigma, RngStream& rng);

/// Independent train and test sets of equal size from one generator.
TrainTest gen_train_test(Provenance kind, std::size_t n, std::size_t d, std::size_t h,
                         double sigma, RngStream& rng);

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

}  // namespace vaentropy::data
