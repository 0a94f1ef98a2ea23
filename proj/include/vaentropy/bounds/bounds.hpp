#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "vaentropy/autodiff/params.hpp"
#include "vaentropy/data/rng.hpp"
#include "vaentropy/models/vae.hpp"

// All bound values are nats per data point.
namespace vaentropy::bounds {

using autodiff::ParamVector;
using autodiff::Tensor;
using models::VaeModel;

inline const double kLog2Pi = std::log(2.0 * std::numbers::pi);
inline const double kLog2PiE = std::log(2.0 * std::numbers::pi * std::numbers::e);

/// 0.5 * sum log(2 pi e v_i). Throws DegenerateError on v_i <= 0.
double gaussian_entropy_diag(std::span<const double> variances);

/// KL(N(nu, diag tau2) || N(0, I)) = 0.5 * sum(tau2 + nu^2 - 1 - log tau2).
double kl_diag_gaussian_to_std(std::span<const double> nu, std::span<const double> tau2);

/// Monte Carlo ELBO. std_error is the standard error of `value` over the noise
/// draws with the data held fixed.
struct ElboEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n_samples = 0;
};

/// eps is [N x S x H]; the same eps always gives the same value bit for bit.
ElboEstimate elbo_sampled(const VaeModel& model, const Tensor& x, const Tensor& eps);
ElboEstimate elbo_sampled(const VaeModel& model, const Tensor& x, std::size_t samples,
                          data::RngStream& rng);

struct ElboGradient {
    double value = 0.0;
    ParamVector grad;  // d value / d params, full layout of model.params()
};

/// Sampled ELBO and its exact gradient for the given noise.
ElboGradient elbo_with_gradient(const VaeModel& model, const Tensor& x, const Tensor& eps);

/// Three-entropies value in entropy form. value() is
/// encoder_entropy_mean - prior_entropy - decoder_entropy.
struct EntropyTerms {
    double prior_entropy = 0.0;
    double decoder_entropy = 0.0;  // q-averaged when the decoder variance depends on z
    double encoder_entropy_mean = 0.0;

    double value() const noexcept { return encoder_entropy_mean - prior_entropy - decoder_entropy; }
};

struct BoundReport {
    double elbo_sampled = 0.0;
    double elbo_std_error = 0.0;
    double three_entropies = 0.0;
    double term_prior_entropy = 0.0;
    double term_decoder_entropy = 0.0;
    double term_encoder_entropy_mean = 0.0;
    double gap_abs = 0.0;
    std::optional<double> gap_pct_of_final;
    std::size_t n_samples = 0;
};

/// ELBO plus the matching three-entropies value (scalar-variance form for
/// linear and vae1, z-dependent form for vae3), all from one set of draws.
BoundReport evaluate_bounds(const VaeModel& model, const Tensor& x, const Tensor& eps);

/// Explicit form: (1/2N) sum_n sum_h log tau2 - (D/2) log(2 pi e sigma2).
double three_entropies_vae1(const Tensor& log_tau2, double log_sigma2, std::size_t d);
EntropyTerms entropy_terms_vae1(const Tensor& log_tau2, double log_sigma2, std::size_t d);

/// Data-free form: 0.5 * sum_h log tau2_h - (D/2) log(2 pi e sigma2).
double three_entropies_linear(std::span<const double> log_tau2, double log_sigma2, std::size_t d);

/// Explicit form with the decoder log-variances evaluated at posterior draws:
/// (1/2N) sum log tau2 - 0.5 * mean_rows(sum_d log sigma2_d) - (D/2) log(2 pi e).
/// `log_sigma2_samples` is [M x D], one row per latent draw.
double three_entropies_vae3(const Tensor& log_tau2, const Tensor& log_sigma2_samples);
EntropyTerms entropy_terms_vae3(const Tensor& log_tau2, const Tensor& log_sigma2_samples);
/// Draws S latents per point from the encoder and evaluates the explicit form.
double three_entropies_vae3(const VaeModel& model, const Tensor& x, std::size_t samples,
                            data::RngStream& rng);

struct StationarySolutions {
    Tensor alpha2;  // [H], mean over n of nu^2 + tau2
    double sigma2 = 0.0;
};

/// Linear kind uses the analytic expectation for sigma2; vae1 uses S draws per point.
StationarySolutions stationary_variance_solutions(const VaeModel& model, const Tensor& x,
                                                  std::size_t samples, data::RngStream& rng);

struct CollapseReport {
    double delta_total = 0.0;
    std::vector<double> delta_per_latent;  // -(1/2N) sum_n log tau2_h
};

CollapseReport collapse_measures(const Tensor& log_tau2);

struct VolumeReport {
    double log_zvol_mean = 0.0;
    double log_xvol_mean = 0.0;
    double const_term = 0.0;
    double bound_value = 0.0;
};

/// (D - H) log c - (D/2) log(2 pi e) for volumes with edge c standard deviations.
double volume_const_term(std::size_t d, std::size_t h, double edge_factor = 2.0);

/// Volume form from encoder log-variances [N x H] and decoder log-variances at
/// draws from the average posterior [M x D] (one row per draw, or [1] when the
/// decoder variance is shared).
VolumeReport volume_bound(const Tensor& log_tau2, const Tensor& log_sigma2_samples, std::size_t d,
                          double edge_factor = 2.0);
/// Draws N*S latents from the average posterior: a uniform data index, then
/// one encoder draw for that point.
VolumeReport volume_bound(const VaeModel& model, const Tensor& x, std::size_t samples,
                          data::RngStream& rng, double edge_factor = 2.0);

struct GapTrace {
    std::vector<double> gap_abs;
    std::vector<double> gap_pct;  // relative to the final ELBO of the trace
};

/// Throws ShapeError on unequal or empty traces, DegenerateError on a zero final ELBO.
GapTrace gap_metrics(std::span<const double> elbo_trace, std::span<const double> three_h_trace);

/// Linear-interpolation percentile, q in [0, 100]; values need not be sorted.
double percentile(std::vector<double> values, double q);

struct GapAggregate {
    std::vector<double> median;
    std::vector<double> q25;
    std::vector<double> q75;
};

/// Pointwise median and quartiles across runs. Shorter traces hold their last
/// value so a run that stopped early still counts at later positions.
GapAggregate aggregate_gaps(const std::vector<std::vector<double>>& gap_pct_traces);

}  // namespace vaentropy::bounds
