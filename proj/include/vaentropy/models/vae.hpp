#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vaentropy/autodiff/mlp.hpp"
#include "vaentropy/autodiff/params.hpp"
#include "vaentropy/data/rng.hpp"

namespace vaentropy::models {

using autodiff::MlpNetwork;
using autodiff::ParamVector;
using autodiff::Tensor;

enum class ModelKind { linear, vae1, vae3 };

std::string_view to_string(ModelKind kind) noexcept;
/// Accepts "linear", "vae1", "vae3".
ModelKind parse_model_kind(std::string_view text);

/// Log-variances are clamped to [-20, 20] before exponentiation.
inline constexpr double kLogVarianceClamp = 20.0;

struct Architecture {
    ModelKind kind = ModelKind::vae1;
    std::size_t latent_dim = 2;  // H
    std::size_t data_dim = 10;   // D
    std::vector<std::size_t> encoder_hidden{50, 50};
    std::vector<std::size_t> decoder_hidden{50, 50};
    /// One trunk with a 2H-wide output (means, then log-variances) versus two
    /// independent encoder networks.
    bool shared_encoder_trunk = true;

    /// Linear kinds ignore the hidden layouts; vae3 needs >= 1 decoder hidden layer.
    void validate() const;
};

/// Posterior parameters, one row per data point. log_tau2 is already clamped.
struct EncoderOutput {
    Tensor nu;        // [B x H]
    Tensor log_tau2;  // [B x H]
};

/// Decoder means and (clamped) log-variances for each latent row.
struct DecoderOutput {
    Tensor mu;          // [M x D]
    Tensor log_sigma2;  // [1] when shared across d, n and z; [M x D] for vae3
    bool shared_variance = true;
};

/// Everything the backward pass needs from an encoder forward call.
struct EncoderPass {
    EncoderOutput out;
    Tensor raw_log_tau2;
    autodiff::ForwardTape tape_primary;
    autodiff::ForwardTape tape_secondary;
};

struct DecoderPass {
    DecoderOutput out;
    Tensor raw_log_sigma2;
    autodiff::ForwardTape tape_mu;
    autodiff::ForwardTape tape_sigma;
};

/// Gaussian VAE with a standard-normal prior and a diagonal Gaussian encoder.
///
///  - linear: nu = V (x - mu0), constant encoder variances, mu = W z + mu0,
///    one learnable decoder variance.
///  - vae1:   MLP encoder, MLP decoder mean, one learnable decoder variance.
///  - vae3:   as vae1, plus a second decoder MLP with its own parameters
///    producing a log-variance per observed dimension.
///
/// Parameter slot names:
///   linear  lin.V [H x D], lin.log_tau2 [H], lin.W [D x H], lin.mu0 [D], dec.log_sigma2 [1]
///   vae1/3  enc.l<i>.{weight,bias} (shared trunk) or enc_nu.* / enc_tau.*,
///           dec_mu.l<i>.*, dec.log_sigma2 (vae1), dec_sigma.l<i>.* (vae3)
class VaeModel {
public:
    /// All weights zero, variances one.
    explicit VaeModel(Architecture arch);
    /// Glorot-uniform weights, zero biases, log-variances zero.
    VaeModel(Architecture arch, data::RngStream& init);

    const Architecture& arch() const noexcept { return arch_; }
    ModelKind kind() const noexcept { return arch_.kind; }
    std::size_t latent_dim() const noexcept { return arch_.latent_dim; }
    std::size_t data_dim() const noexcept { return arch_.data_dim; }

    ParamVector params() const;
    /// `p` must have exactly the layout of params().
    void set_params(const ParamVector& p);
    /// Rebuilds the architecture from slot names and shapes (checkpoint loading).
    static Architecture infer_architecture(const ParamVector& p);

    EncoderOutput encode(const Tensor& x) const;
    DecoderOutput decode(const Tensor& z) const;

    EncoderPass encode_for_backward(const Tensor& x) const;
    /// Accumulates parameter gradients given dL/dnu and dL/dlog_tau2 (w.r.t. the
    /// clamped values; entries clamped in the forward pass receive none).
    void encoder_backward(const EncoderPass& pass, const Tensor& d_nu, const Tensor& d_log_tau2,
                          ParamVector& grads) const;

    DecoderPass decode_for_backward(const Tensor& z) const;
    /// Accumulates parameter gradients and returns dL/dz. `d_log_sigma2` has the
    /// shape of pass.out.log_sigma2.
    Tensor decoder_backward(const DecoderPass& pass, const Tensor& d_mu,
                            const Tensor& d_log_sigma2, ParamVector& grads) const;

    /// Decoder log-variance parameter (linear and vae1 only), unclamped.
    double log_sigma2() const;
    void set_log_sigma2(double value);

    /// First decoder weight matrix W(0) [out x H]: lin.W or dec_mu layer 0.
    const Tensor& decoder_first_weight() const;

    const MlpNetwork& encoder_net() const noexcept { return enc_primary_; }
    const MlpNetwork& encoder_tau_net() const noexcept { return enc_secondary_; }
    const MlpNetwork& decoder_mu_net() const noexcept { return dec_mu_; }
    const MlpNetwork& decoder_sigma_net() const noexcept { return dec_sigma_; }
    MlpNetwork& mutable_encoder_net() noexcept { return enc_primary_; }
    MlpNetwork& mutable_decoder_mu_net() noexcept { return dec_mu_; }
    MlpNetwork& mutable_decoder_sigma_net() noexcept { return dec_sigma_; }

    /// Linear kind: constant encoder log-variances [H].
    const Tensor& linear_log_tau2() const noexcept { return lin_log_tau2_; }

private:
    bool separate_encoders() const noexcept;

    Architecture arch_;
    // linear: enc_primary_ = V (bias unused, fixed 0), dec_mu_ = (W, mu0)
    // vae1/3: enc_primary_ = shared trunk or nu-net, enc_secondary_ = tau-net
    MlpNetwork enc_primary_;
    MlpNetwork enc_secondary_;
    MlpNetwork dec_mu_;
    MlpNetwork dec_sigma_;
    Tensor lin_log_tau2_;
    double log_sigma2_ = 0.0;
};

/// Element-wise clamp into [-kLogVarianceClamp, kLogVarianceClamp].
Tensor clamp_log_variance(const Tensor& raw);

/// Reparameterized draws z = nu + tau * eps. Both tensors are [B x S x H];
/// flattened to [(B S) x H] the rows of point b are b*S .. b*S + S - 1.
struct ReparamSample {
    Tensor eps;
    Tensor z;

    std::size_t batch() const noexcept { return eps.shape()[0]; }
    std::size_t samples() const noexcept { return eps.shape()[1]; }
    std::size_t latent_dim() const noexcept { return eps.shape()[2]; }
    /// z as a [(B S) x H] matrix, ready for decode.
    Tensor z_rows() const { return z.reshaped({batch() * samples(), latent_dim()}); }
};

/// Standard-normal eps [B x S x H] in row-major order from `rng`.
Tensor draw_eps(std::size_t batch, std::size_t samples, std::size_t h, data::RngStream& rng);

/// z from stored eps; the same eps always gives the same z.
ReparamSample reparameterize(const EncoderOutput& enc, Tensor eps);

/// S >= 1 fresh draws per row of `enc`.
ReparamSample sample_latents(const EncoderOutput& enc, std::size_t samples, data::RngStream& rng);

struct ColumnNormSplit {
    Tensor alpha;    // [H], column norms
    Tensor w_unit;   // [out x H], unit-norm columns
};

/// W0 = w_unit * diag(alpha). Throws DegenerateError when a column norm is <= 1e-12.
ColumnNormSplit column_norm_reparam(const Tensor& w0);

}  // namespace vaentropy::models
