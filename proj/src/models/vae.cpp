#include "vaentropy/models/vae.hpp"

#include <algorithm>
#include <cmath>

#include "vaentropy/errors.hpp"

namespace vaentropy::models {

using autodiff::Activation;
using autodiff::ForwardTape;
using autodiff::MlpGradients;

std::string_view to_string(ModelKind kind) noexcept
{
    switch (kind) {
    case ModelKind::linear: return "linear";
    case ModelKind::vae1: return "vae1";
    case ModelKind::vae3: return "vae3";
    }
    return "unknown";
}

ModelKind parse_model_kind(std::string_view text)
{
    if (text == "linear") return ModelKind::linear;
    if (text == "vae1") return ModelKind::vae1;
    if (text == "vae3") return ModelKind::vae3;
    throw ConfigError("unknown model kind '" + std::string(text) + "'");
}

void Architecture::validate() const
{
    if (latent_dim < 1 || data_dim < 1) throw ConfigError("H and D must be positive");
    if (kind == ModelKind::linear) return;
    for (auto w : encoder_hidden)
        if (w < 1) throw ConfigError("hidden widths must be positive");
    for (auto w : decoder_hidden)
        if (w < 1) throw ConfigError("hidden widths must be positive");
    if (kind == ModelKind::vae3 && decoder_hidden.empty())
        throw ConfigError("vae3 decoder networks need at least one hidden layer");
}

Tensor clamp_log_variance(const Tensor& raw)
{
    Tensor out = raw;
    for (auto& v : out.values()) v = std::clamp(v, -kLogVarianceClamp, kLogVarianceClamp);
    return out;
}

namespace {

std::vector<std::size_t> chain(std::size_t in, const std::vector<std::size_t>& hidden,
                               std::size_t out)
{
    std::vector<std::size_t> w{in};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(out);
    return w;
}

std::string slot(const std::string& prefix, std::size_t layer, const char* what)
{
    return prefix + ".l" + std::to_string(layer) + "." + what;
}

void export_net(const MlpNetwork& net, const std::string& prefix, ParamVector& p)
{
    for (std::size_t l = 0; l < net.depth(); ++l) {
        p.set(slot(prefix, l, "weight"), net.layer(l).weight);
        p.set(slot(prefix, l, "bias"), net.layer(l).bias);
    }
}

void import_net(MlpNetwork& net, const std::string& prefix, const ParamVector& p)
{
    for (std::size_t l = 0; l < net.depth(); ++l) {
        auto& layer = net.mutable_layer(l);
        layer.weight = p.at(slot(prefix, l, "weight"));
        layer.bias = p.at(slot(prefix, l, "bias"));
    }
}

void accumulate_net(const MlpGradients& g, const std::string& prefix, ParamVector& grads)
{
    for (std::size_t l = 0; l < g.weight.size(); ++l) {
        grads.accumulate(slot(prefix, l, "weight"), g.weight[l]);
        grads.accumulate(slot(prefix, l, "bias"), g.bias[l]);
    }
}

// Zero the gradient wherever the forward clamp was active.
Tensor mask_clamped(const Tensor& grad, const Tensor& raw)
{
    Tensor out = grad;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (std::abs(raw[i]) > kLogVarianceClamp) out[i] = 0.0;
    return out;
}

Tensor columns(const Tensor& m, std::size_t begin, std::size_t count)
{
    Tensor out({m.rows(), count});
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < count; ++c) out(r, c) = m(r, begin + c);
    return out;
}

Tensor sum_rows(const Tensor& m)
{
    Tensor out({m.cols()});
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m(r, c);
    return out;
}

template <class F>
void init_all(MlpNetwork& net, F& uniform)
{
    if (net.depth() > 0) net.glorot_init(uniform);
}

const std::string kLinV = "lin.V";
const std::string kLinLogTau2 = "lin.log_tau2";
const std::string kLinW = "lin.W";
const std::string kLinMu0 = "lin.mu0";
const std::string kLogSigma2 = "dec.log_sigma2";

}  // namespace

bool VaeModel::separate_encoders() const noexcept
{
    return arch_.kind != ModelKind::linear && !arch_.shared_encoder_trunk;
}

VaeModel::VaeModel(Architecture arch) : arch_(std::move(arch))
{
    arch_.validate();
    const std::size_t h = arch_.latent_dim, d = arch_.data_dim;
    if (arch_.kind == ModelKind::linear) {
        enc_primary_ = MlpNetwork({d, h});
        dec_mu_ = MlpNetwork({h, d});
        lin_log_tau2_ = Tensor({h});
        return;
    }
    if (arch_.shared_encoder_trunk) {
        enc_primary_ = MlpNetwork(chain(d, arch_.encoder_hidden, 2 * h), Activation::relu);
    } else {
        enc_primary_ = MlpNetwork(chain(d, arch_.encoder_hidden, h), Activation::relu);
        enc_secondary_ = MlpNetwork(chain(d, arch_.encoder_hidden, h), Activation::relu);
    }
    dec_mu_ = MlpNetwork(chain(h, arch_.decoder_hidden, d), Activation::relu);
    if (arch_.kind == ModelKind::vae3)
        dec_sigma_ = MlpNetwork(chain(h, arch_.decoder_hidden, d), Activation::relu);
}

VaeModel::VaeModel(Architecture arch, data::RngStream& init) : VaeModel(std::move(arch))
{
    auto uniform = [&init] { return init.uniform(); };
    init_all(enc_primary_, uniform);
    init_all(enc_secondary_, uniform);
    init_all(dec_mu_, uniform);
    init_all(dec_sigma_, uniform);
}

ParamVector VaeModel::params() const
{
    ParamVector p;
    switch (arch_.kind) {
    case ModelKind::linear:
        p.set(kLinV, enc_primary_.layer(0).weight);
        p.set(kLinLogTau2, lin_log_tau2_);
        p.set(kLinW, dec_mu_.layer(0).weight);
        p.set(kLinMu0, dec_mu_.layer(0).bias);
        p.set(kLogSigma2, Tensor::scalar(log_sigma2_));
        break;
    case ModelKind::vae1:
    case ModelKind::vae3:
        if (separate_encoders()) {
            export_net(enc_primary_, "enc_nu", p);
            export_net(enc_secondary_, "enc_tau", p);
        } else {
            export_net(enc_primary_, "enc", p);
        }
        export_net(dec_mu_, "dec_mu", p);
        if (arch_.kind == ModelKind::vae3)
            export_net(dec_sigma_, "dec_sigma", p);
        else
            p.set(kLogSigma2, Tensor::scalar(log_sigma2_));
        break;
    }
    return p;
}

void VaeModel::set_params(const ParamVector& p)
{
    if (!p.same_layout(params())) throw ShapeError("set_params: layout does not match the model");
    switch (arch_.kind) {
    case ModelKind::linear:
        enc_primary_.mutable_layer(0).weight = p.at(kLinV);
        lin_log_tau2_ = p.at(kLinLogTau2);
        dec_mu_.mutable_layer(0).weight = p.at(kLinW);
        dec_mu_.mutable_layer(0).bias = p.at(kLinMu0);
        log_sigma2_ = p.at(kLogSigma2)[0];
        break;
    case ModelKind::vae1:
    case ModelKind::vae3:
        if (separate_encoders()) {
            import_net(enc_primary_, "enc_nu", p);
            import_net(enc_secondary_, "enc_tau", p);
        } else {
            import_net(enc_primary_, "enc", p);
        }
        import_net(dec_mu_, "dec_mu", p);
        if (arch_.kind == ModelKind::vae3)
            import_net(dec_sigma_, "dec_sigma", p);
        else
            log_sigma2_ = p.at(kLogSigma2)[0];
        break;
    }
}

Architecture VaeModel::infer_architecture(const ParamVector& p)
{
    Architecture a;
    if (p.contains(kLinW)) {
        a.kind = ModelKind::linear;
        a.data_dim = p.at(kLinW).rows();
        a.latent_dim = p.at(kLinW).cols();
        a.encoder_hidden.clear();
        a.decoder_hidden.clear();
        return a;
    }
    a.kind = p.contains(slot("dec_sigma", 0, "weight")) ? ModelKind::vae3 : ModelKind::vae1;
    a.shared_encoder_trunk = p.contains(slot("enc", 0, "weight"));
    auto hidden_of = [&p](const std::string& prefix) {
        std::vector<std::size_t> widths;
        if (!p.contains(slot(prefix, 0, "weight")))
            throw ShapeError("checkpoint is missing network '" + prefix + "'");
        for (std::size_t l = 0; p.contains(slot(prefix, l, "weight")); ++l)
            widths.push_back(p.at(slot(prefix, l, "weight")).rows());
        widths.pop_back();
        return widths;
    };
    const std::string enc = a.shared_encoder_trunk ? "enc" : "enc_nu";
    a.encoder_hidden = hidden_of(enc);
    a.decoder_hidden = hidden_of("dec_mu");
    a.data_dim = p.at(slot(enc, 0, "weight")).cols();
    a.latent_dim = p.at(slot("dec_mu", 0, "weight")).cols();
    return a;
}

EncoderPass VaeModel::encode_for_backward(const Tensor& x) const
{
    autodiff::require_matrix(x, arch_.data_dim, "encode input");
    const std::size_t h = arch_.latent_dim, b = x.rows();
    EncoderPass pass;
    if (arch_.kind == ModelKind::linear) {
        Tensor centered = x;
        const Tensor& mu0 = dec_mu_.layer(0).bias;
        for (std::size_t r = 0; r < b; ++r)
            for (std::size_t c = 0; c < arch_.data_dim; ++c) centered(r, c) -= mu0[c];
        auto fwd = autodiff::mlp_forward(enc_primary_, centered);
        pass.out.nu = std::move(fwd.output);
        pass.tape_primary = std::move(fwd.tape);
        pass.raw_log_tau2 = Tensor({b, h});
        for (std::size_t r = 0; r < b; ++r)
            for (std::size_t c = 0; c < h; ++c) pass.raw_log_tau2(r, c) = lin_log_tau2_[c];
    } else if (separate_encoders()) {
        auto nu = autodiff::mlp_forward(enc_primary_, x);
        auto tau = autodiff::mlp_forward(enc_secondary_, x);
        pass.out.nu = std::move(nu.output);
        pass.raw_log_tau2 = std::move(tau.output);
        pass.tape_primary = std::move(nu.tape);
        pass.tape_secondary = std::move(tau.tape);
    } else {
        auto fwd = autodiff::mlp_forward(enc_primary_, x);
        pass.out.nu = columns(fwd.output, 0, h);
        pass.raw_log_tau2 = columns(fwd.output, h, h);
        pass.tape_primary = std::move(fwd.tape);
    }
    pass.out.log_tau2 = clamp_log_variance(pass.raw_log_tau2);
    return pass;
}

EncoderOutput VaeModel::encode(const Tensor& x) const
{
    // The taped pass costs one extra copy of each activation; acceptable here.
    return encode_for_backward(x).out;
}

void VaeModel::encoder_backward(const EncoderPass& pass, const Tensor& d_nu,
                                const Tensor& d_log_tau2, ParamVector& grads) const
{
    const std::size_t h = arch_.latent_dim;
    if (!d_nu.same_shape(pass.out.nu) || !d_log_tau2.same_shape(pass.out.log_tau2))
        throw ShapeError("encoder_backward: gradient shapes do not match the pass");
    const Tensor d_raw = mask_clamped(d_log_tau2, pass.raw_log_tau2);

    if (arch_.kind == ModelKind::linear) {
        const auto g = autodiff::mlp_backward(enc_primary_, pass.tape_primary, d_nu);
        grads.accumulate(kLinV, g.weight[0]);
        Tensor d_mu0 = sum_rows(g.input);
        for (auto& v : d_mu0.values()) v = -v;
        grads.accumulate(kLinMu0, d_mu0);
        grads.accumulate(kLinLogTau2, sum_rows(d_raw));
        return;
    }
    if (separate_encoders()) {
        accumulate_net(autodiff::mlp_backward(enc_primary_, pass.tape_primary, d_nu), "enc_nu",
                       grads);
        accumulate_net(autodiff::mlp_backward(enc_secondary_, pass.tape_secondary, d_raw),
                       "enc_tau", grads);
        return;
    }
    Tensor joined({d_nu.rows(), 2 * h});
    for (std::size_t r = 0; r < d_nu.rows(); ++r) {
        for (std::size_t c = 0; c < h; ++c) {
            joined(r, c) = d_nu(r, c);
            joined(r, h + c) = d_raw(r, c);
        }
    }
    accumulate_net(autodiff::mlp_backward(enc_primary_, pass.tape_primary, joined), "enc", grads);
}

DecoderPass VaeModel::decode_for_backward(const Tensor& z) const
{
    autodiff::require_matrix(z, arch_.latent_dim, "decode input");
    DecoderPass pass;
    auto mu = autodiff::mlp_forward(dec_mu_, z);
    pass.out.mu = std::move(mu.output);
    pass.tape_mu = std::move(mu.tape);
    if (arch_.kind == ModelKind::vae3) {
        auto s = autodiff::mlp_forward(dec_sigma_, z);
        pass.raw_log_sigma2 = std::move(s.output);
        pass.tape_sigma = std::move(s.tape);
        pass.out.shared_variance = false;
    } else {
        pass.raw_log_sigma2 = Tensor::scalar(log_sigma2_);
        pass.out.shared_variance = true;
    }
    pass.out.log_sigma2 = clamp_log_variance(pass.raw_log_sigma2);
    return pass;
}

DecoderOutput VaeModel::decode(const Tensor& z) const
{
    autodiff::require_matrix(z, arch_.latent_dim, "decode input");
    DecoderOutput out;
    out.mu = autodiff::mlp_apply(dec_mu_, z);
    if (arch_.kind == ModelKind::vae3) {
        out.log_sigma2 = clamp_log_variance(autodiff::mlp_apply(dec_sigma_, z));
        out.shared_variance = false;
    } else {
        out.log_sigma2 = clamp_log_variance(Tensor::scalar(log_sigma2_));
    }
    return out;
}

Tensor VaeModel::decoder_backward(const DecoderPass& pass, const Tensor& d_mu,
                                  const Tensor& d_log_sigma2, ParamVector& grads) const
{
    if (!d_mu.same_shape(pass.out.mu) || !d_log_sigma2.same_shape(pass.out.log_sigma2))
        throw ShapeError("decoder_backward: gradient shapes do not match the pass");
    auto g = autodiff::mlp_backward(dec_mu_, pass.tape_mu, d_mu);
    if (arch_.kind == ModelKind::linear) {
        grads.accumulate(kLinW, g.weight[0]);
        grads.accumulate(kLinMu0, g.bias[0]);
    } else {
        accumulate_net(g, "dec_mu", grads);
    }
    Tensor dz = std::move(g.input);

    const Tensor d_raw = mask_clamped(d_log_sigma2, pass.raw_log_sigma2);
    if (arch_.kind == ModelKind::vae3) {
        auto gs = autodiff::mlp_backward(dec_sigma_, pass.tape_sigma, d_raw);
        accumulate_net(gs, "dec_sigma", grads);
        for (std::size_t i = 0; i < dz.size(); ++i) dz[i] += gs.input[i];
    } else {
        grads.accumulate(kLogSigma2, d_raw);
    }
    return dz;
}

double VaeModel::log_sigma2() const
{
    if (arch_.kind == ModelKind::vae3) throw ConfigError("vae3 has no scalar decoder variance");
    return log_sigma2_;
}

void VaeModel::set_log_sigma2(double value)
{
    if (arch_.kind == ModelKind::vae3) throw ConfigError("vae3 has no scalar decoder variance");
    log_sigma2_ = value;
}

const Tensor& VaeModel::decoder_first_weight() const { return dec_mu_.layer(0).weight; }

}  // namespace vaentropy::models

namespace vaentropy::models {

Tensor draw_eps(std::size_t batch, std::size_t samples, std::size_t h, data::RngStream& rng)
{
    if (samples < 1) throw ConfigError("need at least one latent sample");
    Tensor eps({batch, samples, h});
    rng.fill_normal(eps.values());
    return eps;
}

ReparamSample reparameterize(const EncoderOutput& enc, Tensor eps)
{
    const std::size_t b = enc.nu.rows(), h = enc.nu.cols();
    if (eps.rank() != 3 || eps.shape()[0] != b || eps.shape()[2] != h)
        throw ShapeError("reparameterize: eps must be [B x S x H] matching the encoder");
    const std::size_t s = eps.shape()[1];
    Tensor z(eps.shape());
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < h; ++k) {
            const double nu = enc.nu(i, k);
            const double tau = std::exp(0.5 * enc.log_tau2(i, k));
            for (std::size_t j = 0; j < s; ++j) {
                const std::size_t at = (i * s + j) * h + k;
                z[at] = nu + tau * eps[at];
            }
        }
    }
    return {std::move(eps), std::move(z)};
}

ReparamSample sample_latents(const EncoderOutput& enc, std::size_t samples, data::RngStream& rng)
{
    return reparameterize(enc, draw_eps(enc.nu.rows(), samples, enc.nu.cols(), rng));
}

ColumnNormSplit column_norm_reparam(const Tensor& w0)
{
    if (w0.rank() != 2) throw ShapeError("column_norm_reparam needs a matrix");
    const std::size_t rows = w0.rows(), h = w0.cols();
    ColumnNormSplit out{Tensor({h}), Tensor(w0.shape())};
    for (std::size_t c = 0; c < h; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < rows; ++r) s += w0(r, c) * w0(r, c);
        const double norm = std::sqrt(s);
        if (!(norm > 1e-12))
            throw DegenerateError("column " + std::to_string(c) + " of W0 has near-zero norm");
        out.alpha[c] = norm;
        for (std::size_t r = 0; r < rows; ++r) out.w_unit(r, c) = w0(r, c) / norm;
    }
    return out;
}

}  // namespace vaentropy::models
