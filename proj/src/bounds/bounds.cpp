#include "vaentropy/bounds/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vaentropy/errors.hpp"

namespace vaentropy::bounds {

using models::ModelKind;

namespace {

// Keeps per-pass memory bounded: rows_per_chunk * S latent rows are live at once.
constexpr std::size_t kLatentRowsPerChunk = 8192;

std::size_t rows_per_chunk(std::size_t samples)
{
    return std::max<std::size_t>(1, kLatentRowsPerChunk / samples);
}

// Mean taken around the first value seen, so a run of identical inputs
// returns that value exactly.
class ShiftedMean {
public:
    void add(double v)
    {
        if (count_ == 0) shift_ = v;
        sum_ += v - shift_;
        ++count_;
    }
    void add(std::span<const double> vs)
    {
        for (double v : vs) add(v);
    }
    double mean() const
    {
        if (count_ == 0) throw ShapeError("mean of an empty set");
        return shift_ + sum_ / static_cast<double>(count_);
    }

private:
    double shift_ = 0.0;
    double sum_ = 0.0;
    std::size_t count_ = 0;
};

// Continues `s` element by element, so chunked and whole-tensor sums agree bit for bit.
double flat_sum(std::span<const double> vs, double s = 0.0)
{
    for (double v : vs) s += v;
    return s;
}

// (1/2N) sum log tau2 - (D/2) (log(2 pi e) + mean log sigma2_d), the shared
// explicit form of the scalar- and z-dependent-variance expressions.
double explicit_form(double lt_sum, std::size_t n, double mean_ls, std::size_t d)
{
    const double dd = static_cast<double>(d);
    return 0.5 * lt_sum / static_cast<double>(n) - 0.5 * dd * (kLog2PiE + mean_ls);
}

EntropyTerms entropy_form(double lt_sum, std::size_t n, std::size_t h, double mean_ls,
                          std::size_t d)
{
    const double hh = static_cast<double>(h), dd = static_cast<double>(d);
    EntropyTerms t;
    t.prior_entropy = 0.5 * hh * kLog2PiE;
    t.decoder_entropy = 0.5 * dd * (kLog2PiE + mean_ls);
    t.encoder_entropy_mean = 0.5 * (hh * kLog2PiE + lt_sum / static_cast<double>(n));
    return t;
}

void require_finite_input(const Tensor& t, const char* what)
{
    if (!t.all_finite()) throw NumericError(std::string(what) + " contains a non-finite value");
}

void check_eps(const VaeModel& model, const Tensor& x, const Tensor& eps)
{
    autodiff::require_matrix(x, model.data_dim(), "bound input");
    if (eps.rank() != 3 || eps.shape()[0] != x.rows() || eps.shape()[2] != model.latent_dim())
        throw ShapeError("eps must be [N x S x H] for the given batch and model");
}

struct PassTotals {
    double elbo_sum = 0.0;         // sum over points of the per-point estimate
    double within_var_sum = 0.0;   // sum over points of the sample variance across draws
    double point_sq_sum = 0.0;     // sum over points of the squared per-point estimate
    double lt_sum = 0.0;           // sum of every clamped log tau2 entry
    ShiftedMean ls_mean;           // decoder log-variances at the draws (vae3)
};

// One pass over the data. When `grad` is non-null it receives d(mean ELBO)/d params.
void run_pass(const VaeModel& model, const Tensor& x, const Tensor& eps, PassTotals& totals,
              ParamVector* grad)
{
    check_eps(model, x, eps);
    const std::size_t n = x.rows(), s = eps.shape()[1], h = model.latent_dim(),
                      d = model.data_dim();
    const bool z_variance = model.kind() == ModelKind::vae3;
    const double inv_n = 1.0 / static_cast<double>(n);
    const double inv_ns = inv_n / static_cast<double>(s);
    const std::size_t chunk = rows_per_chunk(s);

    std::vector<double> draws(s);
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t end = std::min(n, begin + chunk), b = end - begin;
        const Tensor xc = x.slice_rows(begin, end);
        Tensor ec = eps.slice_rows(begin, end);

        models::EncoderPass enc;
        if (grad) {
            enc = model.encode_for_backward(xc);
        } else {
            enc.out = model.encode(xc);
        }
        const auto sample = models::reparameterize(enc.out, std::move(ec));
        const Tensor zr = sample.z_rows();

        models::DecoderPass dec;
        if (grad) {
            dec = model.decode_for_backward(zr);
        } else {
            dec.out = model.decode(zr);
        }
        const Tensor& mu = dec.out.mu;
        const Tensor& ls = dec.out.log_sigma2;
        if (!mu.all_finite() || !ls.all_finite())
            throw NumericError("decoder produced a non-finite value");

        Tensor d_mu, d_ls;
        if (grad) {
            d_mu = Tensor(mu.shape());
            d_ls = Tensor(ls.shape());
        }

        totals.lt_sum = flat_sum(enc.out.log_tau2.values(), totals.lt_sum);
        if (z_variance) totals.ls_mean.add(ls.values());

        for (std::size_t i = 0; i < b; ++i) {
            double kl = 0.0;
            for (std::size_t k = 0; k < h; ++k) {
                const double nu = enc.out.nu(i, k), lt = enc.out.log_tau2(i, k);
                kl += std::exp(lt) + nu * nu - 1.0 - lt;
            }
            kl *= 0.5;

            const auto xi = xc.row(i);
            for (std::size_t j = 0; j < s; ++j) {
                const std::size_t m = i * s + j;
                double rec = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double lsv = z_variance ? ls(m, c) : ls[0];
                    const double prec = std::exp(-lsv);
                    const double diff = xi[c] - mu(m, c);
                    rec += kLog2Pi + lsv + diff * diff * prec;
                    if (grad) {
                        d_mu(m, c) = diff * prec * inv_ns;
                        const double g = -0.5 * (1.0 - diff * diff * prec) * inv_ns;
                        if (z_variance)
                            d_ls(m, c) = g;
                        else
                            d_ls[0] += g;
                    }
                }
                draws[j] = -0.5 * rec - kl;
            }
            double mean = 0.0;
            for (double v : draws) mean += v;
            mean /= static_cast<double>(s);
            double var = 0.0;
            if (s > 1) {
                for (double v : draws) var += (v - mean) * (v - mean);
                var /= static_cast<double>(s - 1);
            }
            totals.elbo_sum += mean;
            totals.within_var_sum += var;
            totals.point_sq_sum += mean * mean;
        }
        if (!std::isfinite(totals.elbo_sum)) throw NumericError("non-finite log-likelihood term");

        if (!grad) continue;
        const Tensor dz = model.decoder_backward(dec, d_mu, d_ls, *grad);
        Tensor d_nu({b, h}), d_lt({b, h});
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t k = 0; k < h; ++k) {
                const double nu = enc.out.nu(i, k), lt = enc.out.log_tau2(i, k);
                const double tau = std::exp(0.5 * lt);
                double g_nu = 0.0, g_lt = 0.0;
                for (std::size_t j = 0; j < s; ++j) {
                    const std::size_t at = (i * s + j) * h + k;
                    g_nu += dz[at];
                    g_lt += dz[at] * sample.eps[at];
                }
                d_nu(i, k) = g_nu - nu * inv_n;
                d_lt(i, k) = 0.5 * tau * g_lt - 0.5 * (tau * tau - 1.0) * inv_n;
            }
        }
        model.encoder_backward(enc, d_nu, d_lt, *grad);
    }
}

ElboEstimate estimate_from(const PassTotals& t, std::size_t n, std::size_t s)
{
    const double nn = static_cast<double>(n);
    ElboEstimate e;
    e.value = t.elbo_sum / nn;
    e.n_samples = s;
    if (s > 1) {
        e.std_error = std::sqrt(t.within_var_sum / static_cast<double>(s)) / nn;
    } else if (n > 1) {
        // One draw per point: the spread across points bounds the noise from above.
        const double var = (t.point_sq_sum - nn * e.value * e.value) / (nn - 1.0);
        e.std_error = std::sqrt(std::max(0.0, var) / nn);
    }
    return e;
}

}  // namespace

double gaussian_entropy_diag(std::span<const double> variances)
{
    double s = 0.0;
    for (double v : variances) {
        if (!(v > 0.0)) throw DegenerateError("entropy needs positive variances");
        s += std::log(2.0 * std::numbers::pi * std::numbers::e * v);
    }
    return 0.5 * s;
}

double kl_diag_gaussian_to_std(std::span<const double> nu, std::span<const double> tau2)
{
    if (nu.size() != tau2.size()) throw ShapeError("kl: nu and tau2 differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < nu.size(); ++i) {
        if (!(tau2[i] > 0.0)) throw DegenerateError("kl needs positive variances");
        s += tau2[i] + nu[i] * nu[i] - 1.0 - std::log(tau2[i]);
    }
    return 0.5 * s;
}

ElboEstimate elbo_sampled(const VaeModel& model, const Tensor& x, const Tensor& eps)
{
    PassTotals t;
    run_pass(model, x, eps, t, nullptr);
    return estimate_from(t, x.rows(), eps.shape()[1]);
}

ElboEstimate elbo_sampled(const VaeModel& model, const Tensor& x, std::size_t samples,
                          data::RngStream& rng)
{
    return elbo_sampled(model, x, models::draw_eps(x.rows(), samples, model.latent_dim(), rng));
}

ElboGradient elbo_with_gradient(const VaeModel& model, const Tensor& x, const Tensor& eps)
{
    PassTotals t;
    ElboGradient out;
    out.grad = model.params().zeros_like();
    run_pass(model, x, eps, t, &out.grad);
    out.value = t.elbo_sum / static_cast<double>(x.rows());
    return out;
}

BoundReport evaluate_bounds(const VaeModel& model, const Tensor& x, const Tensor& eps)
{
    PassTotals t;
    run_pass(model, x, eps, t, nullptr);
    const std::size_t n = x.rows(), d = model.data_dim();
    const ElboEstimate e = estimate_from(t, n, eps.shape()[1]);
    const double mean_ls = model.kind() == ModelKind::vae3
                               ? t.ls_mean.mean()
                               : std::clamp(model.log_sigma2(), -models::kLogVarianceClamp,
                                            models::kLogVarianceClamp);
    const EntropyTerms terms = entropy_form(t.lt_sum, n, model.latent_dim(), mean_ls, d);

    BoundReport r;
    r.elbo_sampled = e.value;
    r.elbo_std_error = e.std_error;
    r.n_samples = e.n_samples;
    r.three_entropies = explicit_form(t.lt_sum, n, mean_ls, d);
    r.term_prior_entropy = terms.prior_entropy;
    r.term_decoder_entropy = terms.decoder_entropy;
    r.term_encoder_entropy_mean = terms.encoder_entropy_mean;
    r.gap_abs = std::abs(r.elbo_sampled - r.three_entropies);
    return r;
}

double three_entropies_vae1(const Tensor& log_tau2, double log_sigma2, std::size_t d)
{
    require_finite_input(log_tau2, "log_tau2");
    if (!std::isfinite(log_sigma2)) throw NumericError("log_sigma2 is non-finite");
    return explicit_form(flat_sum(log_tau2.values()), log_tau2.rows(), log_sigma2, d);
}

EntropyTerms entropy_terms_vae1(const Tensor& log_tau2, double log_sigma2, std::size_t d)
{
    require_finite_input(log_tau2, "log_tau2");
    if (!std::isfinite(log_sigma2)) throw NumericError("log_sigma2 is non-finite");
    return entropy_form(flat_sum(log_tau2.values()), log_tau2.rows(), log_tau2.cols(), log_sigma2,
                        d);
}

double three_entropies_linear(std::span<const double> log_tau2, double log_sigma2, std::size_t d)
{
    return three_entropies_vae1(Tensor({1, log_tau2.size()},
                                       std::vector<double>(log_tau2.begin(), log_tau2.end())),
                                log_sigma2, d);
}

double three_entropies_vae3(const Tensor& log_tau2, const Tensor& log_sigma2_samples)
{
    require_finite_input(log_tau2, "log_tau2");
    require_finite_input(log_sigma2_samples, "decoder log-variances");
    ShiftedMean ls;
    ls.add(log_sigma2_samples.values());
    return explicit_form(flat_sum(log_tau2.values()), log_tau2.rows(), ls.mean(),
                         log_sigma2_samples.cols());
}

EntropyTerms entropy_terms_vae3(const Tensor& log_tau2, const Tensor& log_sigma2_samples)
{
    require_finite_input(log_tau2, "log_tau2");
    require_finite_input(log_sigma2_samples, "decoder log-variances");
    ShiftedMean ls;
    ls.add(log_sigma2_samples.values());
    return entropy_form(flat_sum(log_tau2.values()), log_tau2.rows(), log_tau2.cols(), ls.mean(),
                        log_sigma2_samples.cols());
}

double three_entropies_vae3(const VaeModel& model, const Tensor& x, std::size_t samples,
                            data::RngStream& rng)
{
    if (model.kind() != ModelKind::vae3) throw ConfigError("three_entropies_vae3 needs a vae3 model");
    autodiff::require_matrix(x, model.data_dim(), "three_entropies_vae3 input");
    const std::size_t n = x.rows(), chunk = rows_per_chunk(samples);
    double lt_sum = 0.0;
    ShiftedMean ls;
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t end = std::min(n, begin + chunk);
        const auto enc = model.encode(x.slice_rows(begin, end));
        const auto sample = models::sample_latents(enc, samples, rng);
        const auto dec = model.decode(sample.z_rows());
        if (!dec.log_sigma2.all_finite()) throw NumericError("sigma-net output is non-finite");
        lt_sum = flat_sum(enc.log_tau2.values(), lt_sum);
        ls.add(dec.log_sigma2.values());
    }
    return explicit_form(lt_sum, n, ls.mean(), model.data_dim());
}

StationarySolutions stationary_variance_solutions(const VaeModel& model, const Tensor& x,
                                                  std::size_t samples, data::RngStream& rng)
{
    if (model.kind() == ModelKind::vae3)
        throw ConfigError("stationary variance solutions need a linear or vae1 model");
    autodiff::require_matrix(x, model.data_dim(), "stationary_variance_solutions input");
    if (samples < 1) throw ConfigError("need at least one latent sample");
    const std::size_t n = x.rows(), h = model.latent_dim(), d = model.data_dim();
    const bool linear = model.kind() == ModelKind::linear;

    Tensor col_sq({h});
    if (linear) {
        const Tensor& w = model.decoder_first_weight();
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t k = 0; k < h; ++k) col_sq[k] += w(r, k) * w(r, k);
    }

    StationarySolutions out{Tensor({h}), 0.0};
    double sq_err = 0.0;
    const std::size_t chunk = rows_per_chunk(linear ? 1 : samples);
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t end = std::min(n, begin + chunk), b = end - begin;
        const Tensor xc = x.slice_rows(begin, end);
        const auto enc = model.encode(xc);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t k = 0; k < h; ++k)
                out.alpha2[k] += enc.nu(i, k) * enc.nu(i, k) + std::exp(enc.log_tau2(i, k));

        if (linear) {
            // E_q ||x - W z - mu0||^2 = ||x - W nu - mu0||^2 + sum_h tau2_h ||W_h||^2
            const auto mean = model.decode(enc.nu).mu;
            for (std::size_t i = 0; i < b; ++i) {
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = xc(i, c) - mean(i, c);
                    sq_err += diff * diff;
                }
                for (std::size_t k = 0; k < h; ++k) sq_err += std::exp(enc.log_tau2(i, k)) * col_sq[k];
            }
            continue;
        }
        const auto sample = models::sample_latents(enc, samples, rng);
        const auto mu = model.decode(sample.z_rows()).mu;
        double chunk_err = 0.0;
        for (std::size_t m = 0; m < b * samples; ++m) {
            const auto xi = xc.row(m / samples);
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = xi[c] - mu(m, c);
                chunk_err += diff * diff;
            }
        }
        sq_err += chunk_err / static_cast<double>(samples);
    }
    for (auto& a : out.alpha2.values()) a /= static_cast<double>(n);
    out.sigma2 = sq_err / static_cast<double>(n * d);
    return out;
}

CollapseReport collapse_measures(const Tensor& log_tau2)
{
    require_finite_input(log_tau2, "log_tau2");
    if (log_tau2.rank() != 2) throw ShapeError("collapse_measures needs [N x H] log-variances");
    const std::size_t n = log_tau2.rows(), h = log_tau2.cols();
    CollapseReport r;
    r.delta_per_latent.assign(h, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < h; ++k) r.delta_per_latent[k] += log_tau2(i, k);
    for (auto& v : r.delta_per_latent) v = -0.5 * v / static_cast<double>(n);
    for (double v : r.delta_per_latent) r.delta_total += v;
    return r;
}

double volume_const_term(std::size_t d, std::size_t h, double edge_factor)
{
    if (!(edge_factor > 0.0)) throw ConfigError("volume edge factor must be positive");
    const double dd = static_cast<double>(d), hh = static_cast<double>(h);
    return (dd - hh) * std::log(edge_factor) - 0.5 * dd * kLog2PiE;
}

namespace {

VolumeReport volume_from(double lt_sum, std::size_t n, std::size_t h, double mean_ls,
                         std::size_t d, double edge_factor)
{
    const double log_c = std::log(edge_factor);
    const double dd = static_cast<double>(d), hh = static_cast<double>(h);
    VolumeReport r;
    r.log_zvol_mean = hh * log_c + 0.5 * lt_sum / static_cast<double>(n);
    r.log_xvol_mean = dd * log_c + 0.5 * dd * mean_ls;
    r.const_term = volume_const_term(d, h, edge_factor);
    r.bound_value = r.log_zvol_mean - r.log_xvol_mean + r.const_term;
    return r;
}

}  // namespace

VolumeReport volume_bound(const Tensor& log_tau2, const Tensor& log_sigma2_samples, std::size_t d,
                          double edge_factor)
{
    require_finite_input(log_tau2, "log_tau2");
    require_finite_input(log_sigma2_samples, "decoder log-variances");
    if (log_tau2.rank() != 2 || log_tau2.rows() < 1) throw ShapeError("volume_bound needs data");
    const bool shared = log_sigma2_samples.size() == 1 && log_sigma2_samples.rank() == 1;
    if (!shared && log_sigma2_samples.cols() != d)
        throw ShapeError("decoder log-variance rows must have D entries");
    ShiftedMean ls;
    ls.add(log_sigma2_samples.values());
    return volume_from(flat_sum(log_tau2.values()), log_tau2.rows(), log_tau2.cols(), ls.mean(), d,
                       edge_factor);
}

VolumeReport volume_bound(const VaeModel& model, const Tensor& x, std::size_t samples,
                          data::RngStream& rng, double edge_factor)
{
    autodiff::require_matrix(x, model.data_dim(), "volume_bound input");
    if (samples < 1) throw ConfigError("need at least one latent sample");
    const std::size_t n = x.rows(), h = model.latent_dim(), d = model.data_dim();
    const auto enc = model.encode(x);
    const double lt_sum = flat_sum(enc.log_tau2.values());

    if (model.kind() != ModelKind::vae3) {
        const double ls = std::clamp(model.log_sigma2(), -models::kLogVarianceClamp,
                                     models::kLogVarianceClamp);
        return volume_from(lt_sum, n, h, ls, d, edge_factor);
    }

    ShiftedMean ls;
    const std::size_t total = n * samples;
    std::vector<double> eps(h);
    for (std::size_t begin = 0; begin < total; begin += kLatentRowsPerChunk) {
        const std::size_t rows = std::min(total - begin, kLatentRowsPerChunk);
        Tensor z({rows, h});
        for (std::size_t m = 0; m < rows; ++m) {
            const std::size_t idx = rng.uniform_index(n);
            rng.fill_normal(eps);
            for (std::size_t k = 0; k < h; ++k)
                z(m, k) = enc.nu(idx, k) + std::exp(0.5 * enc.log_tau2(idx, k)) * eps[k];
        }
        const auto dec = model.decode(z);
        if (!dec.log_sigma2.all_finite()) throw NumericError("sigma-net output is non-finite");
        ls.add(dec.log_sigma2.values());
    }
    return volume_from(lt_sum, n, h, ls.mean(), d, edge_factor);
}

GapTrace gap_metrics(std::span<const double> elbo_trace, std::span<const double> three_h_trace)
{
    if (elbo_trace.empty() || elbo_trace.size() != three_h_trace.size())
        throw ShapeError("gap traces must be non-empty and of equal length");
    const double final_elbo = std::abs(elbo_trace.back());
    if (!(final_elbo > 0.0)) throw DegenerateError("final ELBO is zero; gap percentage undefined");
    GapTrace g;
    for (std::size_t i = 0; i < elbo_trace.size(); ++i) {
        const double a = std::abs(elbo_trace[i] - three_h_trace[i]);
        g.gap_abs.push_back(a);
        g.gap_pct.push_back(100.0 * a / final_elbo);
    }
    return g;
}

double percentile(std::vector<double> values, double q)
{
    if (values.empty()) throw ShapeError("percentile of an empty set");
    if (!(q >= 0.0 && q <= 100.0)) throw ConfigError("percentile rank must lie in [0, 100]");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0) return values[lo];
    return values[lo] + frac * (values[hi] - values[lo]);
}

GapAggregate aggregate_gaps(const std::vector<std::vector<double>>& gap_pct_traces)
{
    std::size_t len = 0;
    for (const auto& t : gap_pct_traces) {
        if (t.empty()) throw ShapeError("aggregate_gaps: empty trace");
        len = std::max(len, t.size());
    }
    GapAggregate agg;
    std::vector<double> column;
    for (std::size_t i = 0; i < len; ++i) {
        column.clear();
        for (const auto& t : gap_pct_traces) column.push_back(t[std::min(i, t.size() - 1)]);
        agg.median.push_back(percentile(column, 50.0));
        agg.q25.push_back(percentile(column, 25.0));
        agg.q75.push_back(percentile(column, 75.0));
    }
    return agg;
}

}  // namespace vaentropy::bounds
