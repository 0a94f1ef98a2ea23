#include "vaentropy/harness/train.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "vaentropy/autodiff/adam.hpp"
#include "vaentropy/data/batching.hpp"
#include "vaentropy/data/io.hpp"
#include "vaentropy/errors.hpp"
#include "vaentropy/ppca/ppca.hpp"

namespace vaentropy::harness {

using autodiff::ParamVector;
using autodiff::Tensor;
using models::ModelKind;

namespace {

const std::string kSigmaSlot = "dec.log_sigma2";

std::vector<std::size_t> random_subset(std::size_t n, std::size_t k, data::RngStream rng)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.uniform_index(n - i)]);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

bool has_csv_extension(const std::filesystem::path& p)
{
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".csv";
}

// The architecture actually trained: data_dim follows the dataset.
models::Architecture run_architecture(const ExperimentConfig& config, const data::Dataset& ds)
{
    models::Architecture a = config.arch;
    a.data_dim = ds.dim();
    if (a.kind == ModelKind::linear) {
        a.encoder_hidden.clear();
        a.decoder_hidden.clear();
    }
    return a;
}

struct PpcaOracle {
    std::optional<double> ml;
    std::optional<double> gen;
};

PpcaOracle ppca_oracle(const data::Dataset& ds, std::size_t h)
{
    PpcaOracle o;
    const auto moments = ppca::data_covariance(ds.x);
    o.ml = ppca::ppca_ml_fit(moments, h).loglik_per_point;
    if (ds.provenance == data::Provenance::ppca_synthetic && ds.generator) {
        const auto& g = *ds.generator;
        o.gen = ppca::ppca_loglik(g.w, g.mu.values(), g.sigma * g.sigma, moments);
    }
    return o;
}

ParamVector trainable(const ParamVector& full, bool sigma_fixed)
{
    ParamVector p = full;
    if (sigma_fixed) p.erase(kSigmaSlot);
    return p;
}

}  // namespace

ConvergenceState::ConvergenceState(std::size_t window, double threshold)
    : window_(window), threshold_(threshold)
{
    if (window_ < 1) throw ConfigError("convergence window must be positive");
}

bool ConvergenceState::update(const std::vector<double>& values)
{
    if (!previous_.empty()) {
        if (values.size() != previous_.size())
            throw ShapeError("convergence signals changed length");
        double change = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i)
            change = std::max(change, std::abs(values[i] - previous_[i]) /
                                          std::max(std::abs(previous_[i]), 1.0));
        changes_.push_back(change);
        if (changes_.size() > window_) changes_.erase(changes_.begin());
    }
    previous_ = values;
    converged_ = changes_.size() == window_ && trailing_max_change() < threshold_;
    return converged_;
}

double ConvergenceState::trailing_max_change() const
{
    if (changes_.size() < window_) return std::numeric_limits<double>::infinity();
    return *std::max_element(changes_.begin(), changes_.end());
}

std::vector<double> convergence_signals(const bounds::BoundReport& r, std::size_t d, std::size_t h)
{
    const double mean_log_sigma2 = 2.0 * r.term_decoder_entropy / static_cast<double>(d) -
                                   bounds::kLog2PiE;
    const double mean_log_tau2 =
        (2.0 * r.term_encoder_entropy_mean - static_cast<double>(h) * bounds::kLog2PiE) /
        static_cast<double>(h);
    return {mean_log_sigma2, mean_log_tau2};
}

data::Dataset make_dataset(const ExperimentConfig& config, std::uint64_t seed)
{
    const std::uint64_t s = config.dataset.data_seed.value_or(seed);
    const auto& spec = config.dataset;
    if (spec.kind == DatasetKind::file) {
        data::Dataset ds =
            has_csv_extension(spec.path) ? data::load_csv(spec.path) : data::load_idx(spec.path);
        if (spec.subsample > 0 && spec.subsample < ds.size()) {
            const auto idx = random_subset(ds.size(), spec.subsample, data::RngStream(s, kStreamData));
            ds.x = data::gather_rows(ds.x, idx);
        }
        return ds;
    }
    const auto kind = spec.kind == DatasetKind::ppca ? data::Provenance::ppca_synthetic
                                                     : data::Provenance::ring_synthetic;
    const std::size_t h = spec.gen_latent_dim ? spec.gen_latent_dim : config.arch.latent_dim;
    data::RngStream rng(s, kStreamData);
    return data::gen_train_test(kind, spec.n_points, config.arch.data_dim, h, spec.sigma_gen, rng)
        .train;
}

Tensor eval_inputs(const ExperimentConfig& config, const data::Dataset& train, std::uint64_t seed)
{
    if (config.eval_points == 0 || config.eval_points >= train.size()) return train.x;
    const auto idx = random_subset(train.size(), config.eval_points,
                                   data::RngStream(seed, kStreamEvalSubset));
    return data::gather_rows(train.x, idx);
}

Tensor eval_noise(const ExperimentConfig& config, std::size_t n_eval, std::uint64_t seed)
{
    data::RngStream rng(seed, kStreamEvalNoise);
    return models::draw_eps(n_eval, config.mc_samples, config.arch.latent_dim, rng);
}

void finalize_gaps(RunRecord& run)
{
    if (run.rows.empty()) return;
    const double final_elbo = std::abs(run.rows.back().report.elbo_sampled);
    for (auto& row : run.rows) {
        if (final_elbo > 0.0)
            row.report.gap_pct_of_final = 100.0 * row.report.gap_abs / final_elbo;
        else
            row.report.gap_pct_of_final.reset();
    }
}

RunRecord train_run(const ExperimentConfig& config, std::uint64_t seed, const data::Dataset* shared)
{
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const data::Dataset owned = shared ? data::Dataset{} : make_dataset(config, seed);
    const data::Dataset& ds = shared ? *shared : owned;

    RunRecord run;
    run.seed = seed;
    run.arch = run_architecture(config, ds);
    ExperimentConfig cfg = config;
    cfg.arch = run.arch;
    if (cfg.batch_size > ds.size()) cfg.batch_size = ds.size();

    data::RngStream init(seed, kStreamInit);
    models::VaeModel model(run.arch, init);
    const double fixed_log_sigma2 = std::log(cfg.sigma2_value);
    if (cfg.sigma2_fixed) model.set_log_sigma2(fixed_log_sigma2);

    const Tensor x_eval = eval_inputs(cfg, ds, seed);
    const Tensor eps_eval = eval_noise(cfg, x_eval.rows(), seed);
    const PpcaOracle oracle =
        run.arch.kind == ModelKind::linear ? ppca_oracle(ds, run.arch.latent_dim) : PpcaOracle{};

    data::BatchIterator batches(ds.size(), cfg.batch_size, data::RngStream(seed, kStreamBatches));
    data::RngStream noise(seed, kStreamTrainNoise);
    ConvergenceState conv(cfg.convergence_window, cfg.convergence_threshold);

    ParamVector full = model.params();
    ParamVector params = trainable(full, cfg.sigma2_fixed);
    autodiff::AdamState adam = autodiff::AdamState::for_params(params);

    auto evaluate = [&](std::size_t iteration) {
        EvalRow row;
        row.iteration = iteration;
        row.report = bounds::evaluate_bounds(model, x_eval, eps_eval);
        if (!std::isfinite(row.report.elbo_sampled) || !std::isfinite(row.report.three_entropies))
            throw NumericError("non-finite bound at evaluation");
        // The entropy terms already hold the mean log tau2; collapse is its negative half.
        row.delta_collapse = row.report.term_prior_entropy - row.report.term_encoder_entropy_mean;
        if (run.arch.kind != ModelKind::vae3) row.sigma2 = std::exp(model.log_sigma2());
        row.ppca_ml_loglik = oracle.ml;
        row.ppca_gen_loglik = oracle.gen;
        row.wallclock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        run.rows.push_back(row);
        return conv.update(convergence_signals(row.report, run.arch.data_dim, run.arch.latent_dim));
    };

    std::size_t iteration = 0;
    try {
        bool done = evaluate(0) && cfg.stop_on_convergence;
        while (!done && iteration < cfg.max_iterations) {
            ++iteration;
            const auto idx = batches.next();
            const Tensor xb = data::gather_rows(ds.x, idx);
            const Tensor eps = models::draw_eps(xb.rows(), cfg.train_samples, run.arch.latent_dim, noise);
            auto g = bounds::elbo_with_gradient(model, xb, eps);
            if (!std::isfinite(g.value)) throw NumericError("non-finite training objective");
            ParamVector descent = trainable(g.grad, cfg.sigma2_fixed).zeros_like();
            descent.add_scaled(trainable(g.grad, cfg.sigma2_fixed), -1.0);
            autodiff::adam_step(params, descent, adam, cfg.learning_rate);
            for (const auto& [name, t] : params) full.at(name) = t;
            model.set_params(full);
            if (cfg.sigma2_fixed && model.log_sigma2() != fixed_log_sigma2)
                throw std::logic_error("fixed decoder variance was modified");

            const bool last = iteration == cfg.max_iterations;
            if (iteration % cfg.eval_every == 0 || last)
                done = evaluate(iteration) && cfg.stop_on_convergence;
        }
    } catch (const NumericError& e) {
        run.aborted_at = iteration;
        run.abort_reason = e.what();
    }
    run.converged = conv.converged();
    run.final_params = model.params();
    finalize_gaps(run);
    if (run.aborted()) return run;

    const auto enc = model.encode(x_eval);
    run.final_collapse = bounds::collapse_measures(enc.log_tau2);
    if (run.arch.kind != ModelKind::vae3) {
        data::RngStream diag(seed, kStreamDiagnostics);
        run.final_stationary = bounds::stationary_variance_solutions(model, x_eval, cfg.mc_samples, diag);
    }
    return run;
}

bounds::BoundReport replay_eval(const ExperimentConfig& config, const models::VaeModel& model,
                                std::uint64_t seed)
{
    ExperimentConfig cfg = config;
    const data::Dataset ds = make_dataset(config, seed);
    cfg.arch = run_architecture(config, ds);
    if (cfg.arch.latent_dim != model.latent_dim() || cfg.arch.data_dim != model.data_dim())
        throw ConfigError("checkpoint dimensions do not match the configured data");
    const Tensor x_eval = eval_inputs(cfg, ds, seed);
    return bounds::evaluate_bounds(model, x_eval, eval_noise(cfg, x_eval.rows(), seed));
}

SweepResult sweep(const ExperimentConfig& config)
{
    config.validate();
    std::optional<data::Dataset> shared;
    if (config.dataset.data_seed) shared = make_dataset(config, *config.dataset.data_seed);

    SweepResult result;
    result.runs.resize(config.seeds.size());
    std::vector<std::exception_ptr> errors(config.seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
            try {
                result.runs[i] = train_run(config, config.seeds[i], shared ? &*shared : nullptr);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::min(config.threads, config.seeds.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<std::vector<double>> traces;
    for (const auto& run : result.runs) {
        if (run.aborted()) {
            ++result.aborted;
            continue;
        }
        std::vector<double> trace;
        for (const auto& row : run.rows) trace.push_back(row.report.gap_pct_of_final.value_or(0.0));
        if (run.rows.size() > result.iterations.size()) {
            result.iterations.clear();
            for (const auto& row : run.rows) result.iterations.push_back(row.iteration);
        }
        traces.push_back(std::move(trace));
    }
    if (!traces.empty()) result.aggregate = bounds::aggregate_gaps(traces);
    return result;
}

}  // namespace vaentropy::harness
