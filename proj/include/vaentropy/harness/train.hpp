#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vaentropy/bounds/bounds.hpp"
#include "vaentropy/data/dataset.hpp"
#include "vaentropy/harness/config.hpp"
#include "vaentropy/models/vae.hpp"

namespace vaentropy::harness {

// Stream ids under each run seed.
inline constexpr std::uint64_t kStreamData = 1;
inline constexpr std::uint64_t kStreamInit = 2;
inline constexpr std::uint64_t kStreamBatches = 3;
inline constexpr std::uint64_t kStreamTrainNoise = 4;
inline constexpr std::uint64_t kStreamEvalNoise = 5;
inline constexpr std::uint64_t kStreamEvalSubset = 6;
inline constexpr std::uint64_t kStreamDiagnostics = 7;

struct EvalRow {
    std::size_t iteration = 0;
    bounds::BoundReport report;
    double delta_collapse = 0.0;
    std::optional<double> sigma2;  // scalar decoder variance; unset for vae3
    std::optional<double> ppca_ml_loglik;
    std::optional<double> ppca_gen_loglik;
    double wallclock_s = 0.0;
};

struct RunRecord {
    std::uint64_t seed = 0;
    models::Architecture arch;
    std::vector<EvalRow> rows;
    bounds::CollapseReport final_collapse;
    std::optional<bounds::StationarySolutions> final_stationary;
    autodiff::ParamVector final_params;
    bool converged = false;
    std::optional<std::size_t> aborted_at;
    std::string abort_reason;

    bool aborted() const noexcept { return aborted_at.has_value(); }
};

/// Trailing-window test on a few scalar diagnostics. Converged once every
/// consecutive change within the last `window` updates is below `threshold`,
/// measured relative to max(|previous|, 1).
class ConvergenceState {
public:
    ConvergenceState(std::size_t window, double threshold);

    /// Returns converged() after folding in the new values.
    bool update(const std::vector<double>& values);
    bool converged() const noexcept { return converged_; }
    /// Largest relative change among the last `window` updates (inf until full).
    double trailing_max_change() const;

private:
    std::size_t window_;
    double threshold_;
    std::vector<double> previous_;
    std::vector<double> changes_;
    bool converged_ = false;
};

/// Mean decoder log-variance and mean encoder log-variance per latent, the
/// quantities the convergence test watches.
std::vector<double> convergence_signals(const bounds::BoundReport& r, std::size_t d, std::size_t h);

/// Generates or loads the training set for a run. Synthetic kinds use
/// stream kStreamData under `seed`.
data::Dataset make_dataset(const ExperimentConfig& config, std::uint64_t seed);

/// Evaluation rows: all of `train`, or a fixed random subset of eval_points.
autodiff::Tensor eval_inputs(const ExperimentConfig& config, const data::Dataset& train,
                             std::uint64_t seed);

/// Frozen evaluation noise [N_eval x S x H] under stream kStreamEvalNoise.
autodiff::Tensor eval_noise(const ExperimentConfig& config, std::size_t n_eval, std::uint64_t seed);

/// Adam on the negated sampled ELBO. Divergence stops the run and is recorded
/// in aborted_at rather than thrown. `shared` supplies the dataset when set.
RunRecord train_run(const ExperimentConfig& config, std::uint64_t seed,
                    const data::Dataset* shared = nullptr);

/// Re-evaluates a stored model the way train_run evaluates, for replay.
bounds::BoundReport replay_eval(const ExperimentConfig& config, const models::VaeModel& model,
                                std::uint64_t seed);

struct SweepResult {
    std::vector<RunRecord> runs;  // in seed-list order
    std::vector<std::size_t> iterations;
    bounds::GapAggregate aggregate;  // over runs that finished
    std::size_t aborted = 0;
};

/// Runs every seed (on config.threads workers) and aggregates gap_pct.
SweepResult sweep(const ExperimentConfig& config);

/// Fills gap_pct_of_final from the final ELBO of the run.
void finalize_gaps(RunRecord& run);

}  // namespace vaentropy::harness
