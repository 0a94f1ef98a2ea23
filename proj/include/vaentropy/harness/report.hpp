#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vaentropy/bounds/bounds.hpp"
#include "vaentropy/harness/train.hpp"

namespace vaentropy::harness {

inline const std::vector<std::string> kRunCsvHeader{
    "iteration",       "elbo_sampled",         "three_entropies", "gap_abs",
    "gap_pct",         "prior_entropy",        "decoder_entropy", "encoder_entropy_mean",
    "delta_collapse",  "sigma2",               "ppca_ml_loglik",  "ppca_gen_loglik",
    "wallclock_s"};

inline const std::vector<std::string> kAggregateCsvHeader{"iteration", "gap_median", "gap_q25",
                                                          "gap_q75"};

std::string run_csv(const RunRecord& run);
std::string aggregate_csv(const std::vector<std::size_t>& iterations,
                          const bounds::GapAggregate& agg);

/// Per-run files run_<seed>.csv (index suffix on duplicate seeds) and
/// aggregate.csv. Returns the paths written.
std::vector<std::filesystem::path> emit_report(const std::vector<RunRecord>& runs,
                                               const std::filesystem::path& out_dir);

struct ParsedRun {
    std::vector<std::size_t> iterations;
    std::vector<double> gap_pct;
};

/// Reads back the iteration and gap_pct columns of a run CSV.
ParsedRun read_run_csv(const std::filesystem::path& path);

/// Aggregates existing run CSVs into out_path.
void aggregate_run_files(const std::vector<std::filesystem::path>& runs,
                         const std::filesystem::path& out_path);

}  // namespace vaentropy::harness
