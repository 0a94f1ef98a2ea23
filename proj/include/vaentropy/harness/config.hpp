#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vaentropy/models/vae.hpp"

namespace vaentropy::harness {

enum class DatasetKind { ppca, ring, file };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::ppca;
    std::size_t n_points = 10000;
    double sigma_gen = 0.1;
    std::size_t gen_latent_dim = 0;  // latent dimension of the generator; 0 follows the model
    std::filesystem::path path;  // file kind: .idx / .csv
    std::size_t subsample = 0;   // file kind: random subset size, 0 keeps every row
    /// When set, every run of a sweep shares the dataset drawn from this seed;
    /// otherwise each run draws its own from its run seed.
    std::optional<std::uint64_t> data_seed;
};

struct ExperimentConfig {
    models::Architecture arch;
    DatasetSpec dataset;
    std::size_t batch_size = 2000;
    double learning_rate = 1e-3;
    std::size_t mc_samples = 100;     // S for every reported bound
    std::size_t train_samples = 100;  // S inside each gradient step
    std::size_t max_iterations = 20000;
    std::size_t eval_every = 500;
    std::size_t eval_points = 0;  // 0 evaluates on the whole training set
    std::vector<std::uint64_t> seeds{0};
    bool sigma2_fixed = false;
    double sigma2_value = 1.0;
    std::size_t convergence_window = 50;
    double convergence_threshold = 1e-3;
    bool stop_on_convergence = true;
    std::size_t threads = 1;
    std::filesystem::path output_dir = "out";

    /// Throws ConfigError on the first invalid field.
    void validate() const;
};

/// Sets one field from its textual key and value. Throws ConfigError for an
/// unknown key or a malformed value.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);

/// Every key accepted by apply_setting, in documentation order.
const std::vector<std::string>& setting_keys();

/// Flat "key = value" lines; '#' starts a comment; blank lines are ignored.
/// Later keys override earlier ones. Errors name the line.
std::map<std::string, std::string> parse_config_text(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path,
                             ExperimentConfig base = ExperimentConfig{});

/// Seeds as "3", "1,2,5" or an inclusive range "0..9".
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

/// key = value text that load_config reads back to an equal configuration.
std::string dump_config(const ExperimentConfig& config);

}  // namespace vaentropy::harness
