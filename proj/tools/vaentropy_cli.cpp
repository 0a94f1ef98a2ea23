// Command-line front end: gen-data, train, sweep, eval, ppca, report.
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric divergence.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vaentropy/data/io.hpp"
#include "vaentropy/errors.hpp"
#include "vaentropy/harness/checkpoint.hpp"
#include "vaentropy/harness/config.hpp"
#include "vaentropy/harness/report.hpp"
#include "vaentropy/harness/train.hpp"
#include "vaentropy/ppca/ppca.hpp"

namespace {

using namespace vaentropy;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Settings {
    std::string config_path;
    std::map<std::string, std::string> flags;
};

std::string flag_name(const std::string& key)
{
    std::string s = key;
    for (auto& c : s)
        if (c == '_') c = '-';
    return "--" + s;
}

// Every config key becomes a flag of the same name; flags win over the file
// and a repeated flag keeps its last value.
void add_setting_flags(CLI::App* cmd, Settings& s)
{
    cmd->add_option("--config", s.config_path, "key = value configuration file");
    for (const auto& key : harness::setting_keys())
        cmd->add_option_function<std::string>(
            flag_name(key), [&s, key](const std::string& v) { s.flags[key] = v; },
            "overrides '" + key + "'")
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd->add_option_function<std::string>(
        "--seed", [&s](const std::string& v) { s.flags["seeds"] = v; }, "alias for --seeds")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

harness::ExperimentConfig resolve(const Settings& s)
{
    harness::ExperimentConfig c;
    if (!s.config_path.empty()) c = harness::load_config(s.config_path, c);
    for (const auto& key : harness::setting_keys())
        if (auto it = s.flags.find(key); it != s.flags.end()) harness::apply_setting(c, key, it->second);
    c.validate();
    return c;
}

void print_report(const bounds::BoundReport& r)
{
    const auto f = data::format_double;
    std::cout << "elbo_sampled = " << f(r.elbo_sampled) << '\n'
              << "elbo_std_error = " << f(r.elbo_std_error) << '\n'
              << "three_entropies = " << f(r.three_entropies) << '\n'
              << "gap_abs = " << f(r.gap_abs) << '\n'
              << "prior_entropy = " << f(r.term_prior_entropy) << '\n'
              << "decoder_entropy = " << f(r.term_decoder_entropy) << '\n'
              << "encoder_entropy_mean = " << f(r.term_encoder_entropy_mean) << '\n'
              << "n_samples = " << r.n_samples << '\n';
}

void write_dataset(const std::filesystem::path& path, const autodiff::Tensor& x)
{
    if (path.extension() == ".idx")
        data::write_idx(path, x, data::IdxElement::float64);
    else
        data::write_csv(path, x);
}

void save_outputs(const harness::ExperimentConfig& c, const std::vector<harness::RunRecord>& runs)
{
    const auto written = harness::emit_report(runs, c.output_dir);
    {
        std::FILE* f = std::fopen((c.output_dir / "config.txt").string().c_str(), "w");
        if (!f) throw DataError("cannot write config.txt in " + c.output_dir.string());
        const std::string text = harness::dump_config(c);
        std::fwrite(text.data(), 1, text.size(), f);
        std::fclose(f);
    }
    for (const auto& run : runs) {
        if (run.aborted()) continue;
        models::VaeModel model(run.arch);
        model.set_params(run.final_params);
        harness::checkpoint_save(model, c.output_dir / ("model_" + std::to_string(run.seed) + ".vaec"));
    }
    for (const auto& p : written) std::cout << "wrote " << p.string() << '\n';
}

void summarize(const harness::RunRecord& run)
{
    const auto f = data::format_double;
    std::cout << "seed " << run.seed << ": ";
    if (run.aborted()) {
        std::cout << "aborted at iteration " << *run.aborted_at << " (" << run.abort_reason << ")\n";
        return;
    }
    const auto& last = run.rows.back();
    std::cout << "iterations " << last.iteration << (run.converged ? " (converged)" : "")
              << ", elbo " << f(last.report.elbo_sampled) << ", three_entropies "
              << f(last.report.three_entropies) << ", gap_pct "
              << f(last.report.gap_pct_of_final.value_or(0.0)) << '\n';
}

int run_gen_data(const Settings& s, const std::string& out, const std::string& test_out)
{
    auto c = resolve(s);
    if (c.dataset.kind == harness::DatasetKind::file)
        throw ConfigError("gen-data needs dataset = ppca or ring");
    const auto kind = c.dataset.kind == harness::DatasetKind::ppca ? data::Provenance::ppca_synthetic
                                                                   : data::Provenance::ring_synthetic;
    const std::size_t h = c.dataset.gen_latent_dim ? c.dataset.gen_latent_dim : c.arch.latent_dim;
    data::RngStream rng(c.dataset.data_seed.value_or(c.seeds.front()), harness::kStreamData);
    const auto tt = data::gen_train_test(kind, c.dataset.n_points, c.arch.data_dim, h,
                                         c.dataset.sigma_gen, rng);
    write_dataset(out, tt.train.x);
    std::cout << "wrote " << out << " (" << tt.train.size() << " x " << tt.train.dim() << ")\n";
    if (!test_out.empty()) {
        write_dataset(test_out, tt.test.x);
        std::cout << "wrote " << test_out << '\n';
    }
    return 0;
}

int run_train(const Settings& s)
{
    auto c = resolve(s);
    c.seeds.resize(1);
    const auto run = harness::train_run(c, c.seeds.front());
    summarize(run);
    save_outputs(c, {run});
    return run.aborted() ? kExitNumeric : 0;
}

int run_sweep(const Settings& s)
{
    const auto c = resolve(s);
    const auto result = harness::sweep(c);
    for (const auto& run : result.runs) summarize(run);
    save_outputs(c, result.runs);
    if (!result.aggregate.median.empty())
        std::cout << "final median gap_pct " << data::format_double(result.aggregate.median.back())
                  << " (q25 " << data::format_double(result.aggregate.q25.back()) << ", q75 "
                  << data::format_double(result.aggregate.q75.back()) << ")\n";
    if (result.aborted > 0) {
        std::cout << result.aborted << " of " << result.runs.size() << " runs aborted\n";
        return kExitNumeric;
    }
    return 0;
}

int run_eval(const Settings& s, const std::string& checkpoint)
{
    auto c = resolve(s);
    const auto model = harness::checkpoint_load(checkpoint);
    c.arch.latent_dim = model.latent_dim();
    c.arch.data_dim = model.data_dim();
    print_report(harness::replay_eval(c, model, c.seeds.front()));
    return 0;
}

int run_ppca(const Settings& s)
{
    const auto c = resolve(s);
    const auto ds = harness::make_dataset(c, c.seeds.front());
    const auto moments = ppca::data_covariance(ds.x);
    const auto sol = ppca::ppca_ml_fit(moments, c.arch.latent_dim);
    const auto f = data::format_double;
    std::cout << "n = " << ds.size() << "\nd = " << ds.dim() << "\nh = " << c.arch.latent_dim
              << "\nsigma2_ml = " << f(sol.sigma2_ml) << "\nppca_ml_loglik = " << f(sol.loglik_per_point)
              << '\n';
    if (ds.provenance == data::Provenance::ppca_synthetic && ds.generator) {
        const auto& g = *ds.generator;
        std::cout << "ppca_gen_loglik = "
                  << f(ppca::ppca_loglik(g.w, g.mu.values(), g.sigma * g.sigma, moments)) << '\n';
    }
    std::cout << "eigenvalues =";
    for (double v : sol.eigvals.values()) std::cout << ' ' << f(v);
    std::cout << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Train Gaussian VAEs and compare their lower bound with the three-entropies value"};
    app.require_subcommand(1);

    Settings gen_s, train_s, sweep_s, eval_s, ppca_s;
    std::string gen_out, gen_test_out, checkpoint, report_out = "aggregate.csv";
    std::vector<std::string> report_inputs;

    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset (.csv or .idx)");
    add_setting_flags(gen, gen_s);
    gen->add_option("--out", gen_out, "training set path")->required();
    gen->add_option("--test-out", gen_test_out, "optional independent test set path");

    auto* train = app.add_subcommand("train", "train one run and write its CSV and checkpoint");
    add_setting_flags(train, train_s);
    auto* sw = app.add_subcommand("sweep", "train every seed and aggregate gap statistics");
    add_setting_flags(sw, sweep_s);

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint with the run's frozen noise");
    add_setting_flags(ev, eval_s);
    ev->add_option("--checkpoint", checkpoint, "model file written by train or sweep")->required();

    auto* pp = app.add_subcommand("ppca", "fit the closed-form p-PCA oracle and print likelihoods");
    add_setting_flags(pp, ppca_s);

    auto* rep = app.add_subcommand("report", "aggregate existing run CSVs");
    rep->add_option("runs", report_inputs, "run CSV files")->required();
    rep->add_option("--out", report_out, "aggregate CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*gen) return run_gen_data(gen_s, gen_out, gen_test_out);
        if (*train) return run_train(train_s);
        if (*sw) return run_sweep(sweep_s);
        if (*ev) return run_eval(eval_s, checkpoint);
        if (*pp) return run_ppca(ppca_s);
        if (*rep) {
            std::vector<std::filesystem::path> paths(report_inputs.begin(), report_inputs.end());
            harness::aggregate_run_files(paths, report_out);
            std::cout << "wrote " << report_out << '\n';
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const DegenerateError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
