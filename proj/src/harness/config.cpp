#include "vaentropy/harness/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include "vaentropy/data/io.hpp"
#include "vaentropy/errors.hpp"

namespace vaentropy::harness {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::string quote(std::string_view key, std::string_view value)
{
    return std::string(key) + " = '" + std::string(value) + "'";
}

template <class T>
T parse_integer(std::string_view key, std::string_view v)
{
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty())
        throw ConfigError("expected a non-negative integer: " + quote(key, v));
    return out;
}

double parse_real(std::string_view key, std::string_view v)
{
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty())
        throw ConfigError("expected a number: " + quote(key, v));
    return out;
}

bool parse_bool(std::string_view key, std::string_view v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("expected true/false: " + quote(key, v));
}

std::vector<std::size_t> parse_widths(std::string_view key, std::string_view v)
{
    std::vector<std::size_t> out;
    if (v.empty() || v == "none") return out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = v.find(',', start);
        out.push_back(parse_integer<std::size_t>(key, trim(v.substr(start, comma - start))));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string join_widths(const std::vector<std::size_t>& w)
{
    if (w.empty()) return "none";
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
    return s;
}

std::string_view dataset_name(DatasetKind k)
{
    switch (k) {
    case DatasetKind::ppca: return "ppca";
    case DatasetKind::ring: return "ring";
    case DatasetKind::file: return "file";
    }
    return "ppca";
}

using Setter = std::function<void(ExperimentConfig&, std::string_view, std::string_view)>;

const std::vector<std::pair<std::string, Setter>>& setters()
{
    static const std::vector<std::pair<std::string, Setter>> table{
        {"model", [](auto& c, auto, auto v) { c.arch.kind = models::parse_model_kind(v); }},
        {"latent_dim", [](auto& c, auto k, auto v) { c.arch.latent_dim = parse_integer<std::size_t>(k, v); }},
        {"data_dim", [](auto& c, auto k, auto v) { c.arch.data_dim = parse_integer<std::size_t>(k, v); }},
        {"encoder_hidden", [](auto& c, auto k, auto v) { c.arch.encoder_hidden = parse_widths(k, v); }},
        {"decoder_hidden", [](auto& c, auto k, auto v) { c.arch.decoder_hidden = parse_widths(k, v); }},
        {"shared_encoder_trunk", [](auto& c, auto k, auto v) { c.arch.shared_encoder_trunk = parse_bool(k, v); }},
        {"dataset",
         [](auto& c, auto k, auto v) {
             if (v == "ppca") c.dataset.kind = DatasetKind::ppca;
             else if (v == "ring") c.dataset.kind = DatasetKind::ring;
             else if (v == "file") c.dataset.kind = DatasetKind::file;
             else throw ConfigError("dataset must be ppca, ring or file: " + quote(k, v));
         }},
        {"data_path", [](auto& c, auto, auto v) { c.dataset.path = std::string(v); }},
        {"n_points", [](auto& c, auto k, auto v) { c.dataset.n_points = parse_integer<std::size_t>(k, v); }},
        {"sigma_gen", [](auto& c, auto k, auto v) { c.dataset.sigma_gen = parse_real(k, v); }},
        {"gen_latent_dim", [](auto& c, auto k, auto v) { c.dataset.gen_latent_dim = parse_integer<std::size_t>(k, v); }},
        {"subsample", [](auto& c, auto k, auto v) { c.dataset.subsample = parse_integer<std::size_t>(k, v); }},
        {"data_seed",
         [](auto& c, auto k, auto v) {
             if (v.empty() || v == "none") c.dataset.data_seed.reset();
             else c.dataset.data_seed = parse_integer<std::uint64_t>(k, v);
         }},
        {"batch_size", [](auto& c, auto k, auto v) { c.batch_size = parse_integer<std::size_t>(k, v); }},
        {"learning_rate", [](auto& c, auto k, auto v) { c.learning_rate = parse_real(k, v); }},
        {"mc_samples", [](auto& c, auto k, auto v) { c.mc_samples = parse_integer<std::size_t>(k, v); }},
        {"train_samples", [](auto& c, auto k, auto v) { c.train_samples = parse_integer<std::size_t>(k, v); }},
        {"max_iterations", [](auto& c, auto k, auto v) { c.max_iterations = parse_integer<std::size_t>(k, v); }},
        {"eval_every", [](auto& c, auto k, auto v) { c.eval_every = parse_integer<std::size_t>(k, v); }},
        {"eval_points", [](auto& c, auto k, auto v) { c.eval_points = parse_integer<std::size_t>(k, v); }},
        {"seeds", [](auto& c, auto, auto v) { c.seeds = parse_seed_list(v); }},
        {"sigma2_mode",
         [](auto& c, auto k, auto v) {
             if (v == "learned") c.sigma2_fixed = false;
             else if (v == "fixed") c.sigma2_fixed = true;
             else throw ConfigError("sigma2_mode must be learned or fixed: " + quote(k, v));
         }},
        {"sigma2_value", [](auto& c, auto k, auto v) { c.sigma2_value = parse_real(k, v); }},
        {"convergence_window", [](auto& c, auto k, auto v) { c.convergence_window = parse_integer<std::size_t>(k, v); }},
        {"convergence_threshold", [](auto& c, auto k, auto v) { c.convergence_threshold = parse_real(k, v); }},
        {"stop_on_convergence", [](auto& c, auto k, auto v) { c.stop_on_convergence = parse_bool(k, v); }},
        {"threads", [](auto& c, auto k, auto v) { c.threads = parse_integer<std::size_t>(k, v); }},
        {"output_dir", [](auto& c, auto, auto v) { c.output_dir = std::string(v); }},
    };
    return table;
}

}  // namespace

void ExperimentConfig::validate() const
{
    arch.validate();
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (mc_samples < 1 || train_samples < 1) throw ConfigError("sample counts must be positive");
    if (eval_every < 1) throw ConfigError("eval_every must be positive");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (sigma2_fixed && arch.kind == models::ModelKind::vae3)
        throw ConfigError("fixed sigma2 applies to linear and vae1 models only");
    if (sigma2_fixed && !(sigma2_value > 0.0)) throw ConfigError("sigma2_value must be positive");
    if (convergence_window < 1) throw ConfigError("convergence_window must be positive");
    if (!(convergence_threshold > 0.0)) throw ConfigError("convergence_threshold must be positive");
    if (threads < 1) throw ConfigError("threads must be positive");
    if (dataset.kind == DatasetKind::file && dataset.path.empty())
        throw ConfigError("dataset = file needs data_path");
    if (dataset.kind != DatasetKind::file) {
        if (dataset.n_points < 1) throw ConfigError("n_points must be positive");
        if (!(dataset.sigma_gen > 0.0)) throw ConfigError("sigma_gen must be positive");
        const std::size_t gen_h = dataset.gen_latent_dim ? dataset.gen_latent_dim : arch.latent_dim;
        if (!(arch.data_dim > gen_h))
            throw ConfigError("synthetic data needs data_dim > generator latent_dim");
    }
}

const std::vector<std::string>& setting_keys()
{
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, _] : setters()) k.push_back(name);
        return k;
    }();
    return keys;
}

void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value)
{
    for (const auto& [name, set] : setters()) {
        if (name == key) {
            set(config, key, trim(value));
            return;
        }
    }
    throw ConfigError("unknown setting '" + std::string(key) + "'");
}

std::map<std::string, std::string> parse_config_text(std::string_view text)
{
    std::map<std::string, std::string> out;
    std::size_t pos = 0, line_no = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const auto key = trim(line.substr(0, eq));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        out[std::string(key)] = std::string(trim(line.substr(eq + 1)));
    }
    return out;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    const auto settings = parse_config_text(text);
    // Apply in table order so that independent keys never depend on file order.
    for (const auto& key : setting_keys())
        if (auto it = settings.find(key); it != settings.end()) apply_setting(base, key, it->second);
    for (const auto& [key, value] : settings) {
        bool known = false;
        for (const auto& k : setting_keys()) known = known || k == key;
        if (!known) throw ConfigError("unknown setting '" + key + "' in " + path.string());
    }
    return base;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text)
{
    text = trim(text);
    std::vector<std::uint64_t> out;
    if (const auto dots = text.find(".."); dots != std::string_view::npos) {
        const auto lo = parse_integer<std::uint64_t>("seeds", trim(text.substr(0, dots)));
        const auto hi = parse_integer<std::uint64_t>("seeds", trim(text.substr(dots + 2)));
        if (hi < lo) throw ConfigError("seed range is empty: " + std::string(text));
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
        return out;
    }
    std::size_t start = 0;
    for (;;) {
        const auto comma = text.find(',', start);
        out.push_back(parse_integer<std::uint64_t>("seeds", trim(text.substr(start, comma - start))));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string dump_config(const ExperimentConfig& c)
{
    std::ostringstream o;
    const auto f = data::format_double;
    o << "model = " << models::to_string(c.arch.kind) << '\n'
      << "latent_dim = " << c.arch.latent_dim << '\n'
      << "data_dim = " << c.arch.data_dim << '\n'
      << "encoder_hidden = " << join_widths(c.arch.encoder_hidden) << '\n'
      << "decoder_hidden = " << join_widths(c.arch.decoder_hidden) << '\n'
      << "shared_encoder_trunk = " << (c.arch.shared_encoder_trunk ? "true" : "false") << '\n'
      << "dataset = " << dataset_name(c.dataset.kind) << '\n'
      << "data_path = " << c.dataset.path.string() << '\n'
      << "n_points = " << c.dataset.n_points << '\n'
      << "sigma_gen = " << f(c.dataset.sigma_gen) << '\n'
      << "gen_latent_dim = " << c.dataset.gen_latent_dim << '\n'
      << "subsample = " << c.dataset.subsample << '\n'
      << "data_seed = "
      << (c.dataset.data_seed ? std::to_string(*c.dataset.data_seed) : std::string("none")) << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "learning_rate = " << f(c.learning_rate) << '\n'
      << "mc_samples = " << c.mc_samples << '\n'
      << "train_samples = " << c.train_samples << '\n'
      << "max_iterations = " << c.max_iterations << '\n'
      << "eval_every = " << c.eval_every << '\n'
      << "eval_points = " << c.eval_points << '\n'
      << "seeds = ";
    for (std::size_t i = 0; i < c.seeds.size(); ++i) o << (i ? "," : "") << c.seeds[i];
    o << '\n'
      << "sigma2_mode = " << (c.sigma2_fixed ? "fixed" : "learned") << '\n'
      << "sigma2_value = " << f(c.sigma2_value) << '\n'
      << "convergence_window = " << c.convergence_window << '\n'
      << "convergence_threshold = " << f(c.convergence_threshold) << '\n'
      << "stop_on_convergence = " << (c.stop_on_convergence ? "true" : "false") << '\n'
      << "threads = " << c.threads << '\n'
      << "output_dir = " << c.output_dir.string() << '\n';
    return o.str();
}

}  // namespace vaentropy::harness
