#include "vaentropy/harness/report.hpp"

#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "vaentropy/data/io.hpp"
#include "vaentropy/errors.hpp"

namespace vaentropy::harness {

namespace {

std::string cell(const std::optional<double>& v) { return v ? data::format_double(*v) : std::string(); }

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw DataError("short write to '" + path.string() + "'");
}

std::string header_line(const std::vector<std::string>& h)
{
    std::string s;
    for (std::size_t i = 0; i < h.size(); ++i) s += (i ? "," : "") + h[i];
    return s + '\n';
}

std::size_t column_of(const data::CsvTable& t, const std::string& name,
                      const std::filesystem::path& path)
{
    for (std::size_t i = 0; i < t.header.size(); ++i)
        if (t.header[i] == name) return i;
    throw DataError("'" + path.string() + "' has no column '" + name + "'", 1);
}

}  // namespace

std::string run_csv(const RunRecord& run)
{
    std::ostringstream o;
    o << header_line(kRunCsvHeader);
    const auto f = data::format_double;
    for (const auto& row : run.rows) {
        const auto& r = row.report;
        o << row.iteration << ',' << f(r.elbo_sampled) << ',' << f(r.three_entropies) << ','
          << f(r.gap_abs) << ',' << cell(r.gap_pct_of_final) << ',' << f(r.term_prior_entropy) << ','
          << f(r.term_decoder_entropy) << ',' << f(r.term_encoder_entropy_mean) << ','
          << f(row.delta_collapse) << ',' << cell(row.sigma2) << ',' << cell(row.ppca_ml_loglik)
          << ',' << cell(row.ppca_gen_loglik) << ',' << f(row.wallclock_s) << '\n';
    }
    return o.str();
}

std::string aggregate_csv(const std::vector<std::size_t>& iterations, const bounds::GapAggregate& agg)
{
    if (iterations.size() != agg.median.size())
        throw ShapeError("aggregate: iteration axis and statistics differ in length");
    std::ostringstream o;
    o << header_line(kAggregateCsvHeader);
    for (std::size_t i = 0; i < iterations.size(); ++i)
        o << iterations[i] << ',' << data::format_double(agg.median[i]) << ','
          << data::format_double(agg.q25[i]) << ',' << data::format_double(agg.q75[i]) << '\n';
    return o.str();
}

std::vector<std::filesystem::path> emit_report(const std::vector<RunRecord>& runs,
                                               const std::filesystem::path& out_dir)
{
    if (runs.empty()) throw ConfigError("emit_report needs at least one run");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw DataError("cannot create '" + out_dir.string() + "': " + ec.message());

    std::vector<std::filesystem::path> written;
    std::map<std::uint64_t, int> seen;
    std::vector<std::vector<double>> traces;
    std::vector<std::size_t> iterations;
    for (const auto& run : runs) {
        const int dup = seen[run.seed]++;
        const std::string stem =
            "run_" + std::to_string(run.seed) + (dup ? "_" + std::to_string(dup) : std::string());
        const auto path = out_dir / (stem + ".csv");
        write_text(path, run_csv(run));
        written.push_back(path);
        if (run.aborted() || run.rows.empty()) continue;
        std::vector<double> trace;
        for (const auto& row : run.rows) trace.push_back(row.report.gap_pct_of_final.value_or(0.0));
        if (run.rows.size() > iterations.size()) {
            iterations.clear();
            for (const auto& row : run.rows) iterations.push_back(row.iteration);
        }
        traces.push_back(std::move(trace));
    }
    if (!traces.empty()) {
        const auto path = out_dir / "aggregate.csv";
        write_text(path, aggregate_csv(iterations, bounds::aggregate_gaps(traces)));
        written.push_back(path);
    }
    return written;
}

ParsedRun read_run_csv(const std::filesystem::path& path)
{
    const auto table = data::read_csv_table(path);
    const std::size_t it_col = column_of(table, "iteration", path);
    const std::size_t gap_col = column_of(table, "gap_pct", path);
    ParsedRun out;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& it = table.rows[i][it_col];
        const auto& gap = table.rows[i][gap_col];
        if (!it || !gap)
            throw DataError("'" + path.string() + "' line " + std::to_string(table.row_lines[i]) +
                                ": missing iteration or gap_pct",
                            table.row_lines[i]);
        out.iterations.push_back(static_cast<std::size_t>(*it));
        out.gap_pct.push_back(*gap);
    }
    if (out.iterations.empty()) throw DataError("'" + path.string() + "' has no rows", 0);
    return out;
}

void aggregate_run_files(const std::vector<std::filesystem::path>& runs,
                         const std::filesystem::path& out_path)
{
    if (runs.empty()) throw ConfigError("report needs at least one run CSV");
    std::vector<std::vector<double>> traces;
    std::vector<std::size_t> iterations;
    for (const auto& p : runs) {
        auto parsed = read_run_csv(p);
        if (parsed.iterations.size() > iterations.size()) iterations = parsed.iterations;
        traces.push_back(std::move(parsed.gap_pct));
    }
    write_text(out_path, aggregate_csv(iterations, bounds::aggregate_gaps(traces)));
}

}  // namespace vaentropy::harness
