#include "vaentropy/data/dataset.hpp"

#include <cmath>
#include <vector>

#include "vaentropy/errors.hpp"

namespace vaentropy::data {

namespace {

constexpr double kMinRingNorm = 1e-9;

void check_dims(std::size_t n, std::size_t d, std::size_t h, double sigma)
{
    if (n < 1) throw ConfigError("synthetic data needs N >= 1");
    if (!(d > h && h >= 1)) throw ConfigError("synthetic data needs D > H >= 1");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma_gen must be positive");
}

double row_norm(std::span<const double> r)
{
    double s = 0.0;
    for (double v : r) s += v * v;
    return std::sqrt(s);
}

}  // namespace

void Dataset::validate() const
{
    if (x.rank() != 2 || x.rows() < 1) throw DataError("dataset must be a non-empty matrix");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i])) throw DataError("dataset contains a non-finite value", i);
}

GenerativeParams draw_generator(std::size_t d, std::size_t h, double sigma, RngStream& rng)
{
    GenerativeParams g{Tensor({d, h}), Tensor({d}), sigma};
    for (auto& w : g.w.values()) w = rng.uniform();
    for (auto& m : g.mu.values()) m = rng.uniform();
    return g;
}

Tensor sample_linear_gaussian(const GenerativeParams& g, std::size_t n, RngStream& rng,
                              bool with_mean)
{
    const std::size_t d = g.w.rows(), h = g.w.cols();
    Tensor x({n, d});
    std::vector<double> z(h), eps(d);
    for (std::size_t i = 0; i < n; ++i) {
        rng.fill_normal(z);
        rng.fill_normal(eps);
        for (std::size_t r = 0; r < d; ++r) {
            double v = with_mean ? g.mu[r] : 0.0;
            for (std::size_t c = 0; c < h; ++c) v += g.w(r, c) * z[c];
            x(i, r) = v + g.sigma * eps[r];
        }
    }
    return x;
}

Dataset gen_ppca(std::size_t n, std::size_t d, std::size_t h, double sigma, RngStream& rng)
{
    check_dims(n, d, h, sigma);
    GenerativeParams g = draw_generator(d, h, sigma, rng);
    Dataset ds{sample_linear_gaussian(g, n, rng, true), "ppca", Provenance::ppca_synthetic, {}};
    ds.generator = std::move(g);
    return ds;
}

Tensor ring_transform(const Tensor& x, std::span<const double> mu)
{
    require_matrix(x, mu.size(), "ring_transform input");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row(i);
        const double norm = row_norm(r);
        if (!(norm > kMinRingNorm))
            throw DegenerateError("ring_transform: row " + std::to_string(i) + " has zero norm");
        auto o = out.row(i);
        for (std::size_t c = 0; c < r.size(); ++c) o[c] = mu[c] + r[c] / 10.0 + r[c] / norm;
    }
    return out;
}

namespace {

Tensor sample_ring_source(const GenerativeParams& g, std::size_t n, RngStream& rng)
{
    Tensor x = sample_linear_gaussian(g, n, rng, false);
    for (std::size_t i = 0; i < n; ++i) {
        while (!(row_norm(x.row(i)) > kMinRingNorm)) {
            const Tensor redraw = sample_linear_gaussian(g, 1, rng, false);
            std::copy(redraw.data(), redraw.data() + redraw.size(), x.row(i).begin());
        }
    }
    return x;
}

}  // namespace

Dataset gen_ring(std::size_t n, std::size_t d, std::size_t h, double sigma, RngStream& rng)
{
    check_dims(n, d, h, sigma);
    GenerativeParams g = draw_generator(d, h, sigma, rng);
    Dataset ds{ring_transform(sample_ring_source(g, n, rng), g.mu.values()), "ring",
               Provenance::ring_synthetic, {}};
    ds.generator = std::move(g);
    return ds;
}

TrainTest gen_train_test(Provenance kind, std::size_t n, std::size_t d, std::size_t h,
                         double sigma, RngStream& rng)
{
    check_dims(n, d, h, sigma);
    if (kind == Provenance::file) throw ConfigError("gen_train_test needs a synthetic kind");
    GenerativeParams g = draw_generator(d, h, sigma, rng);
    const bool ring = kind == Provenance::ring_synthetic;
    auto draw = [&](const char* name) {
        Tensor x = ring ? ring_transform(sample_ring_source(g, n, rng), g.mu.values())
                        : sample_linear_gaussian(g, n, rng, true);
        return Dataset{std::move(x), std::string(ring ? "ring_" : "ppca_") + name, kind, g};
    };
    TrainTest tt{draw("train"), draw("test")};
    return tt;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows)
{
    if (rows.empty()) throw ShapeError("gather_rows: empty index set");
    auto shape = x.shape();
    shape.front() = rows.size();
    Tensor out(shape);
    const std::size_t c = x.cols();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= x.rows()) throw ShapeError("gather_rows: index out of range");
        std::copy_n(x.data() + rows[i] * c, c, out.data() + i * c);
    }
    return out;
}

}  // namespace vaentropy::data
