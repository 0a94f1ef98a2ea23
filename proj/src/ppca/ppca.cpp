#include "vaentropy/ppca/ppca.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "vaentropy/errors.hpp"

namespace vaentropy::ppca {

namespace {

void require_square(const Tensor& a, const char* what)
{
    if (a.rank() != 2 || a.rows() != a.cols())
        throw ShapeError(std::string(what) + " needs a square matrix");
}

double frobenius(const Tensor& a)
{
    double s = 0.0;
    for (double v : a.values()) s += v * v;
    return std::sqrt(s);
}

double off_diagonal_norm(const Tensor& a)
{
    const std::size_t n = a.rows();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

}  // namespace

SymmetricEigen jacobi_eigen(const Tensor& s, double rel_tol, std::size_t max_sweeps)
{
    require_square(s, "jacobi_eigen");
    if (!s.all_finite()) throw NumericError("jacobi_eigen: non-finite input");
    const std::size_t n = s.rows();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (s(i, j) != s(j, i)) throw ShapeError("jacobi_eigen: matrix is not symmetric");

    Tensor a = s;
    Tensor v({n, n});
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;
    const double threshold = rel_tol * frobenius(s);

    std::size_t sweep = 0;
    for (; sweep < max_sweeps && off_diagonal_norm(a) > threshold; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }
    if (off_diagonal_norm(a) > threshold)
        throw NumericError("jacobi_eigen: no convergence after " + std::to_string(max_sweeps) +
                           " sweeps");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&a](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    SymmetricEigen out{Tensor({n}), Tensor({n, n}), sweep};
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.values[j] = a(src, src);
        std::size_t lead = 0;
        for (std::size_t k = 1; k < n; ++k)
            if (std::abs(v(k, src)) > std::abs(v(lead, src))) lead = k;
        const double sign = v(lead, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = sign * v(k, src);
    }
    return out;
}

Cholesky::Cholesky(const Tensor& a) : l_(a.shape())
{
    require_square(a, "Cholesky");
    const std::size_t n = a.rows();
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l_(j, k) * l_(j, k);
        if (!(diag > 0.0) || !std::isfinite(diag))
            throw DegenerateError("matrix is not positive definite");
        const double ljj = std::sqrt(diag);
        l_(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = a(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= l_(i, k) * l_(j, k);
            l_(i, j) = v / ljj;
        }
    }
}

double Cholesky::log_det() const
{
    double s = 0.0;
    for (std::size_t i = 0; i < l_.rows(); ++i) s += std::log(l_(i, i));
    return 2.0 * s;
}

Tensor Cholesky::inverse() const
{
    const std::size_t n = l_.rows();
    // Columns of L^-1, then A^-1 = L^-T L^-1.
    Tensor linv({n, n});
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t i = c; i < n; ++i) {
            double v = i == c ? 1.0 : 0.0;
            for (std::size_t k = c; k < i; ++k) v -= l_(i, k) * linv(k, c);
            linv(i, c) = v / l_(i, i);
        }
    }
    Tensor inv({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double v = 0.0;
            for (std::size_t k = i; k < n; ++k) v += linv(k, i) * linv(k, j);
            inv(i, j) = v;
            inv(j, i) = v;
        }
    }
    return inv;
}

Moments data_covariance(const Tensor& x)
{
    if (x.rank() != 2) throw ShapeError("data_covariance needs an [N x D] matrix");
    const std::size_t n = x.rows(), d = x.cols();
    if (n < 2) throw DataError("data_covariance needs at least two points");
    Moments m{Tensor({d}), Tensor({d, d}), n};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) m.mean[c] += x(i, c);
    for (auto& v : m.mean.values()) v /= static_cast<double>(n);
    std::vector<double> dev(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) dev[c] = x(i, c) - m.mean[c];
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = r; c < d; ++c) m.cov(r, c) += dev[r] * dev[c];
    }
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = r; c < d; ++c) {
            m.cov(r, c) /= static_cast<double>(n);
            m.cov(c, r) = m.cov(r, c);
        }
    }
    return m;
}

PpcaSolution ppca_ml_fit(const Moments& m, std::size_t h)
{
    const std::size_t d = m.mean.size();
    if (!(d > h && h >= 1)) throw ConfigError("p-PCA needs D > H >= 1");
    const SymmetricEigen eig = jacobi_eigen(m.cov);

    PpcaSolution sol;
    sol.eigvals = eig.values;
    sol.mu_ml = m.mean;
    double tail = 0.0;
    for (std::size_t j = h; j < d; ++j) tail += eig.values[j];
    sol.sigma2_ml = tail / static_cast<double>(d - h);
    if (!(sol.sigma2_ml > 0.0))
        throw DegenerateError("p-PCA: residual variance is not positive");
    if (!(eig.values[h - 1] > sol.sigma2_ml))
        throw DegenerateError("p-PCA: eigenvalue " + std::to_string(h) +
                              " does not exceed the residual variance");

    sol.w_ml = Tensor({d, h});
    for (std::size_t k = 0; k < h; ++k) {
        const double scale = std::sqrt(eig.values[k] - sol.sigma2_ml);
        for (std::size_t r = 0; r < d; ++r) sol.w_ml(r, k) = eig.vectors(r, k) * scale;
    }
    sol.loglik_per_point = ppca_loglik(sol.w_ml, sol.mu_ml.values(), sol.sigma2_ml, m);
    return sol;
}

PpcaSolution ppca_ml_fit(const Tensor& x, std::size_t h) { return ppca_ml_fit(data_covariance(x), h); }

double ppca_loglik(const Tensor& w, std::span<const double> mu, double sigma2, const Moments& m)
{
    const std::size_t d = m.mean.size();
    if (w.rank() != 2 || w.rows() != d || mu.size() != d)
        throw ShapeError("ppca_loglik: W, mu and the moments disagree on D");
    if (!(sigma2 > 0.0)) throw DegenerateError("ppca_loglik needs sigma2 > 0");
    const std::size_t h = w.cols();

    Tensor c({d, d});
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t s = 0; s < d; ++s) {
            double v = r == s ? sigma2 : 0.0;
            for (std::size_t k = 0; k < h; ++k) v += w(r, k) * w(s, k);
            c(r, s) = v;
        }
    }
    const Cholesky chol(c);
    const Tensor cinv = chol.inverse();

    double trace = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
        const double dr = m.mean[r] - mu[r];
        for (std::size_t s = 0; s < d; ++s) {
            const double scatter = m.cov(s, r) + dr * (m.mean[s] - mu[s]);
            trace += cinv(r, s) * scatter;
        }
    }
    const double dd = static_cast<double>(d);
    return -0.5 * dd * std::log(2.0 * std::numbers::pi) - 0.5 * chol.log_det() - 0.5 * trace;
}

}  // namespace vaentropy::ppca
