#include "vaentropy/autodiff/mlp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "vaentropy/errors.hpp"

#ifdef __AVX512F__
#include <immintrin.h>
#endif

namespace vaentropy::autodiff {

namespace {

std::uint64_t next_network_id()
{
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

Tensor transpose(const Tensor& w)
{
    const std::size_t r = w.rows(), c = w.cols();
    Tensor t({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) t[j * r + i] = w[i * c + j];
    return t;
}

void apply_relu(Tensor& t)
{
    for (auto& v : t.values())
        if (!(v > 0.0)) v = 0.0;
}

}  // namespace

namespace kernels {

namespace {

constexpr std::size_t kLane = 8;
typedef double Lane __attribute__((vector_size(kLane * sizeof(double))));

std::size_t padded(std::size_t n) { return (n + kLane - 1) / kLane * kLane; }

// Single rounding per element on every path, so blocking never changes results.
inline Lane fmadd(Lane a, Lane b, Lane c)
{
#ifdef __AVX512F__
    return reinterpret_cast<Lane>(_mm512_fmadd_pd(reinterpret_cast<__m512d>(a),
                                                  reinterpret_cast<__m512d>(b),
                                                  reinterpret_cast<__m512d>(c)));
#else
    for (std::size_t j = 0; j < kLane; ++j) c[j] = std::fma(a[j], b[j], c[j]);
    return c;
#endif
}

inline Lane load(const double* p)
{
    Lane v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline Lane splat(double a) { return Lane{} + a; }

// R rows by V lanes of padded columns held in registers; sums k in ascending order.
template <std::size_t R, std::size_t V>
void affine_block(const double* x, std::size_t in, const double* wp, std::size_t op,
                  const double* bp, double* y, std::size_t out, std::size_t o0)
{
    Lane acc[R][V];
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t v = 0; v < V; ++v) acc[i][v] = load(bp + v * kLane);
    for (std::size_t k = 0; k < in; ++k) {
        Lane w[V];
        for (std::size_t v = 0; v < V; ++v) w[v] = load(wp + k * op + v * kLane);
        for (std::size_t i = 0; i < R; ++i) {
            const Lane a = splat(x[i * in + k]);
            for (std::size_t v = 0; v < V; ++v) acc[i][v] = fmadd(a, w[v], acc[i][v]);
        }
    }
    const std::size_t n = std::min(V * kLane, out - o0);
    for (std::size_t i = 0; i < R; ++i) {
        double tmp[V * kLane];
        std::memcpy(tmp, acc[i], sizeof tmp);
        std::copy(tmp, tmp + n, y + i * out);
    }
}

template <std::size_t R>
void affine_rows(const double* x, std::size_t in, const double* wp, std::size_t op,
                 const double* bp, double* y, std::size_t out)
{
    std::size_t o0 = 0;
    for (; o0 + 2 * kLane <= op; o0 += 2 * kLane)
        affine_block<R, 2>(x, in, wp + o0, op, bp + o0, y + o0, out, o0);
    for (; o0 < op; o0 += kLane) affine_block<R, 1>(x, in, wp + o0, op, bp + o0, y + o0, out, o0);
}

// acc[i][v] = sum_r x[r, i] * dp[r, v-th lane], r ascending.
template <std::size_t R, std::size_t V>
void outer_block(const double* x, std::size_t in, const double* dp, std::size_t op,
                 std::size_t rows, Lane (&acc)[R][V])
{
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t v = 0; v < V; ++v) acc[i][v] = Lane{};
    for (std::size_t r = 0; r < rows; ++r) {
        Lane d[V];
        for (std::size_t v = 0; v < V; ++v) d[v] = load(dp + r * op + v * kLane);
        for (std::size_t i = 0; i < R; ++i) {
            const Lane a = splat(x[r * in + i]);
            for (std::size_t v = 0; v < V; ++v) acc[i][v] = fmadd(a, d[v], acc[i][v]);
        }
    }
}

template <std::size_t R, std::size_t V>
void weight_grad_block(const double* x, std::size_t in, const double* dp, std::size_t op,
                       std::size_t rows, double* dw, std::size_t out, std::size_t k0,
                       std::size_t o0)
{
    Lane acc[R][V];
    outer_block<R, V>(x + k0, in, dp + o0, op, rows, acc);
    const std::size_t n = std::min(V * kLane, out - o0);
    for (std::size_t i = 0; i < R; ++i) {
        double tmp[V * kLane];
        std::memcpy(tmp, acc[i], sizeof tmp);
        for (std::size_t j = 0; j < n; ++j) dw[(o0 + j) * in + k0 + i] = tmp[j];
    }
}

template <std::size_t R>
void weight_grad_cols(const double* x, std::size_t in, const double* dp, std::size_t op,
                      std::size_t rows, double* dw, std::size_t out, std::size_t k0)
{
    std::size_t o0 = 0;
    for (; o0 + 2 * kLane <= op; o0 += 2 * kLane)
        weight_grad_block<R, 2>(x, in, dp, op, rows, dw, out, k0, o0);
    for (; o0 < op; o0 += kLane) weight_grad_block<R, 1>(x, in, dp, op, rows, dw, out, k0, o0);
}

}  // namespace

void affine(const double* x, const double* wt, const double* b, double* y, std::size_t rows,
            std::size_t in, std::size_t out)
{
    const std::size_t op = padded(out);
    std::vector<double> wp(in * op, 0.0), bp(op, 0.0);
    for (std::size_t k = 0; k < in; ++k)
        std::copy(wt + k * out, wt + (k + 1) * out, wp.begin() + k * op);
    std::copy(b, b + out, bp.begin());
    std::size_t r = 0;
    for (; r + 4 <= rows; r += 4)
        affine_rows<4>(x + r * in, in, wp.data(), op, bp.data(), y + r * out, out);
    for (; r < rows; ++r)
        affine_rows<1>(x + r * in, in, wp.data(), op, bp.data(), y + r * out, out);
}

void weight_grad(const double* x, const double* d, double* dw, std::size_t rows,
                 std::size_t in, std::size_t out)
{
    const std::size_t op = padded(out);
    std::vector<double> dp(rows * op, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy(d + r * out, d + (r + 1) * out, dp.begin() + r * op);
    std::size_t k0 = 0;
    for (; k0 + 4 <= in; k0 += 4) weight_grad_cols<4>(x, in, dp.data(), op, rows, dw, out, k0);
    for (; k0 < in; ++k0) weight_grad_cols<1>(x, in, dp.data(), op, rows, dw, out, k0);
}

}  // namespace kernels

MlpNetwork::MlpNetwork() : id_(next_network_id()) {}

MlpNetwork::MlpNetwork(const std::vector<std::size_t>& widths, Activation hidden)
    : id_(next_network_id())
{
    if (widths.size() < 2) throw ShapeError("an MLP needs at least input and output widths");
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const bool last = l + 2 == widths.size();
        layers_.push_back(DenseLayer{Tensor({widths[l + 1], widths[l]}), Tensor({widths[l + 1]}),
                                     last ? Activation::identity : hidden});
    }
    validate();
}

MlpNetwork::MlpNetwork(std::vector<DenseLayer> layers)
    : layers_(std::move(layers)), id_(next_network_id())
{
    validate();
}

MlpNetwork::MlpNetwork(const MlpNetwork& other)
    : layers_(other.layers_), id_(next_network_id()), revision_(0)
{
}

MlpNetwork& MlpNetwork::operator=(const MlpNetwork& other)
{
    if (this != &other) {
        layers_ = other.layers_;
        ++revision_;
    }
    return *this;
}

void MlpNetwork::validate() const
{
    if (layers_.empty()) throw ShapeError("an MLP needs at least one layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        if (layer.weight.rank() != 2) throw ShapeError("layer weight must be a matrix");
        if (layer.bias.size() != layer.out_dim())
            throw ShapeError("layer " + std::to_string(l) + ": bias length mismatch");
        if (l > 0 && layer.in_dim() != layers_[l - 1].out_dim())
            throw ShapeError("layer " + std::to_string(l) + ": input width does not chain");
    }
    if (layers_.back().activation != Activation::identity)
        throw ShapeError("final MLP layer must use the identity activation");
}

std::size_t MlpNetwork::parameter_count() const noexcept
{
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

DenseLayer& MlpNetwork::mutable_layer(std::size_t i)
{
    ++revision_;
    return layers_.at(i);
}

namespace {

Tensor forward_impl(const MlpNetwork& net, const Tensor& input, ForwardTape* tape)
{
    require_matrix(input, net.input_dim(), "mlp_forward input");
    const std::size_t batch = input.rows();
    Tensor current = input;
    for (const auto& layer : net.layers()) {
        Tensor out({batch, layer.out_dim()});
        const Tensor wt = transpose(layer.weight);
        kernels::affine(current.data(), wt.data(), layer.bias.data(), out.data(), batch,
                        layer.in_dim(), layer.out_dim());
        if (layer.activation == Activation::relu) apply_relu(out);
        if (tape) tape->inputs.push_back(std::move(current));
        current = std::move(out);
    }
    current.require_finite("mlp_forward output");
    return current;
}

}  // namespace

ForwardResult mlp_forward(const MlpNetwork& net, const Tensor& input)
{
    ForwardResult result;
    result.tape.net_id = net.id();
    result.tape.revision = net.revision();
    result.tape.inputs.reserve(net.depth());
    result.output = forward_impl(net, input, &result.tape);
    return result;
}

Tensor mlp_apply(const MlpNetwork& net, const Tensor& input)
{
    return forward_impl(net, input, nullptr);
}

MlpGradients mlp_backward(const MlpNetwork& net, const ForwardTape& tape,
                          const Tensor& output_grad)
{
    if (tape.inputs.size() != net.depth()) throw Error("mlp_backward: missing activations");
    if (tape.net_id != net.id() || tape.revision != net.revision())
        throw Error("mlp_backward: stale activations (network changed since forward pass)");
    const std::size_t batch = tape.inputs.front().rows();
    require_matrix(output_grad, net.output_dim(), "mlp_backward output gradient");
    if (output_grad.rows() != batch) throw ShapeError("mlp_backward: batch size mismatch");

    MlpGradients grads;
    grads.weight.resize(net.depth());
    grads.bias.resize(net.depth());

    Tensor delta = output_grad;
    for (std::size_t l = net.depth(); l-- > 0;) {
        const auto& layer = net.layer(l);
        const std::size_t in = layer.in_dim(), out = layer.out_dim();
        if (layer.activation == Activation::relu) {
            // relu'(0) := 0; the post-activation is positive exactly where relu is active.
            const Tensor& post = tape.inputs[l + 1];
            for (std::size_t i = 0; i < delta.size(); ++i)
                if (!(post[i] > 0.0)) delta[i] = 0.0;
        }
        const Tensor& x = tape.inputs[l];
        Tensor dw({out, in});
        Tensor db({out});
        Tensor dx({batch, in});
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t o = 0; o < out; ++o) db[o] += delta[r * out + o];
        kernels::weight_grad(x.data(), delta.data(), dw.data(), batch, in, out);
        // dx = delta * W, i.e. an affine map with W read as the (out x in) transposed weight.
        const std::vector<double> zero(in, 0.0);
        kernels::affine(delta.data(), layer.weight.data(), zero.data(), dx.data(), batch, out, in);
        grads.weight[l] = std::move(dw);
        grads.bias[l] = std::move(db);
        delta = std::move(dx);
    }
    grads.input = std::move(delta);
    return grads;
}

}  // namespace vaentropy::autodiff
