#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vaentropy/autodiff/tensor.hpp"

namespace vaentropy::autodiff {

enum class Activation { identity, relu };

struct DenseLayer {
    Tensor weight;  // [out x in]
    Tensor bias;    // [out]
    Activation activation = Activation::identity;

    std::size_t in_dim() const noexcept { return weight.cols(); }
    std::size_t out_dim() const noexcept { return weight.rows(); }
};

/// Feed-forward stack of affine layers. Adjacent layers chain and the last
/// layer is always identity, so outputs live on the whole real line.
///
/// Every instance carries an id and a revision counter. Mutating access bumps
/// the revision, which lets mlp_backward reject tapes recorded against other
/// parameters.
class MlpNetwork {
public:
    MlpNetwork();
    /// widths = {in, hidden..., out}; all weights and biases start at zero.
    explicit MlpNetwork(const std::vector<std::size_t>& widths,
                        Activation hidden = Activation::relu);
    explicit MlpNetwork(std::vector<DenseLayer> layers);

    MlpNetwork(const MlpNetwork& other);
    MlpNetwork& operator=(const MlpNetwork& other);
    MlpNetwork(MlpNetwork&&) noexcept = default;
    MlpNetwork& operator=(MlpNetwork&&) noexcept = default;

    std::size_t input_dim() const noexcept { return layers_.front().in_dim(); }
    std::size_t output_dim() const noexcept { return layers_.back().out_dim(); }
    std::size_t depth() const noexcept { return layers_.size(); }
    std::size_t parameter_count() const noexcept;

    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
    DenseLayer& mutable_layer(std::size_t i);

    /// Glorot-uniform weights, U(-a, a) with a = sqrt(6 / (in + out)); zero biases.
    /// `uniform01` must return draws in (0, 1).
    template <class Uniform01>
    void glorot_init(Uniform01&& uniform01)
    {
        for (auto& l : layers_) {
            const double a = std::sqrt(6.0 / static_cast<double>(l.in_dim() + l.out_dim()));
            for (auto& w : l.weight.values()) w = a * (2.0 * uniform01() - 1.0);
            l.bias.fill(0.0);
        }
        ++revision_;
    }

    std::uint64_t id() const noexcept { return id_; }
    std::uint64_t revision() const noexcept { return revision_; }

private:
    void validate() const;

    std::vector<DenseLayer> layers_;
    std::uint64_t id_;
    std::uint64_t revision_ = 0;
};

/// Layer inputs retained by a forward pass. inputs[l] is what layer l consumed;
/// relu masks are recovered from inputs[l + 1] > 0.
struct ForwardTape {
    std::uint64_t net_id = 0;
    std::uint64_t revision = 0;
    std::vector<Tensor> inputs;
};

struct ForwardResult {
    Tensor output;
    ForwardTape tape;
};

struct MlpGradients {
    std::vector<Tensor> weight;
    std::vector<Tensor> bias;
    Tensor input;
};

/// Batched forward pass, input [batch x in] -> output [batch x out], with tape.
ForwardResult mlp_forward(const MlpNetwork& net, const Tensor& input);

/// Forward pass without retaining activations.
Tensor mlp_apply(const MlpNetwork& net, const Tensor& input);

/// Reverse-mode gradients given dLoss/dOutput for the taped forward call.
MlpGradients mlp_backward(const MlpNetwork& net, const ForwardTape& tape,
                          const Tensor& output_grad);

namespace kernels {

// y[r, :] = b + sum_k x[r, k] * wt[k, :]. Every element sums k in ascending order,
// so a row's result does not depend on the batch it is computed in.
void affine(const double* x, const double* wt, const double* b, double* y, std::size_t rows,
            std::size_t in, std::size_t out);

// dw[o, k] = sum_r d[r, o] * x[r, k] with r ascending; dw is (out x in) and overwritten.
void weight_grad(const double* x, const double* d, double* dw, std::size_t rows,
                 std::size_t in, std::size_t out);

}  // namespace kernels

}  // namespace vaentropy::autodiff
