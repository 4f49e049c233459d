#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mdc/label_map.hpp"
#include "mdc/tensor.hpp"

namespace mdc {

/// Geometry of a 2-D convolution. Boundary handling is zero padding only.
struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_h = 3;
    std::size_t kernel_w = 3;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t dilation = 1;

    std::size_t effective_kernel_h() const { return kernel_h + (kernel_h - 1) * (dilation - 1); }
    std::size_t effective_kernel_w() const { return kernel_w + (kernel_w - 1) * (dilation - 1); }

    // Throws when the padded input is smaller than the dilated kernel.
    std::size_t out_height(std::size_t in_h) const;
    std::size_t out_width(std::size_t in_w) const;

    void validate() const;
};

/// "Same" padding for an odd kernel at stride 1: (effective - 1) / 2.
ConvSpec same_conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t dilation);

template <typename T>
struct ConvGrads {
    BasicTensor<T> input;
    BasicTensor<T> weights;
    BasicTensor<T> bias;
};

// input [N,C,H,W], weights [O,C,kh,kw], bias [O] -> [N,O,H',W'].
// The reduction index runs channel-major, then kernel row, then kernel column.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                      const ConvSpec& spec);

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& saved_input,
                             const BasicTensor<T>& weights, const ConvSpec& spec);

/// Spreads the taps of a [O,C,k,k] kernel d positions apart, zero elsewhere.
template <typename T>
BasicTensor<T> dilate_kernel(const BasicTensor<T>& weights, std::size_t dilation);

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& upstream, const Shape& input_shape);

template <typename T>
struct PoolResult {
    BasicTensor<T> output;
    // Linear index into the input for every output element.
    std::vector<std::size_t> argmax;
};

/// Ties go to the lowest linear index inside the window.
template <typename T>
PoolResult<T> max_pool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride);

template <typename T>
BasicTensor<T> max_pool2d_backward(const BasicTensor<T>& upstream, std::span<const std::size_t> argmax,
                                   const Shape& input_shape);

template <typename T>
struct LinearGrads {
    BasicTensor<T> input;
    BasicTensor<T> weights;
    BasicTensor<T> bias;
};

// input [N,F], weights [C,F], bias [C] -> [N,C]
template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                               const BasicTensor<T>& bias);

template <typename T>
LinearGrads<T> fully_connected_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& input,
                                        const BasicTensor<T>& weights);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

// Subgradient at exactly zero is zero.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& input);

/// Resizes the two trailing axes with half-pixel-centred bilinear sampling.
template <typename T>
BasicTensor<T> upsample_bilinear(const BasicTensor<T>& input, std::size_t out_h, std::size_t out_w);

template <typename T>
BasicTensor<T> upsample_bilinear_backward(const BasicTensor<T>& upstream, const Shape& input_shape);

/// Softmax over the channel axis of [N,C,H,W].
template <typename T>
BasicTensor<T> channel_softmax(const BasicTensor<T>& logits);

template <typename T>
struct LossResult {
    T value{};
    BasicTensor<T> grad;  // d(value)/d(logits)
};

/// Mean over N*C of the binary cross-entropy on sigmoid(logits), in log-sum-exp form.
template <typename T>
LossResult<T> sigmoid_cross_entropy_multilabel(const BasicTensor<T>& logits, const BasicTensor<T>& labels);

/// Per-pixel softmax cross-entropy that skips pixels carrying kIgnoreLabel.
///
/// For every image the summed -log p over labeled pixels is divided by that
/// image's labeled-pixel count; the result is the mean of those per-image
/// terms over the batch. An image with no labeled pixels contributes zero
/// loss and zero gradient. `target` holds N*H*W labels in row-major order.
template <typename T>
LossResult<T> pixel_softmax_ce_ignored(const BasicTensor<T>& logits, std::span<const std::uint8_t> target);

struct SgdConfig {
    double lr = 1e-3;
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

/// v <- momentum*v + g + weight_decay*theta; theta <- theta - lr*v.
template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity, const SgdConfig& config);

}  // namespace mdc
