#pragma once

#include <map>
#include <string>
#include <vector>

#include "mdc/ops.hpp"
#include "mdc/random.hpp"

namespace mdc {

/// Named parameter (or gradient) storage for a model.
using ParamMap = std::map<std::string, Tensor>;

enum class LayerKind { Conv, Relu, MaxPool };

struct LayerDesc {
    LayerKind kind = LayerKind::Conv;
    std::size_t channels = 0;  // conv output channels
    std::size_t kernel = 3;    // conv kernel or pool window
    std::size_t stride = 1;
    std::size_t dilation = 1;

    static LayerDesc conv(std::size_t channels, std::size_t kernel = 3, std::size_t dilation = 1) {
        return {LayerKind::Conv, channels, kernel, 1, dilation};
    }
    static LayerDesc relu() { return {LayerKind::Relu, 0, 1, 1, 1}; }
    static LayerDesc max_pool(std::size_t window = 2, std::size_t stride = 2) {
        return {LayerKind::MaxPool, 0, window, stride, 1};
    }

    friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

/// "c16 r p2 c32 d3 ..." style description; see parse_layers.
std::string format_layers(const std::vector<LayerDesc>& layers);

// Tokens: cN[kK][dD] = conv with N outputs (k defaults 3, d defaults 1);
// r = relu; pW[sS] = max pool (stride defaults to W). Separators: space or comma.
std::vector<LayerDesc> parse_layers(const std::string& text);

/// Saved activations of one Sequential forward pass.
struct SequentialCache {
    std::vector<Tensor> inputs;
    std::vector<std::vector<std::size_t>> argmax;
};

/// A chain of conv / relu / max-pool layers whose parameters live in a
/// ParamMap under "<prefix>.conv<i>.w" and "<prefix>.conv<i>.b".
/// Convolutions use "same" zero padding.
class Sequential {
public:
    Sequential() = default;
    Sequential(std::string prefix, std::size_t in_channels, std::vector<LayerDesc> layers);

    std::size_t in_channels() const { return in_channels_; }
    std::size_t out_channels() const { return out_channels_; }
    const std::vector<LayerDesc>& layers() const { return layers_; }
    std::size_t output_stride() const;

    // He fan-in normal init for weights, zero bias.
    void init_params(ParamMap& params, Rng& rng) const;
    std::vector<std::string> param_names() const;

    Tensor forward(const ParamMap& params, const Tensor& input, SequentialCache* cache) const;

    // Adds parameter gradients into `grads`; returns d(loss)/d(input) unless skip_input_grad.
    Tensor backward(const ParamMap& params, const SequentialCache& cache, const Tensor& upstream, ParamMap& grads,
                    bool skip_input_grad = false) const;

private:
    ConvSpec conv_spec(std::size_t layer_index, std::size_t in_channels) const;

    std::string prefix_;
    std::size_t in_channels_ = 0;
    std::size_t out_channels_ = 0;
    std::vector<LayerDesc> layers_;
    std::vector<std::size_t> layer_in_channels_;
};

/// Adds `src` into the tensor stored under `name`, creating it when missing.
void accumulate_grad(ParamMap& grads, const std::string& name, const Tensor& src);

void init_he(Tensor& weights, Rng& rng);

}  // namespace mdc
