#include "mdc/layers.hpp"

#include <cmath>
#include <sstream>

namespace mdc {

namespace {

std::size_t parse_number(const std::string& token, std::size_t& pos) {
    const std::size_t start = pos;
    while (pos < token.size() && std::isdigit(static_cast<unsigned char>(token[pos]))) ++pos;
    if (start == pos) throw Error("layer token '" + token + "': expected a number at offset " + std::to_string(start));
    return std::stoul(token.substr(start, pos - start));
}

}  // namespace

std::string format_layers(const std::vector<LayerDesc>& layers) {
    std::ostringstream os;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (i) os << ' ';
        const auto& l = layers[i];
        switch (l.kind) {
            case LayerKind::Conv:
                os << 'c' << l.channels;
                if (l.kernel != 3) os << 'k' << l.kernel;
                if (l.dilation != 1) os << 'd' << l.dilation;
                break;
            case LayerKind::Relu:
                os << 'r';
                break;
            case LayerKind::MaxPool:
                os << 'p' << l.kernel;
                if (l.stride != l.kernel) os << 's' << l.stride;
                break;
        }
    }
    return os.str();
}

std::vector<LayerDesc> parse_layers(const std::string& text) {
    std::vector<LayerDesc> layers;
    std::string normalized = text;
    for (char& ch : normalized) {
        if (ch == ',') ch = ' ';
    }
    std::istringstream is(normalized);
    std::string token;
    while (is >> token) {
        std::size_t pos = 1;
        switch (token[0]) {
            case 'c': {
                LayerDesc l = LayerDesc::conv(parse_number(token, pos));
                while (pos < token.size()) {
                    const char key = token[pos++];
                    const std::size_t v = parse_number(token, pos);
                    if (key == 'k') l.kernel = v;
                    else if (key == 'd') l.dilation = v;
                    else throw Error("layer token '" + token + "': unknown conv option");
                }
                if (l.channels == 0 || l.kernel == 0 || l.dilation == 0 || l.kernel % 2 == 0) {
                    throw Error("layer token '" + token + "': conv needs positive channels/dilation and odd kernel");
                }
                layers.push_back(l);
                break;
            }
            case 'r':
                if (token.size() != 1) throw Error("layer token '" + token + "' not understood");
                layers.push_back(LayerDesc::relu());
                break;
            case 'p': {
                const std::size_t window = parse_number(token, pos);
                std::size_t stride = window;
                if (pos < token.size()) {
                    if (token[pos++] != 's') throw Error("layer token '" + token + "': unknown pool option");
                    stride = parse_number(token, pos);
                }
                if (window == 0 || stride == 0) throw Error("layer token '" + token + "': pool needs positive sizes");
                layers.push_back(LayerDesc::max_pool(window, stride));
                break;
            }
            default:
                throw Error("layer token '" + token + "' not understood");
        }
    }
    return layers;
}

Sequential::Sequential(std::string prefix, std::size_t in_channels, std::vector<LayerDesc> layers)
    : prefix_(std::move(prefix)), in_channels_(in_channels), layers_(std::move(layers)) {
    if (in_channels_ == 0) throw Error("Sequential: input channels must be positive");
    std::size_t channels = in_channels_;
    for (const auto& l : layers_) {
        layer_in_channels_.push_back(channels);
        if (l.kind == LayerKind::Conv) {
            if (l.channels == 0 || l.kernel == 0 || l.dilation == 0) throw Error("Sequential: invalid conv layer");
            channels = l.channels;
        } else if (l.kind == LayerKind::MaxPool && (l.kernel == 0 || l.stride == 0)) {
            throw Error("Sequential: invalid pool layer");
        }
    }
    out_channels_ = channels;
}

std::size_t Sequential::output_stride() const {
    std::size_t stride = 1;
    for (const auto& l : layers_) {
        if (l.kind == LayerKind::MaxPool) stride *= l.stride;
    }
    return stride;
}

ConvSpec Sequential::conv_spec(std::size_t layer_index, std::size_t in_channels) const {
    const auto& l = layers_[layer_index];
    return same_conv(in_channels, l.channels, l.kernel, l.dilation);
}

std::vector<std::string> Sequential::param_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].kind != LayerKind::Conv) continue;
        names.push_back(prefix_ + ".conv" + std::to_string(i) + ".w");
        names.push_back(prefix_ + ".conv" + std::to_string(i) + ".b");
    }
    return names;
}

void init_he(Tensor& weights, Rng& rng) {
    std::size_t fan_in = 1;
    for (std::size_t a = 1; a < weights.rank(); ++a) fan_in *= weights.dim(a);
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : weights.data()) v = static_cast<float>(rng.normal() * scale);
}

void Sequential::init_params(ParamMap& params, Rng& rng) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.kind != LayerKind::Conv) continue;
        const std::string base = prefix_ + ".conv" + std::to_string(i);
        Tensor w({l.channels, layer_in_channels_[i], l.kernel, l.kernel});
        init_he(w, rng);
        params[base + ".w"] = std::move(w);
        params[base + ".b"] = Tensor({l.channels});
    }
}

Tensor Sequential::forward(const ParamMap& params, const Tensor& input, SequentialCache* cache) const {
    if (input.rank() != 4 || input.dim(1) != in_channels_) {
        throw Error("Sequential '" + prefix_ + "': expected [N," + std::to_string(in_channels_) + ",H,W], got " +
                    shape_string(input.shape()));
    }
    if (cache) {
        cache->inputs.clear();
        cache->argmax.clear();
    }
    Tensor x = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (cache) cache->inputs.push_back(x);
        switch (l.kind) {
            case LayerKind::Conv: {
                const std::string base = prefix_ + ".conv" + std::to_string(i);
                x = conv2d(x, params.at(base + ".w"), params.at(base + ".b"), conv_spec(i, layer_in_channels_[i]));
                if (cache) cache->argmax.emplace_back();
                break;
            }
            case LayerKind::Relu:
                x = relu(x);
                if (cache) cache->argmax.emplace_back();
                break;
            case LayerKind::MaxPool: {
                auto pooled = max_pool2d(x, l.kernel, l.stride);
                x = std::move(pooled.output);
                if (cache) cache->argmax.push_back(std::move(pooled.argmax));
                break;
            }
        }
    }
    return x;
}

void accumulate_grad(ParamMap& grads, const std::string& name, const Tensor& src) {
    auto it = grads.find(name);
    if (it == grads.end()) {
        grads.emplace(name, src);
        return;
    }
    if (it->second.shape() != src.shape()) throw Error("accumulate_grad: shape mismatch for " + name);
    for (std::size_t i = 0; i < src.size(); ++i) it->second[i] += src[i];
}

Tensor Sequential::backward(const ParamMap& params, const SequentialCache& cache, const Tensor& upstream,
                            ParamMap& grads, bool skip_input_grad) const {
    if (cache.inputs.size() != layers_.size()) throw Error("Sequential::backward: missing forward cache");
    Tensor g = upstream;
    for (std::size_t idx = layers_.size(); idx-- > 0;) {
        const auto& l = layers_[idx];
        const Tensor& in = cache.inputs[idx];
        switch (l.kind) {
            case LayerKind::Conv: {
                const std::string base = prefix_ + ".conv" + std::to_string(idx);
                auto cg = conv2d_backward(g, in, params.at(base + ".w"), conv_spec(idx, layer_in_channels_[idx]));
                accumulate_grad(grads, base + ".w", cg.weights);
                accumulate_grad(grads, base + ".b", cg.bias);
                if (idx == 0 && skip_input_grad) return Tensor();
                g = std::move(cg.input);
                break;
            }
            case LayerKind::Relu:
                g = relu_backward(g, in);
                break;
            case LayerKind::MaxPool:
                g = max_pool2d_backward(g, std::span<const std::size_t>(cache.argmax[idx]), in.shape());
                break;
        }
    }
    return g;
}

}  // namespace mdc
