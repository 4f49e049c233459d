#include "mdc/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mdc {

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_rank(const Shape& shape, std::size_t rank, const char* what) {
    if (shape.size() != rank) {
        throw Error(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(shape));
    }
}

std::size_t conv_out_extent(std::size_t in, std::size_t pad, std::size_t effective, std::size_t stride) {
    if (in + 2 * pad < effective) {
        throw Error("conv2d: padded input " + std::to_string(in + 2 * pad) + " smaller than kernel extent " +
                    std::to_string(effective));
    }
    return (in + 2 * pad - effective) / stride + 1;
}

// Unrolls one image [C,H,W] into a [C*kh*kw, Ho*Wo] matrix.
template <typename T>
void im2col(const T* image, std::size_t height, std::size_t width, const ConvSpec& spec, std::size_t out_h,
            std::size_t out_w, T* col) {
    const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
    const auto stride = static_cast<std::ptrdiff_t>(spec.stride);
    const auto dil = static_cast<std::ptrdiff_t>(spec.dilation);
    const auto h = static_cast<std::ptrdiff_t>(height);
    const auto w = static_cast<std::ptrdiff_t>(width);
    std::size_t row = 0;
    for (std::size_t c = 0; c < spec.in_channels; ++c) {
        const T* plane = image + c * height * width;
        for (std::size_t i = 0; i < spec.kernel_h; ++i) {
            for (std::size_t j = 0; j < spec.kernel_w; ++j, ++row) {
                T* dst = col + row * out_h * out_w;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(i) * dil - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(j) * dil - pad;
                for (std::size_t y = 0; y < out_h; ++y) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y) * stride + dy;
                    T* out_row = dst + y * out_w;
                    if (iy < 0 || iy >= h) {
                        std::fill(out_row, out_row + out_w, T{0});
                        continue;
                    }
                    const T* in_row = plane + iy * w;
                    for (std::size_t x = 0; x < out_w; ++x) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x) * stride + dx;
                        out_row[x] = (ix >= 0 && ix < w) ? in_row[ix] : T{0};
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters-adds columns back into the image gradient.
template <typename T>
void col2im(const T* col, std::size_t height, std::size_t width, const ConvSpec& spec, std::size_t out_h,
            std::size_t out_w, T* image) {
    const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
    const auto stride = static_cast<std::ptrdiff_t>(spec.stride);
    const auto dil = static_cast<std::ptrdiff_t>(spec.dilation);
    const auto h = static_cast<std::ptrdiff_t>(height);
    const auto w = static_cast<std::ptrdiff_t>(width);
    std::size_t row = 0;
    for (std::size_t c = 0; c < spec.in_channels; ++c) {
        T* plane = image + c * height * width;
        for (std::size_t i = 0; i < spec.kernel_h; ++i) {
            for (std::size_t j = 0; j < spec.kernel_w; ++j, ++row) {
                const T* src = col + row * out_h * out_w;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(i) * dil - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(j) * dil - pad;
                for (std::size_t y = 0; y < out_h; ++y) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y) * stride + dy;
                    if (iy < 0 || iy >= h) continue;
                    T* in_row = plane + iy * w;
                    const T* src_row = src + y * out_w;
                    for (std::size_t x = 0; x < out_w; ++x) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x) * stride + dx;
                        if (ix >= 0 && ix < w) in_row[ix] += src_row[x];
                    }
                }
            }
        }
    }
}

void check_conv_shapes(const Shape& input, const Shape& weights, const Shape& bias, const ConvSpec& spec) {
    spec.validate();
    require_rank(input, 4, "conv2d input");
    require_rank(weights, 4, "conv2d weights");
    if (input[1] != spec.in_channels) {
        throw Error("conv2d: input has " + std::to_string(input[1]) + " channels, spec expects " +
                    std::to_string(spec.in_channels));
    }
    const Shape expected_w{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
    if (weights != expected_w) {
        throw Error("conv2d: weights " + shape_string(weights) + " do not match spec " + shape_string(expected_w));
    }
    if (bias != Shape{spec.out_channels}) {
        throw Error("conv2d: bias " + shape_string(bias) + " does not match out_channels");
    }
}

struct Bilinear1d {
    std::vector<std::size_t> lo, hi;
    std::vector<double> frac;
};

Bilinear1d bilinear_axis(std::size_t in, std::size_t out) {
    Bilinear1d axis;
    axis.lo.resize(out);
    axis.hi.resize(out);
    axis.frac.resize(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const auto lo = static_cast<std::size_t>(std::floor(src));
        axis.lo[o] = lo;
        axis.hi[o] = std::min(lo + 1, in - 1);
        axis.frac[o] = src - static_cast<double>(lo);
    }
    return axis;
}

}  // namespace

std::size_t ConvSpec::out_height(std::size_t in_h) const {
    return conv_out_extent(in_h, padding, effective_kernel_h(), stride);
}

std::size_t ConvSpec::out_width(std::size_t in_w) const {
    return conv_out_extent(in_w, padding, effective_kernel_w(), stride);
}

void ConvSpec::validate() const {
    if (in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0 || dilation == 0) {
        throw Error("ConvSpec: channels, kernel, stride and dilation must be positive");
    }
}

ConvSpec same_conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t dilation) {
    ConvSpec spec;
    spec.in_channels = in_channels;
    spec.out_channels = out_channels;
    spec.kernel_h = kernel;
    spec.kernel_w = kernel;
    spec.dilation = dilation;
    spec.padding = (spec.effective_kernel_h() - 1) / 2;
    return spec;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                      const ConvSpec& spec) {
    check_conv_shapes(input.shape(), weights.shape(), bias.shape(), spec);
    const std::size_t n_batch = input.dim(0);
    const std::size_t height = input.dim(2);
    const std::size_t width = input.dim(3);
    const std::size_t out_h = spec.out_height(height);
    const std::size_t out_w = spec.out_width(width);
    const std::size_t reduce = spec.in_channels * spec.kernel_h * spec.kernel_w;
    const std::size_t spatial = out_h * out_w;

    BasicTensor<T> out({n_batch, spec.out_channels, out_h, out_w});
    std::vector<T> col(reduce * spatial);
    Eigen::Map<const RowMat<T>> w_mat(weights.raw(), static_cast<Eigen::Index>(spec.out_channels),
                                      static_cast<Eigen::Index>(reduce));
    for (std::size_t n = 0; n < n_batch; ++n) {
        im2col(input.raw() + n * spec.in_channels * height * width, height, width, spec, out_h, out_w, col.data());
        Eigen::Map<const RowMat<T>> col_mat(col.data(), static_cast<Eigen::Index>(reduce),
                                            static_cast<Eigen::Index>(spatial));
        T* out_n = out.raw() + n * spec.out_channels * spatial;
        Eigen::Map<RowMat<T>> out_mat(out_n, static_cast<Eigen::Index>(spec.out_channels),
                                      static_cast<Eigen::Index>(spatial));
        out_mat.noalias() = w_mat * col_mat;
        for (std::size_t o = 0; o < spec.out_channels; ++o) {
            const T b = bias[o];
            T* plane = out_n + o * spatial;
            for (std::size_t p = 0; p < spatial; ++p) plane[p] += b;
        }
    }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& saved_input,
                             const BasicTensor<T>& weights, const ConvSpec& spec) {
    if (saved_input.empty()) throw Error("conv2d_backward: missing saved forward input");
    const Shape bias_shape{spec.out_channels};
    check_conv_shapes(saved_input.shape(), weights.shape(), bias_shape, spec);
    const std::size_t n_batch = saved_input.dim(0);
    const std::size_t height = saved_input.dim(2);
    const std::size_t width = saved_input.dim(3);
    const std::size_t out_h = spec.out_height(height);
    const std::size_t out_w = spec.out_width(width);
    const Shape expected_up{n_batch, spec.out_channels, out_h, out_w};
    if (upstream.shape() != expected_up) {
        throw Error("conv2d_backward: upstream " + shape_string(upstream.shape()) + " != forward output " +
                    shape_string(expected_up));
    }
    const std::size_t reduce = spec.in_channels * spec.kernel_h * spec.kernel_w;
    const std::size_t spatial = out_h * out_w;
    const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };

    ConvGrads<T> grads{BasicTensor<T>(saved_input.shape()), BasicTensor<T>(weights.shape()),
                       BasicTensor<T>(bias_shape)};
    std::vector<T> col(reduce * spatial);
    std::vector<T> dcol(reduce * spatial);
    Eigen::Map<const RowMat<T>> w_mat(weights.raw(), ei(spec.out_channels), ei(reduce));
    Eigen::Map<RowMat<T>> dw_mat(grads.weights.raw(), ei(spec.out_channels), ei(reduce));
    for (std::size_t n = 0; n < n_batch; ++n) {
        const T* up_n = upstream.raw() + n * spec.out_channels * spatial;
        Eigen::Map<const RowMat<T>> up_mat(up_n, ei(spec.out_channels), ei(spatial));
        im2col(saved_input.raw() + n * spec.in_channels * height * width, height, width, spec, out_h, out_w,
               col.data());
        Eigen::Map<const RowMat<T>> col_mat(col.data(), ei(reduce), ei(spatial));
        dw_mat.noalias() += up_mat * col_mat.transpose();
        for (std::size_t o = 0; o < spec.out_channels; ++o) {
            T acc{0};
            for (std::size_t p = 0; p < spatial; ++p) acc += up_n[o * spatial + p];
            grads.bias[o] += acc;
        }
        Eigen::Map<RowMat<T>> dcol_mat(dcol.data(), ei(reduce), ei(spatial));
        dcol_mat.noalias() = w_mat.transpose() * up_mat;
        col2im(dcol.data(), height, width, spec, out_h, out_w,
               grads.input.raw() + n * spec.in_channels * height * width);
    }
    return grads;
}

template <typename T>
BasicTensor<T> dilate_kernel(const BasicTensor<T>& weights, std::size_t dilation) {
    require_rank(weights.shape(), 4, "dilate_kernel");
    if (dilation == 0) throw Error("dilate_kernel: dilation must be >= 1");
    const std::size_t kh = weights.dim(2);
    const std::size_t kw = weights.dim(3);
    const std::size_t eh = kh + (kh - 1) * (dilation - 1);
    const std::size_t ew = kw + (kw - 1) * (dilation - 1);
    BasicTensor<T> out({weights.dim(0), weights.dim(1), eh, ew});
    for (std::size_t o = 0; o < weights.dim(0); ++o)
        for (std::size_t c = 0; c < weights.dim(1); ++c)
            for (std::size_t i = 0; i < kh; ++i)
                for (std::size_t j = 0; j < kw; ++j) out.at(o, c, i * dilation, j * dilation) = weights.at(o, c, i, j);
    return out;
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input) {
    require_rank(input.shape(), 4, "global_avg_pool");
    const std::size_t planes = input.dim(0) * input.dim(1);
    const std::size_t spatial = input.dim(2) * input.dim(3);
    BasicTensor<T> out({input.dim(0), input.dim(1)});
    for (std::size_t p = 0; p < planes; ++p) {
        T acc{0};
        const T* src = input.raw() + p * spatial;
        for (std::size_t i = 0; i < spatial; ++i) acc += src[i];
        out[p] = acc / static_cast<T>(spatial);
    }
    return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& upstream, const Shape& input_shape) {
    require_rank(input_shape, 4, "global_avg_pool_backward");
    if (upstream.shape() != Shape{input_shape[0], input_shape[1]}) {
        throw Error("global_avg_pool_backward: upstream shape mismatch");
    }
    const std::size_t spatial = input_shape[2] * input_shape[3];
    BasicTensor<T> grad(input_shape);
    for (std::size_t p = 0; p < upstream.size(); ++p) {
        const T g = upstream[p] / static_cast<T>(spatial);
        std::fill(grad.raw() + p * spatial, grad.raw() + (p + 1) * spatial, g);
    }
    return grad;
}

template <typename T>
PoolResult<T> max_pool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride) {
    require_rank(input.shape(), 4, "max_pool2d");
    if (window == 0 || stride == 0) throw Error("max_pool2d: window and stride must be positive");
    const std::size_t height = input.dim(2);
    const std::size_t width = input.dim(3);
    if (height < window || width < window) throw Error("max_pool2d: input smaller than window");
    const std::size_t out_h = (height - window) / stride + 1;
    const std::size_t out_w = (width - window) / stride + 1;
    PoolResult<T> result{BasicTensor<T>({input.dim(0), input.dim(1), out_h, out_w}), {}};
    result.argmax.resize(result.output.size());
    std::size_t k = 0;
    for (std::size_t p = 0; p < input.dim(0) * input.dim(1); ++p) {
        const std::size_t base = p * height * width;
        for (std::size_t y = 0; y < out_h; ++y) {
            for (std::size_t x = 0; x < out_w; ++x, ++k) {
                std::size_t best = base + y * stride * width + x * stride;
                T best_v = input[best];
                for (std::size_t i = 0; i < window; ++i) {
                    for (std::size_t j = 0; j < window; ++j) {
                        const std::size_t idx = base + (y * stride + i) * width + x * stride + j;
                        // strict comparison keeps the lowest index on ties
                        if (input[idx] > best_v) {
                            best_v = input[idx];
                            best = idx;
                        }
                    }
                }
                result.output[k] = best_v;
                result.argmax[k] = best;
            }
        }
    }
    return result;
}

template <typename T>
BasicTensor<T> max_pool2d_backward(const BasicTensor<T>& upstream, std::span<const std::size_t> argmax,
                                   const Shape& input_shape) {
    if (argmax.size() != upstream.size()) throw Error("max_pool2d_backward: argmax/upstream size mismatch");
    BasicTensor<T> grad(input_shape);
    for (std::size_t k = 0; k < argmax.size(); ++k) {
        if (argmax[k] >= grad.size()) throw Error("max_pool2d_backward: argmax out of range");
        grad[argmax[k]] += upstream[k];
    }
    return grad;
}

template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                               const BasicTensor<T>& bias) {
    require_rank(input.shape(), 2, "fully_connected input");
    require_rank(weights.shape(), 2, "fully_connected weights");
    const std::size_t n = input.dim(0);
    const std::size_t features = input.dim(1);
    const std::size_t classes = weights.dim(0);
    if (weights.dim(1) != features || bias.shape() != Shape{classes}) {
        throw Error("fully_connected: shape mismatch input " + shape_string(input.shape()) + " weights " +
                    shape_string(weights.shape()) + " bias " + shape_string(bias.shape()));
    }
    BasicTensor<T> out({n, classes});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < classes; ++c) {
            T acc{0};
            for (std::size_t f = 0; f < features; ++f) acc += weights[c * features + f] * input[i * features + f];
            out[i * classes + c] = acc + bias[c];
        }
    }
    return out;
}

template <typename T>
LinearGrads<T> fully_connected_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& input,
                                        const BasicTensor<T>& weights) {
    require_rank(input.shape(), 2, "fully_connected_backward input");
    const std::size_t n = input.dim(0);
    const std::size_t features = input.dim(1);
    const std::size_t classes = weights.dim(0);
    if (upstream.shape() != Shape{n, classes}) throw Error("fully_connected_backward: upstream shape mismatch");
    LinearGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(weights.shape()), BasicTensor<T>({classes})};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < classes; ++c) {
            const T u = upstream[i * classes + c];
            g.bias[c] += u;
            for (std::size_t f = 0; f < features; ++f) {
                g.weights[c * features + f] += u * input[i * features + f];
                g.input[i * features + f] += u * weights[c * features + f];
            }
        }
    }
    return g;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
    BasicTensor<T> out = input;
    for (auto& v : out.data()) v = v > T{0} ? v : T{0};
    return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& input) {
    if (upstream.shape() != input.shape()) throw Error("relu_backward: shape mismatch");
    BasicTensor<T> grad(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) grad[i] = input[i] > T{0} ? upstream[i] : T{0};
    return grad;
}

template <typename T>
BasicTensor<T> upsample_bilinear(const BasicTensor<T>& input, std::size_t out_h, std::size_t out_w) {
    require_rank(input.shape(), 4, "upsample_bilinear");
    if (out_h == 0 || out_w == 0) throw Error("upsample_bilinear: zero-sized output");
    const std::size_t in_h = input.dim(2);
    const std::size_t in_w = input.dim(3);
    const Bilinear1d ay = bilinear_axis(in_h, out_h);
    const Bilinear1d ax = bilinear_axis(in_w, out_w);
    BasicTensor<T> out({input.dim(0), input.dim(1), out_h, out_w});
    for (std::size_t p = 0; p < input.dim(0) * input.dim(1); ++p) {
        const T* src = input.raw() + p * in_h * in_w;
        T* dst = out.raw() + p * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const T fy = static_cast<T>(ay.frac[y]);
            const T* r0 = src + ay.lo[y] * in_w;
            const T* r1 = src + ay.hi[y] * in_w;
            for (std::size_t x = 0; x < out_w; ++x) {
                const T fx = static_cast<T>(ax.frac[x]);
                const T top = r0[ax.lo[x]] * (T{1} - fx) + r0[ax.hi[x]] * fx;
                const T bottom = r1[ax.lo[x]] * (T{1} - fx) + r1[ax.hi[x]] * fx;
                dst[y * out_w + x] = top * (T{1} - fy) + bottom * fy;
            }
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> upsample_bilinear_backward(const BasicTensor<T>& upstream, const Shape& input_shape) {
    require_rank(input_shape, 4, "upsample_bilinear_backward");
    require_rank(upstream.shape(), 4, "upsample_bilinear_backward upstream");
    const std::size_t in_h = input_shape[2];
    const std::size_t in_w = input_shape[3];
    const std::size_t out_h = upstream.dim(2);
    const std::size_t out_w = upstream.dim(3);
    const Bilinear1d ay = bilinear_axis(in_h, out_h);
    const Bilinear1d ax = bilinear_axis(in_w, out_w);
    BasicTensor<T> grad(input_shape);
    for (std::size_t p = 0; p < input_shape[0] * input_shape[1]; ++p) {
        const T* up = upstream.raw() + p * out_h * out_w;
        T* dst = grad.raw() + p * in_h * in_w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const T fy = static_cast<T>(ay.frac[y]);
            T* r0 = dst + ay.lo[y] * in_w;
            T* r1 = dst + ay.hi[y] * in_w;
            for (std::size_t x = 0; x < out_w; ++x) {
                const T fx = static_cast<T>(ax.frac[x]);
                const T g = up[y * out_w + x];
                r0[ax.lo[x]] += g * (T{1} - fy) * (T{1} - fx);
                r0[ax.hi[x]] += g * (T{1} - fy) * fx;
                r1[ax.lo[x]] += g * fy * (T{1} - fx);
                r1[ax.hi[x]] += g * fy * fx;
            }
        }
    }
    return grad;
}

template <typename T>
BasicTensor<T> channel_softmax(const BasicTensor<T>& logits) {
    require_rank(logits.shape(), 4, "channel_softmax");
    const std::size_t channels = logits.dim(1);
    const std::size_t spatial = logits.dim(2) * logits.dim(3);
    BasicTensor<T> out(logits.shape());
    for (std::size_t n = 0; n < logits.dim(0); ++n) {
        const T* src = logits.raw() + n * channels * spatial;
        T* dst = out.raw() + n * channels * spatial;
        for (std::size_t p = 0; p < spatial; ++p) {
            T mx = src[p];
            for (std::size_t c = 1; c < channels; ++c) mx = std::max(mx, src[c * spatial + p]);
            T sum{0};
            for (std::size_t c = 0; c < channels; ++c) {
                const T e = std::exp(src[c * spatial + p] - mx);
                dst[c * spatial + p] = e;
                sum += e;
            }
            for (std::size_t c = 0; c < channels; ++c) dst[c * spatial + p] /= sum;
        }
    }
    return out;
}

template <typename T>
LossResult<T> sigmoid_cross_entropy_multilabel(const BasicTensor<T>& logits, const BasicTensor<T>& labels) {
    require_rank(logits.shape(), 2, "sigmoid_cross_entropy_multilabel");
    if (labels.shape() != logits.shape()) throw Error("sigmoid_cross_entropy_multilabel: label shape mismatch");
    LossResult<T> result{T{0}, BasicTensor<T>(logits.shape())};
    const T inv_count = T{1} / static_cast<T>(logits.size());
    T total{0};
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const T y = labels[i];
        if (y != T{0} && y != T{1}) throw Error("sigmoid_cross_entropy_multilabel: labels must be 0 or 1");
        const T z = logits[i];
        // max(z,0) - z*y + log(1 + exp(-|z|))
        total += std::max(z, T{0}) - z * y + std::log1p(std::exp(-std::abs(z)));
        const T sig = z >= T{0} ? T{1} / (T{1} + std::exp(-z)) : std::exp(z) / (T{1} + std::exp(z));
        result.grad[i] = (sig - y) * inv_count;
    }
    result.value = total * inv_count;
    return result;
}

template <typename T>
LossResult<T> pixel_softmax_ce_ignored(const BasicTensor<T>& logits, std::span<const std::uint8_t> target) {
    require_rank(logits.shape(), 4, "pixel_softmax_ce_ignored");
    const std::size_t n_batch = logits.dim(0);
    const std::size_t channels = logits.dim(1);
    const std::size_t spatial = logits.dim(2) * logits.dim(3);
    if (target.size() != n_batch * spatial) throw Error("pixel_softmax_ce_ignored: target size mismatch");
    LossResult<T> result{T{0}, BasicTensor<T>(logits.shape())};
    std::vector<T> prob(channels);
    for (std::size_t n = 0; n < n_batch; ++n) {
        const std::uint8_t* tgt = target.data() + n * spatial;
        std::size_t labeled = 0;
        for (std::size_t p = 0; p < spatial; ++p) {
            if (tgt[p] == kIgnoreLabel) continue;
            if (tgt[p] >= channels) {
                throw Error("pixel_softmax_ce_ignored: class id " + std::to_string(tgt[p]) + " >= channel count " +
                            std::to_string(channels));
            }
            ++labeled;
        }
        if (labeled == 0) continue;
        const T scale = T{1} / (static_cast<T>(labeled) * static_cast<T>(n_batch));
        const T* src = logits.raw() + n * channels * spatial;
        T* g = result.grad.raw() + n * channels * spatial;
        T image_sum{0};
        for (std::size_t p = 0; p < spatial; ++p) {
            if (tgt[p] == kIgnoreLabel) continue;
            T mx = src[p];
            for (std::size_t c = 1; c < channels; ++c) mx = std::max(mx, src[c * spatial + p]);
            T sum{0};
            for (std::size_t c = 0; c < channels; ++c) {
                prob[c] = std::exp(src[c * spatial + p] - mx);
                sum += prob[c];
            }
            const T log_sum = std::log(sum);
            image_sum += log_sum - (src[tgt[p] * spatial + p] - mx);
            for (std::size_t c = 0; c < channels; ++c) {
                const T pc = prob[c] / sum;
                g[c * spatial + p] = (pc - (c == tgt[p] ? T{1} : T{0})) * scale;
            }
        }
        result.value += image_sum / static_cast<T>(labeled);
    }
    result.value /= static_cast<T>(n_batch);
    return result;
}

template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity, const SgdConfig& config) {
    if (params.size() != grads.size() || params.size() != velocity.size()) {
        throw Error("sgd_step: params, grads and velocity must have equal length");
    }
    if (!(config.lr >= 0.0) || !std::isfinite(config.lr)) throw Error("sgd_step: learning rate must be >= 0");
    for (T g : grads) {
        if (!std::isfinite(g)) throw Error("sgd_step: non-finite gradient");
    }
    const T lr = static_cast<T>(config.lr);
    const T mu = static_cast<T>(config.momentum);
    const T decay = static_cast<T>(config.weight_decay);
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = mu * velocity[i] + grads[i] + decay * params[i];
        params[i] -= lr * velocity[i];
    }
}

#define MDC_INSTANTIATE_OPS(T)                                                                                     \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,            \
                                   const ConvSpec&);                                                               \
    template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,     \
                                          const ConvSpec&);                                                        \
    template BasicTensor<T> dilate_kernel(const BasicTensor<T>&, std::size_t);                                     \
    template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                                \
    template BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>&, const Shape&);                         \
    template PoolResult<T> max_pool2d(const BasicTensor<T>&, std::size_t, std::size_t);                            \
    template BasicTensor<T> max_pool2d_backward(const BasicTensor<T>&, std::span<const std::size_t>, const Shape&); \
    template BasicTensor<T> fully_connected(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);  \
    template LinearGrads<T> fully_connected_backward(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                                     const BasicTensor<T>&);                                       \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                                           \
    template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                           \
    template BasicTensor<T> upsample_bilinear(const BasicTensor<T>&, std::size_t, std::size_t);                    \
    template BasicTensor<T> upsample_bilinear_backward(const BasicTensor<T>&, const Shape&);                       \
    template BasicTensor<T> channel_softmax(const BasicTensor<T>&);                                                \
    template LossResult<T> sigmoid_cross_entropy_multilabel(const BasicTensor<T>&, const BasicTensor<T>&);         \
    template LossResult<T> pixel_softmax_ce_ignored(const BasicTensor<T>&, std::span<const std::uint8_t>);         \
    template void sgd_step(std::span<T>, std::span<const T>, std::span<T>, const SgdConfig&);

MDC_INSTANTIATE_OPS(float)
MDC_INSTANTIATE_OPS(double)

#undef MDC_INSTANTIATE_OPS

}  // namespace mdc
