#pragma once

// Reference implementations used as independent oracles by the tests.
// Deliberately naive: direct loops straight from the definitions.

#include <cmath>
#include <functional>
#include <vector>

#include "mdc/ops.hpp"
#include "mdc/random.hpp"

namespace oracle {

template <typename T>
mdc::BasicTensor<T> random_tensor(const mdc::Shape& shape, mdc::Rng& rng, double lo = -1.0, double hi = 1.0) {
    mdc::BasicTensor<T> t(shape);
    for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

// out[n,o,y,x] = b[o] + sum_{c,i,j} w[o,c,i,j] * in[n,c,y*s-pad+i*d, x*s-pad+j*d]
template <typename T>
mdc::BasicTensor<T> naive_conv(const mdc::BasicTensor<T>& in, const mdc::BasicTensor<T>& w,
                               const mdc::BasicTensor<T>& b, std::size_t stride, std::size_t pad, std::size_t dil) {
    const long N = static_cast<long>(in.dim(0)), C = static_cast<long>(in.dim(1));
    const long H = static_cast<long>(in.dim(2)), W = static_cast<long>(in.dim(3));
    const long O = static_cast<long>(w.dim(0)), K = static_cast<long>(w.dim(2)), KW = static_cast<long>(w.dim(3));
    const long s = static_cast<long>(stride), p = static_cast<long>(pad), d = static_cast<long>(dil);
    const long Ho = (H + 2 * p - (K + (K - 1) * (d - 1))) / s + 1;
    const long Wo = (W + 2 * p - (KW + (KW - 1) * (d - 1))) / s + 1;
    mdc::BasicTensor<T> out({static_cast<std::size_t>(N), static_cast<std::size_t>(O), static_cast<std::size_t>(Ho),
                             static_cast<std::size_t>(Wo)});
    for (long n = 0; n < N; ++n)
        for (long o = 0; o < O; ++o)
            for (long y = 0; y < Ho; ++y)
                for (long x = 0; x < Wo; ++x) {
                    long double acc = b[static_cast<std::size_t>(o)];
                    for (long c = 0; c < C; ++c)
                        for (long i = 0; i < K; ++i)
                            for (long j = 0; j < KW; ++j) {
                                const long iy = y * s - p + i * d, ix = x * s - p + j * d;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += static_cast<long double>(w.at(o, c, i, j)) * in.at(n, c, iy, ix);
                            }
                    out.at(n, o, y, x) = static_cast<T>(acc);
                }
    return out;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Maximum relative error between analytic gradient and central differences
// of a scalar function of the tensor x.
inline double fd_check(mdc::Tensor64& x, const mdc::Tensor64& analytic, const std::function<double()>& f,
                       double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f();
        x[i] = keep - h;
        const double down = f();
        x[i] = keep;
        const double numeric = (up - down) / (2.0 * h);
        const double err = std::abs(numeric - analytic[i]) /
                           std::max({std::abs(numeric), std::abs(analytic[i]), 1e-4});
        worst = std::max(worst, err);
    }
    return worst;
}

// Weighted sum sum_i r_i * y_i, turning a tensor-valued op into a scalar.
inline double dot(const mdc::Tensor64& y, const mdc::Tensor64& r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * r[i];
    return acc;
}

}  // namespace oracle
