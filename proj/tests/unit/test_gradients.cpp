#include <gtest/gtest.h>

#include "gradcheck.hpp"

using namespace mdc;

TEST(Gradients, EveryOpMatchesCentralDifferences) {
    for (const auto& [name, err] : gradcheck::suite(100, 20)) EXPECT_LE(err, 1e-4) << name;
}

TEST(Gradients, ZeroUpstreamGivesZeroConvGradients) {
    Rng rng(2);
    auto x = oracle::random_tensor<double>({1, 2, 5, 5}, rng);
    auto w = oracle::random_tensor<double>({3, 2, 3, 3}, rng);
    const auto spec = same_conv(2, 3, 3, 2);
    const auto g = conv2d_backward(Tensor64({1, 3, 5, 5}), x, w, spec);
    for (double v : g.input.data()) EXPECT_EQ(v, 0.0);
    for (double v : g.weights.data()) EXPECT_EQ(v, 0.0);
    for (double v : g.bias.data()) EXPECT_EQ(v, 0.0);
}

TEST(Gradients, ConvBackwardRequiresSavedInput) {
    Tensor w({1, 1, 3, 3});
    EXPECT_THROW(conv2d_backward(Tensor({1, 1, 3, 3}), Tensor(), w, same_conv(1, 1, 3, 1)), Error);
}

TEST(Gradients, ConvBackwardRejectsWrongUpstreamShape) {
    Tensor x({1, 1, 5, 5});
    Tensor w({1, 1, 3, 3});
    EXPECT_THROW(conv2d_backward(Tensor({1, 1, 4, 4}), x, w, same_conv(1, 1, 3, 1)), Error);
}

TEST(Gradients, DilatedConvGradientEqualsInflatedKernelGradient) {
    Rng rng(44);
    const std::size_t d = 3;
    auto x = oracle::random_tensor<double>({2, 2, 11, 10}, rng);
    auto w = oracle::random_tensor<double>({3, 2, 3, 3}, rng);
    const auto spec = same_conv(2, 3, 3, d);
    const auto up = oracle::random_tensor<double>({2, 3, 11, 10}, rng);
    const auto g = conv2d_backward(up, x, w, spec);

    const auto inflated = dilate_kernel(w, d);
    ConvSpec plain = same_conv(2, 3, inflated.dim(2), 1);
    const auto gi = conv2d_backward(up, x, inflated, plain);
    for (std::size_t i = 0; i < g.input.size(); ++i) EXPECT_NEAR(g.input[i], gi.input[i], 1e-12);
    for (std::size_t o = 0; o < 3; ++o)
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < 3; ++j)
                    EXPECT_NEAR(g.weights.at(o, c, i, j), gi.weights.at(o, c, i * d, j * d), 1e-12);
    for (std::size_t o = 0; o < 3; ++o) EXPECT_NEAR(g.bias[o], gi.bias[o], 1e-12);
}
