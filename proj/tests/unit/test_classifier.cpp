#include <gtest/gtest.h>

#include <cmath>

#include "mdc/mdc_classifier.hpp"
#include "oracles.hpp"

using namespace mdc;

namespace {

MdcSpec tiny_spec(std::vector<std::size_t> dilations = {1, 2, 3}) {
    MdcSpec s;
    s.backbone = parse_layers("c4 r p2 c6 r");
    s.block_dilations = std::move(dilations);
    s.block_channels = 5;
    s.num_classes = 3;
    return s;
}

Tensor random_batch(std::size_t n, std::size_t size, std::uint64_t seed) {
    Rng rng(seed);
    return oracle::random_tensor<float>({n, 3, size, size}, rng, -1.0, 1.0);
}

Image solid_image(std::size_t size, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    Image im(size, size, 3);
    for (std::size_t p = 0; p < size * size; ++p) {
        im.pixels[p * 3] = r;
        im.pixels[p * 3 + 1] = g;
        im.pixels[p * 3 + 2] = b;
    }
    return im;
}

}  // namespace

TEST(MdcSpecTest, RejectsInvalidBlockLayouts) {
    auto s = tiny_spec({1});
    EXPECT_THROW(s.validate(), Error);
    s = tiny_spec({3, 1});
    EXPECT_THROW(s.validate(), Error);
    s = tiny_spec({1, 0});
    EXPECT_THROW(s.validate(), Error);
    s = tiny_spec();
    s.num_classes = 255;
    EXPECT_THROW(s.validate(), Error);
    EXPECT_THROW(parse_layers("c0 r"), Error);
}

TEST(MdcSpecTest, DuplicateRatesOnlyWarn) {
    const auto warnings = tiny_spec({1, 1, 3}).validate();
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("1"), std::string::npos);
    EXPECT_TRUE(tiny_spec().validate().empty());
}

TEST(MdcModelTest, BuildCreatesOneHeadPerBlock) {
    const auto model = build_mdc(tiny_spec({1, 3, 6, 9}), 4);
    for (std::size_t b = 0; b < 4; ++b) {
        const auto& w = model.params.at(MdcModel::head_weight_name(b));
        EXPECT_EQ(w.shape(), (Shape{3, 5}));
        EXPECT_EQ(model.params.at(MdcModel::head_bias_name(b)).shape(), (Shape{3}));
    }
    const auto fwd = forward_cls(model, random_batch(2, 12, 1));
    ASSERT_EQ(fwd.logits.size(), 4u);
    for (const auto& f : fwd.features) EXPECT_EQ(f.shape(), (Shape{2, 5, 6, 6}));
    for (const auto& l : fwd.logits) EXPECT_EQ(l.shape(), (Shape{2, 3}));
}

TEST(MdcModelTest, BlockConvUsesItsDilation) {
    const auto model = build_mdc(tiny_spec({1, 3, 6, 9}), 4);
    const auto layers = model.block(2).layers();
    ASSERT_FALSE(layers.empty());
    EXPECT_EQ(layers.front().dilation, 6u);
    EXPECT_EQ(layers.front().kernel, 3u);
}

TEST(MdcModelTest, SameSeedSameParameters) {
    const auto a = build_mdc(tiny_spec(), 9);
    const auto b = build_mdc(tiny_spec(), 9);
    const auto c = build_mdc(tiny_spec(), 10);
    EXPECT_EQ(a.params.size(), b.params.size());
    for (const auto& [name, t] : a.params) EXPECT_EQ(t.storage(), b.params.at(name).storage()) << name;
    EXPECT_NE(a.params.at("backbone.conv0.w").storage(), c.params.at("backbone.conv0.w").storage());
}

TEST(MdcModelTest, ZeroHeadWeightsGiveBiasLogits) {
    auto model = build_mdc(tiny_spec(), 2);
    for (std::size_t b = 0; b < 3; ++b) {
        for (auto& v : model.params.at(MdcModel::head_weight_name(b)).data()) v = 0.0f;
        auto& bias = model.params.at(MdcModel::head_bias_name(b));
        bias[0] = 0.5f;
        bias[1] = -1.0f;
        bias[2] = static_cast<float>(b);
    }
    const auto fwd = forward_cls(model, random_batch(2, 10, 3));
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t n = 0; n < 2; ++n) {
            EXPECT_FLOAT_EQ(fwd.logits[b][n * 3 + 0], 0.5f);
            EXPECT_FLOAT_EQ(fwd.logits[b][n * 3 + 1], -1.0f);
            EXPECT_FLOAT_EQ(fwd.logits[b][n * 3 + 2], static_cast<float>(b));
        }
}

TEST(MdcModelTest, IdenticalBlocksGiveIdenticalLogits) {
    auto model = build_mdc(tiny_spec({1, 1}), 5);
    for (auto& [name, t] : model.params) {
        if (name.rfind("block1", 0) == 0) t = model.params.at("block0" + name.substr(6));
    }
    const auto fwd = forward_cls(model, random_batch(3, 10, 6));
    EXPECT_EQ(fwd.logits[0].storage(), fwd.logits[1].storage());

    Tensor labels({3, 3});
    labels[0] = labels[4] = labels[8] = 1.0f;
    const float pair = cls_loss(fwd.logits, labels).value;
    const float single = cls_loss({fwd.logits[0]}, labels).value;
    EXPECT_NEAR(pair, 2.0f * single, 1e-6);
}

TEST(MdcModelTest, BlocksAreIndependentGivenTheBackbone) {
    auto model = build_mdc(tiny_spec(), 7);
    const auto batch = random_batch(2, 10, 8);
    const auto before = forward_cls(model, batch);
    for (auto& [name, t] : model.params)
        if (name.rfind("block2", 0) == 0)
            for (auto& v : t.data()) v *= -3.0f;
    const auto after = forward_cls(model, batch);
    EXPECT_EQ(before.logits[0].storage(), after.logits[0].storage());
    EXPECT_EQ(before.logits[1].storage(), after.logits[1].storage());
    EXPECT_NE(before.logits[2].storage(), after.logits[2].storage());
}

TEST(MdcModelTest, ForwardRejectsBadInput) {
    const auto model = build_mdc(tiny_spec(), 1);
    EXPECT_THROW(forward_cls(model, Tensor({1, 1, 8, 8})), Error);
    EXPECT_THROW(forward_cls(model, Tensor({1, 3, 1, 1})), Error);
    EXPECT_THROW(forward_cls(model, Tensor({3, 8, 8})), Error);
}

TEST(ClsLossTest, ZeroLogitsGiveLn2PerBlock) {
    const std::vector<Tensor> logits(4, Tensor({2, 3}));
    Tensor labels({2, 3});
    labels[1] = 1.0f;
    std::vector<Tensor> grads;
    const auto r = cls_loss(logits, labels, &grads);
    EXPECT_NEAR(r.value, 4.0 * std::log(2.0), 1e-5);
    ASSERT_EQ(grads.size(), 4u);
    // d/dz of the mean over 6 entries: (sigmoid(0) - y) / 6
    EXPECT_NEAR(grads[2][0], 0.5 / 6.0, 1e-6);
    EXPECT_NEAR(grads[2][1], -0.5 / 6.0, 1e-6);
    EXPECT_THROW(cls_loss({}, labels), Error);
}

TEST(ClsBackwardTest, MatchesDirectionalDifference) {
    auto model = build_mdc(tiny_spec(), 11);
    const auto batch = random_batch(2, 10, 12);
    Tensor labels({2, 3});
    labels[0] = labels[5] = 1.0f;
    const auto fwd = forward_cls(model, batch, true);
    std::vector<Tensor> lg;
    cls_loss(fwd.logits, labels, &lg);
    const auto grads = cls_backward(model, fwd, lg);
    EXPECT_EQ(grads.size(), model.params.size());

    Rng rng(13);
    ParamMap dir;
    double analytic = 0.0;
    for (const auto& [name, p] : model.params) {
        auto v = oracle::random_tensor<float>(p.shape(), rng, -1.0, 1.0);
        const auto& g = grads.at(name);
        for (std::size_t i = 0; i < v.size(); ++i) analytic += static_cast<double>(v[i]) * g[i];
        dir.emplace(name, std::move(v));
    }
    auto loss_at = [&](double eps) {
        auto m = model;
        for (auto& [name, p] : m.params)
            for (std::size_t i = 0; i < p.size(); ++i) p[i] += static_cast<float>(eps) * dir.at(name)[i];
        return static_cast<double>(cls_loss(forward_cls(m, batch).logits, labels).value);
    };
    const double eps = 1e-3;
    const double numeric = (loss_at(eps) - loss_at(-eps)) / (2 * eps);
    EXPECT_NEAR(numeric, analytic, 2e-2 * std::max(1.0, std::abs(analytic)));
}

TEST(ClsBackwardTest, RequiresCache) {
    const auto model = build_mdc(tiny_spec(), 1);
    const auto fwd = forward_cls(model, random_batch(1, 8, 2));
    std::vector<Tensor> lg(3, Tensor({1, 3}));
    EXPECT_THROW(cls_backward(model, fwd, lg), Error);
    const auto cached = forward_cls(model, random_batch(1, 8, 2), true);
    EXPECT_THROW(cls_backward(model, cached, std::vector<Tensor>(2, Tensor({1, 3}))), Error);
}

TEST(CamTest, IsHeadWeightedSumOfFeatures) {
    auto model = build_mdc(tiny_spec(), 1);
    ClsForward fwd;
    Tensor feat({1, 5, 2, 2});
    for (std::size_t i = 0; i < feat.size(); ++i) feat[i] = static_cast<float>(i % 7);
    fwd.features = {feat, feat, feat};
    auto& w = model.params.at(MdcModel::head_weight_name(1));
    for (auto& v : w.data()) v = 0.0f;
    w[1 * 5 + 0] = 2.0f;  // class 1, channel 0
    w[1 * 5 + 1] = -1.0f;
    const auto cam = cam_at_feature_resolution(model, fwd, 1, 1);
    EXPECT_EQ(cam.class_id, 2);
    ASSERT_EQ(cam.values.size(), 4u);
    for (std::size_t p = 0; p < 4; ++p) EXPECT_FLOAT_EQ(cam.values[p], 2.0f * feat[p] - feat[4 + p]);
    const auto zero = cam_at_feature_resolution(model, fwd, 1, 0);
    for (float v : zero.values) EXPECT_EQ(v, 0.0f);
}

TEST(CamTest, MeanEqualsLogitMinusBias) {
    const auto model = build_mdc(tiny_spec(), 21);
    const auto img = random_batch(1, 12, 22);
    const auto fwd = forward_cls(model, img);
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t c = 0; c < 3; ++c) {
            const auto cam = cam_at_feature_resolution(model, fwd, b, c);
            double mean = 0.0;
            for (float v : cam.values) mean += v;
            mean /= static_cast<double>(cam.values.size());
            const double logit = fwd.logits[b][c] - model.params.at(MdcModel::head_bias_name(b))[c];
            EXPECT_NEAR(mean, logit, 1e-5);
        }
}

TEST(CamTest, UpsampledToImageSize) {
    const auto model = build_mdc(tiny_spec(), 3);
    const auto img = random_batch(1, 12, 4);
    const auto cam = compute_cam(model, img, 2, 1);
    EXPECT_EQ(cam.height, 12u);
    EXPECT_EQ(cam.width, 12u);
    const auto all = compute_cams(model, img, {0, 2});
    ASSERT_EQ(all.size(), 3u);
    ASSERT_EQ(all[2].size(), 2u);
    EXPECT_EQ(all[2][0].values, compute_cam(model, img, 2, 0).values);
    EXPECT_EQ(all[2][1].class_id, 3);
    EXPECT_THROW(compute_cam(model, img, 3, 0), Error);
    EXPECT_THROW(compute_cam(model, img, 0, 3), Error);
}

TEST(LearningRateTest, StepsDownOnceByTen) {
    EXPECT_DOUBLE_EQ(step_learning_rate(0.01, 6, 0), 0.01);
    EXPECT_DOUBLE_EQ(step_learning_rate(0.01, 6, 5), 0.01);
    EXPECT_DOUBLE_EQ(step_learning_rate(0.01, 6, 6), 0.001);
    EXPECT_DOUBLE_EQ(step_learning_rate(0.01, 6, 14), 0.001);
}

TEST(TrainClassifierTest, ZeroRateLeavesParametersUnchanged) {
    auto model = build_mdc(tiny_spec(), 1);
    const auto before = model.params;
    const Image a = solid_image(8, 200, 10, 10);
    ClsTrainConfig cfg;
    cfg.epochs = 2;
    cfg.lr = 0.0;
    cfg.weight_decay = 0.0;
    cfg.batch = 2;
    const auto log = train_classifier(model, {{&a, {1}}, {&a, {1, 3}}, {&a, {2}}}, cfg);
    ASSERT_EQ(log.size(), 2u);
    for (const auto& [name, t] : before) EXPECT_EQ(t.storage(), model.params.at(name).storage()) << name;
}

TEST(TrainClassifierTest, RejectsBadSamples) {
    auto model = build_mdc(tiny_spec(), 1);
    const Image a = solid_image(8, 1, 2, 3);
    ClsTrainConfig cfg;
    EXPECT_THROW(train_classifier(model, {}, cfg), Error);
    EXPECT_THROW(train_classifier(model, {{&a, {4}}}, cfg), Error);
    EXPECT_THROW(train_classifier(model, {{&a, {0}}}, cfg), Error);
    EXPECT_THROW(train_classifier(model, {{nullptr, {1}}}, cfg), Error);
    cfg.batch = 0;
    EXPECT_THROW(train_classifier(model, {{&a, {1}}}, cfg), Error);
}

TEST(TrainClassifierTest, LearnsColourClassesDeterministically) {
    const Image red = solid_image(8, 220, 20, 20);
    const Image green = solid_image(8, 20, 220, 20);
    const Image both = solid_image(8, 220, 220, 20);
    std::vector<ClsSample> samples;
    for (int i = 0; i < 6; ++i) {
        samples.push_back({&red, {1}});
        samples.push_back({&green, {2}});
        samples.push_back({&both, {1, 2}});
    }
    ClsTrainConfig cfg;
    cfg.epochs = 30;
    cfg.lr = 0.05;
    cfg.lr_decay_epoch = 25;
    cfg.batch = 6;
    cfg.seed = 3;
    auto spec = tiny_spec();
    spec.num_classes = 2;
    auto m1 = build_mdc(spec, 5);
    auto m2 = build_mdc(spec, 5);
    const auto log1 = train_classifier(m1, samples, cfg);
    const auto log2 = train_classifier(m2, samples, cfg);
    for (const auto& [name, t] : m1.params) EXPECT_EQ(t.storage(), m2.params.at(name).storage()) << name;
    EXPECT_LT(log1.back().mean_loss, 0.5 * log1.front().mean_loss);
    EXPECT_EQ(predict_labels(m1, red), std::vector<int>({1}));
    EXPECT_EQ(predict_labels(m1, green), std::vector<int>({2}));
    EXPECT_DOUBLE_EQ(exact_match_accuracy(m1, samples), 1.0);
}

TEST(ReceptiveFieldTest, SingleDilatedKernels) {
    EXPECT_EQ(receptive_field({{3, 1, 1}}), 3u);
    EXPECT_EQ(receptive_field({{3, 1, 3}}), 7u);
    EXPECT_EQ(receptive_field({{3, 1, 6}}), 13u);
    EXPECT_EQ(receptive_field({{3, 1, 9}}), 19u);
    EXPECT_EQ(receptive_field({}), 1u);
    EXPECT_THROW(receptive_field({{0, 1, 1}}), Error);
}

TEST(ReceptiveFieldTest, StridesScaleLaterLayers) {
    EXPECT_EQ(receptive_field({{3, 1, 1}, {3, 1, 1}}), 5u);
    EXPECT_EQ(receptive_field({{3, 1, 1}, {2, 2, 1}, {3, 1, 1}}), 8u);
    EXPECT_EQ(receptive_field(rf_layers(parse_layers("c8 r p2 c8 r p2 c8 r c8 r"))), 26u);
    EXPECT_EQ(receptive_field({{3, 1, 1}, {2, 2, 1}, {3, 1, 3}}), 16u);
}

// Pooled stack probed in the forward direction: count the input pixels whose
// impulse reaches one fixed output cell.
TEST(ReceptiveFieldTest, PooledStackMatchesImpulseProbe) {
    Rng rng(11);
    const auto w1 = oracle::random_tensor<double>({1, 1, 3, 3}, rng, 0.1, 1.0);
    const auto w2 = oracle::random_tensor<double>({1, 1, 3, 3}, rng, 0.1, 1.0);
    const std::size_t n = 48, out_col = 12;
    std::size_t lo = n, hi = 0;
    for (std::size_t col = 0; col < n; ++col) {
        Tensor64 x({1, 1, n, n});
        x[24 * n + col] = 1.0;
        auto y = conv2d(x, w1, Tensor64({1}), same_conv(1, 1, 3, 1));
        y = max_pool2d(y, 2, 2).output;
        y = conv2d(y, w2, Tensor64({1}), same_conv(1, 1, 3, 3));
        if (y[12 * (n / 2) + out_col] > 0.0) {
            lo = std::min(lo, col);
            hi = std::max(hi, col);
        }
    }
    EXPECT_EQ(hi - lo + 1, receptive_field({{3, 1, 1}, {2, 2, 1}, {3, 1, 3}}));
}

TEST(ReceptiveFieldTest, GrowsWithDilation) {
    std::size_t last = 0;
    for (std::size_t d = 1; d <= 12; ++d) {
        const auto rf = receptive_field({{3, 1, 1}, {3, 1, d}});
        EXPECT_GT(rf, last);
        last = rf;
    }
}

// Impulse probe: with strictly positive kernels nothing cancels, so the
// support of the response to a single lit pixel has width equal to the field.
TEST(ReceptiveFieldTest, MatchesImpulseResponseSupport) {
    const std::vector<std::size_t> dilations{1, 2, 3};
    Rng rng(5);
    Tensor64 x({1, 1, 41, 41});
    x[20 * 41 + 20] = 1.0;
    std::vector<RfLayer> layers;
    for (std::size_t d : dilations) {
        auto w = oracle::random_tensor<double>({1, 1, 3, 3}, rng, 0.1, 1.0);
        x = conv2d(x, w, Tensor64({1}), same_conv(1, 1, 3, d));
        layers.push_back({3, 1, d});
    }
    std::size_t lo = 41, hi = 0;
    for (std::size_t i = 0; i < 41; ++i)
        if (x[20 * 41 + i] > 0.0) {
            lo = std::min(lo, i);
            hi = std::max(hi, i);
        }
    EXPECT_EQ(hi - lo + 1, receptive_field(layers));
    EXPECT_EQ(receptive_field(layers), 13u);
}
