#include <gtest/gtest.h>

#include "mdc/fusion.hpp"
#include "mdc/tensor.hpp"
#include "oracles.hpp"

using namespace mdc;

namespace {

LocalizationMap row_map(std::vector<float> v, bool normalized = true, int cls = 1) {
    LocalizationMap m(cls, 1, v.size());
    m.values = std::move(v);
    m.normalized = normalized;
    return m;
}

LocalizationMap random_map(Rng& rng, std::size_t h, std::size_t w, double lo = 0.0, double hi = 1.0) {
    LocalizationMap m(1, h, w);
    for (auto& v : m.values) v = static_cast<float>(rng.uniform(lo, hi));
    m.normalized = true;
    return m;
}

BoolMap bools(std::size_t h, std::size_t w, std::vector<int> on) {
    BoolMap b(h, w);
    for (int p : on) b.set(static_cast<std::size_t>(p), true);
    return b;
}

}  // namespace

TEST(NormalizeMap, ClampsAndScales) {
    const auto out = normalize_map(row_map({-1.0f, 2.0f, 4.0f}, false));
    EXPECT_TRUE(out.normalized);
    EXPECT_EQ(out.values, (std::vector<float>{0.0f, 0.5f, 1.0f}));
}

TEST(NormalizeMap, NonPositiveMapBecomesZero) {
    for (const auto& v : {std::vector<float>{0, 0, 0}, std::vector<float>{-3, -1, 0}}) {
        const auto out = normalize_map(row_map(v, false));
        for (float x : out.values) EXPECT_EQ(x, 0.0f);
        EXPECT_TRUE(out.normalized);
    }
}

TEST(NormalizeMap, RandomMapsPeakAtOneAndAreIdempotent) {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        auto raw = random_map(rng, 5, 7, -2.0, 3.0);
        raw.normalized = false;
        const auto once = normalize_map(raw);
        EXPECT_FLOAT_EQ(*std::max_element(once.values.begin(), once.values.end()), 1.0f);
        for (float v : once.values) {
            EXPECT_GE(v, 0.0f);
            EXPECT_LE(v, 1.0f);
        }
        EXPECT_EQ(normalize_map(once).values, once.values);
    }
}

TEST(FuseMaps, HandExample) {
    const auto h = fuse_maps(row_map({0.2f, 1.0f}), {row_map({1.0f, 0.0f}), row_map({0.0f, 0.4f})});
    EXPECT_FLOAT_EQ(h.values[0], 0.7f);
    EXPECT_FLOAT_EQ(h.values[1], 1.2f);
    EXPECT_FALSE(h.normalized);
}

TEST(FuseMaps, IdentityCases) {
    Rng rng(4);
    const auto h0 = random_map(rng, 4, 6);
    const auto twice = fuse_maps(h0, {h0});
    for (std::size_t p = 0; p < h0.values.size(); ++p) EXPECT_EQ(twice.values[p], 2.0f * h0.values[p]);
    LocalizationMap zero(1, 4, 6);
    zero.normalized = true;
    EXPECT_EQ(fuse_maps(h0, {zero, zero, zero}).values, h0.values);
}

TEST(FuseMaps, MatchesFormulaAndStaysInRange) {
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        const auto h0 = random_map(rng, 3, 5);
        std::vector<LocalizationMap> hi;
        const std::size_t n = 1 + rng.index(4);
        for (std::size_t i = 0; i < n; ++i) hi.push_back(random_map(rng, 3, 5));
        const auto h = fuse_maps(h0, hi);
        for (std::size_t p = 0; p < h.values.size(); ++p) {
            long double mean = 0;
            for (const auto& m : hi) mean += m.values[p];
            mean /= static_cast<long double>(n);
            EXPECT_NEAR(h.values[p], static_cast<double>(h0.values[p] + mean), 1e-6);
            EXPECT_GE(h.values[p], 0.0f);
            EXPECT_LE(h.values[p], 2.0f);
        }
    }
}

TEST(FuseMaps, PermutingDilatedMapsIsExact) {
    Rng rng(6);
    const auto h0 = random_map(rng, 4, 4);
    const auto a = random_map(rng, 4, 4), b = random_map(rng, 4, 4), c = random_map(rng, 4, 4);
    const auto ref = fuse_maps(h0, {a, b, c});
    EXPECT_EQ(fuse_maps(h0, {c, a, b}).values, ref.values);
    EXPECT_EQ(fuse_maps(h0, {b, c, a}).values, ref.values);
}

TEST(FuseMaps, LinearInEachArgument) {
    Rng rng(7);
    const auto h0 = random_map(rng, 3, 3);
    const auto a = random_map(rng, 3, 3), b = random_map(rng, 3, 3), c = random_map(rng, 3, 3);
    LocalizationMap ab = a;
    for (std::size_t p = 0; p < ab.values.size(); ++p) ab.values[p] = 0.5f * (a.values[p] + b.values[p]);
    const auto lhs = fuse_maps(h0, {ab, c});
    const auto ra = fuse_maps(h0, {a, c});
    const auto rb = fuse_maps(h0, {b, c});
    for (std::size_t p = 0; p < lhs.values.size(); ++p)
        EXPECT_NEAR(lhs.values[p], 0.5f * (ra.values[p] + rb.values[p]), 1e-6);
}

TEST(FuseMaps, RejectsMismatches) {
    const auto h0 = row_map({0.1f, 0.2f});
    EXPECT_THROW(fuse_maps(h0, {}), Error);
    EXPECT_THROW(fuse_maps(h0, {row_map({0.1f, 0.2f, 0.3f})}), Error);
    EXPECT_THROW(fuse_maps(h0, {row_map({0.1f, 0.2f}, true, 2)}), Error);
    EXPECT_THROW(fuse_maps(h0, {row_map({0.1f, 0.2f}, false)}), Error);
    EXPECT_THROW(fuse_maps(row_map({0.1f, 0.2f}, false), {h0}), Error);
}

TEST(ExtractForeground, TopThirtyPercentOfMax) {
    const auto fg = extract_foreground(row_map({0.1f, 0.5f, 0.95f, 1.0f}), 0.3);
    EXPECT_FALSE(fg[0]);
    EXPECT_FALSE(fg[1]);
    EXPECT_TRUE(fg[2]);
    EXPECT_TRUE(fg[3]);
}

TEST(ExtractForeground, ThresholdFollowsUnnormalizedMax) {
    // max 1.2 -> threshold 0.84
    const auto fg = extract_foreground(row_map({1.2f, 0.85f, 0.83f, 0.0f}, false), 0.3);
    EXPECT_TRUE(fg[0]);
    EXPECT_TRUE(fg[1]);
    EXPECT_FALSE(fg[2]);
    EXPECT_FALSE(fg[3]);
}

TEST(ExtractForeground, ConstantAndZeroMaps) {
    const auto all = extract_foreground(row_map({0.4f, 0.4f, 0.4f}));
    for (std::size_t p = 0; p < 3; ++p) EXPECT_TRUE(all[p]);
    const auto none = extract_foreground(row_map({0.0f, 0.0f}));
    EXPECT_EQ(none.count(), 0u);
}

TEST(ExtractForeground, RejectsBadInput) {
    EXPECT_THROW(extract_foreground(row_map({1.0f}), 0.0), Error);
    EXPECT_THROW(extract_foreground(row_map({1.0f}), 1.0), Error);
    EXPECT_THROW(extract_foreground(row_map({-1.0f, -0.5f}, false)), Error);
}

TEST(ExtractForeground, ScaleInvariant) {
    Rng rng(8);
    for (int t = 0; t < 30; ++t) {
        auto h = random_map(rng, 6, 6, 0.0, 2.0);
        h.normalized = false;
        const double alpha = rng.uniform(0.1, 10.0);
        auto scaled = h;
        for (auto& v : scaled.values) v = static_cast<float>(alpha * v);
        const auto a = extract_foreground(h);
        const auto b = extract_foreground(scaled);
        // float rounding can move a pixel sitting exactly on the threshold
        std::size_t diff = 0;
        for (std::size_t p = 0; p < 36; ++p) diff += a[p] != b[p];
        EXPECT_LE(diff, 1u);
    }
    auto h = row_map({0.25f, 0.5f, 0.75f, 1.0f}, false);
    auto doubled = h;
    for (auto& v : doubled.values) v *= 2.0f;
    for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(extract_foreground(h)[p], extract_foreground(doubled)[p]);
}

TEST(ExtractBackground, StrictThreshold) {
    SaliencyMap s(1, 3);
    s.values = {0.02f, 0.06f, 0.3f};
    const auto bg = extract_background(s);
    EXPECT_TRUE(bg[0]);
    EXPECT_FALSE(bg[1]);
    EXPECT_FALSE(bg[2]);
}

TEST(ExtractBackground, AllZeroAndAllOne) {
    SaliencyMap s(2, 2);
    EXPECT_EQ(extract_background(s).count(), 4u);
    for (auto& v : s.values) v = 1.0f;
    EXPECT_EQ(extract_background(s).count(), 0u);
    s.values[1] = 1.5f;
    EXPECT_THROW(extract_background(s), Error);
    s.values[1] = -0.1f;
    EXPECT_THROW(extract_background(s), Error);
}

TEST(SynthesizeMask, RuleTableToy) {
    const std::map<int, BoolMap> fg{{1, bools(2, 2, {0, 1})}, {2, bools(2, 2, {1})}};
    const auto mask = synthesize_mask(fg, bools(2, 2, {2}), {1, 2});
    EXPECT_EQ(mask.labels, (std::vector<std::uint8_t>{1, kIgnoreLabel, 0, kIgnoreLabel}));
}

TEST(SynthesizeMask, ClassAndBackgroundConflictIsIgnored) {
    const auto mask = synthesize_mask({{3, bools(1, 2, {0, 1})}}, bools(1, 2, {1}), {3});
    EXPECT_EQ(mask.labels, (std::vector<std::uint8_t>{3, kIgnoreLabel}));
}

TEST(SynthesizeMask, TrivialCases) {
    const auto whole = synthesize_mask({{2, bools(2, 2, {0, 1, 2, 3})}}, BoolMap(2, 2), {2});
    for (auto v : whole.labels) EXPECT_EQ(v, 2);
    const auto bg = synthesize_mask({}, bools(2, 2, {0, 1, 2, 3}), {1});
    for (auto v : bg.labels) EXPECT_EQ(v, 0);
}

TEST(SynthesizeMask, RejectsUnlabeledClass) {
    EXPECT_THROW(synthesize_mask({{4, BoolMap(1, 1)}}, BoolMap(1, 1), {1, 2}), Error);
    EXPECT_THROW(synthesize_mask({{1, BoolMap(2, 1)}}, BoolMap(1, 1), {1}), Error);
}

TEST(SynthesizeMask, OutputOnlyUsesImageLabels) {
    Rng rng(9);
    for (int t = 0; t < 30; ++t) {
        const std::set<int> labels{1, 4, 5};
        std::map<int, BoolMap> fg;
        for (int c : labels) {
            BoolMap b(5, 5);
            for (std::size_t p = 0; p < 25; ++p) b.set(p, rng.uniform() < 0.4);
            fg.emplace(c, b);
        }
        BoolMap bg(5, 5);
        for (std::size_t p = 0; p < 25; ++p) bg.set(p, rng.uniform() < 0.3);
        for (auto v : synthesize_mask(fg, bg, labels).labels)
            EXPECT_TRUE(v == 0 || v == kIgnoreLabel || labels.contains(v)) << int(v);
    }
}
