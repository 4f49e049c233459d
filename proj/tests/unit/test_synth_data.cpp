#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "mdc/fusion.hpp"
#include "mdc/image_io.hpp"
#include "mdc/synth_data.hpp"
#include "mdc/tensor_io.hpp"

using namespace mdc;

namespace {

GenConfig small_config() {
    GenConfig cfg;
    cfg.image_size = 48;
    cfg.weak_count = 12;
    cfg.strong_count = 4;
    cfg.val_count = 4;
    cfg.seed = 7;
    return cfg;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("mdc_synth_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

// Brute-force distance to the nearest foreground pixel.
double brute_distance(const LabelMap& gt, std::size_t y, std::size_t x) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < gt.height; ++j)
        for (std::size_t i = 0; i < gt.width; ++i) {
            const auto v = gt(j, i);
            if (v == kBackgroundLabel || v == kIgnoreLabel) continue;
            best = std::min(best, std::hypot(double(j) - double(y), double(i) - double(x)));
        }
    return best;
}

}  // namespace

TEST(GenConfigTest, RejectsInvalidRanges) {
    auto cfg = small_config();
    cfg.min_shapes = 0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = small_config();
    cfg.max_shapes = 6;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = small_config();
    cfg.num_classes = 8;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = small_config();
    cfg.marker_size = 20;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = small_config();
    cfg.marker_prob = 1.5;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = small_config();
    cfg.clutter = -1;
    EXPECT_THROW(cfg.validate(), Error);
    EXPECT_NO_THROW(small_config().validate());
}

TEST(GenerateDataset, SplitsAndShapes) {
    const auto cfg = small_config();
    const auto data = generate_dataset(cfg);
    ASSERT_EQ(data.samples.size(), 20u);
    EXPECT_EQ(data.split(Split::Weak).size(), 12u);
    EXPECT_EQ(data.split(Split::Strong).size(), 4u);
    EXPECT_EQ(data.split(Split::Val).size(), 4u);
    for (const auto& s : data.samples) {
        EXPECT_EQ(s.image.channels, 3u);
        EXPECT_EQ(s.image.height, 48u);
        EXPECT_EQ(s.gt.width, 48u);
        EXPECT_EQ(s.saliency.height, 48u);
        EXPECT_GE(s.labels.size(), cfg.min_shapes);
        EXPECT_LE(s.labels.size(), cfg.max_shapes);
    }
}

TEST(GenerateDataset, LabelsMatchMaskContents) {
    const auto data = generate_dataset(small_config());
    for (const auto& s : data.samples) {
        std::set<int> present;
        for (auto v : s.gt.labels) {
            EXPECT_NE(v, kIgnoreLabel);
            if (v != kBackgroundLabel) present.insert(v);
        }
        EXPECT_EQ(std::vector<int>(present.begin(), present.end()), s.labels);
        EXPECT_TRUE(std::is_sorted(s.labels.begin(), s.labels.end()));
    }
}

TEST(GenerateDataset, DeterministicPerRecord) {
    const auto cfg = small_config();
    const auto a = generate_dataset(cfg);
    const auto b = generate_dataset(cfg);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        EXPECT_EQ(a.samples[i].image.pixels, b.samples[i].image.pixels);
        EXPECT_EQ(a.samples[i].gt.labels, b.samples[i].gt.labels);
        EXPECT_EQ(a.samples[i].saliency.values, b.samples[i].saliency.values);
    }
    // A record depends only on its own index.
    const auto single = generate_sample(cfg, Split::Val, 17);
    EXPECT_EQ(single.image.pixels, a.samples[17].image.pixels);
    auto other = cfg;
    other.seed = 8;
    EXPECT_NE(generate_dataset(other).samples[0].image.pixels, a.samples[0].image.pixels);
}

TEST(GenerateDataset, EveryClassIsWellRepresented) {
    auto cfg = small_config();
    cfg.image_size = 32;
    cfg.marker_size = 4;
    cfg.weak_count = 1000;
    cfg.strong_count = 0;
    cfg.val_count = 0;
    const auto data = generate_dataset(cfg);
    std::vector<int> count(cfg.num_classes + 1, 0);
    for (const auto& s : data.samples)
        for (int c : s.labels) ++count[static_cast<std::size_t>(c)];
    for (std::size_t c = 1; c <= cfg.num_classes; ++c) EXPECT_GE(count[c], 50) << "class " << c;
}

TEST(GenerateDataset, MarkersCarryTheClassColour) {
    // With clutter and noise off, every object shows saturated marker pixels.
    auto cfg = small_config();
    cfg.clutter = 0;
    cfg.pixel_noise = 0;
    const auto data = generate_dataset(cfg);
    std::size_t saturated = 0;
    for (const auto& s : data.samples) {
        for (std::size_t p = 0; p < s.gt.size(); ++p) {
            const auto* px = &s.image.pixels[p * 3];
            const int hi = std::max({px[0], px[1], px[2]});
            const int lo = std::min({px[0], px[1], px[2]});
            if (hi - lo > 150) {
                ++saturated;
                EXPECT_NE(s.gt.labels[p], kBackgroundLabel);
            }
        }
    }
    EXPECT_GT(saturated, 0u);
    cfg.marker_prob = 0.0;
    for (const auto& s : generate_dataset(cfg).samples)
        for (std::size_t p = 0; p < s.gt.size(); ++p) {
            const auto* px = &s.image.pixels[p * 3];
            EXPECT_LT(std::max({px[0], px[1], px[2]}) - std::min({px[0], px[1], px[2]}), 100);
        }
}

TEST(DistanceTransform, MatchesBruteForce) {
    const auto s = generate_sample(small_config(), Split::Weak, 3);
    LabelMap gt = s.gt;
    gt.labels[5] = kIgnoreLabel;
    const auto d = distance_to_foreground(gt);
    for (std::size_t y = 0; y < gt.height; y += 3)
        for (std::size_t x = 0; x < gt.width; x += 3) EXPECT_NEAR(d[y * gt.width + x], brute_distance(gt, y, x), 1e-9);
    const auto none = distance_to_foreground(LabelMap(3, 3));
    for (double v : none) EXPECT_TRUE(std::isinf(v));
}

TEST(SynthSaliency, TrivialMaps) {
    for (float v : synth_saliency(LabelMap(5, 5), 0.0, 1).values) EXPECT_EQ(v, 0.0f);
    LabelMap full(4, 4);
    for (auto& v : full.labels) v = 2;
    for (float v : synth_saliency(full, 0.0, 1).values) EXPECT_EQ(v, 1.0f);
    EXPECT_THROW(synth_saliency(full, 1.0, 1), Error);
    EXPECT_THROW(synth_saliency(full, -0.1, 1), Error);
}

TEST(SynthSaliency, FalloffFollowsDistance) {
    LabelMap gt(1, 12);
    gt.labels[0] = 1;
    const auto s = synth_saliency(gt, 0.0, 1, 4.0);
    for (std::size_t x = 0; x < 12; ++x) {
        const double expected = std::max(0.0, 1.0 - static_cast<double>(x) / 4.0);
        EXPECT_NEAR(s.values[x], expected, 0.5 / 255.0 + 1e-7);
    }
}

TEST(SynthSaliency, NoiseFreeBackgroundCueIsSound) {
    const auto cfg = small_config();
    for (std::size_t i = 0; i < 8; ++i) {
        const auto s = generate_sample(cfg, Split::Weak, i);
        const auto sal = synth_saliency(s.gt, 0.0, 3, cfg.saliency_band);
        const auto bg = extract_background(sal);
        const auto dist = distance_to_foreground(s.gt);
        for (std::size_t p = 0; p < bg.size(); ++p) {
            if (bg[p]) EXPECT_EQ(s.gt.labels[p], kBackgroundLabel);
            if (dist[p] >= cfg.saliency_band) EXPECT_TRUE(bg[p]);
        }
    }
}

TEST(SynthSaliency, NoiseIsBoundedAndQuantized) {
    const auto s = generate_sample(small_config(), Split::Weak, 1);
    const auto sal = synth_saliency(s.gt, 0.2, 9);
    for (float v : sal.values) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
        EXPECT_NEAR(v * 255.0f, std::round(v * 255.0f), 1e-3);
    }
    EXPECT_EQ(image_to_saliency(saliency_to_image(sal)).values, sal.values);
}

TEST(DatasetIo, WriteLoadRoundTrip) {
    const auto dir = temp_dir("roundtrip");
    const auto data = generate_dataset(small_config());
    const auto records = write_dataset(data, dir);
    ASSERT_EQ(records.size(), data.samples.size());
    EXPECT_TRUE(std::filesystem::exists(dir / "manifest.tsv"));
    const auto loaded = load_dataset(dir);
    ASSERT_EQ(loaded.samples.size(), data.samples.size());
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        EXPECT_EQ(loaded.samples[i].split, data.samples[i].split);
        EXPECT_EQ(loaded.samples[i].image.pixels, data.samples[i].image.pixels);
        EXPECT_EQ(loaded.samples[i].gt.labels, data.samples[i].gt.labels);
        EXPECT_EQ(loaded.samples[i].saliency.values, data.samples[i].saliency.values);
        EXPECT_EQ(loaded.samples[i].labels, data.samples[i].labels);
    }
    std::filesystem::remove_all(dir);
}

TEST(DatasetIo, RewriteIsByteIdentical) {
    const auto a = temp_dir("bytes_a");
    const auto b = temp_dir("bytes_b");
    write_dataset(generate_dataset(small_config()), a);
    write_dataset(generate_dataset(small_config()), b);
    for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(entry.path(), a);
        EXPECT_EQ(read_file_bytes(entry.path()), read_file_bytes(b / rel)) << rel;
    }
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
}

TEST(DatasetIo, ManifestRoundTripAndErrors) {
    std::vector<ManifestRecord> recs(2);
    recs[0] = {Split::Weak, "images/a.ppm", "masks/a.pgm", "saliency/a.pgm", {1, 3}};
    recs[1] = {Split::Val, "images/b.ppm", "masks/b.pgm", "saliency/b.pgm", {2}};
    const auto parsed = parse_manifest(format_manifest(recs));
    ASSERT_EQ(parsed.size(), 2u);
    EXPECT_EQ(parsed[0].labels, (std::vector<int>{1, 3}));
    EXPECT_EQ(parsed[1].split, Split::Val);
    EXPECT_EQ(parsed[1].saliency_path, "saliency/b.pgm");
    EXPECT_THROW(parse_manifest("weak\timages/a.ppm\n"), Error);
    EXPECT_THROW(parse_split("train"), Error);
    EXPECT_THROW(load_dataset(temp_dir("missing")), Error);
}
