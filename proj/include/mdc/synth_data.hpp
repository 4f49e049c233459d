#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdc/image_io.hpp"
#include "mdc/label_map.hpp"

namespace mdc {

enum class Split { Weak, Strong, Val };

std::string split_name(Split split);
Split parse_split(const std::string& name);

/// Shape vocabulary, one per class in this order.
const std::vector<std::string>& shape_vocabulary();

/// Parameters of the synthetic shapes dataset.
///
/// Every object is a body in a class-specific geometry and tint with a
/// small high-contrast marker in a class colour near one end; body-like
/// blobs without markers are scattered over the background as clutter.
struct GenConfig {
    std::size_t num_classes = 5;
    std::size_t image_size = 64;
    std::size_t weak_count = 2000;
    std::size_t strong_count = 400;
    std::size_t val_count = 200;
    std::size_t min_shapes = 1;
    std::size_t max_shapes = 2;
    double scale_min = 0.55;  // object diameter as a fraction of image size
    double scale_max = 0.95;
    double body_contrast = 40.0;   // mean |body - background| in 8-bit levels
    double class_tint = 40.0;      // class-specific colour shift of the body
    std::size_t marker_size = 4;   // pixels
    double marker_prob = 1.0;      // chance that an object carries its marker
    double clutter = 1.0;          // number of distractor blobs per image (mean)
    double pixel_noise = 6.0;      // std-dev of per-pixel noise
    double saliency_noise = 0.04;
    double saliency_band = 4.0;    // pixels of linear falloff outside objects
    std::uint64_t seed = 1;

    void validate() const;
};

struct Sample {
    Split split = Split::Weak;
    std::size_t index = 0;
    Image image;
    LabelMap gt;
    SaliencyMap saliency;
    std::vector<int> labels;  // sorted class ids present in gt
};

struct ManifestRecord {
    Split split = Split::Weak;
    std::string image_path;
    std::string mask_path;
    std::string saliency_path;
    std::vector<int> labels;
};

struct Dataset {
    std::vector<Sample> samples;

    std::vector<const Sample*> split(Split s) const;
};

/// Generates one record; depends only on (cfg, split, global index).
Sample generate_sample(const GenConfig& cfg, Split split, std::size_t index);

/// Weak records first, then strong, then val. Fully determined by cfg.
Dataset generate_dataset(const GenConfig& cfg);

/// Writes images/, masks/, saliency/ and manifest.tsv under `dir`.
std::vector<ManifestRecord> write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

std::string format_manifest(const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> parse_manifest(const std::string& text);

/// Loads every record listed in `dir`/manifest.tsv (paths relative to dir).
Dataset load_dataset(const std::filesystem::path& dir);

/// Saliency stored as round(255*s) in 8-bit PGM.
Image saliency_to_image(const SaliencyMap& s);
SaliencyMap image_to_saliency(const Image& image);

/// Exact Euclidean distance from every pixel to the nearest foreground
/// (non-zero, non-IGNORE) pixel; +inf when there is none.
std::vector<double> distance_to_foreground(const LabelMap& gt);

/// 1 on foreground and max(0, 1 - dist/band) outside, plus uniform noise in
/// [-noise, noise], clamped to [0,1] and quantized to multiples of 1/255.
SaliencyMap synth_saliency(const LabelMap& gt, double noise_level, std::uint64_t seed, double band = 4.0);

}  // namespace mdc
