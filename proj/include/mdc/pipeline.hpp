#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mdc/evaluator.hpp"
#include "mdc/fusion.hpp"
#include "mdc/mdc_classifier.hpp"
#include "mdc/seg_trainer.hpp"
#include "mdc/synth_data.hpp"

namespace mdc {

/// Normalized per-block maps and the fused map for each labeled class of one image.
struct ImageMaps {
    std::vector<int> classes;                               // 1-based ids
    std::vector<std::vector<LocalizationMap>> block_maps;   // [block][k], normalized
    std::vector<LocalizationMap> fused;                     // [k]
};

ImageMaps localize_image(const MdcModel& model, const Image& image, const std::vector<int>& classes);

/// Which localization map drives foreground extraction.
struct MapSource {
    static constexpr int kFusion = -1;
    int block = kFusion;  // block index, or kFusion

    static MapSource fusion() { return {kFusion}; }
    static MapSource single_block(std::size_t b) { return {static_cast<int>(b)}; }
    bool is_fusion() const { return block == kFusion; }
    std::string name(const MdcSpec& spec) const;
};

struct MaskPolicy {
    double fg_fraction = kDefaultFgFraction;
    double bg_threshold = kDefaultBgThreshold;
};

LabelMap pseudo_mask_from_maps(const ImageMaps& maps, const MapSource& source, const SaliencyMap& saliency,
                               const MaskPolicy& policy);

/// Pseudo-mask quality against ground truth; IGNORE pixels count as misses.
ConfusionMatrix evaluate_pseudo_masks(const std::vector<const LabelMap*>& gts, const std::vector<LabelMap>& masks,
                                      std::size_t num_classes);

std::vector<ClsSample> cls_samples(const std::vector<const Sample*>& samples);

/// Checkpoint directory: manifest.txt (key=value) plus one .tns per parameter.
void save_checkpoint(const std::filesystem::path& dir, const std::map<std::string, std::string>& manifest,
                     const ParamMap& params);
std::map<std::string, std::string> load_checkpoint(const std::filesystem::path& dir, ParamMap& params);

void save_mdc(const MdcModel& model, const std::filesystem::path& dir, std::uint64_t seed, std::size_t epoch);
MdcModel load_mdc(const std::filesystem::path& dir);
void save_fcn(const FcnModel& model, const std::filesystem::path& dir, std::uint64_t seed, std::size_t epoch);
FcnModel load_fcn(const std::filesystem::path& dir);

/// 8-bit PGM visualization: 0..max(map) mapped linearly to 0..255.
Image visualize_map(const LocalizationMap& map);

/// FNV-1a over byte streams, for reproducibility fingerprints.
class Fingerprint {
public:
    void add(const void* data, std::size_t size);
    void add(const ParamMap& params);
    void add(const LabelMap& mask) { add(mask.labels.data(), mask.labels.size()); }
    void add(const LocalizationMap& map) { add(map.values.data(), map.values.size() * sizeof(float)); }
    void add(double v) { add(&v, sizeof v); }
    std::uint64_t value() const { return hash_; }
    std::string hex() const;

private:
    std::uint64_t hash_ = 1469598103934665603ull;
};

}  // namespace mdc
