#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mdc/config.hpp"
#include "mdc/pipeline.hpp"

namespace mdc {

using ProgressFn = std::function<void(const std::string&)>;

/// Classifier training plus pseudo-mask generation from every map source
/// (each single block, then the fusion) on the weak split.
struct LocalizationStudy {
    MdcModel model;
    std::vector<EpochLog> log;
    double val_accuracy = 0.0;
    std::vector<MapSource> sources;
    std::vector<std::string> source_names;
    std::vector<double> miou;                     // per source, vs gt on the weak split
    std::vector<std::vector<LabelMap>> masks;     // [source][weak record]
    double seconds = 0.0;

    std::size_t source_index(const std::string& name) const;
    const std::vector<LabelMap>& masks_for(const std::string& name) const;
};

LocalizationStudy run_localization_study(const RunConfig& config, const Dataset& data, const ProgressFn& progress = {});

/// Pseudo masks of every weak record for one trained classifier.
std::vector<std::vector<LabelMap>> make_pseudo_masks(const MdcModel& model, const std::vector<const Sample*>& weak,
                                                     const std::vector<MapSource>& sources, const MaskPolicy& policy);

struct SegStudy {
    FcnModel model;
    std::vector<EpochLog> log;
    ConfusionMatrix val_cm{1};
    double val_miou = 0.0;
    double seconds = 0.0;
};

/// Trains an FCN on the weak split with `masks` as M_w. strong_count > 0
/// selects semi mode using the first strong_count strong records.
SegStudy run_seg_study(const RunConfig& config, const Dataset& data, const std::vector<LabelMap>& masks,
                       std::size_t strong_count, const ProgressFn& progress = {});

}  // namespace mdc
