#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdc/mdc_classifier.hpp"
#include "mdc/pipeline.hpp"
#include "mdc/seg_trainer.hpp"
#include "mdc/synth_data.hpp"

namespace mdc {

/// Every tunable of a pipeline run. Serialized as a flat `key = value`
/// document; lists are comma-separated, `#` starts a comment.
struct RunConfig {
    std::uint64_t seed = 1;
    GenConfig gen;

    std::string cls_backbone = "c16 r p2 c32 r p2 c48 r c64 r";
    std::vector<std::size_t> block_dilations{1, 3, 6, 9};
    std::size_t block_channels = 24;
    std::size_t block_depth = 1;
    ClsTrainConfig cls_train;

    MaskPolicy mask;

    std::string seg_backbone = "c16 r p2 c32 r p2 c48 r c64 r";
    SegTrainConfig seg_train;
    double strong_fraction = 0.10;  // strong images used in semi mode, relative to the weak count

    MdcSpec mdc_spec() const;
    FcnSpec fcn_spec() const;
    void validate() const;
};

/// Overrides fields of `base` from the document; unknown keys throw.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Fully-resolved document listing every key.
std::string format_run_config(const RunConfig& config);

std::vector<std::string> run_config_keys();

/// Propagates config.seed into the per-stage seeds.
void apply_seed(RunConfig& config, std::uint64_t seed);

}  // namespace mdc
