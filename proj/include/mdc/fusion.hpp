#pragma once

#include <map>
#include <set>
#include <vector>

#include "mdc/label_map.hpp"

namespace mdc {

inline constexpr double kDefaultFgFraction = 0.30;
inline constexpr double kDefaultBgThreshold = 0.06;

/// Clamps negatives to zero and divides by the maximum; an all-non-positive
/// map becomes all zeros.
LocalizationMap normalize_map(const LocalizationMap& raw);

/// H = H0 + mean(Hi). The result is not renormalized.
LocalizationMap fuse_maps(const LocalizationMap& h0, const std::vector<LocalizationMap>& dilated);

/// Pixels with H >= (1 - fg_fraction) * max(H); an all-zero map selects nothing.
BoolMap extract_foreground(const LocalizationMap& fused, double fg_fraction = kDefaultFgFraction);

/// Pixels with saliency strictly below bg_threshold, compared in single precision.
BoolMap extract_background(const SaliencyMap& saliency, double bg_threshold = kDefaultBgThreshold);

/// Merges per-class foreground regions with background cues.
///
/// A pixel claimed by exactly one class and not by the background gets that
/// class; one claimed only by the background gets 0; everything else
/// (several classes, class plus background, or nothing) is ignored.
LabelMap synthesize_mask(const std::map<int, BoolMap>& per_class_fg, const BoolMap& background,
                         const std::set<int>& image_labels);

}  // namespace mdc
