#include "mdc/fusion.hpp"

#include <algorithm>
#include <string>

#include "mdc/tensor.hpp"

namespace mdc {

LocalizationMap normalize_map(const LocalizationMap& raw) {
    LocalizationMap out = raw;
    float mx = 0.0f;
    for (float& v : out.values) {
        v = std::max(v, 0.0f);
        mx = std::max(mx, v);
    }
    if (mx > 0.0f) {
        for (float& v : out.values) v /= mx;
    }
    out.normalized = true;
    return out;
}

LocalizationMap fuse_maps(const LocalizationMap& h0, const std::vector<LocalizationMap>& dilated) {
    if (dilated.empty()) throw Error("fuse_maps: need at least one dilated-block map");
    if (!h0.normalized) throw Error("fuse_maps: H0 is not normalized");
    for (const auto& m : dilated) {
        if (!m.normalized) throw Error("fuse_maps: dilated map is not normalized");
        if (m.class_id != h0.class_id) throw Error("fuse_maps: class mismatch");
        if (m.height != h0.height || m.width != h0.width) throw Error("fuse_maps: shape mismatch");
    }
    LocalizationMap out(h0.class_id, h0.height, h0.width);
    const double inv = 1.0 / static_cast<double>(dilated.size());
    for (std::size_t p = 0; p < out.values.size(); ++p) {
        double sum = 0.0;
        for (const auto& m : dilated) sum += m.values[p];
        out.values[p] = static_cast<float>(static_cast<double>(h0.values[p]) + sum * inv);
    }
    out.normalized = false;
    return out;
}

BoolMap extract_foreground(const LocalizationMap& fused, double fg_fraction) {
    if (!(fg_fraction > 0.0 && fg_fraction < 1.0)) throw Error("extract_foreground: fraction must be in (0,1)");
    BoolMap out(fused.height, fused.width);
    if (fused.values.empty()) return out;
    const float mx = *std::max_element(fused.values.begin(), fused.values.end());
    if (mx < 0.0f) throw Error("extract_foreground: map maximum is negative");
    if (mx == 0.0f) return out;
    const double threshold = (1.0 - fg_fraction) * static_cast<double>(mx);
    for (std::size_t p = 0; p < fused.values.size(); ++p) out.set(p, static_cast<double>(fused.values[p]) >= threshold);
    return out;
}

BoolMap extract_background(const SaliencyMap& saliency, double bg_threshold) {
    BoolMap out(saliency.height, saliency.width);
    for (std::size_t p = 0; p < saliency.values.size(); ++p) {
        const float s = saliency.values[p];
        if (!(s >= 0.0f && s <= 1.0f)) throw Error("extract_background: saliency outside [0,1]");
        out.set(p, s < static_cast<float>(bg_threshold));
    }
    return out;
}

LabelMap synthesize_mask(const std::map<int, BoolMap>& per_class_fg, const BoolMap& background,
                         const std::set<int>& image_labels) {
    for (const auto& [cls, fg] : per_class_fg) {
        if (!image_labels.contains(cls)) {
            throw Error("synthesize_mask: foreground for class " + std::to_string(cls) + " not in image labels");
        }
        if (cls < 1 || cls >= kIgnoreLabel) throw Error("synthesize_mask: class id out of range");
        if (fg.height != background.height || fg.width != background.width) {
            throw Error("synthesize_mask: foreground/background shape mismatch");
        }
    }
    LabelMap mask(background.height, background.width, kIgnoreLabel);
    for (std::size_t p = 0; p < mask.size(); ++p) {
        int claimed = 0;
        int owner = 0;
        for (const auto& [cls, fg] : per_class_fg) {
            if (fg[p]) {
                ++claimed;
                owner = cls;
            }
        }
        const bool bg = background[p];
        if (claimed == 1 && !bg) mask.labels[p] = static_cast<std::uint8_t>(owner);
        else if (claimed == 0 && bg) mask.labels[p] = kBackgroundLabel;
        // conflicts and unassigned pixels stay ignored
    }
    return mask;
}

}  // namespace mdc
