#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mdc/tensor.hpp"

namespace mdc {

inline constexpr std::uint8_t kIgnoreLabel = 255;
inline constexpr std::uint8_t kBackgroundLabel = 0;

/// Per-pixel class ids: 0 is background, 1..C are object classes and
/// kIgnoreLabel marks pixels excluded from losses and metrics.
struct LabelMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> labels;

    LabelMap() = default;
    LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = kIgnoreLabel)
        : height(h), width(w), labels(h * w, fill) {}

    std::uint8_t& operator()(std::size_t y, std::size_t x) { return labels[y * width + x]; }
    std::uint8_t operator()(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
    std::size_t size() const { return labels.size(); }

    friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// Boolean per-pixel selection at image resolution.
struct BoolMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> values;  // 0 or 1

    BoolMap() = default;
    BoolMap(std::size_t h, std::size_t w, bool fill = false) : height(h), width(w), values(h * w, fill ? 1 : 0) {}

    bool operator()(std::size_t y, std::size_t x) const { return values[y * width + x] != 0; }
    bool operator[](std::size_t i) const { return values[i] != 0; }
    void set(std::size_t i, bool v) { values[i] = v ? 1 : 0; }
    std::size_t size() const { return values.size(); }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : values) n += v;
        return n;
    }

    friend bool operator==(const BoolMap&, const BoolMap&) = default;
};

/// Class-specific heat map at image resolution.
struct LocalizationMap {
    int class_id = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;
    bool normalized = false;

    LocalizationMap() = default;
    LocalizationMap(int cls, std::size_t h, std::size_t w, float fill = 0.0f)
        : class_id(cls), height(h), width(w), values(h * w, fill) {}

    float operator()(std::size_t y, std::size_t x) const { return values[y * width + x]; }
    float& operator()(std::size_t y, std::size_t x) { return values[y * width + x]; }
};

/// Foreground-likeness in [0,1] per pixel.
struct SaliencyMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;

    SaliencyMap() = default;
    SaliencyMap(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), values(h * w, fill) {}

    float operator()(std::size_t y, std::size_t x) const { return values[y * width + x]; }
    float& operator()(std::size_t y, std::size_t x) { return values[y * width + x]; }
};

}  // namespace mdc
