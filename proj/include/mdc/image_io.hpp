#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mdc/label_map.hpp"

namespace mdc {

/// 8-bit image with interleaved channels (1 = gray, 3 = RGB).
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c, std::uint8_t fill = 0)
        : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

    std::uint8_t& operator()(std::size_t y, std::size_t x, std::size_t c) {
        return pixels[(y * width + x) * channels + c];
    }
    std::uint8_t operator()(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }

    friend bool operator==(const Image&, const Image&) = default;
};

// Binary P5 (gray) / P6 (RGB), maxval 255.
std::vector<std::uint8_t> encode_pnm(const Image& image);
Image decode_pnm(const std::vector<std::uint8_t>& bytes);

void save_pnm(const Image& image, const std::filesystem::path& path);
Image load_pnm(const std::filesystem::path& path);

Image label_map_to_image(const LabelMap& mask);
LabelMap image_to_label_map(const Image& image);

}  // namespace mdc
