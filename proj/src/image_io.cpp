#include "mdc/image_io.hpp"

#include <cctype>
#include <string>

#include "mdc/tensor_io.hpp"

namespace mdc {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::size_t read_header_int(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(bytes[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw Error("pnm: malformed header");
    std::size_t value = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
        value = value * 10 + (bytes[pos] - '0');
        if (value > (1u << 24)) throw Error("pnm: header value too large");
        ++pos;
    }
    return value;
}

}  // namespace

std::vector<std::uint8_t> encode_pnm(const Image& image) {
    if (image.channels != 1 && image.channels != 3) throw Error("pnm: only 1 or 3 channels supported");
    const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(image.width) +
                               " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

Image decode_pnm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw Error("pnm: only binary P5/P6 supported");
    }
    const std::size_t channels = bytes[1] == '5' ? 1 : 3;
    std::size_t pos = 2;
    const std::size_t width = read_header_int(bytes, pos);
    const std::size_t height = read_header_int(bytes, pos);
    const std::size_t maxval = read_header_int(bytes, pos);
    if (maxval != 255) throw Error("pnm: only maxval 255 supported");
    if (width == 0 || height == 0) throw Error("pnm: zero-sized image");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw Error("pnm: missing separator after header");
    ++pos;
    Image image(height, width, channels);
    if (bytes.size() - pos != image.pixels.size()) throw Error("pnm: pixel payload size mismatch");
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), image.pixels.begin());
    return image;
}

void save_pnm(const Image& image, const std::filesystem::path& path) { write_file_bytes(path, encode_pnm(image)); }

Image load_pnm(const std::filesystem::path& path) { return decode_pnm(read_file_bytes(path)); }

Image label_map_to_image(const LabelMap& mask) {
    Image image(mask.height, mask.width, 1);
    image.pixels = mask.labels;
    return image;
}

LabelMap image_to_label_map(const Image& image) {
    if (image.channels != 1) throw Error("label map must be single-channel");
    LabelMap mask(image.height, image.width);
    mask.labels = image.pixels;
    return mask;
}

}  // namespace mdc
