#include "mdc/synth_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "mdc/random.hpp"
#include "mdc/tensor_io.hpp"

namespace mdc {

std::string split_name(Split split) {
    switch (split) {
        case Split::Weak: return "weak";
        case Split::Strong: return "strong";
        case Split::Val: return "val";
    }
    return "weak";
}

Split parse_split(const std::string& name) {
    if (name == "weak") return Split::Weak;
    if (name == "strong") return Split::Strong;
    if (name == "val") return Split::Val;
    throw Error("unknown split '" + name + "'");
}

const std::vector<std::string>& shape_vocabulary() {
    static const std::vector<std::string> names{"disk", "square", "triangle", "ring", "cross", "diamond", "ellipse"};
    return names;
}

void GenConfig::validate() const {
    if (num_classes == 0 || num_classes > shape_vocabulary().size()) {
        throw Error("GenConfig: num_classes must be in [1," + std::to_string(shape_vocabulary().size()) + "]");
    }
    if (min_shapes < 1) throw Error("GenConfig: min_shapes must be >= 1");
    if (max_shapes < min_shapes) throw Error("GenConfig: max_shapes < min_shapes");
    if (max_shapes > num_classes) throw Error("GenConfig: max_shapes exceeds num_classes (classes are distinct per image)");
    if (!(scale_min > 0.0 && scale_max < 1.0 && scale_min <= scale_max)) {
        throw Error("GenConfig: scale range must lie within (0,1)");
    }
    if (image_size < 16) throw Error("GenConfig: image_size must be >= 16");
    if (marker_size == 0 || marker_size * 3 > image_size) throw Error("GenConfig: invalid marker_size");
    if (!(saliency_noise >= 0.0 && saliency_noise < 1.0)) throw Error("GenConfig: saliency_noise must be in [0,1)");
    if (!(saliency_band > 0.0)) throw Error("GenConfig: saliency_band must be positive");
    if (marker_prob < 0.0 || marker_prob > 1.0) throw Error("GenConfig: marker_prob must be in [0,1]");
    if (clutter < 0.0 || pixel_noise < 0.0 || body_contrast < 0.0 || class_tint < 0.0) {
        throw Error("GenConfig: amplitudes must be non-negative");
    }
}

namespace {

constexpr std::array<std::array<double, 3>, 7> kMarkerColors{{
    {230, 30, 30},
    {30, 200, 40},
    {40, 70, 235},
    {235, 220, 30},
    {215, 40, 215},
    {30, 215, 220},
    {240, 130, 20},
}};

// Shape membership in coordinates normalized by the object radius.
bool inside_shape(std::size_t shape, double u, double v) {
    switch (shape) {
        case 0: return u * u + v * v <= 1.0;
        case 1: return std::abs(u) <= 0.8 && std::abs(v) <= 0.8;
        case 2: return v >= -0.85 && v <= 0.85 && std::abs(u) <= (v + 0.85) / 1.7;
        case 3: {
            const double r2 = u * u + v * v;
            return r2 <= 1.0 && r2 >= 0.1;
        }
        case 4: return std::abs(u) <= 0.95 && std::abs(v) <= 0.95 && (std::abs(u) <= 0.33 || std::abs(v) <= 0.33);
        case 5: return std::abs(u) + std::abs(v) <= 1.0;
        default: return u * u + (v / 0.55) * (v / 0.55) <= 1.0;
    }
}

struct Placement {
    int cls = 0;
    double cx = 0, cy = 0, radius = 0;
};

double sample_offset(Rng& rng, double contrast) {
    const double mag = contrast * rng.uniform(0.75, 1.25);
    return rng.uniform() < 0.5 ? -mag : mag;
}

}  // namespace

std::vector<double> distance_to_foreground(const LabelMap& gt) {
    const std::size_t h = gt.height;
    const std::size_t w = gt.width;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> f(h * w);
    for (std::size_t p = 0; p < f.size(); ++p) {
        const auto v = gt.labels[p];
        f[p] = (v != kBackgroundLabel && v != kIgnoreLabel) ? 0.0 : inf;
    }
    // Separable squared distance transform (lower envelope of parabolas).
    auto transform_1d = [&](std::vector<double>& line) {
        const std::size_t n = line.size();
        std::vector<double> out(n);
        std::vector<std::size_t> v(n);
        std::vector<double> z(n + 1);
        std::size_t k = 0;
        std::size_t first = n;
        for (std::size_t q = 0; q < n; ++q) {
            if (std::isfinite(line[q])) {
                first = q;
                break;
            }
        }
        if (first == n) return;
        v[0] = first;
        z[0] = -inf;
        z[1] = inf;
        for (std::size_t q = first + 1; q < n; ++q) {
            if (!std::isfinite(line[q])) continue;
            const auto dq = static_cast<double>(q);
            double s;
            while (true) {
                const auto dv = static_cast<double>(v[k]);
                s = ((line[q] + dq * dq) - (line[v[k]] + dv * dv)) / (2.0 * dq - 2.0 * dv);
                if (s <= z[k] && k > 0) {
                    --k;
                    continue;
                }
                break;
            }
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = inf;
        }
        k = 0;
        for (std::size_t q = 0; q < n; ++q) {
            while (z[k + 1] < static_cast<double>(q)) ++k;
            const double d = static_cast<double>(q) - static_cast<double>(v[k]);
            out[q] = d * d + line[v[k]];
        }
        line = std::move(out);
    };
    std::vector<double> line;
    for (std::size_t x = 0; x < w; ++x) {
        line.resize(h);
        for (std::size_t y = 0; y < h; ++y) line[y] = f[y * w + x];
        transform_1d(line);
        for (std::size_t y = 0; y < h; ++y) f[y * w + x] = line[y];
    }
    for (std::size_t y = 0; y < h; ++y) {
        line.assign(f.begin() + static_cast<std::ptrdiff_t>(y * w), f.begin() + static_cast<std::ptrdiff_t>((y + 1) * w));
        transform_1d(line);
        std::copy(line.begin(), line.end(), f.begin() + static_cast<std::ptrdiff_t>(y * w));
    }
    for (double& d : f) d = std::sqrt(d);
    return f;
}

SaliencyMap synth_saliency(const LabelMap& gt, double noise_level, std::uint64_t seed, double band) {
    if (!(noise_level >= 0.0 && noise_level < 1.0)) throw Error("synth_saliency: noise level must be in [0,1)");
    if (!(band > 0.0)) throw Error("synth_saliency: band must be positive");
    const auto dist = distance_to_foreground(gt);
    Rng rng(seed);
    SaliencyMap s(gt.height, gt.width);
    for (std::size_t p = 0; p < dist.size(); ++p) {
        double v = std::max(0.0, 1.0 - dist[p] / band);
        if (noise_level > 0.0) v += noise_level * rng.uniform(-1.0, 1.0);
        v = std::clamp(v, 0.0, 1.0);
        s.values[p] = static_cast<float>(std::round(v * 255.0) / 255.0);
    }
    return s;
}

Sample generate_sample(const GenConfig& cfg, Split split, std::size_t index) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, index));
    const std::size_t size = cfg.image_size;
    const auto fsize = static_cast<double>(size);

    // Background: tinted gray, two low-frequency gratings.
    std::vector<double> canvas(size * size * 3);
    const double base = rng.uniform(90.0, 160.0);
    std::array<double, 3> tint{};
    for (auto& t : tint) t = rng.uniform(-10.0, 10.0);
    std::array<double, 4> grating{};
    for (auto& g : grating) g = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double freq_a = rng.uniform(0.05, 0.2);
    const double freq_b = rng.uniform(0.05, 0.2);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double tex = 5.0 * std::sin(freq_a * static_cast<double>(x) * std::cos(grating[0]) +
                                              freq_a * static_cast<double>(y) * std::sin(grating[0]) + grating[1]) +
                               4.0 * std::sin(freq_b * static_cast<double>(x) * std::cos(grating[2]) +
                                              freq_b * static_cast<double>(y) * std::sin(grating[2]) + grating[3]);
            for (std::size_t c = 0; c < 3; ++c) canvas[(y * size + x) * 3 + c] = base + tint[c] + tex;
        }
    }

    auto paint_region = [&](const std::vector<std::size_t>& pixels, const std::array<double, 3>& offset) {
        for (std::size_t p : pixels)
            for (std::size_t c = 0; c < 3; ++c) canvas[p * 3 + c] += offset[c];
    };
    auto class_tint = [&](int cls) {
        std::array<double, 3> t{};
        const auto& col = kMarkerColors[static_cast<std::size_t>(cls - 1)];
        for (std::size_t c = 0; c < 3; ++c) t[c] = (col[c] - 128.0) / 128.0 * cfg.class_tint;
        return t;
    };

    // Distractor blobs: body-like appearance, no marker, background in gt.
    std::size_t n_clutter = static_cast<std::size_t>(std::floor(cfg.clutter));
    if (rng.uniform() < cfg.clutter - std::floor(cfg.clutter)) ++n_clutter;
    for (std::size_t i = 0; i < n_clutter; ++i) {
        const double rx = rng.uniform(0.08, 0.22) * fsize;
        const double ry = rng.uniform(0.08, 0.22) * fsize;
        const double cx = rng.uniform(0.0, fsize);
        const double cy = rng.uniform(0.0, fsize);
        const double off = sample_offset(rng, cfg.body_contrast);
        // Random hue of the same strength as a class tint, so tint alone is weak evidence.
        std::array<double, 3> t{};
        for (auto& v : t) v = rng.uniform(-1.0, 1.0) * cfg.class_tint;
        std::vector<std::size_t> pixels;
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                const double u = (static_cast<double>(x) + 0.5 - cx) / rx;
                const double v = (static_cast<double>(y) + 0.5 - cy) / ry;
                if (u * u + v * v <= 1.0) pixels.push_back(y * size + x);
            }
        }
        paint_region(pixels, {off + t[0], off + t[1], off + t[2]});
    }

    // Objects: distinct classes, placed with limited overlap.
    std::vector<int> classes(cfg.num_classes);
    for (std::size_t c = 0; c < cfg.num_classes; ++c) classes[c] = static_cast<int>(c + 1);
    rng.shuffle(classes.begin(), classes.end());
    const std::size_t wanted = cfg.min_shapes + rng.index(cfg.max_shapes - cfg.min_shapes + 1);
    std::vector<Placement> placed;
    for (std::size_t k = 0; k < wanted; ++k) {
        for (int attempt = 0; attempt < 60; ++attempt) {
            const double radius = 0.5 * rng.uniform(cfg.scale_min, cfg.scale_max) * fsize;
            const double cx = rng.uniform(radius, fsize - radius);
            const double cy = rng.uniform(radius, fsize - radius);
            bool ok = true;
            for (const auto& q : placed) {
                if (std::hypot(cx - q.cx, cy - q.cy) < 0.85 * (radius + q.radius)) ok = false;
            }
            if (ok) {
                placed.push_back({classes[k], cx, cy, radius});
                break;
            }
        }
        if (placed.size() <= k && k + 1 > cfg.min_shapes) break;
        if (placed.size() <= k) {
            // min_shapes must hold: shrink until it fits.
            const double radius = 0.5 * cfg.scale_min * fsize;
            placed.push_back({classes[k], rng.uniform(radius, fsize - radius), rng.uniform(radius, fsize - radius), radius});
        }
    }

    const std::vector<double> background = canvas;
    Sample sample;
    sample.split = split;
    sample.index = index;
    sample.gt = LabelMap(size, size, kBackgroundLabel);
    for (const auto& obj : placed) {
        const std::size_t shape = static_cast<std::size_t>(obj.cls - 1);
        std::vector<std::size_t> pixels;
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                const double u = (static_cast<double>(x) + 0.5 - obj.cx) / obj.radius;
                const double v = (static_cast<double>(y) + 0.5 - obj.cy) / obj.radius;
                if (inside_shape(shape, u, v)) pixels.push_back(y * size + x);
            }
        }
        const double off = sample_offset(rng, cfg.body_contrast);
        const auto t = class_tint(obj.cls);
        // Later objects occlude earlier ones.
        for (std::size_t p : pixels) {
            for (std::size_t c = 0; c < 3; ++c) canvas[p * 3 + c] = background[p * 3 + c] + off + t[c];
            sample.gt.labels[p] = static_cast<std::uint8_t>(obj.cls);
        }
    }

    // Markers on the visible part of each object, away from its centre.
    const auto m = static_cast<std::ptrdiff_t>(cfg.marker_size);
    for (const auto& obj : placed) {
        if (rng.uniform() >= cfg.marker_prob) continue;
        std::vector<std::pair<std::size_t, std::size_t>> far, any, best;
        std::ptrdiff_t best_cover = 0;
        for (std::size_t y = 0; y + cfg.marker_size <= size; ++y) {
            for (std::size_t x = 0; x + cfg.marker_size <= size; ++x) {
                std::ptrdiff_t cover = 0;
                for (std::ptrdiff_t i = 0; i < m; ++i)
                    for (std::ptrdiff_t j = 0; j < m; ++j)
                        cover += sample.gt(y + static_cast<std::size_t>(i), x + static_cast<std::size_t>(j)) == obj.cls;
                if (cover > best_cover) {
                    best_cover = cover;
                    best.clear();
                }
                if (cover > 0 && cover == best_cover) best.emplace_back(y, x);
                if (cover < m * m) continue;
                any.emplace_back(y, x);
                const double mx = static_cast<double>(x) + 0.5 * static_cast<double>(m);
                const double my = static_cast<double>(y) + 0.5 * static_cast<double>(m);
                if (std::hypot(mx - obj.cx, my - obj.cy) >= 0.45 * obj.radius) far.emplace_back(y, x);
            }
        }
        // A heavily occluded object gets a clipped marker on its best-covered window.
        const auto& pool = !far.empty() ? far : !any.empty() ? any : best;
        if (pool.empty()) continue;
        const auto [y0, x0] = pool[rng.index(pool.size())];
        const auto& col = kMarkerColors[static_cast<std::size_t>(obj.cls - 1)];
        for (std::size_t i = 0; i < cfg.marker_size; ++i)
            for (std::size_t j = 0; j < cfg.marker_size; ++j) {
                if (sample.gt(y0 + i, x0 + j) != obj.cls) continue;
                for (std::size_t c = 0; c < 3; ++c) canvas[((y0 + i) * size + x0 + j) * 3 + c] = col[c];
            }
    }

    sample.image = Image(size, size, 3);
    for (std::size_t p = 0; p < canvas.size(); ++p) {
        const double v = canvas[p] + cfg.pixel_noise * rng.normal();
        sample.image.pixels[p] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
    std::vector<bool> present(cfg.num_classes + 1, false);
    for (auto v : sample.gt.labels) present[v] = true;
    for (std::size_t c = 1; c <= cfg.num_classes; ++c) {
        if (present[c]) sample.labels.push_back(static_cast<int>(c));
    }
    sample.saliency = synth_saliency(sample.gt, cfg.saliency_noise, derive_seed(cfg.seed ^ 0x5A11E7CEull, index),
                                     cfg.saliency_band);
    return sample;
}

Dataset generate_dataset(const GenConfig& cfg) {
    cfg.validate();
    Dataset ds;
    std::size_t index = 0;
    const std::array<std::pair<Split, std::size_t>, 3> plan{
        {{Split::Weak, cfg.weak_count}, {Split::Strong, cfg.strong_count}, {Split::Val, cfg.val_count}}};
    for (const auto& [split, count] : plan) {
        for (std::size_t i = 0; i < count; ++i) ds.samples.push_back(generate_sample(cfg, split, index++));
    }
    return ds;
}

std::vector<const Sample*> Dataset::split(Split s) const {
    std::vector<const Sample*> out;
    for (const auto& sample : samples) {
        if (sample.split == s) out.push_back(&sample);
    }
    return out;
}

Image saliency_to_image(const SaliencyMap& s) {
    Image img(s.height, s.width, 1);
    for (std::size_t p = 0; p < s.values.size(); ++p) {
        const float v = s.values[p];
        if (!(v >= 0.0f && v <= 1.0f)) throw Error("saliency outside [0,1]");
        img.pixels[p] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    return img;
}

SaliencyMap image_to_saliency(const Image& image) {
    if (image.channels != 1) throw Error("saliency image must be single-channel");
    SaliencyMap s(image.height, image.width);
    for (std::size_t p = 0; p < image.pixels.size(); ++p) {
        s.values[p] = static_cast<float>(static_cast<double>(image.pixels[p]) / 255.0);
    }
    return s;
}

namespace {

std::string join_labels(const std::vector<int>& labels) {
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(labels[i]);
    }
    return out;
}

std::vector<int> split_labels(const std::string& text) {
    std::vector<int> labels;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        labels.push_back(std::stoi(item));
    }
    return labels;
}

}  // namespace

std::string format_manifest(const std::vector<ManifestRecord>& records) {
    std::ostringstream os;
    for (const auto& r : records) {
        os << split_name(r.split) << '\t' << r.image_path << '\t' << r.mask_path << '\t' << r.saliency_path << '\t'
           << join_labels(r.labels) << '\n';
    }
    return os.str();
}

std::vector<ManifestRecord> parse_manifest(const std::string& text) {
    std::vector<ManifestRecord> records;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) fields.push_back(field);
        if (line.back() == '\t') fields.emplace_back();
        if (fields.size() != 5) throw Error("manifest line " + std::to_string(line_no) + ": expected 5 fields");
        records.push_back({parse_split(fields[0]), fields[1], fields[2], fields[3], split_labels(fields[4])});
    }
    return records;
}

std::vector<ManifestRecord> write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::vector<ManifestRecord> records;
    for (const auto& s : dataset.samples) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "%06zu", s.index);
        ManifestRecord r{s.split, "images/" + std::string(stem) + ".ppm", "masks/" + std::string(stem) + ".pgm",
                         "saliency/" + std::string(stem) + ".pgm", s.labels};
        save_pnm(s.image, dir / r.image_path);
        save_pnm(label_map_to_image(s.gt), dir / r.mask_path);
        save_pnm(saliency_to_image(s.saliency), dir / r.saliency_path);
        records.push_back(std::move(r));
    }
    const std::string text = format_manifest(records);
    write_file_bytes(dir / "manifest.tsv", std::vector<std::uint8_t>(text.begin(), text.end()));
    return records;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto bytes = read_file_bytes(dir / "manifest.tsv");
    const auto records = parse_manifest(std::string(bytes.begin(), bytes.end()));
    Dataset ds;
    std::size_t index = 0;
    for (const auto& r : records) {
        Sample s;
        s.split = r.split;
        s.index = index++;
        s.image = load_pnm(dir / r.image_path);
        s.gt = image_to_label_map(load_pnm(dir / r.mask_path));
        s.saliency = image_to_saliency(load_pnm(dir / r.saliency_path));
        s.labels = r.labels;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace mdc
