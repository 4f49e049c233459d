#include "mdc/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "mdc/tensor_io.hpp"

namespace mdc {

ImageMaps localize_image(const MdcModel& model, const Image& image, const std::vector<int>& classes) {
    ImageMaps out;
    out.classes = classes;
    std::vector<std::size_t> zero_based;
    for (int c : classes) {
        if (c < 1 || static_cast<std::size_t>(c) > model.spec.num_classes) throw Error("localize: class out of range");
        zero_based.push_back(static_cast<std::size_t>(c - 1));
    }
    auto raw = compute_cams(model, image_to_tensor(image), zero_based);
    out.block_maps.resize(raw.size());
    for (std::size_t b = 0; b < raw.size(); ++b) {
        for (const auto& m : raw[b]) out.block_maps[b].push_back(normalize_map(m));
    }
    for (std::size_t k = 0; k < classes.size(); ++k) {
        std::vector<LocalizationMap> dilated;
        for (std::size_t b = 1; b < out.block_maps.size(); ++b) dilated.push_back(out.block_maps[b][k]);
        out.fused.push_back(fuse_maps(out.block_maps[0][k], dilated));
    }
    return out;
}

std::string MapSource::name(const MdcSpec& spec) const {
    if (is_fusion()) return "fusion";
    return "d=" + std::to_string(spec.block_dilations.at(static_cast<std::size_t>(block)));
}

LabelMap pseudo_mask_from_maps(const ImageMaps& maps, const MapSource& source, const SaliencyMap& saliency,
                               const MaskPolicy& policy) {
    std::map<int, BoolMap> fg;
    for (std::size_t k = 0; k < maps.classes.size(); ++k) {
        const LocalizationMap& h = source.is_fusion() ? maps.fused.at(k)
                                                      : maps.block_maps.at(static_cast<std::size_t>(source.block)).at(k);
        fg[maps.classes[k]] = extract_foreground(h, policy.fg_fraction);
    }
    const std::set<int> labels(maps.classes.begin(), maps.classes.end());
    return synthesize_mask(fg, extract_background(saliency, policy.bg_threshold), labels);
}

ConfusionMatrix evaluate_pseudo_masks(const std::vector<const LabelMap*>& gts, const std::vector<LabelMap>& masks,
                                      std::size_t num_classes) {
    if (gts.size() != masks.size()) throw Error("evaluate_pseudo_masks: count mismatch");
    ConfusionMatrix cm(num_classes + 1);
    for (std::size_t i = 0; i < masks.size(); ++i) accumulate(cm, *gts[i], masks[i], true);
    return cm;
}

std::vector<ClsSample> cls_samples(const std::vector<const Sample*>& samples) {
    std::vector<ClsSample> out;
    for (const auto* s : samples) out.push_back({&s->image, s->labels});
    return out;
}

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoul(item));
    }
    return out;
}

const std::string& require_key(const std::map<std::string, std::string>& m, const std::string& key) {
    auto it = m.find(key);
    if (it == m.end()) throw Error("checkpoint manifest lacks '" + key + "'");
    return it->second;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const std::map<std::string, std::string>& manifest,
                     const ParamMap& params) {
    std::filesystem::create_directories(dir);
    std::string text;
    for (const auto& [k, v] : manifest) text += k + "=" + v + "\n";
    text += "params=";
    bool first = true;
    for (const auto& [name, t] : params) {
        text += (first ? "" : ",") + name;
        first = false;
        save_tensor(t, dir / (name + ".tns"));
    }
    text += "\n";
    write_file_bytes(dir / "manifest.txt", std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::map<std::string, std::string> load_checkpoint(const std::filesystem::path& dir, ParamMap& params) {
    const auto bytes = read_file_bytes(dir / "manifest.txt");
    std::map<std::string, std::string> manifest;
    std::istringstream is(std::string(bytes.begin(), bytes.end()));
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("checkpoint manifest: malformed line '" + line + "'");
        manifest[line.substr(0, eq)] = line.substr(eq + 1);
    }
    params.clear();
    std::stringstream names(require_key(manifest, "params"));
    std::string name;
    while (std::getline(names, name, ',')) {
        if (!name.empty()) params[name] = load_tensor(dir / (name + ".tns"));
    }
    return manifest;
}

void save_mdc(const MdcModel& model, const std::filesystem::path& dir, std::uint64_t seed, std::size_t epoch) {
    const auto& s = model.spec;
    save_checkpoint(dir,
                    {{"kind", "mdc"},
                     {"in_channels", std::to_string(s.in_channels)},
                     {"backbone", format_layers(s.backbone)},
                     {"block_dilations", join_sizes(s.block_dilations)},
                     {"block_channels", std::to_string(s.block_channels)},
                     {"block_depth", std::to_string(s.block_depth)},
                     {"num_classes", std::to_string(s.num_classes)},
                     {"seed", std::to_string(seed)},
                     {"epoch", std::to_string(epoch)}},
                    model.params);
}

namespace {

void check_params(const ParamMap& expected, const ParamMap& loaded) {
    for (const auto& [name, t] : expected) {
        auto it = loaded.find(name);
        if (it == loaded.end()) throw Error("checkpoint lacks parameter " + name);
        if (it->second.shape() != t.shape()) throw Error("checkpoint parameter " + name + " has wrong shape");
    }
    if (loaded.size() != expected.size()) throw Error("checkpoint has unexpected parameters");
}

}  // namespace

MdcModel load_mdc(const std::filesystem::path& dir) {
    ParamMap params;
    const auto m = load_checkpoint(dir, params);
    if (require_key(m, "kind") != "mdc") throw Error("checkpoint is not an MDC classifier");
    MdcSpec spec;
    spec.in_channels = std::stoul(require_key(m, "in_channels"));
    spec.backbone = parse_layers(require_key(m, "backbone"));
    spec.block_dilations = parse_sizes(require_key(m, "block_dilations"));
    spec.block_channels = std::stoul(require_key(m, "block_channels"));
    spec.block_depth = std::stoul(require_key(m, "block_depth"));
    spec.num_classes = std::stoul(require_key(m, "num_classes"));
    MdcModel model = build_mdc(spec, 0);
    check_params(model.params, params);
    model.params = std::move(params);
    return model;
}

void save_fcn(const FcnModel& model, const std::filesystem::path& dir, std::uint64_t seed, std::size_t epoch) {
    const auto& s = model.spec;
    save_checkpoint(dir,
                    {{"kind", "fcn"},
                     {"in_channels", std::to_string(s.in_channels)},
                     {"backbone", format_layers(s.backbone)},
                     {"num_classes", std::to_string(s.num_classes)},
                     {"seed", std::to_string(seed)},
                     {"epoch", std::to_string(epoch)}},
                    model.params);
}

FcnModel load_fcn(const std::filesystem::path& dir) {
    ParamMap params;
    const auto m = load_checkpoint(dir, params);
    if (require_key(m, "kind") != "fcn") throw Error("checkpoint is not a segmentation network");
    FcnSpec spec;
    spec.in_channels = std::stoul(require_key(m, "in_channels"));
    spec.backbone = parse_layers(require_key(m, "backbone"));
    spec.num_classes = std::stoul(require_key(m, "num_classes"));
    FcnModel model = build_fcn(spec, 0);
    check_params(model.params, params);
    model.params = std::move(params);
    return model;
}

Image visualize_map(const LocalizationMap& map) {
    Image img(map.height, map.width, 1);
    float mx = 0.0f;
    for (float v : map.values) mx = std::max(mx, v);
    for (std::size_t p = 0; p < map.values.size(); ++p) {
        const float v = mx > 0.0f ? std::max(map.values[p], 0.0f) / mx : 0.0f;
        img.pixels[p] = static_cast<std::uint8_t>(std::lround(std::min(v, 1.0f) * 255.0f));
    }
    return img;
}

void Fingerprint::add(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        hash_ ^= bytes[i];
        hash_ *= 1099511628211ull;
    }
}

void Fingerprint::add(const ParamMap& params) {
    for (const auto& [name, t] : params) {
        add(name.data(), name.size());
        add(t.raw(), t.size() * sizeof(float));
    }
}

std::string Fingerprint::hex() const {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
    return buf;
}

}  // namespace mdc
