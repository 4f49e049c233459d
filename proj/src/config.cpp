#include "mdc/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "mdc/random.hpp"
#include "mdc/tensor_io.hpp"

namespace mdc {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw Error("config " + key + ": expected integer, got '" + v + "'");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw Error("config " + key + ": expected integer, got '" + v + "'");
    return out;
}

double to_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw Error("");
        return out;
    } catch (...) {
        throw Error("config " + key + ": expected real, got '" + v + "'");
    }
}

std::vector<std::size_t> to_list(const std::string& key, std::string v) {
    if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_size(key, trim(item)));
    if (out.empty()) throw Error("config " + key + ": empty list");
    return out;
}

// Shortest text that parses back to the same double.
std::string real_str(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string list_str(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

struct Entry {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

#define MDC_SIZE(KEY, FIELD) \
    Entry{KEY, [](const RunConfig& c) { return std::to_string(c.FIELD); }, \
          [](RunConfig& c, const std::string& v) { c.FIELD = to_size(KEY, v); }}
#define MDC_REAL(KEY, FIELD) \
    Entry{KEY, [](const RunConfig& c) { return real_str(c.FIELD); }, \
          [](RunConfig& c, const std::string& v) { c.FIELD = to_real(KEY, v); }}

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table{
        Entry{"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
              [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); }},
        MDC_SIZE("gen.num_classes", gen.num_classes),
        MDC_SIZE("gen.image_size", gen.image_size),
        MDC_SIZE("gen.weak_count", gen.weak_count),
        MDC_SIZE("gen.strong_count", gen.strong_count),
        MDC_SIZE("gen.val_count", gen.val_count),
        MDC_SIZE("gen.min_shapes", gen.min_shapes),
        MDC_SIZE("gen.max_shapes", gen.max_shapes),
        MDC_REAL("gen.scale_min", gen.scale_min),
        MDC_REAL("gen.scale_max", gen.scale_max),
        MDC_REAL("gen.body_contrast", gen.body_contrast),
        MDC_REAL("gen.class_tint", gen.class_tint),
        MDC_SIZE("gen.marker_size", gen.marker_size),
        MDC_REAL("gen.marker_prob", gen.marker_prob),
        MDC_REAL("gen.clutter", gen.clutter),
        MDC_REAL("gen.pixel_noise", gen.pixel_noise),
        MDC_REAL("gen.saliency_noise", gen.saliency_noise),
        MDC_REAL("gen.saliency_band", gen.saliency_band),
        Entry{"cls.backbone", [](const RunConfig& c) { return c.cls_backbone; },
              [](RunConfig& c, const std::string& v) { c.cls_backbone = format_layers(parse_layers(v)); }},
        Entry{"cls.block_dilations", [](const RunConfig& c) { return list_str(c.block_dilations); },
              [](RunConfig& c, const std::string& v) { c.block_dilations = to_list("cls.block_dilations", v); }},
        MDC_SIZE("cls.block_channels", block_channels),
        MDC_SIZE("cls.block_depth", block_depth),
        MDC_SIZE("cls.epochs", cls_train.epochs),
        MDC_REAL("cls.lr", cls_train.lr),
        MDC_SIZE("cls.lr_decay_epoch", cls_train.lr_decay_epoch),
        MDC_SIZE("cls.batch", cls_train.batch),
        MDC_SIZE("cls.crop", cls_train.crop),
        MDC_REAL("cls.momentum", cls_train.momentum),
        MDC_REAL("cls.weight_decay", cls_train.weight_decay),
        MDC_REAL("fusion.fg_fraction", mask.fg_fraction),
        MDC_REAL("fusion.bg_threshold", mask.bg_threshold),
        Entry{"seg.backbone", [](const RunConfig& c) { return c.seg_backbone; },
              [](RunConfig& c, const std::string& v) { c.seg_backbone = format_layers(parse_layers(v)); }},
        MDC_SIZE("seg.epochs", seg_train.epochs),
        MDC_REAL("seg.lr", seg_train.lr),
        MDC_SIZE("seg.lr_decay_epoch", seg_train.lr_decay_epoch),
        MDC_SIZE("seg.batch", seg_train.batch),
        MDC_REAL("seg.momentum", seg_train.momentum),
        MDC_REAL("seg.weight_decay", seg_train.weight_decay),
        MDC_REAL("seg.online_min_prob", seg_train.online_min_prob),
        MDC_REAL("seg.strong_fraction", strong_fraction),
    };
    return table;
}

#undef MDC_SIZE
#undef MDC_REAL

}  // namespace

MdcSpec RunConfig::mdc_spec() const {
    MdcSpec spec;
    spec.in_channels = 3;
    spec.backbone = parse_layers(cls_backbone);
    spec.block_dilations = block_dilations;
    spec.block_channels = block_channels;
    spec.block_depth = block_depth;
    spec.num_classes = gen.num_classes;
    return spec;
}

FcnSpec RunConfig::fcn_spec() const {
    FcnSpec spec;
    spec.in_channels = 3;
    spec.backbone = parse_layers(seg_backbone);
    spec.num_classes = gen.num_classes;
    return spec;
}

void RunConfig::validate() const {
    gen.validate();
    mdc_spec().validate();
    fcn_spec().validate();
    if (!(mask.fg_fraction > 0.0 && mask.fg_fraction < 1.0)) throw Error("config: fusion.fg_fraction must be in (0,1)");
    if (!(mask.bg_threshold > 0.0 && mask.bg_threshold <= 1.0)) throw Error("config: fusion.bg_threshold must be in (0,1]");
    if (!(strong_fraction >= 0.0)) throw Error("config: seg.strong_fraction must be >= 0");
    if (cls_train.lr < 0.0 || seg_train.lr < 0.0) throw Error("config: learning rates must be >= 0");
}

RunConfig parse_run_config(const std::string& text, RunConfig base) {
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    bool seed_set = false;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        bool found = false;
        for (const auto& e : entries()) {
            if (e.key == key) {
                e.set(base, value);
                found = true;
                break;
            }
        }
        if (!found) throw Error("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        if (key == "seed") seed_set = true;
    }
    if (seed_set) apply_seed(base, base.seed);
    return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
    const auto bytes = read_file_bytes(path);
    return parse_run_config(std::string(bytes.begin(), bytes.end()), std::move(base));
}

std::string format_run_config(const RunConfig& config) {
    std::string out;
    for (const auto& e : entries()) out += e.key + " = " + e.get(config) + "\n";
    return out;
}

std::vector<std::string> run_config_keys() {
    std::vector<std::string> keys;
    for (const auto& e : entries()) keys.push_back(e.key);
    return keys;
}

void apply_seed(RunConfig& config, std::uint64_t seed) {
    config.seed = seed;
    config.gen.seed = seed;
    config.cls_train.seed = derive_seed(seed, 1);
    config.seg_train.seed = derive_seed(seed, 2);
}

}  // namespace mdc
