#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mdc/config.hpp"
#include "mdc/experiment.hpp"
#include "mdc/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace mdc;

namespace {

struct Common {
    std::string config_path;
    std::int64_t seed = -1;
    std::string out = "runs";
    std::string run_dir;  // exact directory, overrides out/<name>
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "overrides the config seed");
    cmd->add_option("--out", c.out, "parent directory for the run directory");
    cmd->add_option("--run-dir", c.run_dir, "exact run directory (instead of <out>/<cmd>-<time>-s<seed>)");
    cmd->add_flag("--quiet", c.quiet, "suppress progress lines");
}

RunConfig resolve_config(const Common& c) {
    RunConfig cfg;
    if (!c.config_path.empty()) cfg = load_run_config(c.config_path);
    if (c.seed >= 0) apply_seed(cfg, static_cast<std::uint64_t>(c.seed));
    cfg.validate();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

fs::path make_run_dir(const Common& c, const std::string& cmd, const RunConfig& cfg) {
    fs::path dir;
    if (!c.run_dir.empty()) {
        dir = c.run_dir;
    } else {
        const std::time_t now = std::time(nullptr);
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::localtime(&now));
        dir = fs::path(c.out) / (cmd + "-" + stamp + "-s" + std::to_string(cfg.seed));
    }
    fs::create_directories(dir);
    write_text(dir / "config.txt", format_run_config(cfg));
    return dir;
}

ProgressFn progress_printer(const Common& c) {
    if (c.quiet) return {};
    return [](const std::string& line) {
        std::cerr << line << "\n";
    };
}

std::string stem_of(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu", index);
    return buf;
}

std::vector<std::string> class_names(std::size_t num_classes) {
    std::vector<std::string> names{"background"};
    for (std::size_t c = 0; c < num_classes; ++c) names.push_back(shape_vocabulary().at(c));
    return names;
}

std::string real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

int cmd_gen_data(const Common& c) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = make_run_dir(c, "gen-data", cfg);
    const Dataset data = generate_dataset(cfg.gen);
    const auto records = write_dataset(data, dir);
    std::cout << "wrote " << records.size() << " records to " << dir.string() << "\n";
    return 0;
}

int cmd_train_cls(const Common& c, const std::string& data_dir) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = make_run_dir(c, "train-cls", cfg);
    const Dataset data = load_dataset(data_dir);
    MdcModel model = build_mdc(cfg.mdc_spec(), cfg.cls_train.seed);
    const auto weak = data.split(Split::Weak);
    const auto progress = progress_printer(c);
    std::string log = "epoch,split,loss,accuracy\n";
    const auto epochs = train_classifier(model, cls_samples(weak), cfg.cls_train, [&](const EpochLog& e) {
        log += std::to_string(e.epoch) + ",weak," + real(e.mean_loss) + ",\n";
        if (progress) progress("epoch " + std::to_string(e.epoch) + " lr=" + real(e.lr) + " loss=" + real(e.mean_loss));
    });
    const auto val = data.split(Split::Val);
    const double acc = val.empty() ? 0.0 : exact_match_accuracy(model, cls_samples(val));
    log += std::to_string(epochs.size()) + ",val,," + real(acc) + "\n";
    save_mdc(model, dir / "checkpoint", cfg.cls_train.seed, epochs.size());
    write_text(dir / "train_log.csv", log);
    std::cout << "val exact-match accuracy " << real(acc) << "\n";
    std::cout << "checkpoint " << (dir / "checkpoint").string() << "\n";
    return 0;
}

int cmd_localize(const Common& c, const std::string& model_dir, const std::string& data_dir, const std::string& split) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = make_run_dir(c, "localize", cfg);
    const MdcModel model = load_mdc(model_dir);
    const Dataset data = load_dataset(data_dir);
    std::string index = "index\tclasses\n";
    for (const auto* s : data.split(parse_split(split))) {
        const ImageMaps maps = localize_image(model, s->image, s->labels);
        const std::string stem = stem_of(s->index);
        const fs::path sub = dir / "maps" / stem;
        std::string classes;
        for (std::size_t k = 0; k < maps.classes.size(); ++k) {
            const std::string cls = std::to_string(maps.classes[k]);
            classes += (k ? "," : "") + cls;
            for (std::size_t b = 0; b < maps.block_maps.size(); ++b) {
                const auto& m = maps.block_maps[b][k];
                const std::string name = "b" + std::to_string(b) + "_c" + cls;
                save_tensor(Tensor({m.height, m.width}, m.values), sub / (name + ".tns"));
                save_pnm(visualize_map(m), sub / (name + ".pgm"));
            }
            const auto& f = maps.fused[k];
            save_tensor(Tensor({f.height, f.width}, f.values), sub / ("fused_c" + cls + ".tns"));
            save_pnm(visualize_map(f), sub / ("fused_c" + cls + ".pgm"));
        }
        index += stem + "\t" + classes + "\n";
    }
    write_text(dir / "maps" / "index.tsv", index);
    std::ostringstream blocks;
    for (std::size_t b = 0; b < model.spec.num_blocks(); ++b) blocks << (b ? "," : "") << model.spec.block_dilations[b];
    write_text(dir / "maps" / "blocks.txt", blocks.str() + "\n");
    std::cout << "maps " << (dir / "maps").string() << "\n";
    return 0;
}

LocalizationMap load_map(const fs::path& path, int cls) {
    const Tensor t = load_tensor(path);
    if (t.rank() != 2) throw Error("map " + path.string() + " is not 2-D");
    LocalizationMap m(cls, t.dim(0), t.dim(1));
    m.values.assign(t.data().begin(), t.data().end());
    m.normalized = true;
    return m;
}

int cmd_make_masks(const Common& c, const std::string& maps_dir, const std::string& data_dir, const std::string& source) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = make_run_dir(c, "make-masks", cfg);
    const Dataset data = load_dataset(data_dir);
    const fs::path maps = fs::path(maps_dir) / (fs::exists(fs::path(maps_dir) / "maps") ? "maps" : "");

    const auto blocks_bytes = read_file_bytes(maps / "blocks.txt");
    std::vector<std::string> rates;
    {
        std::stringstream ss(std::string(blocks_bytes.begin(), blocks_bytes.end()));
        std::string item;
        while (std::getline(ss, item, ',')) rates.push_back(std::to_string(std::stoul(item)));
    }
    MapSource src = MapSource::fusion();
    if (source != "fusion") {
        bool found = false;
        for (std::size_t b = 0; b < rates.size() && !found; ++b) {
            if (source == "d=" + rates[b] || source == "b" + std::to_string(b)) {
                src = MapSource::single_block(b);
                found = true;
            }
        }
        if (!found) throw Error("unknown map source '" + source + "' (use fusion, d=<rate> or b<index>)");
    }

    const auto index_bytes = read_file_bytes(maps / "index.tsv");
    std::istringstream is(std::string(index_bytes.begin(), index_bytes.end()));
    std::string line;
    std::getline(is, line);
    std::string manifest = "index\tmask\n";
    std::vector<const LabelMap*> gts;
    std::vector<LabelMap> masks;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        const std::string stem = line.substr(0, tab);
        const std::size_t idx = std::stoul(stem);
        if (idx >= data.samples.size()) throw Error("map index " + stem + " not in dataset");
        const Sample& s = data.samples[idx];
        ImageMaps im;
        std::stringstream cs(line.substr(tab + 1));
        std::string cls;
        while (std::getline(cs, cls, ',')) im.classes.push_back(std::stoi(cls));
        im.block_maps.resize(rates.size());
        for (int k : im.classes) {
            const std::string suffix = "_c" + std::to_string(k) + ".tns";
            for (std::size_t b = 0; b < rates.size(); ++b) {
                im.block_maps[b].push_back(load_map(maps / stem / ("b" + std::to_string(b) + suffix), k));
            }
            im.fused.push_back(load_map(maps / stem / ("fused" + suffix), k));
        }
        LabelMap mask = pseudo_mask_from_maps(im, src, s.saliency, cfg.mask);
        save_pnm(label_map_to_image(mask), dir / "masks" / (stem + ".pgm"));
        manifest += stem + "\tmasks/" + stem + ".pgm\n";
        gts.push_back(&s.gt);
        masks.push_back(std::move(mask));
    }
    write_text(dir / "masks.tsv", manifest);
    const ConfusionMatrix cm = evaluate_pseudo_masks(gts, masks, cfg.gen.num_classes);
    const std::string table = format_metrics_table(cm, class_names(cfg.gen.num_classes));
    write_text(dir / "metrics.txt", table);
    write_text(dir / "metrics.csv", format_metrics_csv(cm, class_names(cfg.gen.num_classes)));
    std::cout << "source " << source << " (pseudo masks vs gt, IGNORE counted as miss)\n" << table;
    return 0;
}

int cmd_train_seg(const Common& c, const std::string& data_dir, const std::string& masks_dir, const std::string& mode,
                  std::int64_t strong_count) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = make_run_dir(c, "train-seg", cfg);
    const Dataset data = load_dataset(data_dir);
    const auto weak = data.split(Split::Weak);
    const auto strong_all = data.split(Split::Strong);

    std::vector<LabelMap> masks;
    for (const auto* s : weak) {
        masks.push_back(image_to_label_map(load_pnm(fs::path(masks_dir) / "masks" / (stem_of(s->index) + ".pgm"))));
    }
    std::vector<WeakItem> weak_items;
    for (std::size_t i = 0; i < weak.size(); ++i) {
        weak_items.push_back({&weak[i]->image, &masks[i], std::set<int>(weak[i]->labels.begin(), weak[i]->labels.end())});
    }
    std::vector<StrongItem> strong_items;
    SegMode seg_mode = SegMode::Weak;
    if (mode == "semi") {
        seg_mode = SegMode::Semi;
        std::size_t n = strong_count >= 0 ? static_cast<std::size_t>(strong_count)
                                          : static_cast<std::size_t>(cfg.strong_fraction * static_cast<double>(weak.size()) + 0.5);
        if (n > strong_all.size()) throw Error("requested " + std::to_string(n) + " strong images, dataset has " +
                                               std::to_string(strong_all.size()));
        for (std::size_t i = 0; i < n; ++i) strong_items.push_back({&strong_all[i]->image, &strong_all[i]->gt});
    } else if (mode != "weak") {
        throw Error("mode must be weak or semi");
    }

    FcnModel model = build_fcn(cfg.fcn_spec(), cfg.seg_train.seed);
    const auto progress = progress_printer(c);
    std::string log = "epoch,split,loss,mIoU\n";
    const auto epochs = train_seg(model, seg_mode, weak_items, strong_items, cfg.seg_train, [&](const EpochLog& e) {
        log += std::to_string(e.epoch) + ",train," + real(e.mean_loss) + ",\n";
        if (progress) progress("epoch " + std::to_string(e.epoch) + " lr=" + real(e.lr) + " loss=" + real(e.mean_loss));
    });
    const auto val = data.split(Split::Val);
    if (!val.empty()) {
        std::vector<const Image*> images;
        std::vector<const LabelMap*> gts;
        for (const auto* s : val) {
            images.push_back(&s->image);
            gts.push_back(&s->gt);
        }
        const double m = miou(evaluate_segmentation(model, images, gts));
        log += std::to_string(epochs.size()) + ",val,," + real(m) + "\n";
        std::cout << "val mIoU " << real(m) << "\n";
    }
    save_fcn(model, dir / "checkpoint", cfg.seg_train.seed, epochs.size());
    write_text(dir / "train_log.csv", log);
    std::cout << "checkpoint " << (dir / "checkpoint").string() << "\n";
    return 0;
}

int cmd_eval(const Common& c, const std::string& model_dir, const std::string& data_dir, const std::string& split,
             bool save_masks) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = make_run_dir(c, "eval", cfg);
    const FcnModel model = load_fcn(model_dir);
    const Dataset data = load_dataset(data_dir);
    ConfusionMatrix cm(model.spec.num_outputs());
    for (const auto* s : data.split(parse_split(split))) {
        const LabelMap pred = predict_mask(model, s->image);
        accumulate(cm, s->gt, pred);
        if (save_masks) save_pnm(label_map_to_image(pred), dir / "pred" / (stem_of(s->index) + ".pgm"));
    }
    const auto names = class_names(model.spec.num_classes);
    const std::string table = format_metrics_table(cm, names);
    write_text(dir / "metrics.txt", table);
    write_text(dir / "metrics.csv", format_metrics_csv(cm, names));
    std::cout << table;
    return 0;
}

// "3x3 s=1 d=9, 2x2 s=2; 3x3 d=1": ';' separates stacks, ',' separates layers.
std::vector<RfLayer> parse_rf_stack(const std::string& text) {
    std::vector<RfLayer> layers;
    std::stringstream items(text);
    std::string item;
    while (std::getline(items, item, ',')) {
        std::stringstream tokens(item);
        std::string tok;
        RfLayer layer;
        bool has_kernel = false;
        while (tokens >> tok) {
            if (tok.rfind("s=", 0) == 0) {
                layer.stride = std::stoul(tok.substr(2));
            } else if (tok.rfind("d=", 0) == 0) {
                layer.dilation = std::stoul(tok.substr(2));
            } else {
                const auto x = tok.find('x');
                const std::size_t kh = std::stoul(tok.substr(0, x));
                if (x != std::string::npos && std::stoul(tok.substr(x + 1)) != kh) {
                    throw Error("rf: only square kernels are supported ('" + tok + "')");
                }
                layer.kernel = kh;
                has_kernel = true;
            }
        }
        if (!has_kernel) throw Error("rf: layer '" + item + "' lacks a kernel size");
        if (layer.kernel == 0 || layer.stride == 0 || layer.dilation == 0) throw Error("rf: entries must be >= 1");
        layers.push_back(layer);
    }
    if (layers.empty()) throw Error("rf: empty layer stack");
    return layers;
}

int cmd_rf(const std::string& spec) {
    std::stringstream stacks(spec);
    std::string stack;
    std::cout << "layers\treceptive_field\n";
    while (std::getline(stacks, stack, ';')) {
        const auto first = stack.find_first_not_of(' ');
        if (first == std::string::npos) continue;
        const auto last = stack.find_last_not_of(' ');
        const std::string trimmed = stack.substr(first, last - first + 1);
        std::cout << trimmed << "\t" << receptive_field(parse_rf_stack(trimmed)) << "\n";
    }
    return 0;
}

int cmd_ablate(const Common& c, bool with_seg) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = make_run_dir(c, "ablate", cfg);
    const auto progress = progress_printer(c);
    const Dataset data = generate_dataset(cfg.gen);
    const LocalizationStudy loc = run_localization_study(cfg, data, progress);

    std::string table = "val exact-match accuracy " + real(loc.val_accuracy) + "\n";
    std::string csv = "source,pseudo_mask_miou,seg_val_miou\n";
    table += "source\tpseudo-mask mIoU\tsegmentation mIoU\n";
    for (std::size_t i = 0; i < loc.sources.size(); ++i) {
        std::string seg = "-";
        if (with_seg) seg = real(run_seg_study(cfg, data, loc.masks[i], 0, progress).val_miou);
        table += loc.source_names[i] + "\t" + real(loc.miou[i]) + "\t" + seg + "\n";
        csv += loc.source_names[i] + "," + real(loc.miou[i]) + "," + (with_seg ? seg : "") + "\n";
    }
    write_text(dir / "ablation.txt", table);
    write_text(dir / "ablation.csv", csv);
    std::cout << table;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-dilated CAM localization and weakly/semi-supervised segmentation"};
    app.require_subcommand(1);

    Common common;
    std::string data_dir, model_dir, maps_dir, masks_dir, split = "weak", eval_split = "val", source = "fusion", mode = "weak", rf_spec;
    std::int64_t strong_count = -1;
    bool save_masks = false;
    bool with_seg = false;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    add_common(gen, common);

    auto* tcls = app.add_subcommand("train-cls", "train the multi-dilated classifier");
    add_common(tcls, common);
    tcls->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);

    auto* loc = app.add_subcommand("localize", "write per-block and fused localization maps");
    add_common(loc, common);
    loc->add_option("--model", model_dir, "classifier checkpoint directory")->required()->check(CLI::ExistingDirectory);
    loc->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
    loc->add_option("--split", split, "weak, strong or val");

    auto* mm = app.add_subcommand("make-masks", "pseudo masks from localization maps and saliency");
    add_common(mm, common);
    mm->add_option("--maps", maps_dir, "localize run directory")->required()->check(CLI::ExistingDirectory);
    mm->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
    mm->add_option("--source", source, "fusion, d=<rate> or b<block>");

    auto* tseg = app.add_subcommand("train-seg", "train the segmentation network");
    add_common(tseg, common);
    tseg->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
    tseg->add_option("--masks", masks_dir, "make-masks run directory")->required()->check(CLI::ExistingDirectory);
    tseg->add_option("--mode", mode, "weak or semi");
    tseg->add_option("--strong-count", strong_count, "strong images in semi mode (default: seg.strong_fraction of weak)");

    auto* ev = app.add_subcommand("eval", "segmentation metrics of a checkpoint");
    add_common(ev, common);
    ev->add_option("--model", model_dir, "segmentation checkpoint directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--split", eval_split, "weak, strong or val")->capture_default_str();
    ev->add_flag("--save-masks", save_masks, "write predicted masks");

    auto* rf = app.add_subcommand("rf", "receptive-field table");
    rf->add_option("layers", rf_spec, "e.g. \"3x3 d=1; 3x3 d=9\" or \"3x3, 2x2 s=2, 3x3 d=3\"")->required();

    auto* ab = app.add_subcommand("ablate", "compare localization-map sources end to end");
    add_common(ab, common);
    ab->add_flag("--with-seg", with_seg, "also train a segmentation network per source");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen) return cmd_gen_data(common);
        if (*tcls) return cmd_train_cls(common, data_dir);
        if (*loc) return cmd_localize(common, model_dir, data_dir, split);
        if (*mm) return cmd_make_masks(common, maps_dir, data_dir, source);
        if (*tseg) return cmd_train_seg(common, data_dir, masks_dir, mode, strong_count);
        if (*ev) return cmd_eval(common, model_dir, data_dir, eval_split, save_masks);
        if (*rf) return cmd_rf(rf_spec);
        if (*ab) return cmd_ablate(common, with_seg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
