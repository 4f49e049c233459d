#include "mdc/experiment.hpp"

#include <chrono>
#include <set>

namespace mdc {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::size_t LocalizationStudy::source_index(const std::string& name) const {
    for (std::size_t i = 0; i < source_names.size(); ++i) {
        if (source_names[i] == name) return i;
    }
    throw Error("no map source named '" + name + "'");
}

const std::vector<LabelMap>& LocalizationStudy::masks_for(const std::string& name) const {
    return masks.at(source_index(name));
}

std::vector<std::vector<LabelMap>> make_pseudo_masks(const MdcModel& model, const std::vector<const Sample*>& weak,
                                                     const std::vector<MapSource>& sources, const MaskPolicy& policy) {
    std::vector<std::vector<LabelMap>> out(sources.size());
    for (auto& v : out) v.reserve(weak.size());
    for (const auto* s : weak) {
        const ImageMaps maps = localize_image(model, s->image, s->labels);
        for (std::size_t k = 0; k < sources.size(); ++k) {
            out[k].push_back(pseudo_mask_from_maps(maps, sources[k], s->saliency, policy));
        }
    }
    return out;
}

LocalizationStudy run_localization_study(const RunConfig& config, const Dataset& data, const ProgressFn& progress) {
    const auto t0 = std::chrono::steady_clock::now();
    LocalizationStudy study;
    study.model = build_mdc(config.mdc_spec(), config.cls_train.seed);
    const auto weak = data.split(Split::Weak);
    const auto val = data.split(Split::Val);
    if (weak.empty()) throw Error("localization study: empty weak split");
    study.log = train_classifier(study.model, cls_samples(weak), config.cls_train, [&](const EpochLog& e) {
        if (progress) {
            progress("cls epoch " + std::to_string(e.epoch) + " lr=" + std::to_string(e.lr) +
                     " loss=" + std::to_string(e.mean_loss));
        }
    });
    study.val_accuracy = val.empty() ? 0.0 : exact_match_accuracy(study.model, cls_samples(val));

    for (std::size_t b = 0; b < study.model.spec.num_blocks(); ++b) study.sources.push_back(MapSource::single_block(b));
    study.sources.push_back(MapSource::fusion());
    for (const auto& s : study.sources) study.source_names.push_back(s.name(study.model.spec));
    study.masks = make_pseudo_masks(study.model, weak, study.sources, config.mask);

    std::vector<const LabelMap*> gts;
    for (const auto* s : weak) gts.push_back(&s->gt);
    for (const auto& m : study.masks) {
        study.miou.push_back(miou(evaluate_pseudo_masks(gts, m, config.gen.num_classes)));
    }
    study.seconds = seconds_since(t0);
    return study;
}

SegStudy run_seg_study(const RunConfig& config, const Dataset& data, const std::vector<LabelMap>& masks,
                       std::size_t strong_count, const ProgressFn& progress) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto weak = data.split(Split::Weak);
    const auto strong_all = data.split(Split::Strong);
    const auto val = data.split(Split::Val);
    if (masks.size() != weak.size()) throw Error("seg study: one pseudo mask per weak record required");
    if (strong_count > strong_all.size()) throw Error("seg study: not enough strong records");

    std::vector<WeakItem> weak_items;
    for (std::size_t i = 0; i < weak.size(); ++i) {
        weak_items.push_back({&weak[i]->image, &masks[i], std::set<int>(weak[i]->labels.begin(), weak[i]->labels.end())});
    }
    std::vector<StrongItem> strong_items;
    for (std::size_t i = 0; i < strong_count; ++i) strong_items.push_back({&strong_all[i]->image, &strong_all[i]->gt});

    SegStudy study;
    study.model = build_fcn(config.fcn_spec(), config.seg_train.seed);
    const SegMode mode = strong_count > 0 ? SegMode::Semi : SegMode::Weak;
    study.log = train_seg(study.model, mode, weak_items, strong_items, config.seg_train, [&](const EpochLog& e) {
        if (progress) {
            progress("seg epoch " + std::to_string(e.epoch) + " lr=" + std::to_string(e.lr) +
                     " loss=" + std::to_string(e.mean_loss));
        }
    });
    std::vector<const Image*> images;
    std::vector<const LabelMap*> gts;
    for (const auto* s : val) {
        images.push_back(&s->image);
        gts.push_back(&s->gt);
    }
    study.val_cm = evaluate_segmentation(study.model, images, gts);
    study.val_miou = miou(study.val_cm);
    study.seconds = seconds_since(t0);
    return study;
}

}  // namespace mdc
