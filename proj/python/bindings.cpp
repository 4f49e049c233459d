#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "mdc/config.hpp"
#include "mdc/evaluator.hpp"
#include "mdc/experiment.hpp"
#include "mdc/fusion.hpp"
#include "mdc/mdc_classifier.hpp"
#include "mdc/synth_data.hpp"

namespace py = pybind11;
using namespace mdc;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
std::pair<std::size_t, std::size_t> shape2(const Array<T>& a, const char* what) {
    if (a.ndim() != 2) throw py::value_error(std::string(what) + " must be a 2-D array");
    return {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))};
}

template <typename T, typename V>
Array<T> to_numpy(const std::vector<V>& values, std::vector<py::ssize_t> shape) {
    Array<T> out(shape);
    auto* dst = out.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) dst[i] = static_cast<T>(values[i]);
    return out;
}

LocalizationMap map_from(const Array<float>& a) {
    const auto [h, w] = shape2(a, "map");
    LocalizationMap m(0, h, w);
    std::memcpy(m.values.data(), a.data(), h * w * sizeof(float));
    return m;
}

BoolMap bool_from(const Array<bool>& a) {
    const auto [h, w] = shape2(a, "mask");
    BoolMap m(h, w);
    for (std::size_t i = 0; i < h * w; ++i) m.set(i, a.data()[i]);
    return m;
}

LabelMap labels_from(const Array<std::uint8_t>& a) {
    const auto [h, w] = shape2(a, "label map");
    LabelMap m(h, w);
    std::memcpy(m.labels.data(), a.data(), h * w);
    return m;
}

// Inputs to fusion must already lie in [0,1].
LocalizationMap normalized_from(const Array<float>& a) {
    LocalizationMap m = map_from(a);
    for (float v : m.values)
        if (!(v >= 0.0f && v <= 1.0f)) throw py::value_error("fuse_maps: maps must be normalized to [0,1]");
    m.normalized = true;
    return m;
}

Array<float> map_to(const LocalizationMap& m) {
    return to_numpy<float>(m.values, {py::ssize_t(m.height), py::ssize_t(m.width)});
}

Array<bool> bool_to(const BoolMap& m) {
    return to_numpy<bool>(m.values, {py::ssize_t(m.height), py::ssize_t(m.width)});
}

Array<std::uint8_t> labels_to(const LabelMap& m) {
    return to_numpy<std::uint8_t>(m.labels, {py::ssize_t(m.height), py::ssize_t(m.width)});
}

py::dict sample_to_dict(const Sample& s) {
    py::dict d;
    d["split"] = split_name(s.split);
    d["index"] = s.index;
    d["image"] = to_numpy<std::uint8_t>(
        s.image.pixels, {py::ssize_t(s.image.height), py::ssize_t(s.image.width), py::ssize_t(s.image.channels)});
    d["gt"] = labels_to(s.gt);
    d["saliency"] = to_numpy<float>(s.saliency.values, {py::ssize_t(s.saliency.height), py::ssize_t(s.saliency.width)});
    d["labels"] = s.labels;
    return d;
}

RunConfig config_from(const std::string& text) {
    RunConfig cfg = parse_run_config(text);
    cfg.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(mdc, m) {
    m.doc() = "Multi-dilated CAM localization and weakly supervised segmentation";

    py::register_exception<Error>(m, "MdcError", PyExc_ValueError);

    m.attr("IGNORE") = kIgnoreLabel;
    m.attr("BACKGROUND") = kBackgroundLabel;
    m.attr("DEFAULT_FG_FRACTION") = kDefaultFgFraction;
    m.attr("DEFAULT_BG_THRESHOLD") = kDefaultBgThreshold;

    m.def(
        "receptive_field",
        [](const std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>& layers) {
            std::vector<RfLayer> rf;
            for (const auto& [k, s, d] : layers) rf.push_back({k, s, d});
            return receptive_field(rf);
        },
        py::arg("layers"), "Receptive field of a stack of (kernel, stride, dilation) layers.");

    m.def("normalize_map", [](const Array<float>& a) { return map_to(normalize_map(map_from(a))); }, py::arg("map"));

    m.def(
        "fuse_maps",
        [](const Array<float>& h0, const std::vector<Array<float>>& dilated) {
            std::vector<LocalizationMap> hi;
            for (const auto& a : dilated) hi.push_back(normalized_from(a));
            return map_to(fuse_maps(normalized_from(h0), hi));
        },
        py::arg("h0"), py::arg("dilated"));

    m.def(
        "extract_foreground",
        [](const Array<float>& fused, double fg_fraction) {
            return bool_to(extract_foreground(map_from(fused), fg_fraction));
        },
        py::arg("fused"), py::arg("fg_fraction") = kDefaultFgFraction);

    m.def(
        "extract_background",
        [](const Array<float>& saliency, double threshold) {
            const auto [h, w] = shape2(saliency, "saliency");
            SaliencyMap s(h, w);
            std::memcpy(s.values.data(), saliency.data(), h * w * sizeof(float));
            return bool_to(extract_background(s, threshold));
        },
        py::arg("saliency"), py::arg("bg_threshold") = kDefaultBgThreshold);

    m.def(
        "synthesize_mask",
        [](const std::map<int, Array<bool>>& fg, const Array<bool>& background, const std::set<int>& labels) {
            std::map<int, BoolMap> per_class;
            for (const auto& [c, a] : fg) per_class.emplace(c, bool_from(a));
            return labels_to(synthesize_mask(per_class, bool_from(background), labels));
        },
        py::arg("per_class_fg"), py::arg("background"), py::arg("image_labels"));

    m.def(
        "segmentation_iou",
        [](const std::vector<Array<std::uint8_t>>& gts, const std::vector<Array<std::uint8_t>>& preds,
           std::size_t num_classes, bool ignore_is_miss) {
            if (gts.size() != preds.size()) throw py::value_error("gts and preds differ in length");
            ConfusionMatrix cm(num_classes + 1);
            for (std::size_t i = 0; i < gts.size(); ++i) accumulate(cm, labels_from(gts[i]), labels_from(preds[i]), ignore_is_miss);
            return py::make_tuple(miou(cm), per_class_iou(cm));
        },
        py::arg("gts"), py::arg("preds"), py::arg("num_classes"), py::arg("ignore_is_miss") = false,
        "Returns (mIoU, per-class IoU with None for absent classes).");

    m.def("config_keys", &run_config_keys);
    m.def("format_config", [](const std::string& text) { return format_run_config(config_from(text)); },
          py::arg("text") = "", "Full configuration document after applying `text` overrides.");

    m.def(
        "generate_dataset",
        [](const std::string& text) {
            const RunConfig cfg = config_from(text);
            py::list out;
            for (const auto& s : generate_dataset(cfg.gen).samples) out.append(sample_to_dict(s));
            return out;
        },
        py::arg("config") = "", "Synthetic records as dicts of numpy arrays.");

    m.def(
        "localization_study",
        [](const std::string& text) {
            const RunConfig cfg = config_from(text);
            const Dataset data = generate_dataset(cfg.gen);
            LocalizationStudy study;
            {
                py::gil_scoped_release release;
                study = run_localization_study(cfg, data);
            }
            py::dict d;
            d["val_accuracy"] = study.val_accuracy;
            py::dict miou_by_source;
            for (std::size_t k = 0; k < study.source_names.size(); ++k) miou_by_source[py::str(study.source_names[k])] = study.miou[k];
            d["miou"] = miou_by_source;
            py::dict masks;
            for (std::size_t k = 0; k < study.source_names.size(); ++k) {
                py::list per_record;
                for (const auto& mask : study.masks[k]) per_record.append(labels_to(mask));
                masks[py::str(study.source_names[k])] = per_record;
            }
            d["masks"] = masks;
            py::list losses;
            for (const auto& e : study.log) losses.append(e.mean_loss);
            d["losses"] = losses;
            return d;
        },
        py::arg("config") = "", "Trains the classifier and scores pseudo masks of every map source.");
}
