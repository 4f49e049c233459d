#include "mdc/mdc_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace mdc {

std::vector<std::string> MdcSpec::validate() const {
    if (in_channels == 0) throw Error("MdcSpec: in_channels must be positive");
    if (num_classes == 0) throw Error("MdcSpec: num_classes must be positive");
    if (block_channels == 0 || block_depth == 0) throw Error("MdcSpec: block channels and depth must be positive");
    if (block_dilations.size() < 2) throw Error("MdcSpec: need the standard block plus at least one dilated block");
    if (block_dilations.front() != 1) throw Error("MdcSpec: the first block must have dilation 1");
    for (std::size_t d : block_dilations) {
        if (d == 0) throw Error("MdcSpec: dilation rates must be >= 1");
    }
    if (num_classes > 254) throw Error("MdcSpec: at most 254 classes fit the 8-bit label format");
    std::vector<std::string> warnings;
    std::set<std::size_t> seen;
    for (std::size_t d : block_dilations) {
        if (!seen.insert(d).second) warnings.push_back("duplicate block dilation " + std::to_string(d));
    }
    // Construction throws for malformed layers.
    Sequential("backbone", in_channels, backbone);
    return warnings;
}

std::vector<LayerDesc> default_backbone(const std::vector<std::size_t>& stage_channels) {
    if (stage_channels.size() != 4) throw Error("default_backbone: expected 4 stage widths");
    std::vector<LayerDesc> layers;
    for (std::size_t s = 0; s < stage_channels.size(); ++s) {
        layers.push_back(LayerDesc::conv(stage_channels[s]));
        layers.push_back(LayerDesc::relu());
        if (s < 2) layers.push_back(LayerDesc::max_pool(2, 2));
    }
    return layers;
}

Sequential MdcModel::backbone() const { return Sequential("backbone", spec.in_channels, spec.backbone); }

Sequential MdcModel::block(std::size_t b) const {
    const std::size_t in = Sequential("backbone", spec.in_channels, spec.backbone).out_channels();
    std::vector<LayerDesc> layers;
    for (std::size_t i = 0; i < spec.block_depth; ++i) {
        layers.push_back(LayerDesc::conv(spec.block_channels, 3, spec.block_dilations.at(b)));
        layers.push_back(LayerDesc::relu());
    }
    return Sequential("block" + std::to_string(b), in, std::move(layers));
}

MdcModel build_mdc(const MdcSpec& spec, std::uint64_t seed) {
    spec.validate();
    MdcModel model{spec, {}};
    Rng rng(seed);
    model.backbone().init_params(model.params, rng);
    for (std::size_t b = 0; b < spec.num_blocks(); ++b) {
        model.block(b).init_params(model.params, rng);
        Tensor w({spec.num_classes, spec.block_channels});
        init_he(w, rng);
        model.params[MdcModel::head_weight_name(b)] = std::move(w);
        model.params[MdcModel::head_bias_name(b)] = Tensor({spec.num_classes});
    }
    return model;
}

ClsForward forward_cls(const MdcModel& model, const Tensor& batch, bool keep_cache) {
    const auto& spec = model.spec;
    if (batch.rank() != 4 || batch.dim(1) != spec.in_channels) {
        throw Error("forward_cls: expected [N," + std::to_string(spec.in_channels) + ",H,W], got " +
                    shape_string(batch.shape()));
    }
    ClsForward fwd;
    try {
        fwd.backbone_out = model.backbone().forward(model.params, batch, keep_cache ? &fwd.backbone_cache : nullptr);
    } catch (const Error& e) {
        throw Error(std::string("forward_cls: input too small for the backbone (") + e.what() + ")");
    }
    fwd.block_caches.resize(spec.num_blocks());
    for (std::size_t b = 0; b < spec.num_blocks(); ++b) {
        Tensor feat = model.block(b).forward(model.params, fwd.backbone_out, keep_cache ? &fwd.block_caches[b] : nullptr);
        Tensor pooled = global_avg_pool(feat);
        fwd.logits.push_back(
            fully_connected(pooled, model.params.at(MdcModel::head_weight_name(b)), model.params.at(MdcModel::head_bias_name(b))));
        fwd.features.push_back(std::move(feat));
        fwd.pooled.push_back(std::move(pooled));
    }
    return fwd;
}

LossResult<float> cls_loss(const std::vector<Tensor>& per_block_logits, const Tensor& labels,
                           std::vector<Tensor>* per_block_grads) {
    if (per_block_logits.empty()) throw Error("cls_loss: no blocks");
    LossResult<float> total{0.0f, Tensor()};
    if (per_block_grads) per_block_grads->clear();
    for (const auto& logits : per_block_logits) {
        auto r = sigmoid_cross_entropy_multilabel(logits, labels);
        total.value += r.value;
        if (per_block_grads) per_block_grads->push_back(std::move(r.grad));
    }
    return total;
}

ParamMap cls_backward(const MdcModel& model, const ClsForward& fwd, const std::vector<Tensor>& logit_grads) {
    const auto& spec = model.spec;
    if (logit_grads.size() != spec.num_blocks()) throw Error("cls_backward: one logit gradient per block required");
    if (fwd.backbone_cache.inputs.empty()) throw Error("cls_backward: forward pass was run without cache");
    ParamMap grads;
    Tensor backbone_grad(fwd.backbone_out.shape());
    for (std::size_t b = 0; b < spec.num_blocks(); ++b) {
        auto fc = fully_connected_backward(logit_grads[b], fwd.pooled[b], model.params.at(MdcModel::head_weight_name(b)));
        accumulate_grad(grads, MdcModel::head_weight_name(b), fc.weights);
        accumulate_grad(grads, MdcModel::head_bias_name(b), fc.bias);
        Tensor g_feat = global_avg_pool_backward(fc.input, fwd.features[b].shape());
        Tensor g_in = model.block(b).backward(model.params, fwd.block_caches[b], g_feat, grads);
        for (std::size_t i = 0; i < g_in.size(); ++i) backbone_grad[i] += g_in[i];
    }
    model.backbone().backward(model.params, fwd.backbone_cache, backbone_grad, grads, true);
    return grads;
}

LocalizationMap cam_at_feature_resolution(const MdcModel& model, const ClsForward& fwd, std::size_t block_index,
                                          std::size_t class_index) {
    if (block_index >= model.spec.num_blocks()) throw Error("compute_cam: block index out of range");
    if (class_index >= model.spec.num_classes) throw Error("compute_cam: class index out of range");
    const Tensor& feat = fwd.features.at(block_index);
    if (feat.dim(0) != 1) throw Error("compute_cam: expected a single image");
    const Tensor& w = model.params.at(MdcModel::head_weight_name(block_index));
    const std::size_t channels = feat.dim(1);
    const std::size_t h = feat.dim(2);
    const std::size_t wd = feat.dim(3);
    LocalizationMap map(static_cast<int>(class_index) + 1, h, wd);
    for (std::size_t k = 0; k < channels; ++k) {
        const float weight = w[class_index * channels + k];
        const float* plane = feat.raw() + k * h * wd;
        for (std::size_t p = 0; p < h * wd; ++p) map.values[p] += weight * plane[p];
    }
    return map;
}

namespace {

LocalizationMap upsample_map(const LocalizationMap& small, std::size_t height, std::size_t width) {
    Tensor t({1, 1, small.height, small.width}, small.values);
    Tensor up = upsample_bilinear(t, height, width);
    LocalizationMap out(small.class_id, height, width);
    out.values = up.storage();
    return out;
}

}  // namespace

LocalizationMap compute_cam(const MdcModel& model, const Tensor& image, std::size_t block_index,
                            std::size_t class_index) {
    if (block_index >= model.spec.num_blocks()) throw Error("compute_cam: block index out of range");
    if (class_index >= model.spec.num_classes) throw Error("compute_cam: class index out of range");
    ClsForward fwd = forward_cls(model, image);
    return upsample_map(cam_at_feature_resolution(model, fwd, block_index, class_index), image.dim(2), image.dim(3));
}

std::vector<std::vector<LocalizationMap>> compute_cams(const MdcModel& model, const Tensor& image,
                                                       const std::vector<std::size_t>& classes) {
    ClsForward fwd = forward_cls(model, image);
    std::vector<std::vector<LocalizationMap>> maps(model.spec.num_blocks());
    for (std::size_t b = 0; b < model.spec.num_blocks(); ++b) {
        for (std::size_t c : classes) {
            maps[b].push_back(upsample_map(cam_at_feature_resolution(model, fwd, b, c), image.dim(2), image.dim(3)));
        }
    }
    return maps;
}

Tensor images_to_batch(const std::vector<const Image*>& images) {
    if (images.empty()) throw Error("images_to_batch: empty batch");
    const Image& first = *images.front();
    Tensor batch({images.size(), first.channels, first.height, first.width});
    const std::size_t plane = first.height * first.width;
    for (std::size_t n = 0; n < images.size(); ++n) {
        const Image& img = *images[n];
        if (img.height != first.height || img.width != first.width || img.channels != first.channels) {
            throw Error("images_to_batch: images differ in size");
        }
        float* dst = batch.raw() + n * first.channels * plane;
        for (std::size_t p = 0; p < plane; ++p) {
            for (std::size_t c = 0; c < first.channels; ++c) {
                dst[c * plane + p] = static_cast<float>(img.pixels[p * first.channels + c]) / 127.5f - 1.0f;
            }
        }
    }
    return batch;
}

Tensor image_to_tensor(const Image& image) { return images_to_batch({&image}); }

double step_learning_rate(double base_lr, std::size_t decay_epoch, std::size_t epoch) {
    return epoch < decay_epoch ? base_lr : base_lr * 0.1;
}

namespace {

Image crop_image(const Image& image, std::size_t crop, Rng& rng) {
    if (crop == 0 || (crop >= image.height && crop >= image.width)) return image;
    const std::size_t ch = std::min(crop, image.height);
    const std::size_t cw = std::min(crop, image.width);
    const std::size_t y0 = rng.index(image.height - ch + 1);
    const std::size_t x0 = rng.index(image.width - cw + 1);
    Image out(ch, cw, image.channels);
    for (std::size_t y = 0; y < ch; ++y)
        for (std::size_t x = 0; x < cw; ++x)
            for (std::size_t c = 0; c < image.channels; ++c) out(y, x, c) = image(y0 + y, x0 + x, c);
    return out;
}

}  // namespace

std::vector<EpochLog> train_classifier(MdcModel& model, const std::vector<ClsSample>& samples,
                                       const ClsTrainConfig& config, const EpochCallback& on_epoch) {
    if (samples.empty()) throw Error("train_classifier: empty dataset");
    if (config.batch == 0) throw Error("train_classifier: batch size must be positive");
    const std::size_t num_classes = model.spec.num_classes;
    for (const auto& s : samples) {
        if (!s.image) throw Error("train_classifier: sample without image");
        for (int c : s.labels) {
            if (c < 1 || static_cast<std::size_t>(c) > num_classes) throw Error("train_classifier: label out of range");
        }
    }
    Rng rng(derive_seed(config.seed, 0xC1A55));
    ParamMap velocity;
    for (const auto& [name, p] : model.params) velocity.emplace(name, Tensor(p.shape()));

    std::vector<std::size_t> order(samples.size());
    std::vector<EpochLog> log;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order.begin(), order.end());
        SgdConfig sgd{step_learning_rate(config.lr, config.lr_decay_epoch, epoch), config.momentum,
                      config.weight_decay};
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch) {
            const std::size_t end = std::min(order.size(), start + config.batch);
            std::vector<Image> cropped;
            cropped.reserve(end - start);
            Tensor labels({end - start, num_classes});
            for (std::size_t i = start; i < end; ++i) {
                const auto& s = samples[order[i]];
                cropped.push_back(crop_image(*s.image, config.crop, rng));
                for (int c : s.labels) labels[(i - start) * num_classes + static_cast<std::size_t>(c - 1)] = 1.0f;
            }
            std::vector<const Image*> ptrs;
            for (const auto& im : cropped) ptrs.push_back(&im);
            const Tensor batch = images_to_batch(ptrs);
            ClsForward fwd = forward_cls(model, batch, true);
            std::vector<Tensor> logit_grads;
            const auto loss = cls_loss(fwd.logits, labels, &logit_grads);
            if (!std::isfinite(loss.value)) {
                throw Error("train_classifier: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                            std::to_string(steps));
            }
            ParamMap grads = cls_backward(model, fwd, logit_grads);
            for (auto& [name, p] : model.params) {
                auto g = grads.find(name);
                if (g == grads.end()) continue;
                sgd_step<float>(p.data(), g->second.data(), velocity.at(name).data(), sgd);
            }
            loss_sum += loss.value;
            ++steps;
        }
        EpochLog entry{epoch, sgd.lr, loss_sum / static_cast<double>(steps)};
        log.push_back(entry);
        if (on_epoch) on_epoch(entry);
    }
    return log;
}

std::vector<int> predict_labels(const MdcModel& model, const Image& image) {
    ClsForward fwd = forward_cls(model, image_to_tensor(image));
    std::vector<int> labels;
    for (std::size_t c = 0; c < model.spec.num_classes; ++c) {
        double prob = 0.0;
        for (const auto& logits : fwd.logits) prob += 1.0 / (1.0 + std::exp(-static_cast<double>(logits[c])));
        prob /= static_cast<double>(fwd.logits.size());
        if (prob > 0.5) labels.push_back(static_cast<int>(c) + 1);
    }
    return labels;
}

double exact_match_accuracy(const MdcModel& model, const std::vector<ClsSample>& samples) {
    if (samples.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& s : samples) {
        std::vector<int> truth = s.labels;
        std::sort(truth.begin(), truth.end());
        if (predict_labels(model, *s.image) == truth) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

std::size_t receptive_field(const std::vector<RfLayer>& layers) {
    std::size_t rf = 1;
    std::size_t jump = 1;
    for (const auto& l : layers) {
        if (l.kernel == 0 || l.stride == 0 || l.dilation == 0) throw Error("receptive_field: entries must be >= 1");
        rf += (l.kernel - 1) * l.dilation * jump;
        jump *= l.stride;
    }
    return rf;
}

std::vector<RfLayer> rf_layers(const std::vector<LayerDesc>& layers) {
    std::vector<RfLayer> out;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::Conv) out.push_back({l.kernel, 1, l.dilation});
        else if (l.kind == LayerKind::MaxPool) out.push_back({l.kernel, l.stride, 1});
    }
    return out;
}

}  // namespace mdc
