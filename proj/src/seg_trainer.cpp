#include "mdc/seg_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mdc {

void FcnSpec::validate() const {
    if (in_channels == 0 || num_classes == 0) throw Error("FcnSpec: channels and classes must be positive");
    if (num_outputs() >= kIgnoreLabel) throw Error("FcnSpec: too many classes for 8-bit masks");
    Sequential("backbone", in_channels, backbone);
}

ConvSpec FcnModel::classifier_spec() const { return same_conv(backbone().out_channels(), spec.num_outputs(), 1, 1); }

FcnModel build_fcn(const FcnSpec& spec, std::uint64_t seed) {
    spec.validate();
    FcnModel model{spec, {}};
    Rng rng(seed);
    model.backbone().init_params(model.params, rng);
    const ConvSpec cls = model.classifier_spec();
    Tensor w({cls.out_channels, cls.in_channels, 1, 1});
    init_he(w, rng);
    model.params["classifier.w"] = std::move(w);
    model.params["classifier.b"] = Tensor({cls.out_channels});
    return model;
}

SegForward forward_seg(const FcnModel& model, const Tensor& batch, bool keep_cache) {
    if (batch.rank() != 4 || batch.dim(1) != model.spec.in_channels) {
        throw Error("forward_seg: expected [N," + std::to_string(model.spec.in_channels) + ",H,W], got " +
                    shape_string(batch.shape()));
    }
    SegForward fwd;
    fwd.features = model.backbone().forward(model.params, batch, keep_cache ? &fwd.backbone_cache : nullptr);
    fwd.coarse_logits =
        conv2d(fwd.features, model.params.at("classifier.w"), model.params.at("classifier.b"), model.classifier_spec());
    fwd.logits = upsample_bilinear(fwd.coarse_logits, batch.dim(2), batch.dim(3));
    return fwd;
}

ParamMap seg_backward(const FcnModel& model, const SegForward& fwd, const Tensor& logit_grad) {
    if (fwd.backbone_cache.inputs.empty()) throw Error("seg_backward: forward pass was run without cache");
    ParamMap grads;
    Tensor g_coarse = upsample_bilinear_backward(logit_grad, fwd.coarse_logits.shape());
    auto cg = conv2d_backward(g_coarse, fwd.features, model.params.at("classifier.w"), model.classifier_spec());
    accumulate_grad(grads, "classifier.w", cg.weights);
    accumulate_grad(grads, "classifier.b", cg.bias);
    model.backbone().backward(model.params, fwd.backbone_cache, cg.input, grads, true);
    return grads;
}

namespace {

// Restricted argmax over `allowed` channel ids (ascending) for one image.
LabelMap restricted_argmax(const float* scores, std::size_t channels, std::size_t height, std::size_t width,
                           const std::vector<std::size_t>& allowed, double min_prob) {
    const std::size_t spatial = height * width;
    LabelMap mask(height, width, kBackgroundLabel);
    for (std::size_t p = 0; p < spatial; ++p) {
        std::size_t best = allowed.front();
        float best_v = scores[best * spatial + p];
        for (std::size_t c : allowed) {
            const float v = scores[c * spatial + p];
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        mask.labels[p] = static_cast<std::uint8_t>(best);
        if (min_prob > 0.0) {
            float mx = scores[p];
            for (std::size_t c = 1; c < channels; ++c) mx = std::max(mx, scores[c * spatial + p]);
            double sum = 0.0;
            for (std::size_t c = 0; c < channels; ++c) sum += std::exp(static_cast<double>(scores[c * spatial + p] - mx));
            const double prob = std::exp(static_cast<double>(best_v - mx)) / sum;
            if (prob < min_prob) mask.labels[p] = kIgnoreLabel;
        }
    }
    return mask;
}

std::vector<std::size_t> allowed_channels(const std::set<int>& labels, std::size_t channels) {
    std::vector<std::size_t> allowed{0};
    for (int c : labels) {
        if (c < 1 || static_cast<std::size_t>(c) >= channels) {
            throw Error("infer_online_mask: label " + std::to_string(c) + " outside 1.." + std::to_string(channels - 1));
        }
        allowed.push_back(static_cast<std::size_t>(c));
    }
    return allowed;
}

std::vector<std::uint8_t> stack_masks(const std::vector<const LabelMap*>& masks, std::size_t spatial) {
    std::vector<std::uint8_t> out;
    out.reserve(masks.size() * spatial);
    for (const auto* m : masks) {
        if (!m || m->size() != spatial) throw Error("loss: mask size does not match logits");
        out.insert(out.end(), m->labels.begin(), m->labels.end());
    }
    return out;
}

}  // namespace

LabelMap infer_online_mask(const Tensor& scores, const std::set<int>& labels, double min_prob) {
    if (scores.rank() != 4 || scores.dim(0) != 1) throw Error("infer_online_mask: expected [1,C+1,H,W]");
    return restricted_argmax(scores.raw(), scores.dim(1), scores.dim(2), scores.dim(3),
                             allowed_channels(labels, scores.dim(1)), min_prob);
}

LabelMap argmax_mask(const Tensor& scores) {
    if (scores.rank() != 4 || scores.dim(0) != 1) throw Error("argmax_mask: expected [1,C+1,H,W]");
    std::vector<std::size_t> all(scores.dim(1));
    std::iota(all.begin(), all.end(), 0);
    return restricted_argmax(scores.raw(), scores.dim(1), scores.dim(2), scores.dim(3), all, 0.0);
}

LabelMap predict_mask(const FcnModel& model, const Image& image) {
    return argmax_mask(forward_seg(model, image_to_tensor(image)).logits);
}

SegLoss weak_loss_with_online(const Tensor& logits, const std::vector<const LabelMap*>& pseudo_masks,
                              const std::vector<LabelMap>& online_masks) {
    if (logits.rank() != 4 || pseudo_masks.size() != logits.dim(0) || online_masks.size() != logits.dim(0)) {
        throw Error("weak_loss: one pseudo mask and one online mask per image required");
    }
    const std::size_t spatial = logits.dim(2) * logits.dim(3);
    std::vector<const LabelMap*> online_ptrs;
    for (const auto& m : online_masks) online_ptrs.push_back(&m);
    const auto target_w = stack_masks(pseudo_masks, spatial);
    const auto target_o = stack_masks(online_ptrs, spatial);
    auto a = pixel_softmax_ce_ignored(logits, std::span<const std::uint8_t>(target_w));
    auto b = pixel_softmax_ce_ignored(logits, std::span<const std::uint8_t>(target_o));
    SegLoss out;
    out.value = static_cast<double>(a.value) + static_cast<double>(b.value);
    out.logit_grad = std::move(a.grad);
    for (std::size_t i = 0; i < out.logit_grad.size(); ++i) out.logit_grad[i] += b.grad[i];
    out.online_masks = online_masks;
    return out;
}

SegLoss weak_loss_from_logits(const Tensor& logits, const std::vector<const LabelMap*>& pseudo_masks,
                              const std::vector<std::set<int>>& labels, double min_prob) {
    if (logits.rank() != 4 || labels.size() != logits.dim(0)) throw Error("weak_loss: one label set per image required");
    const std::size_t channels = logits.dim(1);
    const std::size_t spatial = logits.dim(2) * logits.dim(3);
    std::vector<LabelMap> online;
    for (std::size_t n = 0; n < logits.dim(0); ++n) {
        if (labels[n].empty()) throw Error("weak_loss: empty image label set");
        // The online mask is built from a detached copy: no gradient flows through it.
        online.push_back(restricted_argmax(logits.raw() + n * channels * spatial, channels, logits.dim(2),
                                           logits.dim(3), allowed_channels(labels[n], channels), min_prob));
    }
    return weak_loss_with_online(logits, pseudo_masks, online);
}

SegLoss strong_loss_from_logits(const Tensor& logits, const std::vector<const LabelMap*>& masks) {
    if (logits.rank() != 4 || masks.size() != logits.dim(0)) throw Error("strong_loss: one mask per image required");
    const auto target = stack_masks(masks, logits.dim(2) * logits.dim(3));
    auto r = pixel_softmax_ce_ignored(logits, std::span<const std::uint8_t>(target));
    return {static_cast<double>(r.value), std::move(r.grad), {}};
}

namespace {

Tensor batch_of(const std::vector<const Image*>& images) { return images_to_batch(images); }

void add_grads(ParamMap& into, const ParamMap& from) {
    for (const auto& [name, g] : from) accumulate_grad(into, name, g);
}

}  // namespace

LossAndGrads weak_loss(const FcnModel& model, const std::vector<WeakItem>& batch, double min_prob) {
    if (batch.empty()) return {};
    std::vector<const Image*> images;
    std::vector<const LabelMap*> masks;
    std::vector<std::set<int>> labels;
    for (const auto& item : batch) {
        images.push_back(item.image);
        masks.push_back(item.pseudo_mask);
        labels.push_back(item.labels);
    }
    SegForward fwd = forward_seg(model, batch_of(images), true);
    SegLoss loss = weak_loss_from_logits(fwd.logits, masks, labels, min_prob);
    return {loss.value, seg_backward(model, fwd, loss.logit_grad)};
}

LossAndGrads strong_loss(const FcnModel& model, const std::vector<StrongItem>& batch) {
    if (batch.empty()) return {};
    std::vector<const Image*> images;
    std::vector<const LabelMap*> masks;
    for (const auto& item : batch) {
        images.push_back(item.image);
        masks.push_back(item.mask);
    }
    SegForward fwd = forward_seg(model, batch_of(images), true);
    SegLoss loss = strong_loss_from_logits(fwd.logits, masks);
    return {loss.value, seg_backward(model, fwd, loss.logit_grad)};
}

LossAndGrads semi_objective(const FcnModel& model, const std::vector<WeakItem>& weak,
                            const std::vector<StrongItem>& strong, double min_prob) {
    LossAndGrads total = weak_loss(model, weak, min_prob);
    if (!strong.empty()) {
        LossAndGrads s = strong_loss(model, strong);
        total.value += s.value;
        add_grads(total.grads, s.grads);
    }
    return total;
}

std::vector<EpochLog> train_seg(FcnModel& model, SegMode mode, const std::vector<WeakItem>& weak,
                                const std::vector<StrongItem>& strong, const SegTrainConfig& config,
                                const EpochCallback& on_epoch) {
    if (weak.empty()) throw Error("train_seg: empty weak set");
    if (mode == SegMode::Semi && strong.empty()) throw Error("train_seg: semi mode needs a non-empty strong set");
    if (config.batch == 0) throw Error("train_seg: batch size must be positive");
    Rng weak_rng(derive_seed(config.seed, 0x5E6));
    Rng strong_rng(derive_seed(config.seed, 0x5E7));
    ParamMap velocity;
    for (const auto& [name, p] : model.params) velocity.emplace(name, Tensor(p.shape()));

    std::vector<std::size_t> order(weak.size());
    std::vector<std::size_t> strong_order(strong.size());
    std::iota(strong_order.begin(), strong_order.end(), 0);
    strong_rng.shuffle(strong_order.begin(), strong_order.end());
    std::size_t strong_cursor = 0;

    std::vector<EpochLog> log;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        weak_rng.shuffle(order.begin(), order.end());
        SgdConfig sgd{step_learning_rate(config.lr, config.lr_decay_epoch, epoch), config.momentum,
                      config.weight_decay};
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch) {
            const std::size_t end = std::min(order.size(), start + config.batch);
            std::vector<WeakItem> wb;
            for (std::size_t i = start; i < end; ++i) wb.push_back(weak[order[i]]);
            std::vector<StrongItem> sb;
            if (mode == SegMode::Semi) {
                for (std::size_t i = 0; i < end - start; ++i) {
                    if (strong_cursor == strong_order.size()) {
                        strong_rng.shuffle(strong_order.begin(), strong_order.end());
                        strong_cursor = 0;
                    }
                    sb.push_back(strong[strong_order[strong_cursor++]]);
                }
            }
            LossAndGrads step = semi_objective(model, wb, sb, config.online_min_prob);
            if (!std::isfinite(step.value)) {
                throw Error("train_seg: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                            std::to_string(steps));
            }
            for (auto& [name, p] : model.params) {
                auto g = step.grads.find(name);
                if (g == step.grads.end()) continue;
                sgd_step<float>(p.data(), g->second.data(), velocity.at(name).data(), sgd);
            }
            loss_sum += step.value;
            ++steps;
        }
        EpochLog entry{epoch, sgd.lr, loss_sum / static_cast<double>(steps)};
        log.push_back(entry);
        if (on_epoch) on_epoch(entry);
    }
    return log;
}

ConfusionMatrix evaluate_segmentation(const FcnModel& model, const std::vector<const Image*>& images,
                                      const std::vector<const LabelMap*>& gts) {
    if (images.size() != gts.size()) throw Error("evaluate_segmentation: image/mask count mismatch");
    ConfusionMatrix cm(model.spec.num_outputs());
    for (std::size_t i = 0; i < images.size(); ++i) accumulate(cm, *gts[i], predict_mask(model, *images[i]));
    return cm;
}

}  // namespace mdc
