#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "mdc/evaluator.hpp"
#include "mdc/image_io.hpp"
#include "mdc/label_map.hpp"
#include "mdc/layers.hpp"
#include "mdc/mdc_classifier.hpp"

namespace mdc {

/// Backbone + 1x1 classifier to C+1 channels, bilinearly upsampled back to
/// the input resolution.
struct FcnSpec {
    std::size_t in_channels = 3;
    std::vector<LayerDesc> backbone;
    std::size_t num_classes = 5;  // object classes; logits carry num_classes + 1 channels

    void validate() const;
    std::size_t num_outputs() const { return num_classes + 1; }
};

struct FcnModel {
    FcnSpec spec;
    ParamMap params;

    Sequential backbone() const { return Sequential("backbone", spec.in_channels, spec.backbone); }
    ConvSpec classifier_spec() const;
    std::size_t output_stride() const { return backbone().output_stride(); }
};

FcnModel build_fcn(const FcnSpec& spec, std::uint64_t seed);

struct SegForward {
    Tensor features;
    Tensor coarse_logits;
    Tensor logits;  // [N, C+1, H, W]
    SequentialCache backbone_cache;
};

SegForward forward_seg(const FcnModel& model, const Tensor& batch, bool keep_cache = false);

/// Parameter gradients given d(loss)/d(logits).
ParamMap seg_backward(const FcnModel& model, const SegForward& fwd, const Tensor& logit_grad);

/// Per-pixel argmax over {0} and `labels`, ties to the lowest id.
/// With min_prob > 0, pixels whose winning softmax probability is below it
/// become IGNORE. `scores` are the logits of one image; the floor applies to their softmax.
LabelMap infer_online_mask(const Tensor& scores, const std::set<int>& labels, double min_prob = 0.0);

/// Unrestricted argmax over all C+1 channels; never IGNORE.
LabelMap argmax_mask(const Tensor& scores);
LabelMap predict_mask(const FcnModel& model, const Image& image);

struct WeakItem {
    const Image* image = nullptr;
    const LabelMap* pseudo_mask = nullptr;
    std::set<int> labels;
};

struct StrongItem {
    const Image* image = nullptr;
    const LabelMap* mask = nullptr;
};

struct SegLoss {
    double value = 0.0;
    Tensor logit_grad;
    std::vector<LabelMap> online_masks;
};

/// Weak objective on precomputed logits: CE(f, M_w) + CE(f, M^_w), each
/// averaged over the batch, where M^_w is the label-restricted argmax of a
/// stop-gradient copy of the logits.
SegLoss weak_loss_from_logits(const Tensor& logits, const std::vector<const LabelMap*>& pseudo_masks,
                              const std::vector<std::set<int>>& labels, double min_prob = 0.0);

/// Same, with the online masks supplied by the caller.
SegLoss weak_loss_with_online(const Tensor& logits, const std::vector<const LabelMap*>& pseudo_masks,
                              const std::vector<LabelMap>& online_masks);

SegLoss strong_loss_from_logits(const Tensor& logits, const std::vector<const LabelMap*>& masks);

struct LossAndGrads {
    double value = 0.0;
    ParamMap grads;
};

LossAndGrads weak_loss(const FcnModel& model, const std::vector<WeakItem>& batch, double min_prob = 0.0);
LossAndGrads strong_loss(const FcnModel& model, const std::vector<StrongItem>& batch);

/// Sum of the weak objective on `weak` and the strong objective on `strong`
/// (either may be empty) with gradients summed likewise.
LossAndGrads semi_objective(const FcnModel& model, const std::vector<WeakItem>& weak,
                            const std::vector<StrongItem>& strong, double min_prob = 0.0);

enum class SegMode { Weak, Semi };

struct SegTrainConfig {
    std::size_t epochs = 6;
    double lr = 0.02;
    std::size_t lr_decay_epoch = 4;
    std::size_t batch = 16;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double online_min_prob = 0.0;
    std::uint64_t seed = 1;
};

/// An epoch walks the weak set once; in semi mode every step also draws a
/// strong mini-batch of the same size (cycling through the strong set).
std::vector<EpochLog> train_seg(FcnModel& model, SegMode mode, const std::vector<WeakItem>& weak,
                                const std::vector<StrongItem>& strong, const SegTrainConfig& config,
                                const EpochCallback& on_epoch = {});

/// Confusion matrix of predict_mask against ground truth over a set of images.
ConfusionMatrix evaluate_segmentation(const FcnModel& model, const std::vector<const Image*>& images,
                                      const std::vector<const LabelMap*>& gts);

}  // namespace mdc
