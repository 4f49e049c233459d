#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include "mdc/image_io.hpp"
#include "mdc/label_map.hpp"
#include "mdc/layers.hpp"

namespace mdc {

/// Classification network with a shared backbone feeding parallel dilated
/// blocks. Block 0 must use dilation 1; the remaining blocks are the
/// dilated ones. Every block owns a GAP + fully-connected head.
struct MdcSpec {
    std::size_t in_channels = 3;
    std::vector<LayerDesc> backbone;
    std::vector<std::size_t> block_dilations{1, 3, 6, 9};
    std::size_t block_channels = 32;
    std::size_t block_depth = 1;
    std::size_t num_classes = 5;

    /// Throws on an invalid spec; returns human-readable warnings (duplicate rates).
    std::vector<std::string> validate() const;
    std::size_t num_blocks() const { return block_dilations.size(); }
    std::size_t num_dilated_blocks() const { return block_dilations.size() - 1; }
};

/// Four conv+ReLU stages with 2x2 max-pools after the first two (output stride 4).
std::vector<LayerDesc> default_backbone(const std::vector<std::size_t>& stage_channels);

struct MdcModel {
    MdcSpec spec;
    ParamMap params;

    Sequential backbone() const;
    Sequential block(std::size_t b) const;
    static std::string head_weight_name(std::size_t b) { return "block" + std::to_string(b) + ".fc.w"; }
    static std::string head_bias_name(std::size_t b) { return "block" + std::to_string(b) + ".fc.b"; }
};

MdcModel build_mdc(const MdcSpec& spec, std::uint64_t seed);

struct ClsForward {
    Tensor backbone_out;
    std::vector<Tensor> features;  // per block [N,K,h,w], post-ReLU
    std::vector<Tensor> pooled;    // per block [N,K]
    std::vector<Tensor> logits;    // per block [N,C]
    SequentialCache backbone_cache;
    std::vector<SequentialCache> block_caches;
};

ClsForward forward_cls(const MdcModel& model, const Tensor& batch, bool keep_cache = false);

/// Sum over blocks of the mean sigmoid cross-entropy of each block's logits.
LossResult<float> cls_loss(const std::vector<Tensor>& per_block_logits, const Tensor& labels,
                           std::vector<Tensor>* per_block_grads = nullptr);

/// Gradients of cls_loss with respect to every parameter.
ParamMap cls_backward(const MdcModel& model, const ClsForward& fwd, const std::vector<Tensor>& logit_grads);

/// Raw CAM sum_k W_b[c,k] F_k at feature resolution for one image ([1,...] forward).
LocalizationMap cam_at_feature_resolution(const MdcModel& model, const ClsForward& fwd, std::size_t block_index,
                                          std::size_t class_index);

/// Raw (unnormalized) CAM of `class_index` (0-based over the C object
/// classes) from block `block_index`, bilinearly upsampled to the image size.
/// The returned map's class_id is class_index + 1.
LocalizationMap compute_cam(const MdcModel& model, const Tensor& image, std::size_t block_index,
                            std::size_t class_index);

/// All blocks' raw CAMs for the listed classes (0-based) from one forward pass.
/// Result is indexed [block][k] for classes[k].
std::vector<std::vector<LocalizationMap>> compute_cams(const MdcModel& model, const Tensor& image,
                                                       const std::vector<std::size_t>& classes);

/// Converts 8-bit images into a normalized [N,3,H,W] batch (v/127.5 - 1).
Tensor images_to_batch(const std::vector<const Image*>& images);
Tensor image_to_tensor(const Image& image);

struct ClsTrainConfig {
    std::size_t epochs = 12;
    double lr = 0.02;
    std::size_t lr_decay_epoch = 8;
    std::size_t batch = 16;
    std::size_t crop = 0;  // 0 = full image
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 1;
};

/// Base rate until lr_decay_epoch, one tenth of it afterwards.
double step_learning_rate(double base_lr, std::size_t decay_epoch, std::size_t epoch);

struct ClsSample {
    const Image* image = nullptr;
    std::vector<int> labels;  // 1-based class ids
};

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch SGD on cls_loss. Throws if any loss or gradient becomes non-finite.
std::vector<EpochLog> train_classifier(MdcModel& model, const std::vector<ClsSample>& samples,
                                       const ClsTrainConfig& config, const EpochCallback& on_epoch = {});

/// Multi-hot prediction: mean of per-block sigmoid probabilities > 0.5.
std::vector<int> predict_labels(const MdcModel& model, const Image& image);

/// Fraction of samples whose predicted label set equals the true one exactly.
double exact_match_accuracy(const MdcModel& model, const std::vector<ClsSample>& samples);

/// One (kernel, stride, dilation) entry of a layer stack.
struct RfLayer {
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t dilation = 1;
};

/// r <- r + (k-1)*d*jump; jump <- jump*stride, starting at r = jump = 1.
std::size_t receptive_field(const std::vector<RfLayer>& layers);

/// Receptive-field entries of every spatial layer in a layer list.
std::vector<RfLayer> rf_layers(const std::vector<LayerDesc>& layers);

}  // namespace mdc
