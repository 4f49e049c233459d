#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mdc/label_map.hpp"

namespace mdc {

/// (C+1)x(C+1) pixel counts, rows = ground truth, columns = prediction.
///
/// Ground-truth IGNORE pixels are never counted. A predicted IGNORE on a
/// labeled pixel (pseudo masks only) is tallied in `unassigned` and counts as
/// a miss for the ground-truth class.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t num_labels = 0)
        : n_(num_labels), counts_(num_labels * num_labels, 0), unassigned_(num_labels, 0) {}

    std::size_t num_labels() const { return n_; }
    std::uint64_t operator()(std::size_t gt, std::size_t pred) const { return counts_[gt * n_ + pred]; }
    std::uint64_t unassigned(std::size_t gt) const { return unassigned_[gt]; }
    std::uint64_t row_total(std::size_t gt) const;
    std::uint64_t col_total(std::size_t pred) const;
    std::uint64_t total() const;

    void add(std::size_t gt, std::size_t pred, std::uint64_t count = 1);
    void add_unassigned(std::size_t gt, std::uint64_t count = 1);
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t n_;
    std::vector<std::uint64_t> counts_;
    std::vector<std::uint64_t> unassigned_;
};

/// Adds one image. `pred` must not contain IGNORE unless allow_ignored_pred.
void accumulate(ConfusionMatrix& cm, const LabelMap& gt, const LabelMap& pred, bool allow_ignored_pred = false);

/// IoU per label; std::nullopt where the denominator is zero (label absent).
std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm);

/// Mean over labels with a defined IoU; 0 if none is defined.
double miou(const ConfusionMatrix& cm);

struct PrecisionRecall {
    double precision = 1.0;
    double recall = 1.0;
};

/// Empty prediction has precision 1.0; empty ground truth has recall 1.0.
PrecisionRecall localization_pr(const BoolMap& predicted, const BoolMap& gt_foreground);

/// "name IoU" table plus a trailing `mIoU=<value>` line.
std::string format_metrics_table(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);
std::string format_metrics_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);

}  // namespace mdc
