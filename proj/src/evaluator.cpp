#include "mdc/evaluator.hpp"

#include <cstdio>
#include <sstream>

#include "mdc/tensor.hpp"

namespace mdc {

std::uint64_t ConfusionMatrix::row_total(std::size_t gt) const {
    std::uint64_t sum = unassigned_[gt];
    for (std::size_t p = 0; p < n_; ++p) sum += counts_[gt * n_ + p];
    return sum;
}

std::uint64_t ConfusionMatrix::col_total(std::size_t pred) const {
    std::uint64_t sum = 0;
    for (std::size_t g = 0; g < n_; ++g) sum += counts_[g * n_ + pred];
    return sum;
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t sum = 0;
    for (auto c : counts_) sum += c;
    for (auto c : unassigned_) sum += c;
    return sum;
}

void ConfusionMatrix::add(std::size_t gt, std::size_t pred, std::uint64_t count) {
    if (gt >= n_ || pred >= n_) throw Error("ConfusionMatrix: label out of range");
    counts_[gt * n_ + pred] += count;
}

void ConfusionMatrix::add_unassigned(std::size_t gt, std::uint64_t count) {
    if (gt >= n_) throw Error("ConfusionMatrix: label out of range");
    unassigned_[gt] += count;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.n_ != n_) throw Error("ConfusionMatrix: size mismatch in merge");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    for (std::size_t i = 0; i < n_; ++i) unassigned_[i] += other.unassigned_[i];
    return *this;
}

void accumulate(ConfusionMatrix& cm, const LabelMap& gt, const LabelMap& pred, bool allow_ignored_pred) {
    if (gt.height != pred.height || gt.width != pred.width || gt.size() != pred.size()) {
        throw Error("accumulate: ground truth and prediction differ in shape");
    }
    for (std::size_t p = 0; p < gt.size(); ++p) {
        const std::uint8_t g = gt.labels[p];
        const std::uint8_t q = pred.labels[p];
        if (q == kIgnoreLabel && !allow_ignored_pred) throw Error("accumulate: prediction contains IGNORE");
        if (g == kIgnoreLabel) continue;
        if (q == kIgnoreLabel) cm.add_unassigned(g);
        else cm.add(g, q);
    }
}

std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm) {
    std::vector<std::optional<double>> iou(cm.num_labels());
    for (std::size_t c = 0; c < cm.num_labels(); ++c) {
        const std::uint64_t tp = cm(c, c);
        const std::uint64_t denom = cm.row_total(c) + cm.col_total(c) - tp;
        if (denom > 0) iou[c] = static_cast<double>(tp) / static_cast<double>(denom);
    }
    return iou;
}

double miou(const ConfusionMatrix& cm) {
    double sum = 0.0;
    std::size_t defined = 0;
    for (const auto& v : per_class_iou(cm)) {
        if (v) {
            sum += *v;
            ++defined;
        }
    }
    return defined ? sum / static_cast<double>(defined) : 0.0;
}

PrecisionRecall localization_pr(const BoolMap& predicted, const BoolMap& gt_foreground) {
    if (predicted.height != gt_foreground.height || predicted.width != gt_foreground.width) {
        throw Error("localization_pr: shape mismatch");
    }
    std::size_t tp = 0, pred = 0, gt = 0;
    for (std::size_t p = 0; p < predicted.size(); ++p) {
        pred += predicted[p];
        gt += gt_foreground[p];
        tp += predicted[p] && gt_foreground[p];
    }
    PrecisionRecall pr;
    pr.precision = pred ? static_cast<double>(tp) / static_cast<double>(pred) : 1.0;
    pr.recall = gt ? static_cast<double>(tp) / static_cast<double>(gt) : 1.0;
    return pr;
}

namespace {

std::string label_name(const std::vector<std::string>& names, std::size_t c) {
    return c < names.size() ? names[c] : "class" + std::to_string(c);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

std::string format_metrics_table(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    std::ostringstream os;
    const auto iou = per_class_iou(cm);
    for (std::size_t c = 0; c < iou.size(); ++c) {
        std::string name = label_name(class_names, c);
        name.resize(std::max<std::size_t>(name.size(), 12), ' ');
        os << name << ' ' << (iou[c] ? fmt(*iou[c]) : std::string("absent")) << '\n';
    }
    os << "mIoU=" << fmt(miou(cm)) << '\n';
    return os.str();
}

std::string format_metrics_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    std::ostringstream os;
    os << "class,iou\n";
    const auto iou = per_class_iou(cm);
    for (std::size_t c = 0; c < iou.size(); ++c) {
        os << label_name(class_names, c) << ',' << (iou[c] ? fmt(*iou[c]) : std::string()) << '\n';
    }
    os << "mIoU," << fmt(miou(cm)) << '\n';
    return os.str();
}

}  // namespace mdc
