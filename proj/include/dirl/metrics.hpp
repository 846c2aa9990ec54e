#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dirl/core_types.hpp"

namespace dirl {

struct ConfusionCounts {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::int64_t total() const { return tp + fp + fn + tn; }
};

namespace metrics_detail {

template <class T>
void require_binary(const Tensor<T>& gt) {
    for (std::int64_t i = 0; i < gt.numel(); ++i)
        if (gt[i] != T(0) && gt[i] != T(1)) throw ValueError("ground truth mask must be binary");
}

// Precision with the zero-prediction convention: no predicted positives means
// no false alarms, so precision is 1.
inline double precision_of(std::int64_t tp, std::int64_t predicted) {
    return predicted == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(predicted);
}

}  // namespace metrics_detail

// Binarize pred at threshold (>= is positive) and count agreement cells.
template <class T>
ConfusionCounts confusion(const Tensor<T>& pred, const Tensor<T>& gt, double threshold) {
    check_same_shape(pred, gt, "confusion");
    metrics_detail::require_binary(gt);
    ConfusionCounts c;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const bool p = static_cast<double>(pred[i]) >= threshold;
        const bool g = gt[i] == T(1);
        if (p && g)
            ++c.tp;
        else if (p && !g)
            ++c.fp;
        else if (!p && g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

// Average precision over the 256-level threshold sweep. Thresholds n/255 are
// walked from 1 down to 0 so recall is non-decreasing; each recall increment
// is weighted by the precision at the same threshold, starting from recall 0.
// The implementation sweeps a descending sort of the predictions; tests check
// it against a per-threshold recount.
template <class T>
double average_precision(const Tensor<T>& pred, const Tensor<T>& gt) {
    check_same_shape(pred, gt, "average_precision");
    metrics_detail::require_binary(gt);
    const std::int64_t n = pred.numel();
    std::int64_t positives = 0;
    for (std::int64_t i = 0; i < n; ++i) positives += gt[i] == T(1);
    if (positives == 0) throw EmptyGroundTruth("average_precision needs at least one positive pixel");

    // Sort pixels by prediction, descending, keeping their labels.
    std::vector<std::pair<double, bool>> px(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) px[static_cast<std::size_t>(i)] = {static_cast<double>(pred[i]), gt[i] == T(1)};
    std::sort(px.begin(), px.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    double ap = 0;
    double prev_recall = 0;
    std::size_t idx = 0;
    std::int64_t tp = 0, predicted = 0;
    for (int level = 255; level >= 0; --level) {
        const double threshold = static_cast<double>(level) / 255.0;
        while (idx < px.size() && px[idx].first >= threshold) {
            ++predicted;
            tp += px[idx].second;
            ++idx;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        ap += (recall - prev_recall) * metrics_detail::precision_of(tp, predicted);
        prev_recall = recall;
    }
    return ap;
}

// (1+B^2) P R / (B^2 P + R) at the given threshold. Degenerate cases follow
// the conventions: empty gt with empty prediction scores 1, a zero
// denominator scores 0.
template <class T>
double f_measure(const Tensor<T>& pred, const Tensor<T>& gt, double beta = 1.0, double threshold = 0.5) {
    const ConfusionCounts c = confusion(pred, gt, threshold);
    if (c.tp + c.fn == 0) return c.fp == 0 ? 1.0 : 0.0;
    const double p = metrics_detail::precision_of(c.tp, c.tp + c.fp);
    const double r = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    const double b2 = beta * beta;
    const double den = b2 * p + r;
    return den == 0 ? 0.0 : (1.0 + b2) * p * r / den;
}

// TP / (TP + FP + FN) at the given threshold; 1 when both masks are empty.
template <class T>
double iou(const Tensor<T>& pred, const Tensor<T>& gt, double threshold = 0.5) {
    const ConfusionCounts c = confusion(pred, gt, threshold);
    const std::int64_t den = c.tp + c.fp + c.fn;
    if (den == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(den);
}

// Per-image metrics then the arithmetic mean over images.
template <class T>
MetricReport evaluate_dataset(const std::vector<Tensor<T>>& preds, const std::vector<Tensor<T>>& gts,
                              double threshold = 0.5) {
    if (preds.size() != gts.size())
        throw LengthError("got " + std::to_string(preds.size()) + " predictions for " + std::to_string(gts.size()) +
                          " ground truths");
    if (preds.empty()) throw LengthError("empty evaluation set");
    MetricReport report;
    report.threshold = threshold;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double ap = average_precision(preds[i], gts[i]);
        const double f1 = f_measure(preds[i], gts[i], 1.0, threshold);
        const double ji = iou(preds[i], gts[i], threshold);
        report.per_image.push_back({ap, f1, ji});
        report.ap += ap;
        report.f1 += f1;
        report.iou += ji;
    }
    const double inv = 1.0 / static_cast<double>(preds.size());
    report.ap *= inv;
    report.f1 *= inv;
    report.iou *= inv;
    return report;
}

}  // namespace dirl
