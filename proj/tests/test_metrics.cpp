#include <gtest/gtest.h>

#include "dirl/metrics.hpp"
#include "test_util.hpp"

using namespace dirl;
using testutil::random_tensor;

namespace {

Tensor<double> random_binary(Shape s, Rng& rng, double p = 0.5) {
    Tensor<double> t(s);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform() < p ? 1.0 : 0.0;
    return t;
}

// Exhaustive sweep: recount the confusion at every one of the 256 thresholds.
double ap_oracle(const Tensor<double>& pred, const Tensor<double>& gt) {
    std::int64_t positives = 0;
    for (std::int64_t i = 0; i < gt.numel(); ++i) positives += gt[i] == 1.0;
    double ap = 0, prev_recall = 0;
    for (int level = 255; level >= 0; --level) {
        const double thr = static_cast<double>(level) / 255.0;
        std::int64_t tp = 0, predicted = 0;
        for (std::int64_t i = 0; i < pred.numel(); ++i) {
            if (pred[i] >= thr) {
                ++predicted;
                tp += gt[i] == 1.0;
            }
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        const double precision = predicted == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(predicted);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

TEST(Confusion, AgreementAndInversion) {
    Rng rng(71);
    Tensor<double> gt = random_binary(Shape{1, 1, 8, 8}, rng);
    for (double thr : {0.25, 0.5, 0.75}) {
        const auto c = confusion(gt, gt, thr);
        EXPECT_EQ(c.fp, 0);
        EXPECT_EQ(c.fn, 0);
        EXPECT_EQ(c.total(), 64);
    }
    Tensor<double> inv(gt.shape());
    for (std::int64_t i = 0; i < 64; ++i) inv[i] = 1.0 - gt[i];
    const auto c = confusion(inv, gt, 0.5);
    EXPECT_EQ(c.tp, 0);
    EXPECT_EQ(c.tn, 0);
}

TEST(Confusion, MatchesPixelLoopOracle) {
    Rng rng(72);
    Tensor<double> pred = random_tensor(Shape{1, 1, 8, 8}, rng, 0.0, 1.0);
    Tensor<double> gt = random_binary(Shape{1, 1, 8, 8}, rng, 0.35);
    const auto c = confusion(pred, gt, 0.5);
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::int64_t i = 0; i < 64; ++i) {
        const bool p = pred[i] >= 0.5, g = gt[i] == 1.0;
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
        tn += !p && !g;
    }
    EXPECT_EQ(c.tp, tp);
    EXPECT_EQ(c.fp, fp);
    EXPECT_EQ(c.fn, fn);
    EXPECT_EQ(c.tn, tn);
    Tensor<double> soft_gt(gt.shape(), 0.5);
    EXPECT_THROW(confusion(pred, soft_gt, 0.5), ValueError);
}

TEST(AveragePrecision, PerfectPredictionScoresOne) {
    Rng rng(73);
    Tensor<double> gt = random_binary(Shape{1, 1, 8, 8}, rng, 0.4);
    gt[0] = 1.0;  // ensure nonempty
    EXPECT_NEAR(average_precision(gt, gt), 1.0, 1e-12);
}

TEST(AveragePrecision, ConstantPredictorScoresPrevalence) {
    Tensor<double> gt(Shape{1, 1, 4, 4});
    for (std::int64_t i = 0; i < 8; ++i) gt[i] = 1.0;
    Tensor<double> uniform(gt.shape(), 0.5);
    EXPECT_NEAR(average_precision(uniform, gt), 0.5, 1e-12);
    Tensor<double> gt2(Shape{1, 1, 4, 4});
    gt2[3] = 1.0;
    EXPECT_NEAR(average_precision(uniform, gt2), 1.0 / 16.0, 1e-12);
}

TEST(AveragePrecision, MatchesExhaustiveThresholdOracle) {
    Rng rng(74);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor<double> pred = random_tensor(Shape{1, 1, 8, 8}, rng, 0.0, 1.0);
        Tensor<double> gt = random_binary(Shape{1, 1, 8, 8}, rng, rng.uniform(0.1, 0.9));
        bool nonempty = false;
        for (std::int64_t i = 0; i < 64; ++i) nonempty = nonempty || gt[i] == 1.0;
        if (!nonempty) gt[17] = 1.0;
        EXPECT_NEAR(average_precision(pred, gt), ap_oracle(pred, gt), 1e-12) << "trial " << trial;
    }
}

TEST(AveragePrecision, EmptyGroundTruthRejected) {
    Tensor<double> pred(Shape{1, 1, 4, 4}, 0.3);
    Tensor<double> gt(Shape{1, 1, 4, 4});
    EXPECT_THROW(average_precision(pred, gt), EmptyGroundTruth);
}

TEST(FMeasure, SpecExamples) {
    Rng rng(75);
    Tensor<double> gt = random_binary(Shape{1, 1, 8, 8}, rng, 0.4);
    gt[0] = 1.0;
    EXPECT_DOUBLE_EQ(f_measure(gt, gt), 1.0);
    Tensor<double> none(gt.shape(), 0.0);
    EXPECT_DOUBLE_EQ(f_measure(none, gt), 0.0);

    // tp=2 fp=1 fn=1: P = R = 2/3, F1 = 2/3, IoU = 1/2
    Tensor<double> g(Shape{1, 1, 2, 2}, std::vector<double>{1, 1, 1, 0});
    Tensor<double> p(Shape{1, 1, 2, 2}, std::vector<double>{1, 1, 0, 1});
    EXPECT_NEAR(f_measure(p, g), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(iou(p, g), 0.5, 1e-12);
}

TEST(IouMetric, SpecExamples) {
    Rng rng(76);
    Tensor<double> gt = random_binary(Shape{1, 1, 8, 8}, rng, 0.4);
    gt[0] = 1.0;
    EXPECT_DOUBLE_EQ(iou(gt, gt), 1.0);
    // disjoint equal-area regions
    Tensor<double> a(Shape{1, 1, 2, 2}, std::vector<double>{1, 0, 0, 0});
    Tensor<double> b(Shape{1, 1, 2, 2}, std::vector<double>{0, 1, 0, 0});
    EXPECT_DOUBLE_EQ(iou(a, b), 0.0);
    // both empty scores 1 by convention, pred-only-positive scores 0
    Tensor<double> empty(Shape{1, 1, 2, 2});
    EXPECT_DOUBLE_EQ(iou(empty, empty), 1.0);
    EXPECT_DOUBLE_EQ(f_measure(empty, empty), 1.0);
    EXPECT_DOUBLE_EQ(iou(a, empty), 0.0);
    EXPECT_DOUBLE_EQ(f_measure(a, empty), 0.0);
}

TEST(MetricIdentities, F1FromIouExactly) {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor<double> pred = random_tensor(Shape{1, 1, 8, 8}, rng, 0.0, 1.0);
        Tensor<double> gt = random_binary(Shape{1, 1, 8, 8}, rng, rng.uniform(0.1, 0.9));
        gt[trial % 64] = 1.0;
        const double f1 = f_measure(pred, gt);
        const double ji = iou(pred, gt);
        EXPECT_NEAR(f1, 2.0 * ji / (1.0 + ji), 1e-12);
        EXPECT_GE(f1, ji - 1e-15);
        EXPECT_GE(ji, 0.0);
        EXPECT_LE(f1, 1.0);
    }
}

// Quantized predictions shifted by a strictly monotone grid map that keeps
// every 0.5 decision give identical metrics.
TEST(MetricIdentities, MonotoneRescalingInvariance) {
    Rng rng(78);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor<double> pred(Shape{1, 1, 8, 8});
        for (std::int64_t i = 0; i < 64; ++i)
            pred[i] = static_cast<double>(2 * rng.uniform_int(0, 127)) / 255.0;  // even grid levels
        Tensor<double> gt = random_binary(Shape{1, 1, 8, 8}, rng, 0.4);
        gt[5] = 1.0;
        Tensor<double> shifted(pred.shape());
        for (std::int64_t i = 0; i < 64; ++i)
            shifted[i] = (pred[i] * 255.0 + 1.0) / 255.0;  // k -> k+1, order preserved, 0.5 side preserved
        EXPECT_NEAR(average_precision(pred, gt), average_precision(shifted, gt), 1e-12);
        EXPECT_DOUBLE_EQ(f_measure(pred, gt), f_measure(shifted, gt));
        EXPECT_DOUBLE_EQ(iou(pred, gt), iou(shifted, gt));
    }
}

TEST(EvaluateDataset, MeansAndInvariance) {
    Rng rng(79);
    Tensor<double> gt1 = random_binary(Shape{1, 1, 4, 4}, rng, 0.5);
    gt1[2] = 1.0;
    Tensor<double> inv(gt1.shape());
    for (std::int64_t i = 0; i < 16; ++i) inv[i] = 1.0 - gt1[i];
    bool inv_nonempty = false;
    for (std::int64_t i = 0; i < 16; ++i) inv_nonempty = inv_nonempty || gt1[i] == 0.0;
    ASSERT_TRUE(inv_nonempty);

    // image 1: perfect (IoU 1); image 2: inverted (IoU 0)
    auto report = evaluate_dataset<double>({gt1, inv}, {gt1, gt1});
    EXPECT_NEAR(report.iou, 0.5, 1e-12);
    EXPECT_EQ(report.per_image.size(), 2u);
    EXPECT_DOUBLE_EQ(report.per_image[0][2], 1.0);
    EXPECT_DOUBLE_EQ(report.per_image[1][2], 0.0);

    auto single = evaluate_dataset<double>({gt1}, {gt1});
    EXPECT_DOUBLE_EQ(single.ap, single.per_image[0][0]);
    EXPECT_DOUBLE_EQ(single.f1, single.per_image[0][1]);

    // permutation invariance of the averages
    std::vector<Tensor<double>> preds, gts;
    for (int i = 0; i < 5; ++i) {
        preds.push_back(random_tensor(Shape{1, 1, 8, 8}, rng, 0.0, 1.0));
        Tensor<double> g = random_binary(Shape{1, 1, 8, 8}, rng, 0.4);
        g[static_cast<std::int64_t>(i)] = 1.0;
        gts.push_back(g);
    }
    auto r1 = evaluate_dataset(preds, gts);
    std::vector<Tensor<double>> preds2{preds[3], preds[1], preds[4], preds[0], preds[2]};
    std::vector<Tensor<double>> gts2{gts[3], gts[1], gts[4], gts[0], gts[2]};
    auto r2 = evaluate_dataset(preds2, gts2);
    EXPECT_NEAR(r1.ap, r2.ap, 1e-12);
    EXPECT_NEAR(r1.f1, r2.f1, 1e-12);
    EXPECT_NEAR(r1.iou, r2.iou, 1e-12);

    // oracle recomputation of the mean
    double mean_ap = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) mean_ap += ap_oracle(preds[i], gts[i]);
    EXPECT_NEAR(r1.ap, mean_ap / 5.0, 1e-12);
}

TEST(EvaluateDataset, LengthErrors) {
    Tensor<double> t(Shape{1, 1, 2, 2}, 1.0);
    EXPECT_THROW(evaluate_dataset<double>({t}, {t, t}), LengthError);
    EXPECT_THROW(evaluate_dataset<double>({}, {}), LengthError);
}

}  // namespace
