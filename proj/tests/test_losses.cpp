#include <gtest/gtest.h>

#include "dirl/losses.hpp"
#include "test_util.hpp"

using namespace dirl;
using testutil::gradient_check;
using testutil::random_tensor;

namespace {

constexpr double kLn2 = 0.6931471805599453;

// Straight-line evaluation of the pixel BCE sum (batch-averaged).
double bce_oracle(const Tensor<double>& pred, const Tensor<double>& gt, double eps = 1e-7) {
    const Shape& s = pred.shape();
    const std::int64_t per = s.c * s.h * s.w;
    double total = 0;
    for (std::int64_t b = 0; b < s.n; ++b) {
        double img = 0;
        for (std::int64_t i = 0; i < per; ++i) {
            const double p = std::clamp(pred[b * per + i], eps, 1.0 - eps);
            const double t = gt[b * per + i];
            img -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
        }
        total += img;
    }
    return total / static_cast<double>(s.n);
}

TEST(BceLoss, HalfConfidenceIsLn2PerPixel) {
    Tensor<double> half(Shape{1, 1, 4, 4}, 0.5);
    const double loss = bce_loss(Var<double>(half), half).item();
    EXPECT_NEAR(loss, kLn2 * 16, 1e-9);
}

TEST(BceLoss, PerfectBinaryPredictionIsNearZero) {
    Tensor<double> gt(Shape{1, 1, 4, 4});
    for (std::int64_t i = 0; i < 16; ++i) gt[i] = i % 3 == 0 ? 1.0 : 0.0;
    const double loss = bce_loss(Var<double>(gt), gt).item();
    EXPECT_GE(loss, 0.0);
    EXPECT_LT(loss, 1e-5);  // 16 * -ln(1 - 1e-7)
}

TEST(BceLoss, MatchesScalarOracleOnRandomBatch) {
    Rng rng(51);
    Tensor<double> pred = random_tensor(Shape{3, 1, 2, 2}, rng, 0.05, 0.95);
    Tensor<double> gt = random_tensor(Shape{3, 1, 2, 2}, rng, 0.0, 1.0);
    EXPECT_NEAR(bce_loss(Var<double>(pred), gt).item(), bce_oracle(pred, gt), 1e-12);
    Tensor<double> mismatched(Shape{1, 1, 2, 2});
    EXPECT_THROW(bce_loss(Var<double>(pred), mismatched), ShapeError);
}

TEST(BceLoss, GradientMatchesFiniteDifferences) {
    Rng rng(52);
    Var<double> pred(random_tensor(Shape{1, 1, 4, 4}, rng, 0.1, 0.9), true);
    Tensor<double> gt = random_tensor(Shape{1, 1, 4, 4}, rng, 0.0, 1.0);
    EXPECT_LT(gradient_check([&] { return bce_loss(pred, gt); }, {pred}, rng, 1e-6), 1e-3);
}

TEST(BceLoss, StationaryAtSoftTarget) {
    Rng rng(53);
    Tensor<double> gt = random_tensor(Shape{1, 1, 4, 4}, rng, 0.15, 0.85);
    Var<double> pred(gt, true);
    auto loss = bce_loss(pred, gt);
    loss.backward();
    for (std::int64_t i = 0; i < 16; ++i) EXPECT_NEAR(pred.grad()[i], 0.0, 1e-9);
    // moving off the target increases the loss in both directions
    for (double step : {0.05, -0.05}) {
        Tensor<double> moved = gt;
        moved[7] += step;
        EXPECT_GT(bce_loss(Var<double>(moved), gt).item(), loss.item());
    }
}

// --- SSIM -------------------------------------------------------------------

// Independent windowed-SSIM evaluation with explicit loops.
double ssim_oracle(const Tensor<double>& x, const Tensor<double>& y, std::int64_t win, double sigma) {
    const Shape& s = x.shape();
    std::vector<double> w(static_cast<std::size_t>(win * win));
    if (sigma <= 0) {
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(win * win));
    } else {
        const double c = static_cast<double>(win - 1) / 2.0;
        double sum = 0;
        for (std::int64_t i = 0; i < win; ++i)
            for (std::int64_t j = 0; j < win; ++j) {
                const double v = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * sigma * sigma));
                w[static_cast<std::size_t>(i * win + j)] = v;
                sum += v;
            }
        for (auto& v : w) v /= sum;
    }
    const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    double acc = 0;
    std::int64_t count = 0;
    for (std::int64_t b = 0; b < s.n; ++b)
        for (std::int64_t oy = 0; oy + win <= s.h; ++oy)
            for (std::int64_t ox = 0; ox + win <= s.w; ++ox) {
                double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                for (std::int64_t i = 0; i < win; ++i)
                    for (std::int64_t j = 0; j < win; ++j) {
                        const double wv = w[static_cast<std::size_t>(i * win + j)];
                        const double xv = x.at(b, 0, oy + i, ox + j);
                        const double yv = y.at(b, 0, oy + i, ox + j);
                        mx += wv * xv;
                        my += wv * yv;
                        mxx += wv * xv * xv;
                        myy += wv * yv * yv;
                        mxy += wv * xv * yv;
                    }
                const double sxx = mxx - mx * mx, syy = myy - my * my, sxy = mxy - mx * my;
                acc += (2 * mx * my + C1) * (2 * sxy + C2) / ((mx * mx + my * my + C1) * (sxx + syy + C2));
                ++count;
            }
    return 1.0 - acc / static_cast<double>(count);
}

TEST(SsimLoss, IdenticalMasksScoreZero) {
    Rng rng(54);
    Tensor<double> m = random_tensor(Shape{1, 1, 8, 8}, rng, 0.0, 1.0);
    EXPECT_NEAR(ssim_loss(Var<double>(m), m, {5, 1.5}).item(), 0.0, 1e-12);
}

TEST(SsimLoss, ConstantMasksAnalyticCase) {
    const double c1 = 0.3, c2 = 0.8;
    Tensor<double> a(Shape{1, 1, 6, 6}, c1), b(Shape{1, 1, 6, 6}, c2);
    const double C1 = 1e-4;
    const double expected = 1.0 - (2 * c1 * c2 + C1) / (c1 * c1 + c2 * c2 + C1);
    EXPECT_NEAR(ssim_loss(Var<double>(a), b, {3, 1.5}).item(), expected, 1e-9);
    EXPECT_NEAR(ssim_loss(Var<double>(a), a, {3, 1.5}).item(), 0.0, 1e-12);
}

TEST(SsimLoss, InvertedHalfMaskSinglePatchClosedForm) {
    // one whole-image uniform patch; x = 1-y on a half-ones mask:
    // mu = 0.5 each, var = 0.25 each, cov = -0.25
    Tensor<double> gt(Shape{1, 1, 4, 4});
    for (std::int64_t i = 0; i < 8; ++i) gt[i] = 1.0;
    Tensor<double> pred(Shape{1, 1, 4, 4});
    for (std::int64_t i = 0; i < 16; ++i) pred[i] = 1.0 - gt[i];
    const double C1 = 1e-4, C2 = 9e-4;
    const double ssim = (2 * 0.25 + C1) * (2 * -0.25 + C2) / ((0.25 + 0.25 + C1) * (0.25 + 0.25 + C2));
    const double expected = 1.0 - ssim;
    EXPECT_NEAR(ssim_loss(Var<double>(pred), gt, {4, 0.0}).item(), expected, 1e-9);
    EXPECT_GT(expected, 1.9);  // near the top of the [0,2] range
}

TEST(SsimLoss, MatchesWindowedOracleOnRandomMasks) {
    Rng rng(55);
    for (int trial = 0; trial < 4; ++trial) {
        Tensor<double> pred = random_tensor(Shape{2, 1, 4, 4}, rng, 0.0, 1.0);
        Tensor<double> gt = random_tensor(Shape{2, 1, 4, 4}, rng, 0.0, 1.0);
        EXPECT_NEAR(ssim_loss(Var<double>(pred), gt, {3, 1.5}).item(), ssim_oracle(pred, gt, 3, 1.5), 1e-12);
    }
}

TEST(SsimLoss, SymmetricAndBounded) {
    Rng rng(56);
    for (int trial = 0; trial < 8; ++trial) {
        Tensor<double> a = random_tensor(Shape{1, 1, 6, 6}, rng, 0.0, 1.0);
        Tensor<double> b = random_tensor(Shape{1, 1, 6, 6}, rng, 0.0, 1.0);
        const double ab = ssim_loss(Var<double>(a), b, {3, 1.5}).item();
        const double ba = ssim_loss(Var<double>(b), a, {3, 1.5}).item();
        EXPECT_NEAR(ab, ba, 1e-12);
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, 2.0);
    }
}

TEST(SsimLoss, WindowLargerThanImageRejected) {
    Tensor<double> m(Shape{1, 1, 4, 4}, 0.5);
    EXPECT_THROW(ssim_loss(Var<double>(m), m, {11, 1.5}), ShapeError);
}

TEST(SsimLoss, GradientMatchesFiniteDifferences) {
    Rng rng(57);
    Var<double> pred(random_tensor(Shape{1, 1, 4, 4}, rng, 0.1, 0.9), true);
    Tensor<double> gt = random_tensor(Shape{1, 1, 4, 4}, rng, 0.0, 1.0);
    EXPECT_LT(gradient_check([&] { return ssim_loss(pred, gt, {3, 1.5}); }, {pred}, rng, 1e-6), 1e-3);
}

// --- auxiliary attention loss -------------------------------------------------

TEST(AuxLoss, SupervisedAttentionNearZero) {
    Tensor<double> gt(Shape{1, 1, 8, 8});
    for (std::int64_t y = 0; y < 8; ++y)
        for (std::int64_t x = 0; x < 4; ++x) gt.at(0, 0, y, x) = 1.0;
    std::vector<Var<double>> attn;
    for (std::int64_t size : {8, 4, 2}) {
        Tensor<double> t = resize_mask_area(gt, size, size);
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = std::clamp(t[i], 1e-7, 1.0 - 1e-7);
        attn.emplace_back(t);
    }
    EXPECT_LT(aux_attention_loss(attn, gt).item(), 1e-3);
}

TEST(AuxLoss, HalfConfidenceAnalytic) {
    Tensor<double> gt(Shape{1, 1, 4, 4}, 1.0);
    std::vector<Var<double>> attn{Var<double>(Tensor<double>(Shape{1, 1, 4, 4}, 0.5)),
                                  Var<double>(Tensor<double>(Shape{1, 1, 2, 2}, 0.5))};
    EXPECT_NEAR(aux_attention_loss(attn, gt).item(), kLn2 * (16 + 4), 1e-9);
}

TEST(AuxLoss, MatchesPerLevelBceOracle) {
    Rng rng(58);
    Tensor<double> gt(Shape{1, 1, 8, 8});
    for (std::int64_t i = 0; i < 64; ++i) gt[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    Tensor<double> a4 = random_tensor(Shape{1, 1, 4, 4}, rng, 0.05, 0.95);
    Tensor<double> a8 = random_tensor(Shape{1, 1, 8, 8}, rng, 0.05, 0.95);
    std::vector<Var<double>> attn{Var<double>(a8), Var<double>(a4)};
    const double expected = bce_oracle(a8, gt) + bce_oracle(a4, resize_mask_area(gt, 4, 4));
    EXPECT_NEAR(aux_attention_loss(attn, gt).item(), expected, 1e-12);
    EXPECT_EQ(aux_attention_loss({}, gt).item(), 0.0);
}

TEST(AuxLoss, GradientMatchesFiniteDifferences) {
    Rng rng(59);
    Tensor<double> gt(Shape{1, 1, 4, 4});
    for (std::int64_t i = 0; i < 16; ++i) gt[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    Var<double> a1(random_tensor(Shape{1, 1, 4, 4}, rng, 0.1, 0.9), true);
    Var<double> a2(random_tensor(Shape{1, 1, 2, 2}, rng, 0.1, 0.9), true);
    EXPECT_LT(gradient_check([&] { return aux_attention_loss<double>({a1, a2}, gt); }, {a1, a2}, rng, 1e-6), 1e-3);
}

// --- total -------------------------------------------------------------------

TEST(TotalLoss, BreakdownIdentityHoldsExactly) {
    Rng rng(60);
    Tensor<double> gt(Shape{1, 1, 4, 4});
    for (std::int64_t i = 0; i < 16; ++i) gt[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    Var<double> pred(random_tensor(Shape{1, 1, 4, 4}, rng, 0.1, 0.9));
    std::vector<Var<double>> attn{Var<double>(random_tensor(Shape{1, 1, 2, 2}, rng, 0.1, 0.9))};
    auto loss = total_loss(pred, attn, gt, 0.1, {3, 1.5});
    const auto& b = loss.breakdown;
    EXPECT_EQ(b.total, (b.bce + b.ssim) + 0.1 * b.aux);
    EXPECT_EQ(loss.total.item(), b.total);

    auto loss0 = total_loss(pred, attn, gt, 0.0, {3, 1.5});
    EXPECT_EQ(loss0.breakdown.total, loss0.breakdown.bce + loss0.breakdown.ssim);
}

TEST(TotalLoss, LambdaEntersLinearly) {
    Rng rng(61);
    Tensor<double> gt(Shape{1, 1, 4, 4});
    for (std::int64_t i = 0; i < 16; ++i) gt[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    Var<double> pred(random_tensor(Shape{1, 1, 4, 4}, rng, 0.1, 0.9));
    std::vector<Var<double>> attn{Var<double>(random_tensor(Shape{1, 1, 4, 4}, rng, 0.1, 0.9))};
    auto l1 = total_loss(pred, attn, gt, 0.1, {3, 1.5});
    auto l2 = total_loss(pred, attn, gt, 0.7, {3, 1.5});
    EXPECT_NEAR(l2.breakdown.total - l1.breakdown.total, (0.7 - 0.1) * l1.breakdown.aux, 1e-12);
}

TEST(TotalLoss, PerfectPredictionNearZero) {
    Tensor<double> gt(Shape{1, 1, 4, 4});
    for (std::int64_t i = 0; i < 8; ++i) gt[i] = 1.0;
    Tensor<double> clamped = gt;
    for (std::int64_t i = 0; i < 16; ++i) clamped[i] = std::clamp(clamped[i], 1e-7, 1.0 - 1e-7);
    std::vector<Var<double>> attn{Var<double>(clamped)};
    auto loss = total_loss(Var<double>(clamped), attn, gt, 0.1, {4, 0.0});
    EXPECT_LT(loss.breakdown.total, 1e-3);
}

}  // namespace
