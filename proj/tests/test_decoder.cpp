#include <gtest/gtest.h>

#include "dirl/decoder.hpp"
#include "dirl/network.hpp"
#include "test_util.hpp"

using namespace dirl;
using testutil::gradient_check;
using testutil::random_tensor;

namespace {

FeaturePyramid<double> random_refined(const ModelConfig& cfg, Rng& rng, bool requires_grad = false) {
    FeaturePyramid<double> p;
    for (std::size_t k = 0; k < 5; ++k)
        p.levels.emplace_back(random_tensor(Shape{1, cfg.channels[k], cfg.input_h >> k, cfg.input_w >> k}, rng),
                              requires_grad);
    return p;
}

void zero_biases(DecoderStage<double>& dec) {
    for (auto& block : dec.blocks) {
        block.conv.bias.value().fill(0.0);
        block.up_top.conv.bias.value().fill(0.0);
        for (auto& hop : block.shortcut) hop.conv.bias.value().fill(0.0);
    }
    dec.head.bias.value().fill(0.0);
}

TEST(Decoder, MaskShapeAndRange) {
    ModelConfig cfg;
    Rng rng(41);
    for (auto variant : {DecoderVariant::REG, DecoderVariant::GGD_SIM, DecoderVariant::GGD}) {
        ModelConfig c = cfg;
        c.decoder_variant = variant;
        DecoderStage<double> dec(c, rng);
        auto out = dec.forward(random_refined(c, rng));
        EXPECT_EQ(out.mask.shape(), (Shape{1, 1, 64, 64})) << to_string(variant);
        for (std::int64_t i = 0; i < out.mask.value().numel(); ++i) {
            EXPECT_GT(out.mask.value()[i], 0.0);
            EXPECT_LT(out.mask.value()[i], 1.0);
        }
        ASSERT_EQ(out.decoded.levels.size(), 5u);
        for (std::size_t k = 0; k < 5; ++k)
            EXPECT_EQ(out.decoded.levels[k].shape(),
                      (Shape{1, c.channels[k], c.input_h >> k, c.input_w >> k}));
    }
}

// Zeroing a_k kills the multiplicative top stream exactly: with bias-free
// convs the whole cascade below collapses to zero logits.
TEST(Decoder, GgdSimZeroAnnihilation) {
    ModelConfig cfg;
    cfg.decoder_variant = DecoderVariant::GGD_SIM;
    Rng rng(42);
    DecoderStage<double> dec(cfg, rng);
    zero_biases(dec);
    auto refined = random_refined(cfg, rng);
    refined.levels[2] = Var<double>(Tensor<double>(refined.levels[2].shape(), 0.0));
    auto out = dec.forward(refined);
    for (std::int64_t i = 0; i < out.logits.value().numel(); ++i) EXPECT_EQ(out.logits.value()[i], 0.0);
    for (std::int64_t i = 0; i < out.mask.value().numel(); ++i) EXPECT_DOUBLE_EQ(out.mask.value()[i], 0.5);
}

// With biases kept, zeroing the last skip makes the prediction a constant
// field fixed by bias propagation; the expected constant comes from scalar
// arithmetic over the head weights.
TEST(Decoder, GgdSimBiasPropagatedConstantField) {
    ModelConfig cfg;
    cfg.decoder_variant = DecoderVariant::GGD_SIM;
    Rng rng(43);
    DecoderStage<double> dec(cfg, rng);
    for (auto& block : dec.blocks) {
        Rng brng(static_cast<std::uint64_t>(200 + block.conv.weight.shape().n));
        for (std::int64_t i = 0; i < block.conv.bias.value().numel(); ++i)
            block.conv.bias.value()[i] = brng.uniform(-0.5, 0.5);
    }
    auto refined = random_refined(cfg, rng);
    refined.levels[0] = Var<double>(Tensor<double>(refined.levels[0].shape(), 0.0));
    auto out = dec.forward(refined);

    // d_1 = relu(conv(0) + bias) is constant per channel; logits follow.
    double expected_logit = dec.head.bias.value()[0];
    for (std::int64_t c = 0; c < cfg.channels[0]; ++c)
        expected_logit += dec.head.weight.value().at(0, c, 0, 0) * std::max(dec.blocks[0].conv.bias.value()[c], 0.0);
    const double expected_mask = 1.0 / (1.0 + std::exp(-expected_logit));
    for (std::int64_t i = 0; i < out.logits.value().numel(); ++i) {
        ASSERT_NEAR(out.logits.value()[i], expected_logit, 1e-12);
        ASSERT_NEAR(out.mask.value()[i], expected_mask, 1e-12);
    }
}

TEST(Decoder, VariantsProducePairwiseDifferentOutputs) {
    ModelConfig cfg;
    Rng data_rng(44);
    auto refined = random_refined(cfg, data_rng);
    std::vector<Tensor<double>> masks;
    for (auto variant : {DecoderVariant::REG, DecoderVariant::GGD_SIM, DecoderVariant::GGD}) {
        ModelConfig c = cfg;
        c.decoder_variant = variant;
        Rng rng(45);  // shared init stream across variants
        DecoderStage<double> dec(c, rng);
        masks.push_back(dec.forward(refined).mask.value());
    }
    for (std::size_t a = 0; a < masks.size(); ++a)
        for (std::size_t b = a + 1; b < masks.size(); ++b)
            EXPECT_GT(testutil::max_abs_diff(masks[a], masks[b]), 1e-6) << a << " vs " << b;
}

TEST(Decoder, ParameterCountOrdering) {
    auto count = [](DecoderVariant v) {
        ModelConfig c;
        c.decoder_variant = v;
        Rng rng(46);
        DecoderStage<double> dec(c, rng);
        nn::ParamRegistry<double> reg;
        dec.reg(reg, "decoder");
        return reg.param_count();
    };
    const auto reg_count = count(DecoderVariant::REG);
    const auto sim_count = count(DecoderVariant::GGD_SIM);
    const auto ggd_count = count(DecoderVariant::GGD);
    EXPECT_LT(sim_count, ggd_count);
    EXPECT_LT(reg_count, ggd_count);
    EXPECT_LT(sim_count, reg_count);
}

TEST(Decoder, GradientsReachParamsAndInputs) {
    ModelConfig cfg;
    cfg.base_width = 2;
    cfg.channels = channels_from_base_width(2);
    cfg.input_h = cfg.input_w = 16;
    Rng rng(47);
    DecoderStage<double> dec(cfg, rng);
    auto refined = random_refined(cfg, rng, true);
    std::vector<Var<double>> leaves{refined.levels[0], refined.levels[4], dec.blocks[1].conv.weight,
                                    dec.head.weight};
    const double err = gradient_check(
        [&] { return ops::mean_all(dec.forward(refined).mask); }, leaves, rng, 1e-6);
    EXPECT_LT(err, 1e-3);
}

// The global-context shortcut gives a_5 a second path into every block; in
// GGD_sim the only a_5 path is the cascade head.
TEST(Decoder, GlobalContextReach) {
    ModelConfig cfg;
    cfg.decoder_variant = DecoderVariant::GGD;
    Rng rng(48);
    DecoderStage<double> dec(cfg, rng);
    auto refined = random_refined(cfg, rng, true);
    auto out = dec.forward(refined);
    ops::sum_all(out.logits).backward();
    double mag = 0;
    for (std::int64_t i = 0; i < refined.levels[4].grad().numel(); ++i)
        mag = std::max(mag, std::abs(refined.levels[4].grad()[i]));
    EXPECT_GT(mag, 1e-12);
}

TEST(Decoder, FullNetworkForwardValidatesEveryStage) {
    ModelConfig cfg;  // row-10 equivalent: bfi + mda + ggd
    DirlNet<double> net(cfg, 7);
    Rng rng(49);
    auto out = net.forward(Var<double>(random_tensor(Shape{2, 3, 64, 64}, rng, 0.0, 1.0)), false);
    EXPECT_EQ(out.mask.shape(), (Shape{2, 1, 64, 64}));
    EXPECT_NO_THROW(validate_pyramid(out.encoded, cfg));
    EXPECT_NO_THROW(validate_pyramid(out.fused, cfg));
    EXPECT_NO_THROW(validate_pyramid(out.refined, cfg));
    EXPECT_NO_THROW(validate_pyramid(out.decoded, cfg));
    ASSERT_EQ(out.attn.size(), 5u);
}

}  // namespace
