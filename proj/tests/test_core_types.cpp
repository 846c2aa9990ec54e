#include <gtest/gtest.h>

#include "dirl/core_types.hpp"
#include "dirl/encoder.hpp"
#include "test_util.hpp"

using namespace dirl;

namespace {

TEST(ImageTensorType, Invariants) {
    EXPECT_NO_THROW((void)ImageTensor<double>(Tensor<double>(Shape{1, 3, 64, 64}, 0.5)));
    EXPECT_THROW(ImageTensor<double>(Tensor<double>(Shape{1, 1, 64, 64}, 0.5)), ShapeError);
    EXPECT_THROW(ImageTensor<double>(Tensor<double>(Shape{1, 3, 40, 40}, 0.5)), ShapeError);
    Tensor<double> bad(Shape{1, 3, 64, 64}, 0.5);
    bad[17] = 1.5;
    EXPECT_THROW((ImageTensor<double>(bad)), ValueError);
}

TEST(MaskTensorType, RejectsOutOfRange) {
    EXPECT_NO_THROW((void)MaskTensor<double>(Tensor<double>(Shape{2, 1, 8, 8}, 1.0)));
    for (double v : {-0.1, 1.0001, 42.0}) {
        Tensor<double> bad(Shape{1, 1, 4, 4}, 0.3);
        bad[5] = v;
        EXPECT_THROW((MaskTensor<double>(bad)), ValueError) << v;
    }
    Tensor<double> soft(Shape{1, 1, 2, 2}, 0.25);
    EXPECT_FALSE(MaskTensor<double>(soft).is_binary());
    EXPECT_TRUE(MaskTensor<double>(Tensor<double>(Shape{1, 1, 2, 2}, 1.0)).is_binary());
}

ModelConfig cfg64() {
    ModelConfig cfg;
    cfg.input_h = cfg.input_w = 64;
    return cfg;
}

FeaturePyramid<double> make_pyramid(const ModelConfig& cfg, std::int64_t batch = 1) {
    FeaturePyramid<double> p;
    for (int k = 0; k < 5; ++k)
        p.levels.emplace_back(Tensor<double>(Shape{batch, cfg.channels[static_cast<std::size_t>(k)],
                                                   cfg.input_h >> k, cfg.input_w >> k}));
    return p;
}

TEST(ValidatePyramid, AcceptsExactHalving) {
    const ModelConfig cfg = cfg64();
    EXPECT_NO_THROW(validate_pyramid(make_pyramid(cfg), cfg));
}

TEST(ValidatePyramid, RejectsWrongLevelCount) {
    const ModelConfig cfg = cfg64();
    auto p = make_pyramid(cfg);
    p.levels.pop_back();
    EXPECT_THROW(validate_pyramid(p, cfg), ShapeError);
}

TEST(ValidatePyramid, RejectsHalvingViolation) {
    const ModelConfig cfg = cfg64();
    auto p = make_pyramid(cfg);
    p.levels[2] = Var<double>(Tensor<double>(Shape{1, cfg.channels[2], 15, 16}));
    try {
        validate_pyramid(p, cfg);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("level 3"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("16x16"), std::string::npos);
    }
}

TEST(ValidatePyramid, RejectsWrongChannels) {
    const ModelConfig cfg = cfg64();
    auto p = make_pyramid(cfg);
    p.levels[1] = Var<double>(Tensor<double>(Shape{1, cfg.channels[1] + 1, 32, 32}));
    EXPECT_THROW(validate_pyramid(p, cfg), ShapeError);
}

// Property: the encoder output validates for random configs with valid sizes.
TEST(ValidatePyramid, AcceptsEncoderOutputForRandomConfigs) {
    Rng rng(123);
    for (int trial = 0; trial < 8; ++trial) {
        ModelConfig cfg;
        cfg.base_width = 2 << rng.uniform_int(0, 2);  // 2, 4, 8
        cfg.channels = channels_from_base_width(cfg.base_width);
        cfg.input_h = 16 * rng.uniform_int(1, 4);
        cfg.input_w = 16 * rng.uniform_int(1, 4);
        Encoder<double> enc(cfg, rng);
        Tensor<double> img(Shape{1, 3, cfg.input_h, cfg.input_w});
        for (std::int64_t i = 0; i < img.numel(); ++i) img[i] = rng.uniform();
        auto pyr = enc.forward(Var<double>(img), false);
        EXPECT_NO_THROW(validate_pyramid(pyr, cfg)) << "trial " << trial;
    }
}

TEST(ConfigFile, RoundTrip) {
    ModelConfig m;
    m.base_width = 4;
    m.channels = channels_from_base_width(4);
    m.fusion_variant = FusionVariant::AIM;
    m.attention_variant = AttentionVariant::DA;
    m.decoder_variant = DecoderVariant::REG;
    m.input_h = 32;
    m.input_w = 48;
    TrainConfig t;
    t.epochs = 17;
    t.seed = 99;
    t.lambda_aux = 0.25;
    ModelConfig m2;
    TrainConfig t2;
    parse_config(serialize_config(m, t), m2, t2);
    EXPECT_EQ(m2.channels, m.channels);
    EXPECT_EQ(m2.fusion_variant, m.fusion_variant);
    EXPECT_EQ(m2.attention_variant, m.attention_variant);
    EXPECT_EQ(m2.decoder_variant, m.decoder_variant);
    EXPECT_EQ(m2.input_h, 32);
    EXPECT_EQ(m2.input_w, 48);
    EXPECT_EQ(t2.epochs, 17);
    EXPECT_EQ(t2.seed, 99u);
    EXPECT_DOUBLE_EQ(t2.lambda_aux, 0.25);
}

TEST(ConfigFile, RejectsUnknownKeyAndBadValues) {
    ModelConfig m;
    TrainConfig t;
    EXPECT_THROW(parse_config("nonsense = 1\n", m, t), ConfigError);
    EXPECT_THROW(parse_config("epochs = abc\n", m, t), ConfigError);
    EXPECT_THROW(parse_config("channels = 1,2,3\n", m, t), ConfigError);
    ModelConfig bad;
    bad.input_h = 40;
    EXPECT_THROW(bad.validate(), ConfigError);
    TrainConfig badt;
    badt.decay_factor = 1.5;
    EXPECT_THROW(badt.validate(), ConfigError);
}

TEST(TrainConfigSchedule, PaperDecay) {
    TrainConfig t;  // lr 1e-4, halve every 30 epochs
    EXPECT_DOUBLE_EQ(t.lr_at_epoch(1), 1e-4);
    EXPECT_DOUBLE_EQ(t.lr_at_epoch(30), 1e-4);
    EXPECT_DOUBLE_EQ(t.lr_at_epoch(31), 5e-5);
    EXPECT_DOUBLE_EQ(t.lr_at_epoch(60), 5e-5);
    EXPECT_DOUBLE_EQ(t.lr_at_epoch(61), 2.5e-5);
    EXPECT_DOUBLE_EQ(t.lr_at_epoch(90), 2.5e-5);
}

}  // namespace
