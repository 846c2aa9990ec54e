#pragma once

#include "dirl/core_types.hpp"
#include "dirl/nn.hpp"

namespace dirl {

// Five-stage residual encoder. The stem is a 3x3 stride-1 conv with no
// pooling, so r_1 keeps the full input resolution; stages 2-5 halve it.
// Stages 1-4 follow the ResNet34 basic-block layout, stage 5 is one more
// stride-2 basic block at the deepest width.
template <class T>
struct Encoder {
    nn::Conv2dLayer<T> stem;
    nn::BatchNorm2d<T> stem_bn;
    std::array<std::vector<nn::ResidualBlock<T>>, 5> stages;

    Encoder() = default;
    Encoder(const ModelConfig& cfg, Rng& rng) {
        const auto& ch = cfg.channels;
        const auto blocks = cfg.stage_blocks();
        stem = nn::Conv2dLayer<T>(3, ch[0], 3, 1, 1, false, rng);
        stem_bn = nn::BatchNorm2d<T>(ch[0]);
        for (std::int64_t i = 0; i < blocks[0]; ++i) stages[0].emplace_back(ch[0], ch[0], 1, rng);
        for (std::size_t k = 1; k < 4; ++k) {
            stages[k].emplace_back(ch[k - 1], ch[k], 2, rng);
            for (std::int64_t i = 1; i < blocks[k]; ++i) stages[k].emplace_back(ch[k], ch[k], 1, rng);
        }
        stages[4].emplace_back(ch[3], ch[4], 2, rng);
    }

    FeaturePyramid<T> forward(const Var<T>& x, bool training) const {
        const Shape& s = x.shape();
        if (s.c != 3) throw ShapeError("encoder expects 3-channel input, got " + s.str());
        if (s.h % 16 != 0 || s.w % 16 != 0)
            throw ShapeError("encoder input must be divisible by 16, got " + s.str());
        FeaturePyramid<T> pyr;
        Var<T> h = ops::relu(stem_bn(stem(x), training));
        for (std::size_t k = 0; k < 5; ++k) {
            for (const auto& block : stages[k]) h = block(h, training);
            pyr.levels.push_back(h);
        }
        return pyr;
    }

    void reg(nn::ParamRegistry<T>& r, const std::string& prefix) const {
        stem.reg(r, prefix + ".stem");
        stem_bn.reg(r, prefix + ".stem_bn");
        for (std::size_t k = 0; k < 5; ++k)
            for (std::size_t i = 0; i < stages[k].size(); ++i)
                stages[k][i].reg(r, prefix + ".stage" + std::to_string(k + 1) + ".block" + std::to_string(i));
    }
};

// Spec-level entry point: encode a validated image batch.
template <class T>
FeaturePyramid<T> encode(const ImageTensor<T>& img, const Encoder<T>& enc, bool training = false) {
    return enc.forward(Var<T>(img.tensor()), training);
}

}  // namespace dirl
