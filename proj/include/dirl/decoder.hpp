#pragma once

#include "dirl/core_types.hpp"
#include "dirl/nn.hpp"

namespace dirl {

// Decoding stage. The cascade starts at d_5 = a_5 and walks down to full
// resolution. Per block at level k:
//
//   GGD:     d_k = relu(conv([ U(d_{k+1}) * a_k ; resample(a_5 -> k) ]))
//   GGD_sim: d_k = relu(conv(  U(d_{k+1}) * a_k ))
//   Reg:     d_k = relu(conv([ U(d_{k+1}) ; a_k ]))            (UNet skip)
//
// '*' is the elementwise product; U projects to the destination channels so
// the product is well-formed. The global-context shortcut is a chain of U
// layers, one per octave between level 5 and level k. The head is a 1x1 conv
// + sigmoid on d_1.
template <class T>
struct GgdBlock {
    DecoderVariant variant = DecoderVariant::GGD;
    nn::ResampleLayer<T> up_top;                    // d_{k+1} -> level k channels
    std::vector<nn::ResampleLayer<T>> shortcut;     // a_5 -> level k, one hop per octave
    nn::Conv2dLayer<T> conv;                        // 3x3 post-merge conv

    GgdBlock() = default;
    GgdBlock(const std::array<std::int64_t, 5>& ch, std::int64_t level, DecoderVariant variant_, Rng& rng)
        : variant(variant_), up_top(nn::Resample::UP, ch[level + 1], ch[level], rng) {
        if (variant == DecoderVariant::GGD) {
            for (std::int64_t j = 4; j > level; --j) shortcut.emplace_back(nn::Resample::UP, ch[j], ch[j - 1], rng);
        }
        const std::int64_t cin = variant == DecoderVariant::GGD_SIM ? ch[level] : 2 * ch[level];
        conv = nn::Conv2dLayer<T>(cin, ch[level], 3, 1, 1, true, rng);
    }

    Var<T> forward(const Var<T>& prev, const Var<T>& skip, const Var<T>& global_ctx) const {
        Var<T> top = up_top(prev);
        Var<T> merged;
        switch (variant) {
            case DecoderVariant::REG:
                merged = ops::concat_channels(top, skip);
                break;
            case DecoderVariant::GGD_SIM:
                merged = ops::mul(top, skip);
                break;
            case DecoderVariant::GGD: {
                Var<T> ctx = global_ctx;
                for (const auto& hop : shortcut) ctx = hop(ctx);
                merged = ops::concat_channels(ops::mul(top, skip), ctx);
                break;
            }
        }
        return ops::relu(conv(merged));
    }

    void reg(nn::ParamRegistry<T>& r, const std::string& prefix) const {
        up_top.reg(r, prefix + ".up_top");
        for (std::size_t j = 0; j < shortcut.size(); ++j) shortcut[j].reg(r, prefix + ".shortcut" + std::to_string(j));
        conv.reg(r, prefix + ".conv");
    }
};

template <class T>
struct DecoderStage {
    DecoderVariant variant = DecoderVariant::GGD;
    std::array<GgdBlock<T>, 4> blocks;  // blocks[i] outputs level i (0-based), built 3..0
    nn::Conv2dLayer<T> head;            // 1x1, c_1 -> 1

    DecoderStage() = default;
    DecoderStage(const ModelConfig& cfg, Rng& rng) : variant(cfg.decoder_variant) {
        for (std::int64_t level = 3; level >= 0; --level)
            blocks[static_cast<std::size_t>(level)] = GgdBlock<T>(cfg.channels, level, variant, rng);
        head = nn::Conv2dLayer<T>(cfg.channels[0], 1, 1, 1, 0, true, rng);
    }

    struct Output {
        Var<T> mask;    // sigmoid(logits), (B,1,H,W)
        Var<T> logits;  // pre-sigmoid head output
        FeaturePyramid<T> decoded;  // d_1..d_5 (d_5 = a_5)
    };

    Output forward(const FeaturePyramid<T>& refined) const {
        if (refined.levels.size() != 5)
            throw ShapeError("decoder needs 5 levels, got " + std::to_string(refined.levels.size()));
        std::vector<Var<T>> d(5);
        d[4] = refined.levels[4];
        for (std::int64_t level = 3; level >= 0; --level) {
            const auto k = static_cast<std::size_t>(level);
            d[k] = blocks[k].forward(d[k + 1], refined.levels[k], refined.levels[4]);
        }
        Output out;
        out.logits = head(d[0]);
        out.mask = ops::sigmoid(out.logits);
        out.decoded = FeaturePyramid<T>(std::move(d));
        return out;
    }

    void reg(nn::ParamRegistry<T>& r, const std::string& prefix) const {
        for (std::size_t k = 0; k < blocks.size(); ++k) blocks[k].reg(r, prefix + ".block" + std::to_string(k));
        head.reg(r, prefix + ".head");
    }
};

// Spec-level wrapper: decode a refined pyramid into (mask, decoder pyramid).
template <class T>
std::pair<Var<T>, FeaturePyramid<T>> decode(const FeaturePyramid<T>& refined, const DecoderStage<T>& stage) {
    auto out = stage.forward(refined);
    return {out.mask, out.decoded};
}

}  // namespace dirl
