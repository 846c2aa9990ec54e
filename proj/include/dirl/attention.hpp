#pragma once

#include <optional>

#include "dirl/core_types.hpp"
#include "dirl/nn.hpp"

namespace dirl {

// Refinement-stage dual attention, CBAM layout: channel attention from the
// shared two-layer MLP over global avg+max pooling, then spatial attention
// from a 7x7 conv over the channel-wise mean/max planes. The spatial map A is
// what the mask supervises; DA and MDA share this computation and differ only
// in whether the auxiliary loss is applied.
template <class T>
struct MdaBlock {
    nn::Conv2dLayer<T> mlp_squeeze;  // 1x1, c -> c/ratio, bias-free
    nn::Conv2dLayer<T> mlp_expand;   // 1x1, c/ratio -> c, bias-free
    nn::Conv2dLayer<T> spatial;      // 7x7, 2 -> 1, with bias

    MdaBlock() = default;
    MdaBlock(std::int64_t channels, std::int64_t ratio, Rng& rng) {
        const std::int64_t hidden = channels / ratio;
        if (hidden < 1) throw ConfigError("attention squeeze leaves no hidden units");
        mlp_squeeze = nn::Conv2dLayer<T>(channels, hidden, 1, 1, 0, false, rng);
        mlp_expand = nn::Conv2dLayer<T>(hidden, channels, 1, 1, 0, false, rng);
        spatial = nn::Conv2dLayer<T>(2, 1, 7, 1, 3, true, rng);
    }

    // Returns (refined feature, spatial attention map).
    std::pair<Var<T>, Var<T>> forward(const Var<T>& x) const {
        auto mlp = [&](const Var<T>& pooled) { return mlp_expand(ops::relu(mlp_squeeze(pooled))); };
        Var<T> channel_gate =
            ops::sigmoid(ops::add(mlp(ops::global_avg_pool(x)), mlp(ops::global_max_pool(x))));
        Var<T> attended = ops::scale_channels(x, channel_gate);
        Var<T> planes = ops::concat_channels(ops::channel_mean(attended), ops::channel_max(attended));
        Var<T> attn = ops::sigmoid(spatial(planes));
        return {ops::scale_spatial(attended, attn), attn};
    }

    void reg(nn::ParamRegistry<T>& r, const std::string& prefix) const {
        mlp_squeeze.reg(r, prefix + ".mlp_squeeze");
        mlp_expand.reg(r, prefix + ".mlp_expand");
        spatial.reg(r, prefix + ".spatial");
    }
};

template <class T>
struct AttentionStage {
    AttentionVariant variant = AttentionVariant::NONE;
    std::vector<MdaBlock<T>> blocks;

    AttentionStage() = default;
    AttentionStage(const ModelConfig& cfg, Rng& rng) : variant(cfg.attention_variant) {
        if (variant == AttentionVariant::NONE) return;
        for (std::size_t k = 0; k < 5; ++k) blocks.emplace_back(cfg.channels[k], cfg.squeeze_ratio(), rng);
    }

    // Returns the refined pyramid and one attention map per level (empty for
    // the NONE variant, where refinement is the identity).
    std::pair<FeaturePyramid<T>, std::vector<Var<T>>> forward(const FeaturePyramid<T>& p) const {
        if (variant == AttentionVariant::NONE) return {p, {}};
        FeaturePyramid<T> out;
        std::vector<Var<T>> attn;
        for (std::size_t k = 0; k < p.levels.size(); ++k) {
            auto [a, map] = blocks[k].forward(p.levels[k]);
            out.levels.push_back(a);
            attn.push_back(map);
        }
        return {out, attn};
    }

    void reg(nn::ParamRegistry<T>& r, const std::string& prefix) const {
        for (std::size_t k = 0; k < blocks.size(); ++k) blocks[k].reg(r, prefix + ".block" + std::to_string(k));
    }
};

// Spec-level wrapper.
template <class T>
std::pair<FeaturePyramid<T>, std::vector<Var<T>>> refine(const FeaturePyramid<T>& p, const AttentionStage<T>& stage) {
    return stage.forward(p);
}

// Box (area-average) downsample of a mask by an exact integer factor. Keeps
// fractional coverage, so coarse-level supervision targets are soft.
template <class T>
Tensor<T> resize_mask_area(const Tensor<T>& m, std::int64_t out_h, std::int64_t out_w) {
    const Shape& s = m.shape();
    if (s.c != 1) throw ShapeError("resize_mask_area expects 1 channel, got " + s.str());
    if (out_h < 1 || out_w < 1 || s.h % out_h != 0 || s.w % out_w != 0)
        throw ShapeError("resize_mask_area: " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                         " not an integer multiple of " + std::to_string(out_h) + "x" + std::to_string(out_w));
    const std::int64_t fy = s.h / out_h;
    const std::int64_t fx = s.w / out_w;
    Tensor<T> out(Shape{s.n, 1, out_h, out_w});
    const T inv = T(1) / static_cast<T>(fy * fx);
    for (std::int64_t b = 0; b < s.n; ++b)
        for (std::int64_t oy = 0; oy < out_h; ++oy)
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
                T acc = T(0);
                for (std::int64_t dy = 0; dy < fy; ++dy) {
                    const T* row = &m.at(b, 0, oy * fy + dy, ox * fx);
                    for (std::int64_t dx = 0; dx < fx; ++dx) acc += row[dx];
                }
                out.at(b, 0, oy, ox) = acc * inv;
            }
    return out;
}

// Ground truth resized to every pyramid level for attention supervision.
template <class T>
std::vector<Tensor<T>> attention_supervision_targets(const Tensor<T>& gt,
                                                     const std::vector<std::pair<std::int64_t, std::int64_t>>& sizes) {
    std::vector<Tensor<T>> out;
    out.reserve(sizes.size());
    for (const auto& [h, w] : sizes) out.push_back(resize_mask_area(gt, h, w));
    return out;
}

}  // namespace dirl
