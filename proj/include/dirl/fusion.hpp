#pragma once

#include <optional>

#include "dirl/core_types.hpp"
#include "dirl/nn.hpp"

namespace dirl {

// Transition-stage fusion. BFI runs a top-down stream and a bottom-up stream
// across the whole pyramid:
//
//   down[n-1] = r[n-1],  down[k] = r[k] + U(down[k+1])
//   up[0]     = r[0],    up[k]   = r[k] + D(up[k-1])
//
// and aggregates per level from the stream states of that level and its
// neighbours:
//
//   b[k] = D([down,up][k-1]) + (down[k] + up[k]) + U([down,up][k+1])
//
// with the out-of-range terms dropped at the two boundary levels. The
// one-way ablations keep a single stream and aggregate the unconcatenated
// states. Works on any pyramid of >= 2 levels so blocks can be exercised in
// isolation; the network always passes 5.
template <class T>
struct BfiStage {
    enum class Mode { FULL, UP_ONLY, DOWN_ONLY };

    Mode mode = Mode::FULL;
    std::vector<nn::ResampleLayer<T>> up_chain;    // up_chain[k]: level k+1 -> k
    std::vector<nn::ResampleLayer<T>> down_chain;  // down_chain[k-1]: level k-1 -> k
    std::vector<nn::ResampleLayer<T>> up_agg;      // up_agg[k]: states at k+1 -> level k
    std::vector<nn::ResampleLayer<T>> down_agg;    // down_agg[k-1]: states at k-1 -> level k
    bool with_bias = true;

    BfiStage() = default;
    BfiStage(const std::vector<std::int64_t>& ch, Mode mode_, Rng& rng, bool bias = true)
        : mode(mode_), with_bias(bias) {
        const std::size_t n = ch.size();
        if (n < 2) throw ShapeError("BFI needs at least 2 levels");
        const std::int64_t streams = mode == Mode::FULL ? 2 : 1;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            if (mode != Mode::UP_ONLY)
                up_chain.emplace_back(nn::Resample::UP, ch[k + 1], ch[k], rng);
            if (mode != Mode::DOWN_ONLY)
                down_chain.emplace_back(nn::Resample::DOWN, ch[k], ch[k + 1], rng);
            up_agg.emplace_back(nn::Resample::UP, streams * ch[k + 1], ch[k], rng);
            down_agg.emplace_back(nn::Resample::DOWN, streams * ch[k], ch[k + 1], rng);
        }
        if (!bias) strip_biases();
    }

    std::vector<Var<T>> forward(const std::vector<Var<T>>& r) const {
        const std::size_t n = r.size();
        if (n != up_agg.size() + 1)
            throw ShapeError("BFI built for " + std::to_string(up_agg.size() + 1) + " levels, got " +
                             std::to_string(n));
        std::vector<Var<T>> down(n), up(n);
        if (mode != Mode::UP_ONLY) {
            down[n - 1] = r[n - 1];
            for (std::size_t k = n - 1; k-- > 0;) down[k] = ops::add(r[k], up_chain[k](down[k + 1]));
        }
        if (mode != Mode::DOWN_ONLY) {
            up[0] = r[0];
            for (std::size_t k = 1; k < n; ++k) up[k] = ops::add(r[k], down_chain[k - 1](up[k - 1]));
        }
        auto states = [&](std::size_t k) {
            if (mode == Mode::UP_ONLY) return up[k];
            if (mode == Mode::DOWN_ONLY) return down[k];
            return ops::concat_channels(down[k], up[k]);
        };
        auto center = [&](std::size_t k) {
            if (mode == Mode::UP_ONLY) return up[k];
            if (mode == Mode::DOWN_ONLY) return down[k];
            return ops::add(down[k], up[k]);
        };
        std::vector<Var<T>> out(n);
        for (std::size_t k = 0; k < n; ++k) {
            Var<T> acc = center(k);
            if (k > 0) acc = ops::add(acc, down_agg[k - 1](states(k - 1)));
            if (k + 1 < n) acc = ops::add(acc, up_agg[k](states(k + 1)));
            out[k] = acc;
        }
        return out;
    }

    void reg(nn::ParamRegistry<T>& r, const std::string& prefix) const {
        for (std::size_t k = 0; k < up_chain.size(); ++k) up_chain[k].reg(r, prefix + ".up_chain" + std::to_string(k));
        for (std::size_t k = 0; k < down_chain.size(); ++k)
            down_chain[k].reg(r, prefix + ".down_chain" + std::to_string(k));
        for (std::size_t k = 0; k < up_agg.size(); ++k) up_agg[k].reg(r, prefix + ".up_agg" + std::to_string(k));
        for (std::size_t k = 0; k < down_agg.size(); ++k) down_agg[k].reg(r, prefix + ".down_agg" + std::to_string(k));
    }

private:
    void strip_biases() {
        for (auto* vec : {&up_chain, &down_chain, &up_agg, &down_agg})
            for (auto& layer : *vec) layer.conv.bias = Var<T>();
    }
};

// One AIM block: interaction features for the host level and its neighbours,
// merged back into the host resolution. Blocks are independent, so
// information moves at most one level per stage - the property the BFI
// ablation contrasts against.
template <class T>
struct AimBlock {
    std::int64_t host = 0;  // level index this block outputs
    bool has_low = false, has_high = false;

    // host branch
    nn::Conv2dLayer<T> conv_mid_in, conv_mid_out;
    // lower-level branch (higher resolution, level host-1)
    std::optional<nn::ResampleLayer<T>> up_to_low;      // r[host] -> level host-1
    std::optional<nn::Conv2dLayer<T>> conv_low_in, conv_low_out;
    std::optional<nn::ResampleLayer<T>> down_from_low;  // r[host-1] -> host (mid branch input)
    std::optional<nn::ResampleLayer<T>> down_z_low;     // z_low -> host
    // higher-level branch (lower resolution, level host+1)
    std::optional<nn::ResampleLayer<T>> down_to_high;   // r[host] -> level host+1
    std::optional<nn::Conv2dLayer<T>> conv_high_in, conv_high_out;
    std::optional<nn::ResampleLayer<T>> up_from_high;   // r[host+1] -> host (mid branch input)
    std::optional<nn::ResampleLayer<T>> up_z_high;      // z_high -> host
    nn::Conv2dLayer<T> merge;

    AimBlock() = default;
    AimBlock(const std::vector<std::int64_t>& ch, std::int64_t host_, Rng& rng) : host(host_) {
        const std::int64_t n = static_cast<std::int64_t>(ch.size());
        has_low = host > 0;
        has_high = host + 1 < n;
        const std::int64_t c = ch[host];
        conv_mid_in = nn::Conv2dLayer<T>(c, c, 3, 1, 1, true, rng);
        if (has_low) {
            const std::int64_t cl = ch[host - 1];
            up_to_low.emplace(nn::Resample::UP, c, cl, rng);
            conv_low_in.emplace(cl, cl, 3, 1, 1, true, rng);
            conv_low_out.emplace(cl, cl, 3, 1, 1, true, rng);
            down_from_low.emplace(nn::Resample::DOWN, cl, c, rng);
            down_z_low.emplace(nn::Resample::DOWN, cl, c, rng);
        }
        if (has_high) {
            const std::int64_t chigh = ch[host + 1];
            down_to_high.emplace(nn::Resample::DOWN, c, chigh, rng);
            conv_high_in.emplace(chigh, chigh, 3, 1, 1, true, rng);
            conv_high_out.emplace(chigh, chigh, 3, 1, 1, true, rng);
            up_from_high.emplace(nn::Resample::UP, chigh, c, rng);
            up_z_high.emplace(nn::Resample::UP, chigh, c, rng);
        }
        conv_mid_out = nn::Conv2dLayer<T>(c, c, 3, 1, 1, true, rng);
        merge = nn::Conv2dLayer<T>(c, c, 3, 1, 1, true, rng);
    }

    Var<T> forward(const std::vector<Var<T>>& r) const {
        // host interaction: D(r_low) + Conv(r_host) + U(r_high)
        Var<T> mid = conv_mid_in(r[host]);
        if (has_low) mid = ops::add(mid, (*down_from_low)(r[host - 1]));
        if (has_high) mid = ops::add(mid, (*up_from_high)(r[host + 1]));
        Var<T> acc = conv_mid_out(mid);
        if (has_low) {
            Var<T> low = ops::add((*conv_low_in)(r[host - 1]), (*up_to_low)(r[host]));
            acc = ops::add(acc, (*down_z_low)((*conv_low_out)(low)));
        }
        if (has_high) {
            Var<T> high = ops::add((*conv_high_in)(r[host + 1]), (*down_to_high)(r[host]));
            acc = ops::add(acc, (*up_z_high)((*conv_high_out)(high)));
        }
        return ops::add(merge(acc), r[host]);
    }

    void reg(nn::ParamRegistry<T>& r, const std::string& prefix) const {
        conv_mid_in.reg(r, prefix + ".conv_mid_in");
        conv_mid_out.reg(r, prefix + ".conv_mid_out");
        if (has_low) {
            up_to_low->reg(r, prefix + ".up_to_low");
            conv_low_in->reg(r, prefix + ".conv_low_in");
            conv_low_out->reg(r, prefix + ".conv_low_out");
            down_from_low->reg(r, prefix + ".down_from_low");
            down_z_low->reg(r, prefix + ".down_z_low");
        }
        if (has_high) {
            down_to_high->reg(r, prefix + ".down_to_high");
            conv_high_in->reg(r, prefix + ".conv_high_in");
            conv_high_out->reg(r, prefix + ".conv_high_out");
            up_from_high->reg(r, prefix + ".up_from_high");
            up_z_high->reg(r, prefix + ".up_z_high");
        }
        merge.reg(r, prefix + ".merge");
    }
};

template <class T>
struct AimStage {
    std::vector<AimBlock<T>> blocks;

    AimStage() = default;
    AimStage(const std::vector<std::int64_t>& ch, Rng& rng) {
        if (ch.size() < 2) throw ShapeError("AIM needs at least 2 levels");
        for (std::int64_t k = 0; k < static_cast<std::int64_t>(ch.size()); ++k) blocks.emplace_back(ch, k, rng);
    }

    std::vector<Var<T>> forward(const std::vector<Var<T>>& r) const {
        if (r.size() != blocks.size())
            throw ShapeError("AIM built for " + std::to_string(blocks.size()) + " levels, got " +
                             std::to_string(r.size()));
        std::vector<Var<T>> out(r.size());
        for (std::size_t k = 0; k < r.size(); ++k) out[k] = blocks[k].forward(r);
        return out;
    }

    void reg(nn::ParamRegistry<T>& r, const std::string& prefix) const {
        for (std::size_t k = 0; k < blocks.size(); ++k) blocks[k].reg(r, prefix + ".block" + std::to_string(k));
    }
};

// Variant dispatch used by the network; NONE passes features through.
template <class T>
struct FusionStage {
    FusionVariant variant = FusionVariant::NONE;
    std::optional<BfiStage<T>> bfi;
    std::optional<AimStage<T>> aim;

    FusionStage() = default;
    FusionStage(const ModelConfig& cfg, Rng& rng) : variant(cfg.fusion_variant) {
        const std::vector<std::int64_t> ch(cfg.channels.begin(), cfg.channels.end());
        switch (variant) {
            case FusionVariant::NONE: break;
            case FusionVariant::AIM: aim.emplace(ch, rng); break;
            case FusionVariant::BFI: bfi.emplace(ch, BfiStage<T>::Mode::FULL, rng); break;
            case FusionVariant::BFI_UP: bfi.emplace(ch, BfiStage<T>::Mode::UP_ONLY, rng); break;
            case FusionVariant::BFI_DOWN: bfi.emplace(ch, BfiStage<T>::Mode::DOWN_ONLY, rng); break;
        }
    }

    FeaturePyramid<T> forward(const FeaturePyramid<T>& p) const {
        if (variant == FusionVariant::NONE) return p;
        if (variant == FusionVariant::AIM) return FeaturePyramid<T>(aim->forward(p.levels));
        return FeaturePyramid<T>(bfi->forward(p.levels));
    }

    void reg(nn::ParamRegistry<T>& r, const std::string& prefix) const {
        if (bfi) bfi->reg(r, prefix);
        if (aim) aim->reg(r, prefix);
    }
};

// Spec-level wrappers over the stage structs.
template <class T>
FeaturePyramid<T> fuse_bfi(const FeaturePyramid<T>& p, const BfiStage<T>& stage) {
    return FeaturePyramid<T>(stage.forward(p.levels));
}

template <class T>
FeaturePyramid<T> fuse_aim(const FeaturePyramid<T>& p, const AimStage<T>& stage) {
    return FeaturePyramid<T>(stage.forward(p.levels));
}

template <class T>
FeaturePyramid<T> fuse_oneway(const FeaturePyramid<T>& p, const BfiStage<T>& stage) {
    if (stage.mode == BfiStage<T>::Mode::FULL) throw ConfigError("fuse_oneway needs an UP_ONLY or DOWN_ONLY stage");
    return FeaturePyramid<T>(stage.forward(p.levels));
}

}  // namespace dirl
