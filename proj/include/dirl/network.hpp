#pragma once

#include "dirl/attention.hpp"
#include "dirl/decoder.hpp"
#include "dirl/encoder.hpp"
#include "dirl/fusion.hpp"

namespace dirl {

// The full four-stage network: encode -> fuse -> refine -> decode, with every
// stage selectable per the ablation matrix. Construction order fixes the
// parameter init stream, so (config, seed) fully determines the weights.
template <class T>
struct DirlNet {
    ModelConfig cfg;
    Encoder<T> encoder;
    FusionStage<T> fusion;
    AttentionStage<T> attention;
    DecoderStage<T> decoder;

    DirlNet() = default;
    DirlNet(const ModelConfig& cfg_, std::uint64_t init_seed) : cfg(cfg_) {
        cfg.validate();
        Rng rng(init_seed);
        encoder = Encoder<T>(cfg, rng);
        fusion = FusionStage<T>(cfg, rng);
        attention = AttentionStage<T>(cfg, rng);
        decoder = DecoderStage<T>(cfg, rng);
    }

    struct Output {
        Var<T> mask;
        Var<T> logits;
        FeaturePyramid<T> encoded;   // r_k
        FeaturePyramid<T> fused;     // b_k
        FeaturePyramid<T> refined;   // a_k
        FeaturePyramid<T> decoded;   // d_k
        std::vector<Var<T>> attn;    // A_k, empty unless DA/MDA
    };

    Output forward(const Var<T>& images, bool training) const {
        Output out;
        out.encoded = encoder.forward(images, training);
        out.fused = fusion.forward(out.encoded);
        auto [refined, attn] = attention.forward(out.fused);
        out.refined = std::move(refined);
        out.attn = std::move(attn);
        auto dec = decoder.forward(out.refined);
        out.mask = std::move(dec.mask);
        out.logits = std::move(dec.logits);
        out.decoded = std::move(dec.decoded);
        return out;
    }

    Output forward(const ImageTensor<T>& images, bool training) const {
        return forward(Var<T>(images.tensor()), training);
    }

    nn::ParamRegistry<T> registry() const {
        nn::ParamRegistry<T> r;
        encoder.reg(r, "encoder");
        fusion.reg(r, "fusion");
        attention.reg(r, "attention");
        decoder.reg(r, "decoder");
        return r;
    }

    std::int64_t param_count() const { return registry().param_count(); }
};

}  // namespace dirl
