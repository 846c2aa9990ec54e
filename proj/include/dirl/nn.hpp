#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dirl/batchnorm.hpp"
#include "dirl/conv.hpp"
#include "dirl/rng.hpp"

namespace dirl::nn {

// Flat name -> tensor view of a model. Optimizers walk params, checkpoints
// walk params + buffers (BN running statistics). Order is registration order,
// which is fixed by module construction order, so the optimizer state and
// init stream line up deterministically across runs.
template <class T>
struct ParamRegistry {
    std::vector<std::pair<std::string, Var<T>>> params;
    std::vector<std::pair<std::string, std::shared_ptr<Tensor<T>>>> buffers;

    void add(const std::string& name, const Var<T>& v) { params.emplace_back(name, v); }
    void add_buffer(const std::string& name, std::shared_ptr<Tensor<T>> t) { buffers.emplace_back(name, std::move(t)); }

    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (const auto& [name, v] : params) n += v.value().numel();
        return n;
    }

    void zero_grad() {
        for (auto& [name, v] : params) v.zero_grad();
    }
};

template <class T>
Tensor<T> kaiming_normal(Shape s, std::int64_t fan_out, Rng& rng) {
    Tensor<T> w(s);
    const double std = std::sqrt(2.0 / static_cast<double>(fan_out));
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal(0.0, std));
    return w;
}

template <class T>
struct Conv2dLayer {
    Var<T> weight;
    Var<T> bias;  // undefined when constructed bias-free
    std::int64_t stride = 1;
    std::int64_t pad = 0;

    Conv2dLayer() = default;
    Conv2dLayer(std::int64_t cin, std::int64_t cout, std::int64_t k, std::int64_t stride_, std::int64_t pad_,
                bool with_bias, Rng& rng)
        : stride(stride_), pad(pad_) {
        weight = Var<T>(kaiming_normal<T>(Shape{cout, cin, k, k}, cout * k * k, rng), true);
        if (with_bias) bias = Var<T>(Tensor<T>(Shape{1, cout, 1, 1}), true);
    }

    Var<T> operator()(const Var<T>& x) const { return ops::conv2d(x, weight, bias, stride, pad); }

    void reg(ParamRegistry<T>& r, const std::string& prefix) const {
        r.add(prefix + ".weight", weight);
        if (bias.defined()) r.add(prefix + ".bias", bias);
    }

    std::int64_t out_channels() const { return weight.shape().n; }
};

template <class T>
struct BatchNorm2d {
    Var<T> gamma;
    Var<T> beta;
    std::shared_ptr<Tensor<T>> running_mean;
    std::shared_ptr<Tensor<T>> running_var;

    BatchNorm2d() = default;
    explicit BatchNorm2d(std::int64_t channels) {
        gamma = Var<T>(Tensor<T>(Shape{1, channels, 1, 1}, T(1)), true);
        beta = Var<T>(Tensor<T>(Shape{1, channels, 1, 1}), true);
        running_mean = std::make_shared<Tensor<T>>(Shape{1, channels, 1, 1});
        running_var = std::make_shared<Tensor<T>>(Shape{1, channels, 1, 1}, T(1));
    }

    Var<T> operator()(const Var<T>& x, bool training) const {
        return ops::batch_norm(x, gamma, beta, *running_mean, *running_var, training);
    }

    void reg(ParamRegistry<T>& r, const std::string& prefix) const {
        r.add(prefix + ".gamma", gamma);
        r.add(prefix + ".beta", beta);
        r.add_buffer(prefix + ".running_mean", running_mean);
        r.add_buffer(prefix + ".running_var", running_var);
    }
};

// conv-bn-relu, conv-bn, identity-or-projection skip, relu. The ResNet basic
// block; convs are bias-free since BN absorbs the shift.
template <class T>
struct ResidualBlock {
    Conv2dLayer<T> conv1, conv2;
    BatchNorm2d<T> bn1, bn2;
    std::optional<Conv2dLayer<T>> proj;
    std::optional<BatchNorm2d<T>> proj_bn;

    ResidualBlock() = default;
    ResidualBlock(std::int64_t cin, std::int64_t cout, std::int64_t stride, Rng& rng)
        : conv1(cin, cout, 3, stride, 1, false, rng),
          conv2(cout, cout, 3, 1, 1, false, rng),
          bn1(cout),
          bn2(cout) {
        if (stride != 1 || cin != cout) {
            proj.emplace(cin, cout, 1, stride, 0, false, rng);
            proj_bn.emplace(cout);
        }
    }

    Var<T> operator()(const Var<T>& x, bool training) const {
        Var<T> out = ops::relu(bn1(conv1(x), training));
        out = bn2(conv2(out), training);
        Var<T> skip = proj ? (*proj_bn)((*proj)(x), training) : x;
        return ops::relu(ops::add(out, skip));
    }

    void reg(ParamRegistry<T>& r, const std::string& prefix) const {
        conv1.reg(r, prefix + ".conv1");
        bn1.reg(r, prefix + ".bn1");
        conv2.reg(r, prefix + ".conv2");
        bn2.reg(r, prefix + ".bn2");
        if (proj) {
            proj->reg(r, prefix + ".proj");
            proj_bn->reg(r, prefix + ".proj_bn");
        }
    }
};

enum class Resample { UP, DOWN };

// The transition-stage resamplers: UP is bilinear x2 followed by a 3x3
// stride-1 conv, DOWN is a 3x3 stride-2 conv. Both project to the channel
// count of the destination level; no activation or normalization.
template <class T>
struct ResampleLayer {
    Resample kind = Resample::UP;
    Conv2dLayer<T> conv;

    ResampleLayer() = default;
    ResampleLayer(Resample kind_, std::int64_t cin, std::int64_t cout, Rng& rng)
        : kind(kind_), conv(cin, cout, 3, kind_ == Resample::DOWN ? 2 : 1, 1, true, rng) {}

    Var<T> operator()(const Var<T>& x) const {
        if (kind == Resample::UP) return conv(ops::upsample_bilinear_x2(x));
        return conv(x);
    }

    void reg(ParamRegistry<T>& r, const std::string& prefix) const { conv.reg(r, prefix + ".conv"); }
};

}  // namespace dirl::nn
