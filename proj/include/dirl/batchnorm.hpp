#pragma once

#include "dirl/ops.hpp"

namespace dirl::ops {

// Per-channel batch normalization over (N,H,W). Training mode normalizes by
// batch statistics and updates the running buffers in place (biased variance
// for normalization, unbiased for the running average); eval mode applies the
// frozen running statistics as a per-channel affine map.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, T momentum = T(0.1), T eps = T(1e-5)) {
    const Shape& s = x.shape();
    const Shape pshape{1, s.c, 1, 1};
    if (gamma.shape() != pshape || beta.shape() != pshape)
        throw ShapeError("batch_norm: affine params " + gamma.shape().str() + " for input " + s.str());
    const std::int64_t m = s.n * s.h * s.w;
    const std::int64_t hw = s.h * s.w;

    Tensor<T> out(s);
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();

    if (!training) {
        for (std::int64_t c = 0; c < s.c; ++c) {
            const T inv = T(1) / std::sqrt(running_var[c] + eps);
            const T g = gamma.value()[c] * inv;
            const T b = beta.value()[c] - running_mean[c] * g;
            for (std::int64_t n = 0; n < s.n; ++n) {
                const T* px = &x.value().at(n, c, 0, 0);
                T* po = &out.at(n, c, 0, 0);
                for (std::int64_t i = 0; i < hw; ++i) po[i] = px[i] * g + b;
            }
        }
        Tensor<T> scale(pshape);
        for (std::int64_t c = 0; c < s.c; ++c) scale[c] = gamma.value()[c] / std::sqrt(running_var[c] + eps);
        Tensor<T> rm = running_mean;
        Tensor<T> rv = running_var;
        return Var<T>(detail::node<T>(
            std::move(out), {xn, gn, bn}, [xn, gn, bn, scale = std::move(scale), rm = std::move(rm), rv = std::move(rv), s, hw, eps](Node<T>& n) {
                for (std::int64_t c = 0; c < s.c; ++c) {
                    T dsum = T(0), dxsum = T(0);
                    for (std::int64_t b = 0; b < s.n; ++b) {
                        const T* pg = &n.grad.at(b, c, 0, 0);
                        const T* px = &xn->value.at(b, c, 0, 0);
                        if (xn->requires_grad) {
                            xn->ensure_grad();
                            T* gx = &xn->grad.at(b, c, 0, 0);
                            for (std::int64_t i = 0; i < hw; ++i) gx[i] += pg[i] * scale[c];
                        }
                        for (std::int64_t i = 0; i < hw; ++i) {
                            dsum += pg[i];
                            dxsum += pg[i] * (px[i] - rm[c]);
                        }
                    }
                    if (bn->requires_grad) {
                        bn->ensure_grad();
                        bn->grad[c] += dsum;
                    }
                    if (gn->requires_grad) {
                        gn->ensure_grad();
                        gn->grad[c] += dxsum / std::sqrt(rv[c] + eps);
                    }
                }
            }));
    }

    // Training: normalize with batch statistics.
    Tensor<T> mean(pshape), invstd(pshape);
    Tensor<T> xhat(s);
    for (std::int64_t c = 0; c < s.c; ++c) {
        T acc = T(0);
        for (std::int64_t n = 0; n < s.n; ++n) {
            const T* px = &x.value().at(n, c, 0, 0);
            for (std::int64_t i = 0; i < hw; ++i) acc += px[i];
        }
        const T mu = acc / static_cast<T>(m);
        T vacc = T(0);
        for (std::int64_t n = 0; n < s.n; ++n) {
            const T* px = &x.value().at(n, c, 0, 0);
            for (std::int64_t i = 0; i < hw; ++i) {
                const T d = px[i] - mu;
                vacc += d * d;
            }
        }
        const T var = vacc / static_cast<T>(m);
        const T istd = T(1) / std::sqrt(var + eps);
        mean[c] = mu;
        invstd[c] = istd;
        const T g = gamma.value()[c];
        const T b = beta.value()[c];
        for (std::int64_t n = 0; n < s.n; ++n) {
            const T* px = &x.value().at(n, c, 0, 0);
            T* ph = &xhat.at(n, c, 0, 0);
            T* po = &out.at(n, c, 0, 0);
            for (std::int64_t i = 0; i < hw; ++i) {
                ph[i] = (px[i] - mu) * istd;
                po[i] = ph[i] * g + b;
            }
        }
        running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mu;
        const T unbiased = m > 1 ? var * static_cast<T>(m) / static_cast<T>(m - 1) : var;
        running_var[c] = (T(1) - momentum) * running_var[c] + momentum * unbiased;
    }

    return Var<T>(detail::node<T>(
        std::move(out), {xn, gn, bn},
        [xn, gn, bn, xhat = std::move(xhat), invstd = std::move(invstd), s, hw, m](Node<T>& n) {
            for (std::int64_t c = 0; c < s.c; ++c) {
                // dl/dxhat = g * dy; reduce sums once per channel.
                T sum_dy = T(0), sum_dy_xhat = T(0);
                for (std::int64_t b = 0; b < s.n; ++b) {
                    const T* pg = &n.grad.at(b, c, 0, 0);
                    const T* ph = &xhat.at(b, c, 0, 0);
                    for (std::int64_t i = 0; i < hw; ++i) {
                        sum_dy += pg[i];
                        sum_dy_xhat += pg[i] * ph[i];
                    }
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    bn->grad[c] += sum_dy;
                }
                if (gn->requires_grad) {
                    gn->ensure_grad();
                    gn->grad[c] += sum_dy_xhat;
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    const T g = gn->value[c];
                    const T istd = invstd[c];
                    const T inv_m = T(1) / static_cast<T>(m);
                    for (std::int64_t b = 0; b < s.n; ++b) {
                        const T* pg = &n.grad.at(b, c, 0, 0);
                        const T* ph = &xhat.at(b, c, 0, 0);
                        T* gx = &xn->grad.at(b, c, 0, 0);
                        for (std::int64_t i = 0; i < hw; ++i)
                            gx[i] += g * istd * (pg[i] - inv_m * sum_dy - ph[i] * inv_m * sum_dy_xhat);
                    }
                }
            }
        }));
}

}  // namespace dirl::ops
