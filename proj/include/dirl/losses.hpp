#pragma once

#include "dirl/attention.hpp"
#include "dirl/conv.hpp"
#include "dirl/ops.hpp"

namespace dirl {

// Pixel losses. Sums run over the pixels of each image (as the per-pixel
// formulas are written) and the batch axis is averaged.

template <class T>
struct LossBreakdown {
    T bce = T(0);
    T ssim = T(0);
    T aux = T(0);
    T total = T(0);
    T lambda_aux = T(0.1);
};

// -sum_ij [ M log(Mhat) + (1-M) log(1-Mhat) ], batch-averaged. Predictions
// are clamped to [eps, 1-eps] before the logs; the gradient is zero where the
// clamp binds.
template <class T>
Var<T> bce_loss(const Var<T>& pred, const Tensor<T>& target, T eps = T(1e-7)) {
    check_same_shape(pred.value(), target, "bce_loss");
    const Shape& s = pred.shape();
    const std::int64_t per = s.c * s.h * s.w;
    const T inv_batch = T(1) / static_cast<T>(s.n);
    T acc = T(0);
    for (std::int64_t b = 0; b < s.n; ++b) {
        const T* pp = pred.value().data() + b * per;
        const T* pt = target.data() + b * per;
        T img = T(0);
        for (std::int64_t i = 0; i < per; ++i) {
            const T p = std::clamp(pp[i], eps, T(1) - eps);
            img -= pt[i] * std::log(p) + (T(1) - pt[i]) * std::log(T(1) - p);
        }
        acc += img;
    }
    auto pn = pred.node();
    Tensor<T> tgt = target;
    return Var<T>(ops::detail::node<T>(
        Tensor<T>::scalar(acc * inv_batch), {pn}, [pn, tgt = std::move(tgt), s, per, inv_batch, eps](Node<T>& n) {
            if (!pn->requires_grad) return;
            pn->ensure_grad();
            const T g = n.grad[0] * inv_batch;
            for (std::int64_t b = 0; b < s.n; ++b) {
                const T* pp = pn->value.data() + b * per;
                const T* pt = tgt.data() + b * per;
                T* gp = pn->grad.data() + b * per;
                for (std::int64_t i = 0; i < per; ++i) {
                    if (pp[i] <= eps || pp[i] >= T(1) - eps) continue;
                    gp[i] += g * ((T(1) - pt[i]) / (T(1) - pp[i]) - pt[i] / pp[i]);
                }
            }
        }));
}

struct SsimOptions {
    std::int64_t window = 11;
    double sigma = 1.5;  // <= 0 selects a uniform window
};

namespace detail {

template <class T>
Tensor<T> ssim_window(const SsimOptions& opt) {
    const std::int64_t k = opt.window;
    Tensor<T> w(Shape{1, 1, k, k});
    if (opt.sigma <= 0) {
        w.fill(T(1) / static_cast<T>(k * k));
        return w;
    }
    const double c = static_cast<double>(k - 1) / 2.0;
    double sum = 0;
    for (std::int64_t i = 0; i < k; ++i)
        for (std::int64_t j = 0; j < k; ++j) {
            const double d2 = (i - c) * (i - c) + (j - c) * (j - c);
            const double v = std::exp(-d2 / (2.0 * opt.sigma * opt.sigma));
            w.at(0, 0, i, j) = static_cast<T>(v);
            sum += v;
        }
    for (std::int64_t i = 0; i < k * k; ++i) w[i] = static_cast<T>(static_cast<double>(w[i]) / sum);
    return w;
}

}  // namespace detail

// 1 - mean SSIM over valid sliding windows (weighted local statistics,
// C1 = 0.01^2, C2 = 0.03^2). Value lies in [0,2]; 0 iff pred == gt.
template <class T>
Var<T> ssim_loss(const Var<T>& pred, const Tensor<T>& target, const SsimOptions& opt = {}) {
    check_same_shape(pred.value(), target, "ssim_loss");
    const Shape& s = pred.shape();
    if (s.c != 1) throw ShapeError("ssim_loss expects single-channel masks, got " + s.str());
    if (opt.window < 1 || opt.window > s.h || opt.window > s.w)
        throw ShapeError("ssim window " + std::to_string(opt.window) + " exceeds image " + s.str());
    const T c1 = T(0.01) * T(0.01);
    const T c2 = T(0.03) * T(0.03);

    Var<T> kernel(detail::ssim_window<T>(opt), false);
    Var<T> y = ops::constant(target);
    auto win = [&](const Var<T>& v) { return ops::conv2d(v, kernel, 1, 0); };

    Var<T> mu_x = win(pred);
    Var<T> mu_y = win(y);
    Var<T> mu_xx = ops::mul(mu_x, mu_x);
    Var<T> mu_yy = ops::mul(mu_y, mu_y);
    Var<T> mu_xy = ops::mul(mu_x, mu_y);
    Var<T> sigma_xx = ops::sub(win(ops::mul(pred, pred)), mu_xx);
    Var<T> sigma_yy = ops::sub(win(ops::mul(y, y)), mu_yy);
    Var<T> sigma_xy = ops::sub(win(ops::mul(pred, y)), mu_xy);

    Var<T> num = ops::mul(ops::add_scalar(ops::mul_scalar(mu_xy, T(2)), c1),
                          ops::add_scalar(ops::mul_scalar(sigma_xy, T(2)), c2));
    Var<T> den = ops::mul(ops::add_scalar(ops::add(mu_xx, mu_yy), c1),
                          ops::add_scalar(ops::add(sigma_xx, sigma_yy), c2));
    Var<T> ssim_map = ops::div(num, den);
    return ops::add_scalar(ops::mul_scalar(ops::mean_all(ssim_map), T(-1)), T(1));
}

// Sum over levels of the BCE between each spatial attention map and the
// ground truth resized to that level.
template <class T>
Var<T> aux_attention_loss(const std::vector<Var<T>>& attn, const Tensor<T>& gt) {
    if (attn.empty()) return ops::constant(Tensor<T>::scalar(T(0)));
    Var<T> acc;
    for (const auto& a : attn) {
        const Shape& s = a.shape();
        Tensor<T> tgt = resize_mask_area(gt, s.h, s.w);
        Var<T> term = bce_loss(a, tgt);
        acc = acc.defined() ? ops::add(acc, term) : term;
    }
    return acc;
}

template <class T>
struct TotalLoss {
    Var<T> total;
    LossBreakdown<T> breakdown;
};

// L_total = L_bce + L_ssim + lambda * L_aux.
template <class T>
TotalLoss<T> total_loss(const Var<T>& pred, const std::vector<Var<T>>& attn, const Tensor<T>& gt, T lambda_aux,
                        const SsimOptions& ssim_opt = {}) {
    Var<T> bce = bce_loss(pred, gt);
    Var<T> ssim = ssim_loss(pred, gt, ssim_opt);
    Var<T> aux = aux_attention_loss(attn, gt);
    Var<T> total = ops::add(ops::add(bce, ssim), ops::mul_scalar(aux, lambda_aux));
    TotalLoss<T> out;
    out.total = total;
    out.breakdown = {bce.item(), ssim.item(), aux.item(), total.item(), lambda_aux};
    return out;
}

}  // namespace dirl
