#pragma once

#include <Eigen/Core>

#include "dirl/ops.hpp"

namespace dirl::ops {

namespace detail {

template <class T>
using MatCM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapCM = Eigen::Map<MatCM<T>>;
template <class T>
using CMapCM = Eigen::Map<const MatCM<T>>;
template <class T>
using CMapRM = Eigen::Map<const MatRM<T>>;

// Unrolls x into columns: row (ci*k+ki)*k+kj, column b*P + oh*Wout+ow holds
// x[b, ci, oh*s+ki-pad, ow*s+kj-pad] (zero outside). One matrix for the whole
// batch so the GEMM sees a single wide product.
template <class T>
Tensor<T> im2col(const Tensor<T>& x, std::int64_t k, std::int64_t stride, std::int64_t pad,
                 std::int64_t out_h, std::int64_t out_w) {
    const Shape& s = x.shape();
    const std::int64_t K = s.c * k * k;
    const std::int64_t P = out_h * out_w;
    Tensor<T> col(Shape{1, 1, K, s.n * P});
    T* pc = col.data();
    const std::int64_t bp = s.n * P;
    for (std::int64_t b = 0; b < s.n; ++b) {
        for (std::int64_t ci = 0; ci < s.c; ++ci) {
            const T* px = &x.at(b, ci, 0, 0);
            for (std::int64_t ki = 0; ki < k; ++ki)
                for (std::int64_t kj = 0; kj < k; ++kj) {
                    T* row = pc + ((ci * k + ki) * k + kj) * bp + b * P;
                    for (std::int64_t oh = 0; oh < out_h; ++oh) {
                        const std::int64_t ih = oh * stride + ki - pad;
                        T* dst = row + oh * out_w;
                        if (ih < 0 || ih >= s.h) {
                            std::fill(dst, dst + out_w, T(0));
                            continue;
                        }
                        const T* src = px + ih * s.w;
                        for (std::int64_t ow = 0; ow < out_w; ++ow) {
                            const std::int64_t iw = ow * stride + kj - pad;
                            dst[ow] = (iw >= 0 && iw < s.w) ? src[iw] : T(0);
                        }
                    }
                }
        }
    }
    return col;
}

template <class T>
void col2im_add(const T* pc, Tensor<T>& dx, std::int64_t k, std::int64_t stride, std::int64_t pad,
                std::int64_t out_h, std::int64_t out_w) {
    const Shape& s = dx.shape();
    const std::int64_t P = out_h * out_w;
    const std::int64_t bp = s.n * P;
    for (std::int64_t b = 0; b < s.n; ++b)
        for (std::int64_t ci = 0; ci < s.c; ++ci) {
            T* px = &dx.at(b, ci, 0, 0);
            for (std::int64_t ki = 0; ki < k; ++ki)
                for (std::int64_t kj = 0; kj < k; ++kj) {
                    const T* row = pc + ((ci * k + ki) * k + kj) * bp + b * P;
                    for (std::int64_t oh = 0; oh < out_h; ++oh) {
                        const std::int64_t ih = oh * stride + ki - pad;
                        if (ih < 0 || ih >= s.h) continue;
                        T* dst = px + ih * s.w;
                        const T* src = row + oh * out_w;
                        for (std::int64_t ow = 0; ow < out_w; ++ow) {
                            const std::int64_t iw = ow * stride + kj - pad;
                            if (iw >= 0 && iw < s.w) dst[iw] += src[ow];
                        }
                    }
                }
        }
}

// Moves between (B,Cout,H,W) tensor layout and the (B*P x Cout) column-major
// GEMM layout where column c holds all batch pixels of channel c.
template <class T>
void scatter_rt_to_tensor(const T* rt, Tensor<T>& y, const T* bias) {
    const Shape& s = y.shape();
    const std::int64_t P = s.h * s.w;
    const std::int64_t bp = s.n * P;
    for (std::int64_t c = 0; c < s.c; ++c) {
        const T* src = rt + c * bp;
        const T bval = bias ? bias[c] : T(0);
        for (std::int64_t b = 0; b < s.n; ++b) {
            T* dst = &y.at(b, c, 0, 0);
            const T* sp = src + b * P;
            for (std::int64_t i = 0; i < P; ++i) dst[i] = sp[i] + bval;
        }
    }
}

template <class T>
void gather_tensor_to_rt(const Tensor<T>& dy, T* rt) {
    const Shape& s = dy.shape();
    const std::int64_t P = s.h * s.w;
    const std::int64_t bp = s.n * P;
    for (std::int64_t c = 0; c < s.c; ++c) {
        T* dst = rt + c * bp;
        for (std::int64_t b = 0; b < s.n; ++b) {
            const T* src = &dy.at(b, c, 0, 0);
            std::memcpy(dst + b * P, src, sizeof(T) * static_cast<std::size_t>(P));
        }
    }
}

}  // namespace detail

// 2-D convolution. weight:(Cout,Cin,k,k), optional bias:(1,Cout,1,1).
// out = floor((H + 2*pad - k)/stride) + 1 per axis.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::int64_t stride, std::int64_t pad) {
    const Shape& s = x.shape();
    const Shape& ws = weight.shape();
    const std::int64_t k = ws.h;
    if (ws.w != k) throw ShapeError("conv2d: non-square kernel " + ws.str());
    if (ws.c != s.c)
        throw ShapeError("conv2d: weight expects " + std::to_string(ws.c) + " input channels, got " + s.str());
    const std::int64_t num_h = s.h + 2 * pad - k;
    const std::int64_t num_w = s.w + 2 * pad - k;
    if (num_h < 0 || num_w < 0)
        throw ShapeError("conv2d: kernel " + std::to_string(k) + " with pad " + std::to_string(pad) +
                         " exceeds input " + s.str());
    // Floor division: trailing rows/cols that do not fit a full stride are
    // dropped, matching the usual framework convention.
    const std::int64_t out_h = num_h / stride + 1;
    const std::int64_t out_w = num_w / stride + 1;
    const std::int64_t cout = ws.n;
    const std::int64_t K = s.c * k * k;
    const std::int64_t BP = s.n * out_h * out_w;
    if (bias.defined() && bias.shape() != Shape{1, cout, 1, 1})
        throw ShapeError("conv2d: bias " + bias.shape().str() + " for " + std::to_string(cout) + " channels");

    Tensor<T> col = detail::im2col(x.value(), k, stride, pad, out_h, out_w);
    // weight memory is row-major (Cout x K), which reads column-major as (K x Cout).
    detail::CMapCM<T> wt(weight.value().data(), K, cout);
    detail::CMapRM<T> colM(col.data(), K, BP);  // im2col fills rows contiguously
    detail::MatCM<T> rt(BP, cout);
    rt.noalias() = colM.transpose() * wt;

    Tensor<T> out(Shape{s.n, cout, out_h, out_w});
    detail::scatter_rt_to_tensor(rt.data(), out, bias.defined() ? bias.value().data() : nullptr);

    auto xn = x.node();
    auto wn = weight.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    std::vector<std::shared_ptr<Node<T>>> parents{xn, wn};
    if (bn) parents.push_back(bn);

    return Var<T>(detail::node<T>(
        std::move(out), std::move(parents),
        [xn, wn, bn, col = std::move(col), k, stride, pad, out_h, out_w, K, BP, cout](Node<T>& n) {
            detail::MatCM<T> dyt(BP, cout);
            detail::gather_tensor_to_rt(n.grad, dyt.data());
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                for (std::int64_t c = 0; c < cout; ++c) bn->grad[c] += dyt.col(c).sum();
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                detail::CMapRM<T> colM(col.data(), K, BP);
                detail::MapCM<T> dwt(wn->grad.data(), K, cout);
                dwt.noalias() += colM * dyt;
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                detail::CMapCM<T> wt(wn->value.data(), K, cout);
                detail::MatRM<T> dcol(K, BP);
                dcol.noalias() = wt * dyt.transpose();
                detail::col2im_add(dcol.data(), xn->grad, k, stride, pad, out_h, out_w);
            }
        }));
}

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, std::int64_t stride, std::int64_t pad) {
    return conv2d(x, weight, Var<T>(), stride, pad);
}

}  // namespace dirl::ops
