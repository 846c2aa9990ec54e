#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "dirl/autograd.hpp"

// Differentiable tensor ops. Each op computes the forward value eagerly and
// registers a closure that scatters the output grad into its parents.
// Reductions are sequential per output element, so results are bitwise
// reproducible run to run.

namespace dirl::ops {

// Scoped switch that stops tape construction (inference paths).
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev_; }

private:
    bool prev_;
};

namespace detail {

template <class T>
std::shared_ptr<Node<T>> node(Tensor<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
                              std::function<void(Node<T>&)> backward_fn) {
    if (!grad_mode()) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        return n;
    }
    return dirl::detail::make_node<T>(std::move(value), std::move(parents), std::move(backward_fn));
}

}  // namespace detail

template <class T>
Var<T> constant(Tensor<T> v) {
    return Var<T>(std::move(v), false);
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a.value(), b.value(), "add");
    Tensor<T> out(a.shape());
    const T* pa = a.value().data();
    const T* pb = b.value().data();
    T* po = out.data();
    for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
    auto an = a.node();
    auto bn = b.node();
    return Var<T>(detail::node<T>(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
        if (an->requires_grad) dirl::detail::accumulate(*an, n.grad);
        if (bn->requires_grad) dirl::detail::accumulate(*bn, n.grad);
    }));
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a.value(), b.value(), "sub");
    Tensor<T> out(a.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
    auto an = a.node();
    auto bn = b.node();
    return Var<T>(detail::node<T>(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
        if (an->requires_grad) dirl::detail::accumulate(*an, n.grad);
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) bn->grad[i] -= n.grad[i];
        }
    }));
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a.value(), b.value(), "mul");
    Tensor<T> out(a.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
    auto an = a.node();
    auto bn = b.node();
    return Var<T>(detail::node<T>(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) an->grad[i] += n.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) bn->grad[i] += n.grad[i] * an->value[i];
        }
    }));
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a.value(), b.value(), "div");
    Tensor<T> out(a.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] / b.value()[i];
    auto an = a.node();
    auto bn = b.node();
    return Var<T>(detail::node<T>(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) an->grad[i] += n.grad[i] / bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
                const T d = bn->value[i];
                bn->grad[i] -= n.grad[i] * an->value[i] / (d * d);
            }
        }
    }));
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
    Tensor<T> out(a.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + s;
    auto an = a.node();
    return Var<T>(detail::node<T>(std::move(out), {an}, [an](Node<T>& n) {
        if (an->requires_grad) dirl::detail::accumulate(*an, n.grad);
    }));
}

template <class T>
Var<T> mul_scalar(const Var<T>& a, T s) {
    Tensor<T> out(a.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * s;
    auto an = a.node();
    return Var<T>(detail::node<T>(std::move(out), {an}, [an, s](Node<T>& n) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) an->grad[i] += n.grad[i] * s;
        }
    }));
}

template <class T>
Var<T> relu(const Var<T>& a) {
    Tensor<T> out(a.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] > T(0) ? a.value()[i] : T(0);
    auto an = a.node();
    return Var<T>(detail::node<T>(std::move(out), {an}, [an](Node<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
            if (an->value[i] > T(0)) an->grad[i] += n.grad[i];
    }));
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
    Tensor<T> out(a.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        const T x = a.value()[i];
        out[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
    }
    auto an = a.node();
    auto on = detail::node<T>(std::move(out), {an}, nullptr);
    if (on->requires_grad) {
        on->backward_fn = [an, op = on.get()](Node<T>& n) {
            an->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
                const T y = op->value[i];
                an->grad[i] += n.grad[i] * y * (T(1) - y);
            }
        };
    }
    return Var<T>(on);
}

template <class T>
Var<T> sum_all(const Var<T>& a) {
    Tensor<T> out = Tensor<T>::scalar(a.value().sum());
    auto an = a.node();
    return Var<T>(detail::node<T>(std::move(out), {an}, [an](Node<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const T g = n.grad[0];
        for (std::int64_t i = 0; i < an->grad.numel(); ++i) an->grad[i] += g;
    }));
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
    const T inv = T(1) / static_cast<T>(a.value().numel());
    Tensor<T> out = Tensor<T>::scalar(a.value().sum() * inv);
    auto an = a.node();
    return Var<T>(detail::node<T>(std::move(out), {an}, [an, inv](Node<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const T g = n.grad[0] * inv;
        for (std::int64_t i = 0; i < an->grad.numel(); ++i) an->grad[i] += g;
    }));
}

// x:(B,C,H,W) scaled per channel by s:(B,C,1,1).
template <class T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& s) {
    const Shape& xs = x.shape();
    if (s.shape() != Shape{xs.n, xs.c, 1, 1})
        throw ShapeError("scale_channels: scale " + s.shape().str() + " for input " + xs.str());
    Tensor<T> out(xs);
    const std::int64_t hw = xs.h * xs.w;
    for (std::int64_t b = 0; b < xs.n; ++b)
        for (std::int64_t c = 0; c < xs.c; ++c) {
            const T sv = s.value().at(b, c, 0, 0);
            const T* px = &x.value().at(b, c, 0, 0);
            T* po = &out.at(b, c, 0, 0);
            for (std::int64_t i = 0; i < hw; ++i) po[i] = px[i] * sv;
        }
    auto xn = x.node();
    auto sn = s.node();
    return Var<T>(detail::node<T>(std::move(out), {xn, sn}, [xn, sn, xs, hw](Node<T>& n) {
        for (std::int64_t b = 0; b < xs.n; ++b)
            for (std::int64_t c = 0; c < xs.c; ++c) {
                const T* pg = &n.grad.at(b, c, 0, 0);
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    const T sv = sn->value.at(b, c, 0, 0);
                    T* gx = &xn->grad.at(b, c, 0, 0);
                    for (std::int64_t i = 0; i < hw; ++i) gx[i] += pg[i] * sv;
                }
                if (sn->requires_grad) {
                    sn->ensure_grad();
                    const T* px = &xn->value.at(b, c, 0, 0);
                    T acc = T(0);
                    for (std::int64_t i = 0; i < hw; ++i) acc += pg[i] * px[i];
                    sn->grad.at(b, c, 0, 0) += acc;
                }
            }
    }));
}

// x:(B,C,H,W) scaled per position by a:(B,1,H,W).
template <class T>
Var<T> scale_spatial(const Var<T>& x, const Var<T>& a) {
    const Shape& xs = x.shape();
    if (a.shape() != Shape{xs.n, 1, xs.h, xs.w})
        throw ShapeError("scale_spatial: map " + a.shape().str() + " for input " + xs.str());
    Tensor<T> out(xs);
    const std::int64_t hw = xs.h * xs.w;
    for (std::int64_t b = 0; b < xs.n; ++b) {
        const T* pa = &a.value().at(b, 0, 0, 0);
        for (std::int64_t c = 0; c < xs.c; ++c) {
            const T* px = &x.value().at(b, c, 0, 0);
            T* po = &out.at(b, c, 0, 0);
            for (std::int64_t i = 0; i < hw; ++i) po[i] = px[i] * pa[i];
        }
    }
    auto xn = x.node();
    auto an = a.node();
    return Var<T>(detail::node<T>(std::move(out), {xn, an}, [xn, an, xs, hw](Node<T>& n) {
        for (std::int64_t b = 0; b < xs.n; ++b) {
            const T* pa = &an->value.at(b, 0, 0, 0);
            for (std::int64_t c = 0; c < xs.c; ++c) {
                const T* pg = &n.grad.at(b, c, 0, 0);
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    T* gx = &xn->grad.at(b, c, 0, 0);
                    for (std::int64_t i = 0; i < hw; ++i) gx[i] += pg[i] * pa[i];
                }
                if (an->requires_grad) {
                    an->ensure_grad();
                    const T* px = &xn->value.at(b, c, 0, 0);
                    T* ga = &an->grad.at(b, 0, 0, 0);
                    for (std::int64_t i = 0; i < hw; ++i) ga[i] += pg[i] * px[i];
                }
            }
        }
    }));
}

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
        throw ShapeError("concat_channels: " + sa.str() + " vs " + sb.str());
    Tensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
    const std::int64_t hw = sa.h * sa.w;
    for (std::int64_t n = 0; n < sa.n; ++n) {
        std::memcpy(&out.at(n, 0, 0, 0), &a.value().at(n, 0, 0, 0), sizeof(T) * static_cast<std::size_t>(sa.c * hw));
        std::memcpy(&out.at(n, sa.c, 0, 0), &b.value().at(n, 0, 0, 0), sizeof(T) * static_cast<std::size_t>(sb.c * hw));
    }
    auto an = a.node();
    auto bn = b.node();
    return Var<T>(detail::node<T>(std::move(out), {an, bn}, [an, bn, sa, sb, hw](Node<T>& n) {
        for (std::int64_t i = 0; i < sa.n; ++i) {
            if (an->requires_grad) {
                an->ensure_grad();
                const T* g = &n.grad.at(i, 0, 0, 0);
                T* ga = &an->grad.at(i, 0, 0, 0);
                for (std::int64_t j = 0; j < sa.c * hw; ++j) ga[j] += g[j];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                const T* g = &n.grad.at(i, sa.c, 0, 0);
                T* gb = &bn->grad.at(i, 0, 0, 0);
                for (std::int64_t j = 0; j < sb.c * hw; ++j) gb[j] += g[j];
            }
        }
    }));
}

template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
    const Shape& s = x.shape();
    Tensor<T> out(Shape{s.n, s.c, 1, 1});
    const std::int64_t hw = s.h * s.w;
    const T inv = T(1) / static_cast<T>(hw);
    for (std::int64_t b = 0; b < s.n; ++b)
        for (std::int64_t c = 0; c < s.c; ++c) {
            const T* px = &x.value().at(b, c, 0, 0);
            T acc = T(0);
            for (std::int64_t i = 0; i < hw; ++i) acc += px[i];
            out.at(b, c, 0, 0) = acc * inv;
        }
    auto xn = x.node();
    return Var<T>(detail::node<T>(std::move(out), {xn}, [xn, s, hw, inv](Node<T>& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::int64_t b = 0; b < s.n; ++b)
            for (std::int64_t c = 0; c < s.c; ++c) {
                const T g = n.grad.at(b, c, 0, 0) * inv;
                T* gx = &xn->grad.at(b, c, 0, 0);
                for (std::int64_t i = 0; i < hw; ++i) gx[i] += g;
            }
    }));
}

template <class T>
Var<T> global_max_pool(const Var<T>& x) {
    const Shape& s = x.shape();
    Tensor<T> out(Shape{s.n, s.c, 1, 1});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(s.n * s.c));
    const std::int64_t hw = s.h * s.w;
    for (std::int64_t b = 0; b < s.n; ++b)
        for (std::int64_t c = 0; c < s.c; ++c) {
            const T* px = &x.value().at(b, c, 0, 0);
            std::int64_t best = 0;
            for (std::int64_t i = 1; i < hw; ++i)
                if (px[i] > px[best]) best = i;
            out.at(b, c, 0, 0) = px[best];
            (*argmax)[static_cast<std::size_t>(b * s.c + c)] = best;
        }
    auto xn = x.node();
    return Var<T>(detail::node<T>(std::move(out), {xn}, [xn, s, argmax](Node<T>& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::int64_t b = 0; b < s.n; ++b)
            for (std::int64_t c = 0; c < s.c; ++c) {
                T* gx = &xn->grad.at(b, c, 0, 0);
                gx[(*argmax)[static_cast<std::size_t>(b * s.c + c)]] += n.grad.at(b, c, 0, 0);
            }
    }));
}

// Mean over the channel axis -> (B,1,H,W).
template <class T>
Var<T> channel_mean(const Var<T>& x) {
    const Shape& s = x.shape();
    Tensor<T> out(Shape{s.n, 1, s.h, s.w});
    const std::int64_t hw = s.h * s.w;
    const T inv = T(1) / static_cast<T>(s.c);
    for (std::int64_t b = 0; b < s.n; ++b) {
        T* po = &out.at(b, 0, 0, 0);
        for (std::int64_t c = 0; c < s.c; ++c) {
            const T* px = &x.value().at(b, c, 0, 0);
            for (std::int64_t i = 0; i < hw; ++i) po[i] += px[i];
        }
        for (std::int64_t i = 0; i < hw; ++i) po[i] *= inv;
    }
    auto xn = x.node();
    return Var<T>(detail::node<T>(std::move(out), {xn}, [xn, s, hw, inv](Node<T>& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::int64_t b = 0; b < s.n; ++b) {
            const T* pg = &n.grad.at(b, 0, 0, 0);
            for (std::int64_t c = 0; c < s.c; ++c) {
                T* gx = &xn->grad.at(b, c, 0, 0);
                for (std::int64_t i = 0; i < hw; ++i) gx[i] += pg[i] * inv;
            }
        }
    }));
}

// Max over the channel axis -> (B,1,H,W); ties resolve to the lowest channel.
template <class T>
Var<T> channel_max(const Var<T>& x) {
    const Shape& s = x.shape();
    Tensor<T> out(Shape{s.n, 1, s.h, s.w});
    const std::int64_t hw = s.h * s.w;
    auto argmax = std::make_shared<std::vector<std::int32_t>>(static_cast<std::size_t>(s.n * hw));
    for (std::int64_t b = 0; b < s.n; ++b) {
        T* po = &out.at(b, 0, 0, 0);
        std::int32_t* pam = argmax->data() + b * hw;
        const T* px0 = &x.value().at(b, 0, 0, 0);
        for (std::int64_t i = 0; i < hw; ++i) {
            po[i] = px0[i];
            pam[i] = 0;
        }
        for (std::int64_t c = 1; c < s.c; ++c) {
            const T* px = &x.value().at(b, c, 0, 0);
            for (std::int64_t i = 0; i < hw; ++i)
                if (px[i] > po[i]) {
                    po[i] = px[i];
                    pam[i] = static_cast<std::int32_t>(c);
                }
        }
    }
    auto xn = x.node();
    return Var<T>(detail::node<T>(std::move(out), {xn}, [xn, s, hw, argmax](Node<T>& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::int64_t b = 0; b < s.n; ++b) {
            const T* pg = &n.grad.at(b, 0, 0, 0);
            const std::int32_t* pam = argmax->data() + b * hw;
            T* gb = &xn->grad.at(b, 0, 0, 0);
            for (std::int64_t i = 0; i < hw; ++i) gb[pam[i] * hw + i] += pg[i];
        }
    }));
}

namespace detail {

// Source taps for one output axis of a x2 bilinear resize with half-pixel
// centers (align_corners=false): src = dst/2 - 0.25, edges clamped.
struct LinTap {
    std::int64_t i0, i1;
    double w0, w1;
};

inline std::vector<LinTap> bilinear_x2_taps(std::int64_t out_size, std::int64_t in_size) {
    std::vector<LinTap> taps(static_cast<std::size_t>(out_size));
    for (std::int64_t o = 0; o < out_size; ++o) {
        const double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
        double f = std::floor(src);
        std::int64_t i0 = static_cast<std::int64_t>(f);
        double frac = src - f;
        std::int64_t i1 = i0 + 1;
        i0 = std::clamp<std::int64_t>(i0, 0, in_size - 1);
        i1 = std::clamp<std::int64_t>(i1, 0, in_size - 1);
        taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - frac, frac};
    }
    return taps;
}

}  // namespace detail

// Doubles spatial size, bilinear, half-pixel centers.
template <class T>
Var<T> upsample_bilinear_x2(const Var<T>& x) {
    const Shape& s = x.shape();
    const Shape os{s.n, s.c, s.h * 2, s.w * 2};
    Tensor<T> out(os);
    const auto ty = detail::bilinear_x2_taps(os.h, s.h);
    const auto tx = detail::bilinear_x2_taps(os.w, s.w);
    for (std::int64_t b = 0; b < s.n; ++b)
        for (std::int64_t c = 0; c < s.c; ++c) {
            const T* px = &x.value().at(b, c, 0, 0);
            T* po = &out.at(b, c, 0, 0);
            for (std::int64_t oy = 0; oy < os.h; ++oy) {
                const auto& yt = ty[static_cast<std::size_t>(oy)];
                for (std::int64_t ox = 0; ox < os.w; ++ox) {
                    const auto& xt = tx[static_cast<std::size_t>(ox)];
                    po[oy * os.w + ox] = static_cast<T>(
                        yt.w0 * (xt.w0 * px[yt.i0 * s.w + xt.i0] + xt.w1 * px[yt.i0 * s.w + xt.i1]) +
                        yt.w1 * (xt.w0 * px[yt.i1 * s.w + xt.i0] + xt.w1 * px[yt.i1 * s.w + xt.i1]));
                }
            }
        }
    auto xn = x.node();
    return Var<T>(detail::node<T>(std::move(out), {xn}, [xn, s, os, ty, tx](Node<T>& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::int64_t b = 0; b < s.n; ++b)
            for (std::int64_t c = 0; c < s.c; ++c) {
                T* gx = &xn->grad.at(b, c, 0, 0);
                const T* pg = &n.grad.at(b, c, 0, 0);
                for (std::int64_t oy = 0; oy < os.h; ++oy) {
                    const auto& yt = ty[static_cast<std::size_t>(oy)];
                    for (std::int64_t ox = 0; ox < os.w; ++ox) {
                        const auto& xt = tx[static_cast<std::size_t>(ox)];
                        const T g = pg[oy * os.w + ox];
                        gx[yt.i0 * s.w + xt.i0] += static_cast<T>(yt.w0 * xt.w0) * g;
                        gx[yt.i0 * s.w + xt.i1] += static_cast<T>(yt.w0 * xt.w1) * g;
                        gx[yt.i1 * s.w + xt.i0] += static_cast<T>(yt.w1 * xt.w0) * g;
                        gx[yt.i1 * s.w + xt.i1] += static_cast<T>(yt.w1 * xt.w1) * g;
                    }
                }
            }
    }));
}

}  // namespace dirl::ops
