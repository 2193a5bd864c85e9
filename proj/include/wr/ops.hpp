#pragma once

// Primitive tensor operations with define-by-run reverse-mode differentiation.
// Every primitive is pure and deterministic: identical inputs give bit-identical
// outputs, and each checks its result for NaN/Inf. When a Tape is supplied and
// any input requires a gradient, the op appends exactly one backward node; with
// a null tape the same code path runs as plain inference.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "wr/tensor.hpp"

namespace wr::ops {

namespace detail {

template <typename S>
inline bool wants_grad(Tape<S>* tape, std::initializer_list<const Tensor4<S>*> ins) {
    if (!tape) return false;
    for (const Tensor4<S>* t : ins)
        if (t && t->defined() && t->requires_grad()) return true;
    return false;
}

template <typename S>
inline const S* grad_of(const std::shared_ptr<wr::detail::Storage<S>>& st) {
    return st->grad.empty() ? nullptr : st->grad.data();
}

template <typename S>
inline S* acc_grad(const std::shared_ptr<wr::detail::Storage<S>>& st) {
    return st->ensure_grad().data();
}

inline void check_same_shape(const Shape4& a, const Shape4& b, const char* op) {
    if (!(a == b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename S>
Tensor4<S> add(Tape<S>* tape, const Tensor4<S>& a, const Tensor4<S>& b) {
    detail::check_same_shape(a.shape(), b.shape(), "add");
    Tensor4<S> out(a.shape());
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    wr::detail::check_finite(out, "add");
    if (detail::wants_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        auto as = a.storage(), bs = b.storage(), os = out.storage();
        tape->record([as, bs, os, n] {
            const S* g = detail::grad_of(os);
            if (!g) return;
            if (as->requires_grad) {
                S* ga = detail::acc_grad(as);
                for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (bs->requires_grad) {
                S* gb = detail::acc_grad(bs);
                for (std::int64_t i = 0; i < n; ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

template <typename S>
Tensor4<S> mul(Tape<S>* tape, const Tensor4<S>& a, const Tensor4<S>& b) {
    detail::check_same_shape(a.shape(), b.shape(), "mul");
    Tensor4<S> out(a.shape());
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    wr::detail::check_finite(out, "mul");
    if (detail::wants_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        auto as = a.storage(), bs = b.storage(), os = out.storage();
        tape->record([as, bs, os, n] {
            const S* g = detail::grad_of(os);
            if (!g) return;
            if (as->requires_grad) {
                S* ga = detail::acc_grad(as);
                const S* pb2 = bs->data.data();
                for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i] * pb2[i];
            }
            if (bs->requires_grad) {
                S* gb = detail::acc_grad(bs);
                const S* pa2 = as->data.data();
                for (std::int64_t i = 0; i < n; ++i) gb[i] += g[i] * pa2[i];
            }
        });
    }
    return out;
}

template <typename S>
Tensor4<S> scale(Tape<S>* tape, const Tensor4<S>& x, double s) {
    Tensor4<S> out(x.shape());
    const S* px = x.data();
    S* po = out.data();
    const std::int64_t n = out.numel();
    const S sv = static_cast<S>(s);
    for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] * sv;
    wr::detail::check_finite(out, "scale");
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        auto xs = x.storage(), os = out.storage();
        tape->record([xs, os, n, sv] {
            const S* g = detail::grad_of(os);
            if (!g) return;
            S* gx = detail::acc_grad(xs);
            for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i] * sv;
        });
    }
    return out;
}

template <typename S>
Tensor4<S> gelu(Tape<S>* tape, const Tensor4<S>& x) {
    // tanh form: 0.5 x (1 + tanh(k (x + a x^3))), smooth everywhere.
    constexpr double kK = 0.7978845608028653558798921198687;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    Tensor4<S> out(x.shape());
    const S* px = x.data();
    S* po = out.data();
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(px[i]);
        const double t = std::tanh(kK * (v + kA * v * v * v));
        po[i] = static_cast<S>(0.5 * v * (1.0 + t));
    }
    wr::detail::check_finite(out, "gelu");
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        auto xs = x.storage(), os = out.storage();
        tape->record([xs, os, n] {
            const S* g = detail::grad_of(os);
            if (!g) return;
            S* gx = detail::acc_grad(xs);
            const S* px2 = xs->data.data();
            for (std::int64_t i = 0; i < n; ++i) {
                const double v = static_cast<double>(px2[i]);
                const double t = std::tanh(kK * (v + kA * v * v * v));
                const double d = 0.5 * (1.0 + t) +
                                 0.5 * v * (1.0 - t * t) * kK * (1.0 + 3.0 * kA * v * v);
                gx[i] += g[i] * static_cast<S>(d);
            }
        });
    }
    return out;
}

template <typename S>
Tensor4<S> sum_all(Tape<S>* tape, const Tensor4<S>& x) {
    Tensor4<S> out(Shape4{1, 1, 1, 1});
    const S* px = x.data();
    const std::int64_t n = x.numel();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(px[i]);
    out.data()[0] = static_cast<S>(acc);
    wr::detail::check_finite(out, "sum_all");
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        auto xs = x.storage(), os = out.storage();
        tape->record([xs, os, n] {
            const S* g = detail::grad_of(os);
            if (!g) return;
            S* gx = detail::acc_grad(xs);
            for (std::int64_t i = 0; i < n; ++i) gx[i] += g[0];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convolutions (stride 1; 3x3 kernels use zero padding 1)
// ---------------------------------------------------------------------------

template <typename S>
Tensor4<S> conv1x1(Tape<S>* tape, const Tensor4<S>& x, const Tensor4<S>& w,
                   const Tensor4<S>& bias = Tensor4<S>()) {
    const Shape4 xs = x.shape();
    const Shape4 ws = w.shape();
    if (ws.h != 1 || ws.w != 1)
        throw ShapeError("conv1x1: weight must be (Cout,Cin,1,1), got " + ws.str());
    if (ws.c != xs.c)
        throw ShapeError("conv1x1: weight expects " + std::to_string(ws.c) +
                         " input channels, tensor has " + std::to_string(xs.c));
    if (bias.defined() && !(bias.shape() == Shape4{ws.b, 1, 1, 1}))
        throw ShapeError("conv1x1: bias must be (Cout,1,1,1), got " + bias.shape().str());

    const std::int64_t B = xs.b, Ci = xs.c, Co = ws.b, HW = xs.h * xs.w;
    Tensor4<S> out(Shape4{B, Co, xs.h, xs.w});
    const S* px = x.data();
    const S* pw = w.data();
    const S* pb = bias.defined() ? bias.data() : nullptr;
    S* po = out.data();
    for (std::int64_t b = 0; b < B; ++b) {
        const S* xb = px + b * Ci * HW;
        S* ob = po + b * Co * HW;
        for (std::int64_t o = 0; o < Co; ++o) {
            S* orow = ob + o * HW;
            const S init = pb ? pb[o] : S(0);
            for (std::int64_t s = 0; s < HW; ++s) orow[s] = init;
            for (std::int64_t i = 0; i < Ci; ++i) {
                const S a = pw[o * Ci + i];
                const S* xrow = xb + i * HW;
                for (std::int64_t s = 0; s < HW; ++s) orow[s] += a * xrow[s];
            }
        }
    }
    wr::detail::check_finite(out, "conv1x1");
    if (detail::wants_grad(tape, {&x, &w, &bias})) {
        out.set_requires_grad(true);
        auto xst = x.storage(), wst = w.storage(), ost = out.storage();
        auto bst = bias.defined() ? bias.storage() : nullptr;
        tape->record([xst, wst, bst, ost, B, Ci, Co, HW] {
            const S* g = detail::grad_of(ost);
            if (!g) return;
            const S* px2 = xst->data.data();
            const S* pw2 = wst->data.data();
            if (xst->requires_grad) {
                S* gx = detail::acc_grad(xst);
                for (std::int64_t b = 0; b < B; ++b)
                    for (std::int64_t o = 0; o < Co; ++o) {
                        const S* grow = g + (b * Co + o) * HW;
                        for (std::int64_t i = 0; i < Ci; ++i) {
                            const S a = pw2[o * Ci + i];
                            S* gxrow = gx + (b * Ci + i) * HW;
                            for (std::int64_t s = 0; s < HW; ++s) gxrow[s] += a * grow[s];
                        }
                    }
            }
            if (wst->requires_grad) {
                S* gw = detail::acc_grad(wst);
                for (std::int64_t b = 0; b < B; ++b)
                    for (std::int64_t o = 0; o < Co; ++o) {
                        const S* grow = g + (b * Co + o) * HW;
                        for (std::int64_t i = 0; i < Ci; ++i) {
                            const S* xrow = px2 + (b * Ci + i) * HW;
                            double acc = 0.0;
                            for (std::int64_t s = 0; s < HW; ++s)
                                acc += static_cast<double>(grow[s]) * xrow[s];
                            gw[o * Ci + i] += static_cast<S>(acc);
                        }
                    }
            }
            if (bst && bst->requires_grad) {
                S* gb = detail::acc_grad(bst);
                for (std::int64_t b = 0; b < B; ++b)
                    for (std::int64_t o = 0; o < Co; ++o) {
                        const S* grow = g + (b * Co + o) * HW;
                        double acc = 0.0;
                        for (std::int64_t s = 0; s < HW; ++s) acc += static_cast<double>(grow[s]);
                        gb[o] += static_cast<S>(acc);
                    }
            }
        });
    }
    return out;
}

namespace detail {

// Shared 3x3 kernel walker: full convolution when Ci>0, depthwise when Ci==0.
// Kept as one routine so forward/backward bounds logic cannot diverge.
template <typename S, typename Fn>
inline void for_valid_3x3(std::int64_t H, std::int64_t W, std::int64_t dy, std::int64_t dx,
                          Fn&& fn) {
    const std::int64_t y0 = std::max<std::int64_t>(0, 1 - dy);
    const std::int64_t y1 = std::min<std::int64_t>(H, H + 1 - dy);
    const std::int64_t x0 = std::max<std::int64_t>(0, 1 - dx);
    const std::int64_t x1 = std::min<std::int64_t>(W, W + 1 - dx);
    for (std::int64_t y = y0; y < y1; ++y) fn(y, x0, x1);
}

}  // namespace detail

template <typename S>
Tensor4<S> conv3x3(Tape<S>* tape, const Tensor4<S>& x, const Tensor4<S>& w,
                   const Tensor4<S>& bias = Tensor4<S>()) {
    const Shape4 xs = x.shape();
    const Shape4 ws = w.shape();
    if (ws.h != 3 || ws.w != 3)
        throw ShapeError("conv3x3: weight must be (Cout,Cin,3,3), got " + ws.str());
    if (ws.c != xs.c)
        throw ShapeError("conv3x3: weight expects " + std::to_string(ws.c) +
                         " input channels, tensor has " + std::to_string(xs.c));
    if (bias.defined() && !(bias.shape() == Shape4{ws.b, 1, 1, 1}))
        throw ShapeError("conv3x3: bias must be (Cout,1,1,1), got " + bias.shape().str());

    const std::int64_t B = xs.b, Ci = xs.c, Co = ws.b, H = xs.h, W = xs.w, HW = H * W;
    Tensor4<S> out(Shape4{B, Co, H, W});
    const S* px = x.data();
    const S* pw = w.data();
    const S* pb = bias.defined() ? bias.data() : nullptr;
    S* po = out.data();
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t o = 0; o < Co; ++o) {
            S* orow = po + (b * Co + o) * HW;
            const S init = pb ? pb[o] : S(0);
            for (std::int64_t s = 0; s < HW; ++s) orow[s] = init;
            for (std::int64_t i = 0; i < Ci; ++i) {
                const S* xch = px + (b * Ci + i) * HW;
                for (std::int64_t dy = 0; dy < 3; ++dy)
                    for (std::int64_t dx = 0; dx < 3; ++dx) {
                        const S a = pw[((o * Ci + i) * 3 + dy) * 3 + dx];
                        if (a == S(0)) continue;
                        detail::for_valid_3x3<S>(H, W, dy, dx,
                            [&](std::int64_t y, std::int64_t x0, std::int64_t x1) {
                                S* orow2 = orow + y * W;
                                const S* xrow = xch + (y + dy - 1) * W + (dx - 1);
                                for (std::int64_t xx = x0; xx < x1; ++xx)
                                    orow2[xx] += a * xrow[xx];
                            });
                    }
            }
        }
    wr::detail::check_finite(out, "conv3x3");
    if (detail::wants_grad(tape, {&x, &w, &bias})) {
        out.set_requires_grad(true);
        auto xst = x.storage(), wst = w.storage(), ost = out.storage();
        auto bst = bias.defined() ? bias.storage() : nullptr;
        tape->record([xst, wst, bst, ost, B, Ci, Co, H, W, HW] {
            const S* g = detail::grad_of(ost);
            if (!g) return;
            const S* px2 = xst->data.data();
            const S* pw2 = wst->data.data();
            S* gx = xst->requires_grad ? detail::acc_grad(xst) : nullptr;
            S* gw = wst->requires_grad ? detail::acc_grad(wst) : nullptr;
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t o = 0; o < Co; ++o) {
                    const S* grow = g + (b * Co + o) * HW;
                    for (std::int64_t i = 0; i < Ci; ++i) {
                        const S* xch = px2 + (b * Ci + i) * HW;
                        S* gxch = gx ? gx + (b * Ci + i) * HW : nullptr;
                        for (std::int64_t dy = 0; dy < 3; ++dy)
                            for (std::int64_t dx = 0; dx < 3; ++dx) {
                                const S a = pw2[((o * Ci + i) * 3 + dy) * 3 + dx];
                                double wacc = 0.0;
                                detail::for_valid_3x3<S>(H, W, dy, dx,
                                    [&](std::int64_t y, std::int64_t x0, std::int64_t x1) {
                                        const S* grow2 = grow + y * W;
                                        const S* xrow = xch + (y + dy - 1) * W + (dx - 1);
                                        S* gxrow = gxch ? gxch + (y + dy - 1) * W + (dx - 1)
                                                        : nullptr;
                                        for (std::int64_t xx = x0; xx < x1; ++xx) {
                                            if (gw) wacc += static_cast<double>(grow2[xx]) * xrow[xx];
                                            if (gxrow) gxrow[xx] += a * grow2[xx];
                                        }
                                    });
                                if (gw) gw[((o * Ci + i) * 3 + dy) * 3 + dx] += static_cast<S>(wacc);
                            }
                    }
                }
            if (bst && bst->requires_grad) {
                S* gb = detail::acc_grad(bst);
                for (std::int64_t b = 0; b < B; ++b)
                    for (std::int64_t o = 0; o < Co; ++o) {
                        const S* grow = g + (b * Co + o) * HW;
                        double acc = 0.0;
                        for (std::int64_t s = 0; s < HW; ++s) acc += static_cast<double>(grow[s]);
                        gb[o] += static_cast<S>(acc);
                    }
            }
        });
    }
    return out;
}

template <typename S>
Tensor4<S> conv_dw3x3(Tape<S>* tape, const Tensor4<S>& x, const Tensor4<S>& w,
                      const Tensor4<S>& bias = Tensor4<S>()) {
    const Shape4 xs = x.shape();
    const Shape4 ws = w.shape();
    if (ws.c != 1 || ws.h != 3 || ws.w != 3)
        throw ShapeError("conv_dw3x3: weight must be (C,1,3,3), got " + ws.str());
    if (ws.b != xs.c)
        throw ShapeError("conv_dw3x3: weight has " + std::to_string(ws.b) +
                         " channels, tensor has " + std::to_string(xs.c));
    if (bias.defined() && !(bias.shape() == Shape4{xs.c, 1, 1, 1}))
        throw ShapeError("conv_dw3x3: bias must be (C,1,1,1), got " + bias.shape().str());

    const std::int64_t B = xs.b, C = xs.c, H = xs.h, W = xs.w, HW = H * W;
    Tensor4<S> out(Shape4{B, C, H, W});
    const S* px = x.data();
    const S* pw = w.data();
    const S* pb = bias.defined() ? bias.data() : nullptr;
    S* po = out.data();
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c) {
            const S* xch = px + (b * C + c) * HW;
            S* orow = po + (b * C + c) * HW;
            const S init = pb ? pb[c] : S(0);
            for (std::int64_t s = 0; s < HW; ++s) orow[s] = init;
            for (std::int64_t dy = 0; dy < 3; ++dy)
                for (std::int64_t dx = 0; dx < 3; ++dx) {
                    const S a = pw[(c * 3 + dy) * 3 + dx];
                    if (a == S(0)) continue;
                    detail::for_valid_3x3<S>(H, W, dy, dx,
                        [&](std::int64_t y, std::int64_t x0, std::int64_t x1) {
                            S* orow2 = orow + y * W;
                            const S* xrow = xch + (y + dy - 1) * W + (dx - 1);
                            for (std::int64_t xx = x0; xx < x1; ++xx) orow2[xx] += a * xrow[xx];
                        });
                }
        }
    wr::detail::check_finite(out, "conv_dw3x3");
    if (detail::wants_grad(tape, {&x, &w, &bias})) {
        out.set_requires_grad(true);
        auto xst = x.storage(), wst = w.storage(), ost = out.storage();
        auto bst = bias.defined() ? bias.storage() : nullptr;
        tape->record([xst, wst, bst, ost, B, C, H, W, HW] {
            const S* g = detail::grad_of(ost);
            if (!g) return;
            const S* px2 = xst->data.data();
            const S* pw2 = wst->data.data();
            S* gx = xst->requires_grad ? detail::acc_grad(xst) : nullptr;
            S* gw = wst->requires_grad ? detail::acc_grad(wst) : nullptr;
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t c = 0; c < C; ++c) {
                    const S* grow = g + (b * C + c) * HW;
                    const S* xch = px2 + (b * C + c) * HW;
                    S* gxch = gx ? gx + (b * C + c) * HW : nullptr;
                    for (std::int64_t dy = 0; dy < 3; ++dy)
                        for (std::int64_t dx = 0; dx < 3; ++dx) {
                            const S a = pw2[(c * 3 + dy) * 3 + dx];
                            double wacc = 0.0;
                            detail::for_valid_3x3<S>(H, W, dy, dx,
                                [&](std::int64_t y, std::int64_t x0, std::int64_t x1) {
                                    const S* grow2 = grow + y * W;
                                    const S* xrow = xch + (y + dy - 1) * W + (dx - 1);
                                    S* gxrow = gxch ? gxch + (y + dy - 1) * W + (dx - 1) : nullptr;
                                    for (std::int64_t xx = x0; xx < x1; ++xx) {
                                        if (gw) wacc += static_cast<double>(grow2[xx]) * xrow[xx];
                                        if (gxrow) gxrow[xx] += a * grow2[xx];
                                    }
                                });
                            if (gw) gw[(c * 3 + dy) * 3 + dx] += static_cast<S>(wacc);
                        }
                    if (bst && bst->requires_grad) {
                        S* gb = detail::acc_grad(bst);
                        double acc = 0.0;
                        for (std::int64_t s = 0; s < HW; ++s) acc += static_cast<double>(grow[s]);
                        gb[c] += static_cast<S>(acc);
                    }
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pooling, normalization, softmax
// ---------------------------------------------------------------------------

// Adaptive average pooling to an exact PxP grid. Bin i covers rows
// [floor(i*H/P), ceil((i+1)*H/P)); bins are never empty, overlap when H < P,
// and reduce to identity when H == W == P.
template <typename S>
Tensor4<S> adaptive_avg_pool(Tape<S>* tape, const Tensor4<S>& x, int P) {
    if (P <= 0) throw ArgumentError("adaptive_avg_pool: grid size must be positive");
    const Shape4 xs = x.shape();
    const std::int64_t B = xs.b, C = xs.c, H = xs.h, W = xs.w;
    Tensor4<S> out(Shape4{B, C, P, P});
    const S* px = x.data();
    S* po = out.data();
    auto lo = [](std::int64_t i, std::int64_t n, int p) { return (i * n) / p; };
    auto hi = [](std::int64_t i, std::int64_t n, int p) { return ((i + 1) * n + p - 1) / p; };
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
        const S* xch = px + bc * H * W;
        S* och = po + bc * P * P;
        for (std::int64_t i = 0; i < P; ++i) {
            const std::int64_t h0 = lo(i, H, P), h1 = hi(i, H, P);
            for (std::int64_t j = 0; j < P; ++j) {
                const std::int64_t w0 = lo(j, W, P), w1 = hi(j, W, P);
                double acc = 0.0;
                for (std::int64_t y = h0; y < h1; ++y)
                    for (std::int64_t xx = w0; xx < w1; ++xx)
                        acc += static_cast<double>(xch[y * W + xx]);
                och[i * P + j] = static_cast<S>(acc / static_cast<double>((h1 - h0) * (w1 - w0)));
            }
        }
    }
    wr::detail::check_finite(out, "adaptive_avg_pool");
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        auto xst = x.storage(), ost = out.storage();
        tape->record([xst, ost, B, C, H, W, P, lo, hi] {
            const S* g = detail::grad_of(ost);
            if (!g) return;
            S* gx = detail::acc_grad(xst);
            for (std::int64_t bc = 0; bc < B * C; ++bc) {
                S* gxch = gx + bc * H * W;
                const S* gch = g + bc * P * P;
                for (std::int64_t i = 0; i < P; ++i) {
                    const std::int64_t h0 = lo(i, H, P), h1 = hi(i, H, P);
                    for (std::int64_t j = 0; j < P; ++j) {
                        const std::int64_t w0 = lo(j, W, P), w1 = hi(j, W, P);
                        const S share = gch[i * P + j] /
                                        static_cast<S>((h1 - h0) * (w1 - w0));
                        for (std::int64_t y = h0; y < h1; ++y)
                            for (std::int64_t xx = w0; xx < w1; ++xx)
                                gxch[y * W + xx] += share;
                    }
                }
            }
        });
    }
    return out;
}

// Per-pixel normalization over the channel axis with learnable affine pair;
// variance is the biased estimate.
template <typename S>
Tensor4<S> layer_norm(Tape<S>* tape, const Tensor4<S>& x, const Tensor4<S>& gamma,
                      const Tensor4<S>& beta, double eps = 1e-6) {
    const Shape4 xs = x.shape();
    const Shape4 want{xs.c, 1, 1, 1};
    if (!(gamma.shape() == want) || !(beta.shape() == want))
        throw ShapeError("layer_norm: affine params must be (C,1,1,1) for C=" +
                         std::to_string(xs.c));
    const std::int64_t B = xs.b, C = xs.c, HW = xs.h * xs.w;
    Tensor4<S> out(xs);
    std::vector<S> mean(static_cast<std::size_t>(B * HW));
    std::vector<S> inv(static_cast<std::size_t>(B * HW));
    const S* px = x.data();
    const S* pg = gamma.data();
    const S* pbeta = beta.data();
    S* po = out.data();
    for (std::int64_t b = 0; b < B; ++b) {
        const S* xb = px + b * C * HW;
        S* ob = po + b * C * HW;
        for (std::int64_t s = 0; s < HW; ++s) {
            double m = 0.0;
            for (std::int64_t c = 0; c < C; ++c) m += static_cast<double>(xb[c * HW + s]);
            m /= static_cast<double>(C);
            double v = 0.0;
            for (std::int64_t c = 0; c < C; ++c) {
                const double d = static_cast<double>(xb[c * HW + s]) - m;
                v += d * d;
            }
            v /= static_cast<double>(C);
            const double iv = 1.0 / std::sqrt(v + eps);
            mean[static_cast<std::size_t>(b * HW + s)] = static_cast<S>(m);
            inv[static_cast<std::size_t>(b * HW + s)] = static_cast<S>(iv);
            for (std::int64_t c = 0; c < C; ++c) {
                const double u = (static_cast<double>(xb[c * HW + s]) - m) * iv;
                ob[c * HW + s] = static_cast<S>(u * pg[c] + pbeta[c]);
            }
        }
    }
    wr::detail::check_finite(out, "layer_norm");
    if (detail::wants_grad(tape, {&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        auto xst = x.storage(), gst = gamma.storage(), bst = beta.storage(),
             ost = out.storage();
        tape->record([xst, gst, bst, ost, B, C, HW, mean = std::move(mean),
                      inv = std::move(inv)] {
            const S* g = detail::grad_of(ost);
            if (!g) return;
            const S* px2 = xst->data.data();
            const S* pg2 = gst->data.data();
            S* gx = xst->requires_grad ? detail::acc_grad(xst) : nullptr;
            S* gg = gst->requires_grad ? detail::acc_grad(gst) : nullptr;
            S* gb = bst->requires_grad ? detail::acc_grad(bst) : nullptr;
            for (std::int64_t b = 0; b < B; ++b) {
                const S* xb = px2 + b * C * HW;
                const S* grb = g + b * C * HW;
                for (std::int64_t s = 0; s < HW; ++s) {
                    const double m = mean[static_cast<std::size_t>(b * HW + s)];
                    const double iv = inv[static_cast<std::size_t>(b * HW + s)];
                    double du_sum = 0.0, duu_sum = 0.0;
                    for (std::int64_t c = 0; c < C; ++c) {
                        const double u = (static_cast<double>(xb[c * HW + s]) - m) * iv;
                        const double gy = static_cast<double>(grb[c * HW + s]);
                        if (gg) gg[c] += static_cast<S>(gy * u);
                        if (gb) gb[c] += static_cast<S>(gy);
                        const double du = gy * pg2[c];
                        du_sum += du;
                        duu_sum += du * u;
                    }
                    if (gx) {
                        const double cn = static_cast<double>(C);
                        for (std::int64_t c = 0; c < C; ++c) {
                            const double u = (static_cast<double>(xb[c * HW + s]) - m) * iv;
                            const double du = static_cast<double>(grb[c * HW + s]) * pg2[c];
                            gx[b * C * HW + c * HW + s] +=
                                static_cast<S>(iv * (du - du_sum / cn - u * duu_sum / cn));
                        }
                    }
                }
            }
        });
    }
    return out;
}

// Softmax over the final (W) axis; rows are the (b,c,h) fibers.
template <typename S>
Tensor4<S> softmax_lastdim(Tape<S>* tape, const Tensor4<S>& x) {
    const Shape4 xs = x.shape();
    const std::int64_t rows = xs.b * xs.c * xs.h, N = xs.w;
    Tensor4<S> out(xs);
    const S* px = x.data();
    S* po = out.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const S* xr = px + r * N;
        S* orow = po + r * N;
        double mx = static_cast<double>(xr[0]);
        for (std::int64_t i = 1; i < N; ++i) mx = std::max(mx, static_cast<double>(xr[i]));
        double sum = 0.0;
        for (std::int64_t i = 0; i < N; ++i) {
            const double e = std::exp(static_cast<double>(xr[i]) - mx);
            orow[i] = static_cast<S>(e);
            sum += e;
        }
        const double invsum = 1.0 / sum;
        for (std::int64_t i = 0; i < N; ++i) orow[i] = static_cast<S>(orow[i] * invsum);
    }
    wr::detail::check_finite(out, "softmax_lastdim");
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        auto xst = x.storage(), ost = out.storage();
        tape->record([xst, ost, rows, N] {
            const S* g = detail::grad_of(ost);
            if (!g) return;
            const S* y = ost->data.data();
            S* gx = detail::acc_grad(xst);
            for (std::int64_t r = 0; r < rows; ++r) {
                const S* yr = y + r * N;
                const S* gr = g + r * N;
                double dot = 0.0;
                for (std::int64_t i = 0; i < N; ++i)
                    dot += static_cast<double>(gr[i]) * yr[i];
                S* gxr = gx + r * N;
                for (std::int64_t i = 0; i < N; ++i)
                    gxr[i] += static_cast<S>((static_cast<double>(gr[i]) - dot) * yr[i]);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batched matrix algebra over (B,C) groups: H,W act as matrix rows/cols
// ---------------------------------------------------------------------------

template <typename S>
Tensor4<S> matmul_batched(Tape<S>* tape, const Tensor4<S>& a, const Tensor4<S>& b) {
    const Shape4 as = a.shape(), bs = b.shape();
    if (as.b != bs.b || as.c != bs.c)
        throw ShapeError("matmul_batched: group dims differ, " + as.str() + " vs " + bs.str());
    if (as.w != bs.h)
        throw ShapeError("matmul_batched: inner dims differ, " + as.str() + " vs " + bs.str());
    const std::int64_t G = as.b * as.c, M = as.h, K = as.w, N = bs.w;
    Tensor4<S> out(Shape4{as.b, as.c, M, N});
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    for (std::int64_t g = 0; g < G; ++g) {
        const S* ag = pa + g * M * K;
        const S* bg = pb + g * K * N;
        S* og = po + g * M * N;
        for (std::int64_t m = 0; m < M; ++m) {
            S* orow = og + m * N;
            for (std::int64_t n = 0; n < N; ++n) orow[n] = S(0);
            for (std::int64_t k = 0; k < K; ++k) {
                const S av = ag[m * K + k];
                const S* brow = bg + k * N;
                for (std::int64_t n = 0; n < N; ++n) orow[n] += av * brow[n];
            }
        }
    }
    wr::detail::check_finite(out, "matmul_batched");
    if (detail::wants_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        auto ast = a.storage(), bst = b.storage(), ost = out.storage();
        tape->record([ast, bst, ost, G, M, K, N] {
            const S* g = detail::grad_of(ost);
            if (!g) return;
            const S* pa2 = ast->data.data();
            const S* pb2 = bst->data.data();
            if (ast->requires_grad) {
                S* ga = detail::acc_grad(ast);
                for (std::int64_t gi = 0; gi < G; ++gi) {
                    const S* gg = g + gi * M * N;
                    const S* bg = pb2 + gi * K * N;
                    S* gag = ga + gi * M * K;
                    for (std::int64_t m = 0; m < M; ++m)
                        for (std::int64_t k = 0; k < K; ++k) {
                            const S* grow = gg + m * N;
                            const S* brow = bg + k * N;
                            double acc = 0.0;
                            for (std::int64_t n = 0; n < N; ++n)
                                acc += static_cast<double>(grow[n]) * brow[n];
                            gag[m * K + k] += static_cast<S>(acc);
                        }
                }
            }
            if (bst->requires_grad) {
                S* gb = detail::acc_grad(bst);
                for (std::int64_t gi = 0; gi < G; ++gi) {
                    const S* gg = g + gi * M * N;
                    const S* ag = pa2 + gi * M * K;
                    S* gbg = gb + gi * K * N;
                    for (std::int64_t m = 0; m < M; ++m)
                        for (std::int64_t k = 0; k < K; ++k) {
                            const S av = ag[m * K + k];
                            const S* grow = gg + m * N;
                            S* gbrow = gbg + k * N;
                            for (std::int64_t n = 0; n < N; ++n) gbrow[n] += av * grow[n];
                        }
                }
            }
        });
    }
    return out;
}

template <typename S>
Tensor4<S> transpose_last2(Tape<S>* tape, const Tensor4<S>& x) {
    const Shape4 xs = x.shape();
    const std::int64_t G = xs.b * xs.c, H = xs.h, W = xs.w;
    Tensor4<S> out(Shape4{xs.b, xs.c, W, H});
    const S* px = x.data();
    S* po = out.data();
    for (std::int64_t g = 0; g < G; ++g)
        for (std::int64_t i = 0; i < H; ++i)
            for (std::int64_t j = 0; j < W; ++j)
                po[g * H * W + j * H + i] = px[g * H * W + i * W + j];
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        auto xst = x.storage(), ost = out.storage();
        tape->record([xst, ost, G, H, W] {
            const S* g = detail::grad_of(ost);
            if (!g) return;
            S* gx = detail::acc_grad(xst);
            for (std::int64_t gi = 0; gi < G; ++gi)
                for (std::int64_t i = 0; i < H; ++i)
                    for (std::int64_t j = 0; j < W; ++j)
                        gx[gi * H * W + i * W + j] += g[gi * H * W + j * H + i];
        });
    }
    return out;
}

// (B, C, H, W) -> (B*heads, 1, H*W, C/heads): channel groups become per-head
// token matrices. heads_merge is the exact inverse.
template <typename S>
Tensor4<S> heads_split(Tape<S>* tape, const Tensor4<S>& x, int heads) {
    const Shape4 xs = x.shape();
    if (heads <= 0 || xs.c % heads != 0)
        throw ShapeError("heads_split: " + std::to_string(heads) +
                         " heads do not divide " + std::to_string(xs.c) + " channels");
    const std::int64_t B = xs.b, C = xs.c, HW = xs.h * xs.w, d = C / heads;
    Tensor4<S> out(Shape4{B * heads, 1, HW, d});
    const S* px = x.data();
    S* po = out.data();
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t h = 0; h < heads; ++h)
            for (std::int64_t dd = 0; dd < d; ++dd) {
                const S* xrow = px + (b * C + h * d + dd) * HW;
                S* orow = po + ((b * heads + h) * HW) * d + dd;
                for (std::int64_t n = 0; n < HW; ++n) orow[n * d] = xrow[n];
            }
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        auto xst = x.storage(), ost = out.storage();
        tape->record([xst, ost, B, C, HW, d, heads] {
            const S* g = detail::grad_of(ost);
            if (!g) return;
            S* gx = detail::acc_grad(xst);
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t h = 0; h < heads; ++h)
                    for (std::int64_t dd = 0; dd < d; ++dd) {
                        S* gxrow = gx + (b * C + h * d + dd) * HW;
                        const S* grow = g + ((b * heads + h) * HW) * d + dd;
                        for (std::int64_t n = 0; n < HW; ++n) gxrow[n] += grow[n * d];
                    }
        });
    }
    return out;
}

template <typename S>
Tensor4<S> heads_merge(Tape<S>* tape, const Tensor4<S>& x, int heads, std::int64_t H,
                       std::int64_t W) {
    const Shape4 xs = x.shape();
    if (heads <= 0 || xs.b % heads != 0)
        throw ShapeError("heads_merge: batch " + std::to_string(xs.b) +
                         " is not a multiple of " + std::to_string(heads) + " heads");
    if (xs.c != 1 || xs.h != H * W)
        throw ShapeError("heads_merge: expected (B*heads,1," + std::to_string(H * W) +
                         ",d), got " + xs.str());
    const std::int64_t B = xs.b / heads, d = xs.w, C = heads * d, HW = H * W;
    Tensor4<S> out(Shape4{B, C, H, W});
    const S* px = x.data();
    S* po = out.data();
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t h = 0; h < heads; ++h)
            for (std::int64_t dd = 0; dd < d; ++dd) {
                const S* xrow = px + ((b * heads + h) * HW) * d + dd;
                S* orow = po + (b * C + h * d + dd) * HW;
                for (std::int64_t n = 0; n < HW; ++n) orow[n] = xrow[n * d];
            }
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        auto xst = x.storage(), ost = out.storage();
        tape->record([xst, ost, B, C, HW, d, heads] {
            const S* g = detail::grad_of(ost);
            if (!g) return;
            S* gx = detail::acc_grad(xst);
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t h = 0; h < heads; ++h)
                    for (std::int64_t dd = 0; dd < d; ++dd) {
                        S* gxrow = gx + ((b * heads + h) * HW) * d + dd;
                        const S* grow = g + (b * C + h * d + dd) * HW;
                        for (std::int64_t n = 0; n < HW; ++n) gxrow[n * d] += grow[n];
                    }
        });
    }
    return out;
}

// Per-head scalar multiply for (B*heads, ...) grouped tensors; factor tensor is
// (heads,1,1,1) and group g uses factor g % heads.
template <typename S>
Tensor4<S> scale_per_group(Tape<S>* tape, const Tensor4<S>& x, const Tensor4<S>& t,
                           int heads) {
    const Shape4 xs = x.shape();
    if (!(t.shape() == Shape4{heads, 1, 1, 1}))
        throw ShapeError("scale_per_group: factors must be (heads,1,1,1), got " +
                         t.shape().str());
    if (xs.b % heads != 0)
        throw ShapeError("scale_per_group: batch " + std::to_string(xs.b) +
                         " is not a multiple of " + std::to_string(heads));
    const std::int64_t G = xs.b, per = xs.c * xs.h * xs.w;
    Tensor4<S> out(xs);
    const S* px = x.data();
    const S* pt = t.data();
    S* po = out.data();
    for (std::int64_t g = 0; g < G; ++g) {
        const S f = pt[g % heads];
        const S* xr = px + g * per;
        S* orow = po + g * per;
        for (std::int64_t i = 0; i < per; ++i) orow[i] = xr[i] * f;
    }
    wr::detail::check_finite(out, "scale_per_group");
    if (detail::wants_grad(tape, {&x, &t})) {
        out.set_requires_grad(true);
        auto xst = x.storage(), tst = t.storage(), ost = out.storage();
        tape->record([xst, tst, ost, G, per, heads] {
            const S* g = detail::grad_of(ost);
            if (!g) return;
            const S* px2 = xst->data.data();
            const S* pt2 = tst->data.data();
            if (xst->requires_grad) {
                S* gx = detail::acc_grad(xst);
                for (std::int64_t gi = 0; gi < G; ++gi) {
                    const S f = pt2[gi % heads];
                    const S* grow = g + gi * per;
                    S* gxr = gx + gi * per;
                    for (std::int64_t i = 0; i < per; ++i) gxr[i] += grow[i] * f;
                }
            }
            if (tst->requires_grad) {
                S* gt = detail::acc_grad(tst);
                for (std::int64_t gi = 0; gi < G; ++gi) {
                    const S* grow = g + gi * per;
                    const S* xr = px2 + gi * per;
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < per; ++i)
                        acc += static_cast<double>(grow[i]) * xr[i];
                    gt[gi % heads] += static_cast<S>(acc);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Channel concat/split and pixel shuffles
// ---------------------------------------------------------------------------

template <typename S>
Tensor4<S> concat_channels(Tape<S>* tape, const Tensor4<S>& a, const Tensor4<S>& b) {
    const Shape4 as = a.shape(), bs = b.shape();
    if (as.b != bs.b || as.h != bs.h || as.w != bs.w)
        throw ShapeError("concat_channels: incompatible shapes " + as.str() + " vs " + bs.str());
    const std::int64_t B = as.b, Ca = as.c, Cb = bs.c, HW = as.h * as.w;
    Tensor4<S> out(Shape4{B, Ca + Cb, as.h, as.w});
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    for (std::int64_t bi = 0; bi < B; ++bi) {
        std::copy(pa + bi * Ca * HW, pa + (bi + 1) * Ca * HW, po + bi * (Ca + Cb) * HW);
        std::copy(pb + bi * Cb * HW, pb + (bi + 1) * Cb * HW,
                  po + bi * (Ca + Cb) * HW + Ca * HW);
    }
    if (detail::wants_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        auto ast = a.storage(), bst = b.storage(), ost = out.storage();
        tape->record([ast, bst, ost, B, Ca, Cb, HW] {
            const S* g = detail::grad_of(ost);
            if (!g) return;
            if (ast->requires_grad) {
                S* ga = detail::acc_grad(ast);
                for (std::int64_t bi = 0; bi < B; ++bi) {
                    const S* gsrc = g + bi * (Ca + Cb) * HW;
                    for (std::int64_t i = 0; i < Ca * HW; ++i) ga[bi * Ca * HW + i] += gsrc[i];
                }
            }
            if (bst->requires_grad) {
                S* gb = detail::acc_grad(bst);
                for (std::int64_t bi = 0; bi < B; ++bi) {
                    const S* gsrc = g + bi * (Ca + Cb) * HW + Ca * HW;
                    for (std::int64_t i = 0; i < Cb * HW; ++i) gb[bi * Cb * HW + i] += gsrc[i];
                }
            }
        });
    }
    return out;
}

template <typename S>
std::pair<Tensor4<S>, Tensor4<S>> split_channels(Tape<S>* tape, const Tensor4<S>& x,
                                                 std::int64_t c_front) {
    const Shape4 xs = x.shape();
    if (c_front <= 0 || c_front >= xs.c)
        throw ShapeError("split_channels: cut " + std::to_string(c_front) +
                         " outside (0," + std::to_string(xs.c) + ")");
    const std::int64_t B = xs.b, C = xs.c, Cb = C - c_front, HW = xs.h * xs.w;
    Tensor4<S> a(Shape4{B, c_front, xs.h, xs.w});
    Tensor4<S> b(Shape4{B, Cb, xs.h, xs.w});
    const S* px = x.data();
    for (std::int64_t bi = 0; bi < B; ++bi) {
        std::copy(px + bi * C * HW, px + bi * C * HW + c_front * HW,
                  a.data() + bi * c_front * HW);
        std::copy(px + bi * C * HW + c_front * HW, px + (bi + 1) * C * HW,
                  b.data() + bi * Cb * HW);
    }
    if (detail::wants_grad(tape, {&x})) {
        a.set_requires_grad(true);
        b.set_requires_grad(true);
        auto xst = x.storage(), ast = a.storage(), bst = b.storage();
        tape->record([xst, ast, bst, B, C, Cb, c_front, HW] {
            const S* ga = detail::grad_of(ast);
            const S* gb = detail::grad_of(bst);
            if (!ga && !gb) return;
            S* gx = detail::acc_grad(xst);
            for (std::int64_t bi = 0; bi < B; ++bi) {
                if (ga)
                    for (std::int64_t i = 0; i < c_front * HW; ++i)
                        gx[bi * C * HW + i] += ga[bi * c_front * HW + i];
                if (gb)
                    for (std::int64_t i = 0; i < Cb * HW; ++i)
                        gx[bi * C * HW + c_front * HW + i] += gb[bi * Cb * HW + i];
            }
        });
    }
    return {a, b};
}

// Space-to-depth: (B, C, H, W) -> (B, C*r^2, H/r, W/r) with
// out[b, c*r^2 + i*r + j, y, x] = in[b, c, y*r + i, x*r + j].
template <typename S>
Tensor4<S> pixel_unshuffle(Tape<S>* tape, const Tensor4<S>& x, int r) {
    const Shape4 xs = x.shape();
    if (r <= 0 || xs.h % r != 0 || xs.w % r != 0)
        throw ShapeError("pixel_unshuffle: factor " + std::to_string(r) +
                         " does not divide spatial dims of " + xs.str());
    const std::int64_t B = xs.b, C = xs.c, Ho = xs.h / r, Wo = xs.w / r;
    Tensor4<S> out(Shape4{B, C * r * r, Ho, Wo});
    const S* px = x.data();
    S* po = out.data();
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < r; ++j) {
                    const std::int64_t oc = (c * r + i) * r + j;
                    for (std::int64_t y = 0; y < Ho; ++y) {
                        const S* xrow = px + ((b * C + c) * xs.h + y * r + i) * xs.w + j;
                        S* orow = po + ((b * C * r * r + oc) * Ho + y) * Wo;
                        for (std::int64_t xcol = 0; xcol < Wo; ++xcol)
                            orow[xcol] = xrow[xcol * r];
                    }
                }
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        auto xst = x.storage(), ost = out.storage();
        const std::int64_t H = xs.h, W = xs.w;
        tape->record([xst, ost, B, C, H, W, Ho, Wo, r] {
            const S* g = detail::grad_of(ost);
            if (!g) return;
            S* gx = detail::acc_grad(xst);
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t c = 0; c < C; ++c)
                    for (std::int64_t i = 0; i < r; ++i)
                        for (std::int64_t j = 0; j < r; ++j) {
                            const std::int64_t oc = (c * r + i) * r + j;
                            for (std::int64_t y = 0; y < Ho; ++y) {
                                S* gxrow = gx + ((b * C + c) * H + y * r + i) * W + j;
                                const S* grow = g + ((b * C * r * r + oc) * Ho + y) * Wo;
                                for (std::int64_t xcol = 0; xcol < Wo; ++xcol)
                                    gxrow[xcol * r] += grow[xcol];
                            }
                        }
        });
    }
    return out;
}

// Depth-to-space, the exact inverse of pixel_unshuffle with the same index map.
template <typename S>
Tensor4<S> pixel_shuffle(Tape<S>* tape, const Tensor4<S>& x, int r) {
    const Shape4 xs = x.shape();
    if (r <= 0 || xs.c % (static_cast<std::int64_t>(r) * r) != 0)
        throw ShapeError("pixel_shuffle: factor " + std::to_string(r) +
                         "^2 does not divide channels of " + xs.str());
    const std::int64_t B = xs.b, Co = xs.c / (r * r), H = xs.h, W = xs.w;
    Tensor4<S> out(Shape4{B, Co, H * r, W * r});
    const S* px = x.data();
    S* po = out.data();
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < Co; ++c)
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < r; ++j) {
                    const std::int64_t ic = (c * r + i) * r + j;
                    for (std::int64_t y = 0; y < H; ++y) {
                        const S* xrow = px + ((b * xs.c + ic) * H + y) * W;
                        S* orow = po + ((b * Co + c) * H * r + y * r + i) * W * r + j;
                        for (std::int64_t xcol = 0; xcol < W; ++xcol)
                            orow[xcol * r] = xrow[xcol];
                    }
                }
    if (detail::wants_grad(tape, {&x})) {
        out.set_requires_grad(true);
        auto xst = x.storage(), ost = out.storage();
        const std::int64_t Ci = xs.c;
        tape->record([xst, ost, B, Co, Ci, H, W, r] {
            const S* g = detail::grad_of(ost);
            if (!g) return;
            S* gx = detail::acc_grad(xst);
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t c = 0; c < Co; ++c)
                    for (std::int64_t i = 0; i < r; ++i)
                        for (std::int64_t j = 0; j < r; ++j) {
                            const std::int64_t ic = (c * r + i) * r + j;
                            for (std::int64_t y = 0; y < H; ++y) {
                                S* gxrow = gx + ((b * Ci + ic) * H + y) * W;
                                const S* grow =
                                    g + ((b * Co + c) * H * r + y * r + i) * W * r + j;
                                for (std::int64_t xcol = 0; xcol < W; ++xcol)
                                    gxrow[xcol] += grow[xcol * r];
                            }
                        }
        });
    }
    return out;
}

}  // namespace wr::ops
