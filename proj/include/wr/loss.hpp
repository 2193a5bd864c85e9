#pragma once

// Pseudo-Huber restoration loss: per sample, sqrt(|r|^2 + c^2) - c over the
// flattened residual, then the mean over the batch. Smoothly quadratic for
// small residuals, linear for large ones, differentiable everywhere including
// at zero residual (where the gradient is exactly zero).

#include <cmath>
#include <vector>

#include "wr/errors.hpp"
#include "wr/ops.hpp"
#include "wr/tensor.hpp"

namespace wr::loss {

template <typename S>
Tensor4<S> pseudo_huber(Tape<S>* tape, const Tensor4<S>& prediction,
                        const Tensor4<S>& target, double c = 0.03) {
    if (!(prediction.shape() == target.shape()))
        throw ShapeError("pseudo_huber: prediction " + prediction.shape().str() +
                         " vs target " + target.shape().str());
    if (!(c > 0.0)) throw ArgumentError("pseudo_huber: c must be positive");

    const Shape4 s = prediction.shape();
    const std::int64_t batch = s.b;
    const std::int64_t per = s.numel() / batch;
    const S* p = prediction.data();
    const S* t = target.data();

    // root_b = sqrt(|r_b|^2 + c^2), saved for the backward closure
    std::vector<double> roots(static_cast<std::size_t>(batch));
    double total = 0.0;
    for (std::int64_t b = 0; b < batch; ++b) {
        double ss = 0.0;
        for (std::int64_t i = 0; i < per; ++i) {
            const double r = static_cast<double>(p[b * per + i]) -
                             static_cast<double>(t[b * per + i]);
            ss += r * r;
        }
        roots[static_cast<std::size_t>(b)] = std::sqrt(ss + c * c);
        total += roots[static_cast<std::size_t>(b)] - c;
    }
    Tensor4<S> out(Shape4{1, 1, 1, 1});
    out.data()[0] = static_cast<S>(total / static_cast<double>(batch));
    wr::detail::check_finite(out, "pseudo_huber");

    if (ops::detail::wants_grad(tape, {&prediction, &target})) {
        out.set_requires_grad(true);
        auto po = prediction.storage();
        auto to = target.storage();
        auto oo = out.storage();
        tape->record([po, to, oo, roots = std::move(roots), batch, per]() {
            const S* g = ops::detail::grad_of(oo);
            if (!g) return;
            const double gy = static_cast<double>(g[0]) / static_cast<double>(batch);
            S* pg = po->requires_grad ? ops::detail::acc_grad(po) : nullptr;
            S* tg = to->requires_grad ? ops::detail::acc_grad(to) : nullptr;
            if (!pg && !tg) return;
            for (std::int64_t b = 0; b < batch; ++b) {
                const double inv = gy / roots[static_cast<std::size_t>(b)];
                for (std::int64_t i = 0; i < per; ++i) {
                    const std::int64_t k = b * per + i;
                    const double r = static_cast<double>(po->data[k]) -
                                     static_cast<double>(to->data[k]);
                    if (pg) pg[k] += static_cast<S>(r * inv);
                    if (tg) tg[k] -= static_cast<S>(r * inv);
                }
            }
        });
    }
    return out;
}

}  // namespace wr::loss
