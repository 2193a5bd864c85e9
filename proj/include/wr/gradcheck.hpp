#pragma once

// Central finite-difference verification of tape gradients. The analytic
// gradient of a scalar loss is compared coordinate-by-coordinate against
// (f(x+h) - f(x-h)) / 2h with the relative error
//     |fd - analytic| / max(1, |fd|, |analytic|),
// which behaves like absolute error near zero and relative error away from it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wr/tensor.hpp"

namespace wr {

struct GradCheckOptions {
    double step = 1e-3;       // central-difference half-width
    double tolerance = 1e-5;  // pass threshold on the relative error above
    std::int64_t max_coords_per_tensor = 64;  // evenly strided subsample; <=0 checks all
};

struct GradCheckCoord {
    std::string name;
    std::int64_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradCheckResult {
    bool ok = false;
    double max_rel_err = 0.0;
    std::int64_t coords_checked = 0;
    GradCheckCoord worst;
};

// `forward` must rebuild the loss from scratch on every call (it is invoked
// 2 per checked coordinate + 1 for the analytic pass) and return a scalar
// (1,1,1,1) tensor. `params` are the leaves to differentiate; their data is
// perturbed in place and restored exactly.
template <typename S>
GradCheckResult check_gradients(
    const std::function<Tensor4<S>(Tape<S>*)>& forward,
    const std::vector<std::pair<std::string, Tensor4<S>>>& params,
    const GradCheckOptions& opts = {}) {
    for (const auto& [name, t] : params) {
        if (!t.defined()) throw ArgumentError("gradcheck: undefined parameter " + name);
        auto st = t.storage();
        st->requires_grad = true;
        if (!st->grad.empty()) st->grad.assign(st->data.size(), S(0));
    }

    Tape<S> tape;
    Tensor4<S> loss = forward(&tape);
    if (!(loss.shape() == Shape4{1, 1, 1, 1}))
        throw ArgumentError("gradcheck: loss must be scalar, got " + loss.shape().str());
    tape.backward(loss);

    std::vector<std::vector<S>> analytic;
    analytic.reserve(params.size());
    for (const auto& [name, t] : params) analytic.push_back(t.storage()->grad);

    GradCheckResult res;
    const double h = opts.step;
    for (std::size_t p = 0; p < params.size(); ++p) {
        const std::string& name = params[p].first;
        Tensor4<S> t = params[p].second;  // shared handle: perturbations reach the graph
        S* data = t.data();
        const std::int64_t n = t.numel();
        std::int64_t stride = 1;
        if (opts.max_coords_per_tensor > 0 && n > opts.max_coords_per_tensor)
            stride = (n + opts.max_coords_per_tensor - 1) / opts.max_coords_per_tensor;
        for (std::int64_t i = stride / 2; i < n; i += stride) {
            const S saved = data[i];
            data[i] = static_cast<S>(static_cast<double>(saved) + h);
            const double fp = static_cast<double>(forward(nullptr).data()[0]);
            data[i] = static_cast<S>(static_cast<double>(saved) - h);
            const double fm = static_cast<double>(forward(nullptr).data()[0]);
            data[i] = saved;

            const double fd = (fp - fm) / (2.0 * h);
            const double an = analytic[p].empty() ? 0.0 : static_cast<double>(analytic[p][i]);
            const double denom = std::max({1.0, std::abs(fd), std::abs(an)});
            const double rel = std::abs(fd - an) / denom;
            ++res.coords_checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = GradCheckCoord{name, i, an, fd, rel};
            }
        }
    }
    res.ok = res.max_rel_err <= opts.tolerance;
    return res;
}

}  // namespace wr
