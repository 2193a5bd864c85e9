#pragma once

// Finite-difference verification suite covering every differentiable
// primitive, the composite attention/feed-forward blocks, the loss, and an
// end-to-end tiny model. Shared by the command-line gradcheck and the
// acceptance harness. Non-scalar ops are projected to a scalar through a
// fixed random weighting so permutation and indexing errors cannot cancel.
//
// Composite cases use a smaller step than the single-op default: through deep
// compositions the O(h^2) truncation term of the central difference dominates
// the comparison at h=1e-3, while h=1e-4 leaves it well under the tolerance
// without hitting roundoff in double precision.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wr/blocks.hpp"
#include "wr/gradcheck.hpp"
#include "wr/loss.hpp"
#include "wr/model.hpp"
#include "wr/ops.hpp"
#include "wr/rng.hpp"
#include "wr/tensor.hpp"

namespace wr::gradsuite {

struct OpReport {
    std::string op;
    double max_rel_err = 0.0;
    std::int64_t coords = 0;
    bool ok = false;
};

inline bool all_ok(const std::vector<OpReport>& reports) {
    for (const auto& r : reports)
        if (!r.ok) return false;
    return !reports.empty();
}

namespace detail {

using T = Tensor4<double>;
using P = std::vector<std::pair<std::string, T>>;

inline T rnd(Shape4 s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    T t(s);
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

inline OpReport run_case(const std::string& name, const P& params,
                         const std::function<T(Tape<double>*)>& forward,
                         const GradCheckOptions& opts) {
    const GradCheckResult r = check_gradients<double>(forward, params, opts);
    return OpReport{name, r.max_rel_err, r.coords_checked, r.ok};
}

// projects an arbitrary tensor to a scalar with fixed weights
inline T project(Tape<double>* tape, const T& x, const T& w) {
    return ops::sum_all(tape, ops::mul(tape, x, w));
}

}  // namespace detail

// Every entry runs in double precision. When `corrupt` is set, one extra
// fixture with a deliberately wrong recorded gradient is appended; it must
// fail, which exercises the reporting path end to end.
inline std::vector<OpReport> run_suite(std::uint64_t seed, bool include_model = true,
                                       bool corrupt = false) {
    using detail::P;
    using detail::T;
    namespace ops = wr::ops;
    Rng rng(seed);
    std::vector<OpReport> out;
    GradCheckOptions base;  // spec-pinned defaults: h=1e-3, tol 1e-5
    GradCheckOptions deep = base;
    deep.step = 1e-4;
    deep.max_coords_per_tensor = 24;

    {
        T a = detail::rnd(Shape4{2, 3, 4, 5}, rng);
        T b = detail::rnd(Shape4{2, 3, 4, 5}, rng);
        T w = detail::rnd(Shape4{2, 3, 4, 5}, rng);
        out.push_back(detail::run_case(
            "add", {{"a", a}, {"b", b}},
            [&](Tape<double>* tp) { return detail::project(tp, ops::add(tp, a, b), w); },
            base));
        out.push_back(detail::run_case(
            "mul", {{"a", a}, {"b", b}},
            [&](Tape<double>* tp) { return detail::project(tp, ops::mul(tp, a, b), w); },
            base));
        out.push_back(detail::run_case(
            "scale", {{"a", a}},
            [&](Tape<double>* tp) { return detail::project(tp, ops::scale(tp, a, 1.7), w); },
            base));
        out.push_back(detail::run_case(
            "gelu", {{"a", a}},
            [&](Tape<double>* tp) { return detail::project(tp, ops::gelu(tp, a), w); },
            base));
        out.push_back(detail::run_case(
            "sum_all", {{"a", a}},
            [&](Tape<double>* tp) { return ops::sum_all(tp, a); }, base));
    }
    {
        T x = detail::rnd(Shape4{2, 3, 5, 4}, rng);
        T w1 = detail::rnd(Shape4{4, 3, 1, 1}, rng);
        T b1 = detail::rnd(Shape4{4, 1, 1, 1}, rng);
        T pw = detail::rnd(Shape4{2, 4, 5, 4}, rng);
        out.push_back(detail::run_case(
            "conv1x1", {{"x", x}, {"w", w1}, {"b", b1}},
            [&](Tape<double>* tp) {
                return detail::project(tp, ops::conv1x1(tp, x, w1, b1), pw);
            },
            base));
        T w3 = detail::rnd(Shape4{4, 3, 3, 3}, rng);
        out.push_back(detail::run_case(
            "conv3x3", {{"x", x}, {"w", w3}, {"b", b1}},
            [&](Tape<double>* tp) {
                return detail::project(tp, ops::conv3x3(tp, x, w3, b1), pw);
            },
            base));
        T wd = detail::rnd(Shape4{3, 1, 3, 3}, rng);
        T bd = detail::rnd(Shape4{3, 1, 1, 1}, rng);
        T pwd = detail::rnd(Shape4{2, 3, 5, 4}, rng);
        out.push_back(detail::run_case(
            "conv_dw3x3", {{"x", x}, {"w", wd}, {"b", bd}},
            [&](Tape<double>* tp) {
                return detail::project(tp, ops::conv_dw3x3(tp, x, wd, bd), pwd);
            },
            base));
    }
    {
        T x = detail::rnd(Shape4{2, 3, 5, 6}, rng);
        T wdown = detail::rnd(Shape4{2, 3, 3, 3}, rng);
        out.push_back(detail::run_case(
            "adaptive_avg_pool_down", {{"x", x}},
            [&](Tape<double>* tp) {
                return detail::project(tp, ops::adaptive_avg_pool(tp, x, 3), wdown);
            },
            base));
        T x2 = detail::rnd(Shape4{1, 2, 2, 2}, rng);
        T wup = detail::rnd(Shape4{1, 2, 7, 7}, rng);
        out.push_back(detail::run_case(
            "adaptive_avg_pool_up", {{"x", x2}},
            [&](Tape<double>* tp) {
                return detail::project(tp, ops::adaptive_avg_pool(tp, x2, 7), wup);
            },
            base));
    }
    {
        T x = detail::rnd(Shape4{2, 4, 3, 3}, rng);
        T gamma = detail::rnd(Shape4{4, 1, 1, 1}, rng, 0.5, 1.5);
        T beta = detail::rnd(Shape4{4, 1, 1, 1}, rng);
        T w = detail::rnd(Shape4{2, 4, 3, 3}, rng);
        out.push_back(detail::run_case(
            "layer_norm", {{"x", x}, {"gamma", gamma}, {"beta", beta}},
            [&](Tape<double>* tp) {
                return detail::project(tp, ops::layer_norm(tp, x, gamma, beta), w);
            },
            base));
    }
    {
        T x = detail::rnd(Shape4{2, 2, 3, 5}, rng);
        T w = detail::rnd(Shape4{2, 2, 3, 5}, rng);
        out.push_back(detail::run_case(
            "softmax_lastdim", {{"x", x}},
            [&](Tape<double>* tp) {
                return detail::project(tp, ops::softmax_lastdim(tp, x), w);
            },
            base));
    }
    {
        T a = detail::rnd(Shape4{2, 2, 3, 4}, rng);
        T b = detail::rnd(Shape4{2, 2, 4, 5}, rng);
        T w = detail::rnd(Shape4{2, 2, 3, 5}, rng);
        out.push_back(detail::run_case(
            "matmul_batched", {{"a", a}, {"b", b}},
            [&](Tape<double>* tp) {
                return detail::project(tp, ops::matmul_batched(tp, a, b), w);
            },
            base));
        T wt = detail::rnd(Shape4{2, 2, 4, 3}, rng);
        out.push_back(detail::run_case(
            "transpose_last2", {{"a", a}},
            [&](Tape<double>* tp) {
                return detail::project(tp, ops::transpose_last2(tp, a), wt);
            },
            base));
    }
    {
        T x = detail::rnd(Shape4{2, 4, 3, 2}, rng);
        T w = detail::rnd(Shape4{2, 4, 3, 2}, rng);
        out.push_back(detail::run_case(
            "heads_split_merge", {{"x", x}},
            [&](Tape<double>* tp) {
                auto split = ops::heads_split(tp, x, 2);
                return detail::project(tp, ops::heads_merge(tp, split, 2, 3, 2), w);
            },
            base));
        T temp = detail::rnd(Shape4{2, 1, 1, 1}, rng, 0.5, 1.5);
        T ws = detail::rnd(Shape4{4, 1, 6, 2}, rng);
        T xs = detail::rnd(Shape4{4, 1, 6, 2}, rng);
        out.push_back(detail::run_case(
            "scale_per_group", {{"x", xs}, {"t", temp}},
            [&](Tape<double>* tp) {
                return detail::project(tp, ops::scale_per_group(tp, xs, temp, 2), ws);
            },
            base));
    }
    {
        T a = detail::rnd(Shape4{2, 2, 3, 3}, rng);
        T b = detail::rnd(Shape4{2, 3, 3, 3}, rng);
        T w = detail::rnd(Shape4{2, 5, 3, 3}, rng);
        out.push_back(detail::run_case(
            "concat_channels", {{"a", a}, {"b", b}},
            [&](Tape<double>* tp) {
                return detail::project(tp, ops::concat_channels(tp, a, b), w);
            },
            base));
        T x = detail::rnd(Shape4{2, 5, 3, 3}, rng);
        T wa = detail::rnd(Shape4{2, 2, 3, 3}, rng);
        T wb = detail::rnd(Shape4{2, 3, 3, 3}, rng);
        out.push_back(detail::run_case(
            "split_channels", {{"x", x}},
            [&](Tape<double>* tp) {
                auto [fa, fb] = ops::split_channels(tp, x, 2);
                return ops::add(tp, detail::project(tp, fa, wa),
                                detail::project(tp, fb, wb));
            },
            base));
    }
    {
        T x = detail::rnd(Shape4{2, 2, 4, 6}, rng);
        T wu = detail::rnd(Shape4{2, 8, 2, 3}, rng);
        out.push_back(detail::run_case(
            "pixel_unshuffle", {{"x", x}},
            [&](Tape<double>* tp) {
                return detail::project(tp, ops::pixel_unshuffle(tp, x, 2), wu);
            },
            base));
        T y = detail::rnd(Shape4{2, 8, 2, 3}, rng);
        T ws = detail::rnd(Shape4{2, 2, 4, 6}, rng);
        out.push_back(detail::run_case(
            "pixel_shuffle", {{"y", y}},
            [&](Tape<double>* tp) {
                return detail::project(tp, ops::pixel_shuffle(tp, y, 2), ws);
            },
            base));
    }
    {
        // composite attention/feed-forward paths at toy width
        blocks::BlockSettings set;
        set.channels = 4;
        set.heads = 2;
        set.sra_pool = 2;
        Rng init(seed + 1);
        auto msa = blocks::make_msa<double>(set, init);
        T x = detail::rnd(Shape4{1, 4, 4, 4}, rng, -0.5, 0.5);
        T w = detail::rnd(Shape4{1, 4, 4, 4}, rng);
        P params{{"x", x}};
        msa.for_each("msa", [&](const std::string& n, T& t) { params.emplace_back(n, t); });
        out.push_back(detail::run_case(
            "msa_block", params,
            [&](Tape<double>* tp) {
                return detail::project(tp, blocks::msa_forward<double>(tp, x, msa, set), w);
            },
            deep));

        auto gfn = blocks::make_gfn<double>(set, init);
        P gparams{{"x", x}};
        gfn.for_each("gfn", [&](const std::string& n, T& t) { gparams.emplace_back(n, t); });
        out.push_back(detail::run_case(
            "gfn_block", gparams,
            [&](Tape<double>* tp) {
                return detail::project(tp, blocks::gfn_forward<double>(tp, x, gfn, set), w);
            },
            deep));

        auto blk = blocks::make_block<double>(set, init);
        P bparams{{"x", x}};
        blk.for_each("blk", [&](const std::string& n, T& t) { bparams.emplace_back(n, t); });
        out.push_back(detail::run_case(
            "transformer_block", bparams,
            [&](Tape<double>* tp) {
                return detail::project(tp, blocks::block_forward<double>(tp, x, blk, set), w);
            },
            deep));
    }
    {
        T p = detail::rnd(Shape4{2, 2, 3, 3}, rng);
        T t = detail::rnd(Shape4{2, 2, 3, 3}, rng);
        out.push_back(detail::run_case(
            "pseudo_huber", {{"p", p}, {"t", t}},
            [&](Tape<double>* tp) { return loss::pseudo_huber(tp, p, t, 0.03); },
            base));
    }
    if (include_model) {
        auto cfg = model::ModelConfig::tiny();
        model::Model<double> m = model::Model<double>::init(cfg, seed + 2);
        // the head starts at zero, which would block gradient flow into the
        // trunk; give it small random weights so every parameter matters
        Rng hr(seed + 3);
        m.for_each_param([&](const std::string& name, T& t) {
            if (name.rfind("head.", 0) == 0)
                for (std::int64_t i = 0; i < t.numel(); ++i)
                    t.data()[i] = hr.uniform(-0.05, 0.05);
        });
        T x = detail::rnd(Shape4{1, 3, 16, 16}, rng, 0.0, 1.0);
        T target = detail::rnd(Shape4{1, 3, 16, 16}, rng, 0.0, 1.0);
        P params{{"input", x}};
        m.for_each_param([&](const std::string& n, T& t) { params.emplace_back(n, t); });
        GradCheckOptions e2e = deep;
        e2e.max_coords_per_tensor = 2;
        out.push_back(detail::run_case(
            "model_pseudo_huber_e2e", params,
            [&](Tape<double>* tp) {
                return loss::pseudo_huber(tp, m.forward(tp, x), target, 0.03);
            },
            e2e));
    }
    if (corrupt) {
        // negative fixture: doubles the input but records 2.05x as gradient
        T x = detail::rnd(Shape4{1, 1, 2, 2}, rng);
        out.push_back(detail::run_case(
            "corrupt_fixture", {{"x", x}},
            [&](Tape<double>* tp) {
                T y(x.shape());
                for (std::int64_t i = 0; i < x.numel(); ++i)
                    y.data()[i] = 2.0 * x.data()[i];
                if (tp && x.storage()->requires_grad) {
                    y.set_requires_grad(true);
                    auto xo = x.storage();
                    auto yo = y.storage();
                    tp->record([xo, yo]() {
                        const double* g = ops::detail::grad_of(yo);
                        if (!g) return;
                        double* xg = ops::detail::acc_grad(xo);
                        for (std::size_t i = 0; i < xo->data.size(); ++i)
                            xg[i] += 2.05 * g[i];
                    });
                }
                return ops::sum_all(tp, y);
            },
            base));
    }
    return out;
}

}  // namespace wr::gradsuite
