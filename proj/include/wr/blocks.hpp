#pragma once

// Transformer building blocks: multi-head self-attention with convolutional
// projections and pooled-token linear attention, a gated depthwise
// feed-forward unit, and the pre-norm residual block that combines them.
// Parameter structs own their tensors; forward functions are free of state so
// the same weights serve training (tape) and inference (null tape).

#include <cmath>
#include <string>

#include "wr/errors.hpp"
#include "wr/ops.hpp"
#include "wr/rng.hpp"
#include "wr/tensor.hpp"

namespace wr::blocks {

// How Q/K/V are produced from the feature map:
//   conv1x1_dw      pointwise projection refined by a depthwise 3x3 (default)
//   conv1x1_only    pointwise projection alone
//   dwconv_only     depthwise 3x3 alone (K and V get separate depthwise convs)
//   separable_conv1x1  depthwise+pointwise pair in front of the projection
enum class AttnStyle { conv1x1_dw, conv1x1_only, dwconv_only, separable_conv1x1 };

inline const char* attn_style_name(AttnStyle s) {
    switch (s) {
        case AttnStyle::conv1x1_dw: return "conv1x1_dw";
        case AttnStyle::conv1x1_only: return "conv1x1_only";
        case AttnStyle::dwconv_only: return "dwconv_only";
        case AttnStyle::separable_conv1x1: return "separable_conv1x1";
    }
    throw ArgumentError("attn_style_name: bad enum value");
}

inline AttnStyle parse_attn_style(const std::string& s) {
    if (s == "conv1x1_dw") return AttnStyle::conv1x1_dw;
    if (s == "conv1x1_only") return AttnStyle::conv1x1_only;
    if (s == "dwconv_only") return AttnStyle::dwconv_only;
    if (s == "separable_conv1x1") return AttnStyle::separable_conv1x1;
    throw ConfigError("unknown attention style '" + s + "'");
}

// Everything a block needs to know about its width besides the tensors.
struct BlockSettings {
    int channels = 0;
    int heads = 1;
    double gfn_ratio = 2.0;            // hidden expansion of the feed-forward
    bool gate_gfn = true;              // gated (two-branch) feed-forward
    AttnStyle style = AttnStyle::conv1x1_dw;
    bool sra_enabled = true;           // pooled-token K/V
    int sra_pool = 7;                  // pooled grid edge
    bool temperature_enabled = true;   // learnable per-head logit scale

    int gfn_hidden() const {
        const double e = gfn_ratio * channels;
        const auto r = static_cast<int>(std::llround(e));
        if (r <= 0 || std::abs(e - r) > 1e-9)
            throw ConfigError("feed-forward ratio " + std::to_string(gfn_ratio) +
                              " does not give an integer width at " +
                              std::to_string(channels) + " channels");
        return r;
    }
    int head_dim() const {
        if (heads <= 0 || channels % heads != 0)
            throw ConfigError(std::to_string(heads) + " heads do not divide " +
                              std::to_string(channels) + " channels");
        return channels / heads;
    }
};

// ---------------------------------------------------------------------------
// Parameter bundles and their initializers
// ---------------------------------------------------------------------------

template <typename S>
struct ConvP {
    Tensor4<S> w;
    Tensor4<S> b;
};

template <typename S>
struct LnP {
    Tensor4<S> gamma;
    Tensor4<S> beta;
};

// Weights draw from a truncated normal with sigma = sqrt(1/fan_in); biases
// start at zero, affine norm pairs at identity.
template <typename S>
Tensor4<S> init_weight(Shape4 shape, std::int64_t fan_in, Rng& rng) {
    Tensor4<S> t(shape);
    const double sigma = std::sqrt(1.0 / static_cast<double>(fan_in));
    S* p = t.data();
    for (std::int64_t i = 0; i < t.numel(); ++i)
        p[i] = static_cast<S>(rng.trunc_normal(sigma));
    return t;
}

template <typename S>
ConvP<S> make_conv1x1(int cin, int cout, Rng& rng) {
    return {init_weight<S>(Shape4{cout, cin, 1, 1}, cin, rng),
            Tensor4<S>(Shape4{cout, 1, 1, 1})};
}

template <typename S>
ConvP<S> make_conv3x3(int cin, int cout, Rng& rng) {
    return {init_weight<S>(Shape4{cout, cin, 3, 3}, 9 * static_cast<std::int64_t>(cin), rng),
            Tensor4<S>(Shape4{cout, 1, 1, 1})};
}

template <typename S>
ConvP<S> make_dw3x3(int c, Rng& rng) {
    return {init_weight<S>(Shape4{c, 1, 3, 3}, 9, rng), Tensor4<S>(Shape4{c, 1, 1, 1})};
}

template <typename S>
LnP<S> make_ln(int c) {
    return {Tensor4<S>(Shape4{c, 1, 1, 1}, S(1)), Tensor4<S>(Shape4{c, 1, 1, 1})};
}

namespace detail {

template <typename S, typename F>
void visit_conv(const std::string& name, ConvP<S>& p, F&& f) {
    if (p.w.defined()) f(name + ".w", p.w);
    if (p.b.defined()) f(name + ".b", p.b);
}

template <typename S, typename F>
void visit_ln(const std::string& name, LnP<S>& p, F&& f) {
    if (p.gamma.defined()) f(name + ".g", p.gamma);
    if (p.beta.defined()) f(name + ".b", p.beta);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Multi-head self-attention with pooled-token K/V
// ---------------------------------------------------------------------------

template <typename S>
struct MsaParams {
    // query path (style-dependent subset)
    ConvP<S> q_p, q_d, q_sep_d, q_sep_p;
    // key/value path
    ConvP<S> kv_p, kv_d, k_d, v_d, kv_sep_d, kv_sep_p;
    // pooled-token reduction
    ConvP<S> sra_p;
    LnP<S> sra_ln;
    // output projection and per-head logit scale
    ConvP<S> out_p;
    Tensor4<S> temperature;

    template <typename F>
    void for_each(const std::string& prefix, F&& f) {
        detail::visit_conv(prefix + ".q_p", q_p, f);
        detail::visit_conv(prefix + ".q_d", q_d, f);
        detail::visit_conv(prefix + ".q_sep_d", q_sep_d, f);
        detail::visit_conv(prefix + ".q_sep_p", q_sep_p, f);
        detail::visit_conv(prefix + ".kv_p", kv_p, f);
        detail::visit_conv(prefix + ".kv_d", kv_d, f);
        detail::visit_conv(prefix + ".k_d", k_d, f);
        detail::visit_conv(prefix + ".v_d", v_d, f);
        detail::visit_conv(prefix + ".kv_sep_d", kv_sep_d, f);
        detail::visit_conv(prefix + ".kv_sep_p", kv_sep_p, f);
        detail::visit_conv(prefix + ".sra_p", sra_p, f);
        detail::visit_ln(prefix + ".sra_ln", sra_ln, f);
        detail::visit_conv(prefix + ".out_p", out_p, f);
        if (temperature.defined()) f(prefix + ".temp", temperature);
    }
};

template <typename S>
MsaParams<S> make_msa(const BlockSettings& set, Rng& rng) {
    const int c = set.channels;
    MsaParams<S> p;
    switch (set.style) {
        case AttnStyle::conv1x1_dw:
            p.q_p = make_conv1x1<S>(c, c, rng);
            p.q_d = make_dw3x3<S>(c, rng);
            p.kv_p = make_conv1x1<S>(c, 2 * c, rng);
            p.kv_d = make_dw3x3<S>(2 * c, rng);
            break;
        case AttnStyle::conv1x1_only:
            p.q_p = make_conv1x1<S>(c, c, rng);
            p.kv_p = make_conv1x1<S>(c, 2 * c, rng);
            break;
        case AttnStyle::dwconv_only:
            p.q_d = make_dw3x3<S>(c, rng);
            p.k_d = make_dw3x3<S>(c, rng);
            p.v_d = make_dw3x3<S>(c, rng);
            break;
        case AttnStyle::separable_conv1x1:
            p.q_sep_d = make_dw3x3<S>(c, rng);
            p.q_sep_p = make_conv1x1<S>(c, c, rng);
            p.q_p = make_conv1x1<S>(c, c, rng);
            p.kv_sep_d = make_dw3x3<S>(c, rng);
            p.kv_sep_p = make_conv1x1<S>(c, c, rng);
            p.kv_p = make_conv1x1<S>(c, 2 * c, rng);
            break;
    }
    if (set.sra_enabled) {
        p.sra_p = make_conv1x1<S>(c, c, rng);
        p.sra_ln = make_ln<S>(c);
    }
    p.out_p = make_conv1x1<S>(c, c, rng);
    if (set.temperature_enabled) {
        const double init = 1.0 / std::sqrt(static_cast<double>(set.head_dim()));
        p.temperature = Tensor4<S>(Shape4{set.heads, 1, 1, 1}, static_cast<S>(init));
    }
    return p;
}

// Optional per-call introspection for tests and diagnostics.
template <typename S>
struct MsaProbe {
    std::int64_t kv_tokens = 0;       // token count on the K/V side
    double attn_rowsum_min = 0.0;     // softmax rows should sum to 1
    double attn_rowsum_max = 0.0;
};

// Pooled-token reduction: adaptive average pool to a PxP grid, pointwise
// projection, per-pixel channel norm, then gelu.
template <typename S>
Tensor4<S> sra_reduce(Tape<S>* tape, const Tensor4<S>& x, const MsaParams<S>& p, int pool) {
    auto y = ops::adaptive_avg_pool<S>(tape, x, pool);
    y = ops::conv1x1<S>(tape, y, p.sra_p.w, p.sra_p.b);
    y = ops::layer_norm<S>(tape, y, p.sra_ln.gamma, p.sra_ln.beta);
    return ops::gelu<S>(tape, y);
}

template <typename S>
Tensor4<S> msa_forward(Tape<S>* tape, const Tensor4<S>& x, const MsaParams<S>& p,
                       const BlockSettings& set, MsaProbe<S>* probe = nullptr) {
    const Shape4 xs = x.shape();
    if (xs.c != set.channels)
        throw ShapeError("msa_forward: expected " + std::to_string(set.channels) +
                         " channels, got " + xs.str());
    const int heads = set.heads;

    Tensor4<S> q;
    switch (set.style) {
        case AttnStyle::conv1x1_dw:
            q = ops::conv_dw3x3<S>(tape, ops::conv1x1<S>(tape, x, p.q_p.w, p.q_p.b),
                                   p.q_d.w, p.q_d.b);
            break;
        case AttnStyle::conv1x1_only:
            q = ops::conv1x1<S>(tape, x, p.q_p.w, p.q_p.b);
            break;
        case AttnStyle::dwconv_only:
            q = ops::conv_dw3x3<S>(tape, x, p.q_d.w, p.q_d.b);
            break;
        case AttnStyle::separable_conv1x1: {
            auto pre = ops::conv1x1<S>(
                tape, ops::conv_dw3x3<S>(tape, x, p.q_sep_d.w, p.q_sep_d.b), p.q_sep_p.w,
                p.q_sep_p.b);
            q = ops::conv1x1<S>(tape, pre, p.q_p.w, p.q_p.b);
            break;
        }
    }

    Tensor4<S> src = set.sra_enabled ? sra_reduce<S>(tape, x, p, set.sra_pool) : x;

    Tensor4<S> k, v;
    switch (set.style) {
        case AttnStyle::conv1x1_dw: {
            auto kv = ops::conv_dw3x3<S>(tape, ops::conv1x1<S>(tape, src, p.kv_p.w, p.kv_p.b),
                                         p.kv_d.w, p.kv_d.b);
            std::tie(k, v) = ops::split_channels<S>(tape, kv, set.channels);
            break;
        }
        case AttnStyle::conv1x1_only: {
            auto kv = ops::conv1x1<S>(tape, src, p.kv_p.w, p.kv_p.b);
            std::tie(k, v) = ops::split_channels<S>(tape, kv, set.channels);
            break;
        }
        case AttnStyle::dwconv_only:
            k = ops::conv_dw3x3<S>(tape, src, p.k_d.w, p.k_d.b);
            v = ops::conv_dw3x3<S>(tape, src, p.v_d.w, p.v_d.b);
            break;
        case AttnStyle::separable_conv1x1: {
            auto pre = ops::conv1x1<S>(
                tape, ops::conv_dw3x3<S>(tape, src, p.kv_sep_d.w, p.kv_sep_d.b),
                p.kv_sep_p.w, p.kv_sep_p.b);
            auto kv = ops::conv1x1<S>(tape, pre, p.kv_p.w, p.kv_p.b);
            std::tie(k, v) = ops::split_channels<S>(tape, kv, set.channels);
            break;
        }
    }

    const Shape4 ss = src.shape();
    auto qh = ops::heads_split<S>(tape, q, heads);              // (B*h, 1, N, d)
    auto kh = ops::heads_split<S>(tape, k, heads);              // (B*h, 1, M, d)
    auto vh = ops::heads_split<S>(tape, v, heads);

    auto logits = ops::matmul_batched<S>(tape, qh, ops::transpose_last2<S>(tape, kh));
    if (set.temperature_enabled)
        logits = ops::scale_per_group<S>(tape, logits, p.temperature, heads);
    else
        logits = ops::scale<S>(tape, logits,
                               1.0 / std::sqrt(static_cast<double>(set.head_dim())));
    auto attn = ops::softmax_lastdim<S>(tape, logits);

    if (probe) {
        probe->kv_tokens = ss.h * ss.w;
        const S* a = attn.data();
        const Shape4 as = attn.shape();
        double mn = 1e300, mx = -1e300;
        for (std::int64_t r = 0; r < as.b * as.c * as.h; ++r) {
            double s = 0.0;
            for (std::int64_t i = 0; i < as.w; ++i) s += static_cast<double>(a[r * as.w + i]);
            mn = std::min(mn, s);
            mx = std::max(mx, s);
        }
        probe->attn_rowsum_min = mn;
        probe->attn_rowsum_max = mx;
    }

    auto ctx = ops::matmul_batched<S>(tape, attn, vh);          // (B*h, 1, N, d)
    auto merged = ops::heads_merge<S>(tape, ctx, heads, xs.h, xs.w);
    return ops::conv1x1<S>(tape, merged, p.out_p.w, p.out_p.b);
}

// ---------------------------------------------------------------------------
// Gated feed-forward
// ---------------------------------------------------------------------------

template <typename S>
struct GfnParams {
    ConvP<S> in_p, dw, out_p;

    template <typename F>
    void for_each(const std::string& prefix, F&& f) {
        detail::visit_conv(prefix + ".in_p", in_p, f);
        detail::visit_conv(prefix + ".dw", dw, f);
        detail::visit_conv(prefix + ".out_p", out_p, f);
    }
};

template <typename S>
GfnParams<S> make_gfn(const BlockSettings& set, Rng& rng) {
    const int c = set.channels;
    const int e = set.gfn_hidden();
    GfnParams<S> p;
    if (set.gate_gfn) {
        p.in_p = make_conv1x1<S>(c, 2 * e, rng);
        p.dw = make_dw3x3<S>(2 * e, rng);
    } else {
        p.in_p = make_conv1x1<S>(c, e, rng);
        p.dw = make_dw3x3<S>(e, rng);
    }
    p.out_p = make_conv1x1<S>(e, c, rng);
    return p;
}

// Gated: expand to two hidden branches in one projection, refine both with a
// depthwise 3x3, multiply gelu(a) with b, project back. Ungated: single branch
// with gelu after the depthwise conv.
template <typename S>
Tensor4<S> gfn_forward(Tape<S>* tape, const Tensor4<S>& x, const GfnParams<S>& p,
                       const BlockSettings& set) {
    auto h = ops::conv_dw3x3<S>(tape, ops::conv1x1<S>(tape, x, p.in_p.w, p.in_p.b), p.dw.w,
                                p.dw.b);
    if (set.gate_gfn) {
        auto [a, b] = ops::split_channels<S>(tape, h, set.gfn_hidden());
        h = ops::mul<S>(tape, ops::gelu<S>(tape, a), b);
    } else {
        h = ops::gelu<S>(tape, h);
    }
    return ops::conv1x1<S>(tape, h, p.out_p.w, p.out_p.b);
}

// ---------------------------------------------------------------------------
// Pre-norm residual block
// ---------------------------------------------------------------------------

template <typename S>
struct BlockParams {
    LnP<S> ln1, ln2;
    MsaParams<S> msa;
    GfnParams<S> gfn;

    template <typename F>
    void for_each(const std::string& prefix, F&& f) {
        detail::visit_ln(prefix + ".ln1", ln1, f);
        msa.for_each(prefix + ".msa", f);
        detail::visit_ln(prefix + ".ln2", ln2, f);
        gfn.for_each(prefix + ".gfn", f);
    }
};

template <typename S>
BlockParams<S> make_block(const BlockSettings& set, Rng& rng) {
    BlockParams<S> p;
    p.ln1 = make_ln<S>(set.channels);
    p.msa = make_msa<S>(set, rng);
    p.ln2 = make_ln<S>(set.channels);
    p.gfn = make_gfn<S>(set, rng);
    return p;
}

template <typename S>
Tensor4<S> block_forward(Tape<S>* tape, const Tensor4<S>& x, const BlockParams<S>& p,
                         const BlockSettings& set, MsaProbe<S>* probe = nullptr) {
    auto a = msa_forward<S>(tape, ops::layer_norm<S>(tape, x, p.ln1.gamma, p.ln1.beta),
                            p.msa, set, probe);
    auto x1 = ops::add<S>(tape, x, a);
    auto g = gfn_forward<S>(tape, ops::layer_norm<S>(tape, x1, p.ln2.gamma, p.ln2.beta),
                            p.gfn, set);
    return ops::add<S>(tape, x1, g);
}

}  // namespace wr::blocks
