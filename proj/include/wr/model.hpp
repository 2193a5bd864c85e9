#pragma once

// The weather-removal network: a four-level UNet of pre-norm transformer
// blocks. Encoder stages end in an optional multiplicative gate and a
// conv+unshuffle downsample; decoder stages open with a conv+shuffle upsample
// and a pointwise fusion of the encoder skip. The head predicts a residual
// added back onto the input, so an all-zero head is the identity restorer.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wr/blocks.hpp"
#include "wr/model_config.hpp"
#include "wr/ops.hpp"
#include "wr/rng.hpp"
#include "wr/tensor.hpp"

namespace wr::model {

template <typename S>
struct EncStage {
    std::vector<blocks::BlockParams<S>> blks;
    blocks::BlockParams<S> gate;  // populated only when gate_dstage
    blocks::ConvP<S> down;        // 3x3, C -> C/2, before pixel_unshuffle(2)
    bool gated = false;
};

template <typename S>
struct DecStage {
    blocks::ConvP<S> up;    // 3x3, C_in -> 2*C_in, before pixel_shuffle(2)
    blocks::ConvP<S> fuse;  // 1x1, 2C -> C, after skip concat
    std::vector<blocks::BlockParams<S>> blks;
};

template <typename S>
class Model {
public:
    static Model init(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        Model m;
        m.cfg_ = cfg;
        Rng rng(seed);

        m.embed_ = blocks::make_conv3x3<S>(cfg.in_channels, cfg.width, rng);
        for (int i = 0; i < 3; ++i) {
            const auto set = cfg.settings_at(i);
            EncStage<S>& st = m.enc_[i];
            for (int b = 0; b < cfg.enc_blocks[static_cast<std::size_t>(i)]; ++b)
                st.blks.push_back(blocks::make_block<S>(set, rng));
            st.gated = cfg.gate_dstage;
            if (st.gated) st.gate = blocks::make_block<S>(set, rng);
            st.down = blocks::make_conv3x3<S>(set.channels, set.channels / 2, rng);
        }
        {
            const auto set = cfg.settings_at(3);
            for (int b = 0; b < cfg.bottleneck_blocks; ++b)
                m.bottleneck_.push_back(blocks::make_block<S>(set, rng));
        }
        for (int j = 0; j < 3; ++j) {
            const int level = 2 - j;
            const auto set = cfg.settings_at(level);
            DecStage<S>& st = m.dec_[j];
            const int cin = cfg.channels_at(level + 1);
            st.up = blocks::make_conv3x3<S>(cin, 2 * cin, rng);
            st.fuse = blocks::make_conv1x1<S>(2 * set.channels, set.channels, rng);
            for (int b = 0; b < cfg.dec_blocks[static_cast<std::size_t>(j)]; ++b)
                st.blks.push_back(blocks::make_block<S>(set, rng));
        }
        {
            const auto set = cfg.settings_at(0);
            for (int b = 0; b < cfg.refine_blocks; ++b)
                m.refine_.push_back(blocks::make_block<S>(set, rng));
        }
        // Residual head starts at zero so the untrained network is an identity.
        m.head_.w = Tensor4<S>(Shape4{cfg.in_channels, cfg.width, 3, 3});
        m.head_.b = Tensor4<S>(Shape4{cfg.in_channels, 1, 1, 1});
        return m;
    }

    const ModelConfig& config() const { return cfg_; }

    Tensor4<S> forward(Tape<S>* tape, const Tensor4<S>& input) const {
        const Shape4 in = input.shape();
        if (in.c != cfg_.in_channels)
            throw ShapeError("forward: expected " + std::to_string(cfg_.in_channels) +
                             " input channels, got " + in.str());
        if (in.h % 8 != 0 || in.w % 8 != 0)
            throw ShapeError("forward: spatial dims must be multiples of 8, got " + in.str());

        auto f = ops::conv3x3<S>(tape, input, embed_.w, embed_.b);
        Tensor4<S> skips[3];
        for (int i = 0; i < 3; ++i) {
            const auto set = cfg_.settings_at(i);
            const EncStage<S>& st = enc_[i];
            for (const auto& blk : st.blks) f = blocks::block_forward<S>(tape, f, blk, set);
            if (st.gated) {
                auto mask = blocks::block_forward<S>(tape, f, st.gate, set);
                f = ops::mul<S>(tape, ops::gelu<S>(tape, mask), f);
            }
            skips[i] = f;
            f = ops::pixel_unshuffle<S>(tape, ops::conv3x3<S>(tape, f, st.down.w, st.down.b),
                                        2);
        }
        {
            const auto set = cfg_.settings_at(3);
            for (const auto& blk : bottleneck_)
                f = blocks::block_forward<S>(tape, f, blk, set);
        }
        for (int j = 0; j < 3; ++j) {
            const int level = 2 - j;
            const auto set = cfg_.settings_at(level);
            const DecStage<S>& st = dec_[j];
            f = ops::pixel_shuffle<S>(tape, ops::conv3x3<S>(tape, f, st.up.w, st.up.b), 2);
            f = ops::concat_channels<S>(tape, f, skips[level]);
            f = ops::conv1x1<S>(tape, f, st.fuse.w, st.fuse.b);
            for (const auto& blk : st.blks) f = blocks::block_forward<S>(tape, f, blk, set);
        }
        {
            const auto set = cfg_.settings_at(0);
            for (const auto& blk : refine_) f = blocks::block_forward<S>(tape, f, blk, set);
        }
        auto residual = ops::conv3x3<S>(tape, f, head_.w, head_.b);
        return ops::add<S>(tape, input, residual);
    }

    // Visits every parameter tensor as (name, tensor) in a fixed order that
    // defines the checkpoint layout.
    void for_each_param(const std::function<void(const std::string&, Tensor4<S>&)>& f) {
        auto visit_conv = [&](const std::string& name, blocks::ConvP<S>& p) {
            blocks::detail::visit_conv(name, p, f);
        };
        visit_conv("embed", embed_);
        for (int i = 0; i < 3; ++i) {
            const std::string pre = "enc" + std::to_string(i + 1);
            EncStage<S>& st = enc_[i];
            for (std::size_t b = 0; b < st.blks.size(); ++b)
                st.blks[b].for_each(pre + ".blk" + std::to_string(b), f);
            if (st.gated) st.gate.for_each(pre + ".gate", f);
            visit_conv(pre + ".down", st.down);
        }
        for (std::size_t b = 0; b < bottleneck_.size(); ++b)
            bottleneck_[b].for_each("bottleneck.blk" + std::to_string(b), f);
        for (int j = 0; j < 3; ++j) {
            const std::string pre = "dec" + std::to_string(j + 1);
            DecStage<S>& st = dec_[j];
            visit_conv(pre + ".up", st.up);
            visit_conv(pre + ".fuse", st.fuse);
            for (std::size_t b = 0; b < st.blks.size(); ++b)
                st.blks[b].for_each(pre + ".blk" + std::to_string(b), f);
        }
        for (std::size_t b = 0; b < refine_.size(); ++b)
            refine_[b].for_each("refine.blk" + std::to_string(b), f);
        visit_conv("head", head_);
    }

    std::int64_t param_count() {
        std::int64_t n = 0;
        for_each_param([&](const std::string&, Tensor4<S>& t) { n += t.numel(); });
        return n;
    }

    void set_requires_grad(bool v) {
        for_each_param([v](const std::string&, Tensor4<S>& t) { t.set_requires_grad(v); });
    }

    void zero_grads() {
        for_each_param([](const std::string&, Tensor4<S>& t) { t.zero_grad(); });
    }

private:
    ModelConfig cfg_;
    blocks::ConvP<S> embed_;
    EncStage<S> enc_[3];
    std::vector<blocks::BlockParams<S>> bottleneck_;
    DecStage<S> dec_[3];
    std::vector<blocks::BlockParams<S>> refine_;
    blocks::ConvP<S> head_;
};

}  // namespace wr::model
