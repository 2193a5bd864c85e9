#pragma once

// Architecture hyperparameters for the weather-removal network: a four-level
// gated UNet of transformer blocks. The canonical text form is the single
// source of truth for checkpoint headers and config round trips.

#include <array>
#include <cstdint>
#include <string>

#include "wr/blocks.hpp"
#include "wr/config_kv.hpp"

namespace wr::model {

struct ModelConfig {
    int width = 48;                       // channels at the full-resolution level
    int in_channels = 3;
    std::array<int, 3> enc_blocks{4, 6, 6};
    int bottleneck_blocks = 8;
    std::array<int, 3> dec_blocks{6, 6, 4};  // widest decoder level first
    int refine_blocks = 4;
    std::array<int, 4> heads{4, 8, 12, 16};  // per level, full resolution first
    double gfn_ratio = 2.0;
    bool gate_gfn = true;                 // gated feed-forward inside every block
    bool gate_dstage = true;              // gated encoder stage exits
    blocks::AttnStyle qkv_style = blocks::AttnStyle::conv1x1_dw;
    bool sra_enabled = true;
    int sra_pool = 7;
    bool temperature_enabled = true;

    // Reduced preset for fast tests and smoke training runs.
    static ModelConfig tiny();

    // Channel count and block settings at pyramid level 0..3.
    int channels_at(int level) const { return width << level; }
    blocks::BlockSettings settings_at(int level) const;

    // Throws ConfigError describing the first violated constraint.
    void validate() const;

    // Fixed key order, one key=value per line; parse(canonical_text()) is the
    // identity and canonical_text() output is byte-stable across runs.
    std::string canonical_text() const;

    // Consumes recognized keys from kv, leaving unknown ones untouched.
    void apply_kv(cfg::KvMap& kv);

    // Strict full-text parse: every key must belong to the model config.
    static ModelConfig parse_text(const std::string& text);

    bool operator==(const ModelConfig& o) const = default;
};

}  // namespace wr::model
