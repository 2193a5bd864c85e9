#include "wr/model_config.hpp"

#include <cmath>

#include "wr/errors.hpp"

namespace wr::model {

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.width = 8;
    c.enc_blocks = {1, 1, 1};
    c.bottleneck_blocks = 1;
    c.dec_blocks = {1, 1, 1};
    c.refine_blocks = 1;
    c.heads = {2, 2, 2, 2};
    return c;
}

blocks::BlockSettings ModelConfig::settings_at(int level) const {
    if (level < 0 || level > 3)
        throw ArgumentError("settings_at: level " + std::to_string(level) + " out of range");
    blocks::BlockSettings s;
    s.channels = channels_at(level);
    s.heads = heads[static_cast<std::size_t>(level)];
    s.gfn_ratio = gfn_ratio;
    s.gate_gfn = gate_gfn;
    s.style = qkv_style;
    s.sra_enabled = sra_enabled;
    s.sra_pool = sra_pool;
    s.temperature_enabled = temperature_enabled;
    return s;
}

void ModelConfig::validate() const {
    if (width <= 0) throw ConfigError("width must be positive");
    if (width % 2 != 0)
        throw ConfigError("width must be even so stage transitions halve channels");
    if (in_channels <= 0) throw ConfigError("in_channels must be positive");
    for (int n : enc_blocks)
        if (n < 1) throw ConfigError("enc_blocks entries must be >= 1");
    for (int n : dec_blocks)
        if (n < 1) throw ConfigError("dec_blocks entries must be >= 1");
    if (bottleneck_blocks < 1) throw ConfigError("bottleneck_blocks must be >= 1");
    if (refine_blocks < 0) throw ConfigError("refine_blocks must be >= 0");
    if (sra_pool < 1) throw ConfigError("sra_pool must be >= 1");
    if (gfn_ratio <= 0.0) throw ConfigError("gfn_ratio must be positive");
    for (int level = 0; level < 4; ++level) {
        const int c = channels_at(level);
        const int h = heads[static_cast<std::size_t>(level)];
        if (h < 1 || c % h != 0)
            throw ConfigError("level " + std::to_string(level) + ": " + std::to_string(h) +
                              " heads do not divide " + std::to_string(c) + " channels");
        const double e = gfn_ratio * c;
        if (std::abs(e - std::llround(e)) > 1e-9)
            throw ConfigError("level " + std::to_string(level) +
                              ": gfn_ratio * channels is not an integer");
    }
}

std::string ModelConfig::canonical_text() const {
    auto int_list = [](const auto& arr) {
        std::vector<std::int64_t> v(arr.begin(), arr.end());
        return cfg::format_int_list(v);
    };
    std::string out;
    out += "width=" + std::to_string(width) + "\n";
    out += "in_channels=" + std::to_string(in_channels) + "\n";
    out += "enc_blocks=" + int_list(enc_blocks) + "\n";
    out += "bottleneck_blocks=" + std::to_string(bottleneck_blocks) + "\n";
    out += "dec_blocks=" + int_list(dec_blocks) + "\n";
    out += "refine_blocks=" + std::to_string(refine_blocks) + "\n";
    out += "heads=" + int_list(heads) + "\n";
    out += "gfn_ratio=" + cfg::format_double(gfn_ratio) + "\n";
    out += std::string("gate_gfn=") + (gate_gfn ? "true" : "false") + "\n";
    out += std::string("gate_dstage=") + (gate_dstage ? "true" : "false") + "\n";
    out += std::string("qkv_style=") + blocks::attn_style_name(qkv_style) + "\n";
    out += std::string("sra_enabled=") + (sra_enabled ? "true" : "false") + "\n";
    out += "sra_pool=" + std::to_string(sra_pool) + "\n";
    out += std::string("temperature_enabled=") + (temperature_enabled ? "true" : "false") +
           "\n";
    return out;
}

void ModelConfig::apply_kv(cfg::KvMap& kv) {
    auto fixed_list = [](cfg::KvMap& m, const std::string& key, auto& arr) {
        std::vector<std::int64_t> def(arr.begin(), arr.end());
        const auto got = cfg::take_int_list(m, key, def);
        if (got.size() != arr.size())
            throw ConfigError("key '" + key + "': expected " + std::to_string(arr.size()) +
                              " entries, got " + std::to_string(got.size()));
        for (std::size_t i = 0; i < arr.size(); ++i) arr[i] = static_cast<int>(got[i]);
    };
    width = static_cast<int>(cfg::take_int(kv, "width", width));
    in_channels = static_cast<int>(cfg::take_int(kv, "in_channels", in_channels));
    fixed_list(kv, "enc_blocks", enc_blocks);
    bottleneck_blocks =
        static_cast<int>(cfg::take_int(kv, "bottleneck_blocks", bottleneck_blocks));
    fixed_list(kv, "dec_blocks", dec_blocks);
    refine_blocks = static_cast<int>(cfg::take_int(kv, "refine_blocks", refine_blocks));
    fixed_list(kv, "heads", heads);
    gfn_ratio = cfg::take_double(kv, "gfn_ratio", gfn_ratio);
    gate_gfn = cfg::take_bool(kv, "gate_gfn", gate_gfn);
    gate_dstage = cfg::take_bool(kv, "gate_dstage", gate_dstage);
    qkv_style = blocks::parse_attn_style(
        cfg::take_string(kv, "qkv_style", blocks::attn_style_name(qkv_style)));
    sra_enabled = cfg::take_bool(kv, "sra_enabled", sra_enabled);
    sra_pool = static_cast<int>(cfg::take_int(kv, "sra_pool", sra_pool));
    temperature_enabled = cfg::take_bool(kv, "temperature_enabled", temperature_enabled);
}

ModelConfig ModelConfig::parse_text(const std::string& text) {
    cfg::KvMap kv = cfg::parse_kv_text(text);
    ModelConfig c;
    c.apply_kv(kv);
    cfg::reject_unknown(kv, "model config");
    c.validate();
    return c;
}

}  // namespace wr::model
