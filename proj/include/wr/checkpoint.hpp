#pragma once

// Binary archive for model and optimizer state. Layout, all little-endian:
//   magic "WRMV" | version u32 | config-text length u64 | config-text bytes |
//   repeated tensor records:
//     name length u32 | name bytes | dtype u8 (0=f32, 1=f64) |
//     shape 4 x u32 (b,c,h,w) | payload numel * sizeof(dtype) raw scalars
//   crc32 u32 over every preceding byte
// Any structural violation or checksum mismatch surfaces as FormatError with
// a byte offset. Writes go through a temp file and an atomic rename so a
// crash never leaves a half-written checkpoint behind.

#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "wr/errors.hpp"
#include "wr/model.hpp"
#include "wr/tensor.hpp"

namespace wr::ckpt {

constexpr std::uint32_t kVersion = 2;

struct TensorRecord {
    std::uint8_t dtype = 0;  // 0 = f32, 1 = f64
    Shape4 shape{1, 1, 1, 1};
    std::vector<std::uint8_t> raw;  // numel * dtype size, little-endian
};

struct Archive {
    std::string config;
    std::vector<std::pair<std::string, TensorRecord>> tensors;
};

Archive read_archive(const std::string& path);
void write_archive(const std::string& path, const Archive& archive);

template <typename S>
constexpr std::uint8_t dtype_tag() {
    return sizeof(S) == 4 ? 0 : 1;
}

template <typename S>
TensorRecord record_from_tensor(const Tensor4<S>& t) {
    TensorRecord r;
    r.dtype = dtype_tag<S>();
    r.shape = t.shape();
    r.raw.resize(static_cast<std::size_t>(t.numel()) * sizeof(S));
    std::memcpy(r.raw.data(), t.data(), r.raw.size());
    return r;
}

// Converts between stored and requested precision when they differ.
template <typename S>
Tensor4<S> tensor_from_record(const TensorRecord& r) {
    Tensor4<S> t(r.shape);
    const std::size_t n = static_cast<std::size_t>(r.shape.numel());
    if (r.dtype == dtype_tag<S>()) {
        std::memcpy(t.data(), r.raw.data(), n * sizeof(S));
    } else if (r.dtype == 0) {
        std::vector<float> tmp(n);
        std::memcpy(tmp.data(), r.raw.data(), n * sizeof(float));
        for (std::size_t i = 0; i < n; ++i) t.data()[i] = static_cast<S>(tmp[i]);
    } else {
        std::vector<double> tmp(n);
        std::memcpy(tmp.data(), r.raw.data(), n * sizeof(double));
        for (std::size_t i = 0; i < n; ++i) t.data()[i] = static_cast<S>(tmp[i]);
    }
    return t;
}

template <typename S>
void save_model(const std::string& path, model::Model<S>& m) {
    Archive a;
    a.config = m.config().canonical_text();
    m.for_each_param([&](const std::string& name, Tensor4<S>& t) {
        a.tensors.emplace_back(name, record_from_tensor<S>(t));
    });
    write_archive(path, a);
}

// Rebuilds the model from the archived config, then overwrites every parameter
// from the records, which must appear in exactly the model's canonical order.
template <typename S>
model::Model<S> load_model(const std::string& path) {
    const Archive a = read_archive(path);
    model::ModelConfig cfg;
    try {
        cfg = model::ModelConfig::parse_text(a.config);
    } catch (const Error& e) {
        throw FormatError(path + ": bad embedded model config: " + e.what());
    }
    model::Model<S> m = model::Model<S>::init(cfg, 0);
    std::size_t idx = 0;
    m.for_each_param([&](const std::string& name, Tensor4<S>& t) {
        if (idx >= a.tensors.size())
            throw FormatError(path + ": missing tensor record for " + name);
        const auto& [rec_name, rec] = a.tensors[idx];
        if (rec_name != name)
            throw FormatError(path + ": tensor " + std::to_string(idx) + " is '" + rec_name +
                              "', expected '" + name + "'");
        if (!(rec.shape == t.shape()))
            throw FormatError(path + ": tensor " + name + " has shape " + rec.shape.str() +
                              ", expected " + t.shape().str());
        Tensor4<S> loaded = tensor_from_record<S>(rec);
        std::memcpy(t.data(), loaded.data(),
                    static_cast<std::size_t>(t.numel()) * sizeof(S));
        ++idx;
    });
    if (idx != a.tensors.size())
        throw FormatError(path + ": " + std::to_string(a.tensors.size() - idx) +
                          " unexpected trailing tensor record(s)");
    return m;
}

}  // namespace wr::ckpt
