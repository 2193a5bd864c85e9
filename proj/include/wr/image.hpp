#pragma once

// 8-bit image I/O: binary PPM (P6) and PNG (8-bit truecolor, via zlib).
// Images are interleaved row-major RGB or RGBA; tensor conversion maps to
// planar CHW scaled to [0,1] and back with clamping round-trip.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wr/errors.hpp"
#include "wr/tensor.hpp"

namespace wr::img {

struct ImageU8 {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::int64_t c = 0;  // 3 (RGB) or 4 (RGBA)
    std::vector<std::uint8_t> data;  // h*w*c interleaved

    std::int64_t numel() const { return h * w * c; }
};

// PPM: binary P6 with maxval <= 255; '#' comments allowed in the header.
ImageU8 decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const ImageU8& img);

// PNG: accepts 8-bit color types 2 (RGB) and 6 (RGBA), non-interlaced, and
// verifies every chunk CRC; anything else is a FormatError. Writes filter-0
// rows deflated at the default level.
ImageU8 decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const ImageU8& img);

// File helpers. Reading sniffs the magic bytes; writing picks the container
// from the extension (.ppm or .png).
ImageU8 read_image(const std::string& path);
void write_image(const std::string& path, const ImageU8& img);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

// Interleaved u8 -> planar (1,3,H,W) in [0,1]; alpha is dropped.
template <typename S>
Tensor4<S> to_tensor(const ImageU8& img) {
    if (img.c != 3 && img.c != 4)
        throw ArgumentError("to_tensor: expected 3 or 4 channels, got " +
                            std::to_string(img.c));
    Tensor4<S> t(Shape4{1, 3, img.h, img.w});
    S* p = t.data();
    const std::int64_t hw = img.h * img.w;
    for (std::int64_t i = 0; i < hw; ++i)
        for (std::int64_t ch = 0; ch < 3; ++ch)
            p[ch * hw + i] = static_cast<S>(img.data[static_cast<std::size_t>(i * img.c + ch)]) /
                             static_cast<S>(255);
    return t;
}

// Planar (1,3,H,W) -> interleaved u8 with clamp to [0,1] and round-to-nearest.
template <typename S>
ImageU8 from_tensor(const Tensor4<S>& t) {
    const Shape4 s = t.shape();
    if (s.b != 1 || s.c != 3)
        throw ArgumentError("from_tensor: expected (1,3,H,W), got " + s.str());
    ImageU8 img;
    img.h = s.h;
    img.w = s.w;
    img.c = 3;
    img.data.resize(static_cast<std::size_t>(img.numel()));
    const S* p = t.data();
    const std::int64_t hw = s.h * s.w;
    for (std::int64_t i = 0; i < hw; ++i)
        for (std::int64_t ch = 0; ch < 3; ++ch) {
            double v = static_cast<double>(p[ch * hw + i]);
            v = std::min(1.0, std::max(0.0, v));
            img.data[static_cast<std::size_t>(i * 3 + ch)] =
                static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    return img;
}

}  // namespace wr::img
