#pragma once

// Paired-image dataset: a directory with clean/*.ppm (or .png) and an
// optional degraded/ subdirectory holding files with matching names. Entries
// without a stored degraded image get one synthesized on the fly from the
// configured weather spec.
//
// The stream is a pure function of (seed, iteration): epoch order and every
// per-sample choice (crop offset, flip, synthesis seed) are derived by hashing
// (seed, epoch, slot), never by consuming a shared generator. seek(i) followed
// by next() therefore reproduces iteration i bit-exactly, which is what makes
// training resumable.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "wr/degrade.hpp"
#include "wr/errors.hpp"
#include "wr/image.hpp"
#include "wr/rng.hpp"
#include "wr/tensor.hpp"

namespace wr::data {

struct DatasetEntry {
    std::string clean_path;
    std::string degraded_path;  // empty: synthesize from the weather spec
};

// Lists dir/clean sorted by filename and pairs up dir/degraded by name.
// ArgumentError when dir/clean is missing or holds no images.
std::vector<DatasetEntry> scan_dataset(const std::string& dir);

struct DatasetOptions {
    std::int64_t batch = 4;
    std::int64_t crop = 32;  // multiple of 8
    bool flip = true;
    DegradationSpec degrade;  // template for synthesis; seed is derived per sample
};

template <typename S>
class DatasetStream {
public:
    struct Batch {
        Tensor4<S> degraded;
        Tensor4<S> clean;
        std::int64_t iteration = 0;
    };

    DatasetStream(std::vector<DatasetEntry> entries, DatasetOptions opt,
                  std::uint64_t seed)
        : entries_(std::move(entries)), opt_(opt), seed_(seed) {
        if (entries_.empty()) throw ArgumentError("dataset stream: no entries");
        if (opt_.batch < 1) throw ArgumentError("dataset stream: batch must be >= 1");
        if (opt_.crop < 8 || opt_.crop % 8 != 0)
            throw ArgumentError("dataset stream: crop must be a positive multiple of 8");
        opt_.degrade.validate();
        clean_cache_.resize(entries_.size());
        degraded_cache_.resize(entries_.size());
        loaded_.assign(entries_.size(), 0);
    }

    std::int64_t size() const { return static_cast<std::int64_t>(entries_.size()); }

    // ceil(n / batch); the final batch of an epoch may be short.
    std::int64_t iters_per_epoch() const {
        return (size() + opt_.batch - 1) / opt_.batch;
    }

    std::int64_t position() const { return iter_; }
    void seek(std::int64_t iteration) {
        if (iteration < 0) throw ArgumentError("dataset stream: negative iteration");
        iter_ = iteration;
    }

    Batch next() {
        const std::int64_t n = size();
        const std::int64_t ipe = iters_per_epoch();
        const std::int64_t epoch = iter_ / ipe;
        const std::int64_t slot = iter_ % ipe;
        ensure_order(epoch);

        const std::int64_t lo = slot * opt_.batch;
        const std::int64_t hi = std::min(n, lo + opt_.batch);
        const std::int64_t bs = hi - lo;
        Batch out;
        out.iteration = iter_;
        out.clean = Tensor4<S>(Shape4{bs, 3, opt_.crop, opt_.crop});
        out.degraded = Tensor4<S>(Shape4{bs, 3, opt_.crop, opt_.crop});
        for (std::int64_t j = 0; j < bs; ++j) {
            const std::size_t idx = order_[static_cast<std::size_t>(lo + j)];
            const std::uint64_t sample_seed = hash_combine(
                seed_, hash_combine(static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(lo + j)));
            fill_slot(out, j, idx, sample_seed);
        }
        ++iter_;
        return out;
    }

private:
    void ensure_loaded(std::size_t idx) {
        if (loaded_[idx]) return;
        clean_cache_[idx] = img::to_tensor<S>(img::read_image(entries_[idx].clean_path));
        if (!entries_[idx].degraded_path.empty()) {
            degraded_cache_[idx] =
                img::to_tensor<S>(img::read_image(entries_[idx].degraded_path));
            if (degraded_cache_[idx].shape() != clean_cache_[idx].shape())
                throw ArgumentError("dataset: degraded/clean size mismatch for " +
                                    entries_[idx].clean_path);
        }
        loaded_[idx] = 1;
    }

    void ensure_order(std::int64_t epoch) {
        if (epoch == order_epoch_ && !order_.empty()) return;
        const std::size_t n = entries_.size();
        order_.resize(n);
        for (std::size_t i = 0; i < n; ++i) order_[i] = i;
        Rng rng(hash_combine(seed_, hash_combine(0xE70C, static_cast<std::uint64_t>(epoch))));
        for (std::size_t i = n; i > 1; --i) {
            const auto j = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order_[i - 1], order_[j]);
        }
        order_epoch_ = epoch;
    }

    // Copies window (oy,ox)+crop from src plane-wise into dst slot j, with an
    // optional horizontal mirror.
    static void copy_window(Tensor4<S>& dst, std::int64_t j, const Tensor4<S>& src,
                            std::int64_t oy, std::int64_t ox, bool mirror,
                            std::int64_t crop) {
        const Shape4 ss = src.shape();
        const S* sp = src.data();
        S* dp = dst.data();
        for (std::int64_t c = 0; c < 3; ++c)
            for (std::int64_t y = 0; y < crop; ++y)
                for (std::int64_t x = 0; x < crop; ++x) {
                    const std::int64_t sx = mirror ? (ox + crop - 1 - x) : (ox + x);
                    dp[((j * 3 + c) * crop + y) * crop + x] =
                        sp[(c * ss.h + oy + y) * ss.w + sx];
                }
    }

    void fill_slot(Batch& out, std::int64_t j, std::size_t idx, std::uint64_t sample_seed) {
        ensure_loaded(idx);
        const Tensor4<S>& clean = clean_cache_[idx];
        const Shape4 cs = clean.shape();
        if (cs.h < opt_.crop || cs.w < opt_.crop)
            throw ArgumentError("dataset: image " + entries_[idx].clean_path +
                                " smaller than crop " + std::to_string(opt_.crop));
        Rng rng(sample_seed);
        const std::int64_t oy = rng.uniform_int(0, cs.h - opt_.crop);
        const std::int64_t ox = rng.uniform_int(0, cs.w - opt_.crop);
        const bool mirror = opt_.flip && rng.uniform() < 0.5;
        copy_window(out.clean, j, clean, oy, ox, mirror, opt_.crop);
        if (!entries_[idx].degraded_path.empty()) {
            copy_window(out.degraded, j, degraded_cache_[idx], oy, ox, mirror, opt_.crop);
        } else {
            Tensor4<S> window(Shape4{1, 3, opt_.crop, opt_.crop});
            std::copy_n(out.clean.data() + j * 3 * opt_.crop * opt_.crop,
                        3 * opt_.crop * opt_.crop, window.data());
            DegradationSpec spec = opt_.degrade;
            spec.seed = hash_combine(sample_seed, 0xD5EED);
            Tensor4<S> deg = degrade(window, spec);
            std::copy_n(deg.data(), 3 * opt_.crop * opt_.crop,
                        out.degraded.data() + j * 3 * opt_.crop * opt_.crop);
        }
    }

    std::vector<DatasetEntry> entries_;
    DatasetOptions opt_;
    std::uint64_t seed_ = 0;
    std::int64_t iter_ = 0;
    std::int64_t order_epoch_ = -1;
    std::vector<std::size_t> order_;
    std::vector<Tensor4<S>> clean_cache_;
    std::vector<Tensor4<S>> degraded_cache_;
    std::vector<char> loaded_;
};

}  // namespace wr::data
