#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <type_traits>
#include <vector>

#include "wr/errors.hpp"

namespace wr {

struct Shape4 {
    std::int64_t b = 0, c = 0, h = 0, w = 0;

    std::int64_t numel() const { return b * c * h * w; }

    bool operator==(const Shape4& o) const {
        return b == o.b && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape4& o) const { return !(*this == o); }

    std::string str() const {
        return "(" + std::to_string(b) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

namespace detail {

template <typename S>
struct Storage {
    Shape4 shape;
    std::vector<S> data;
    std::vector<S> grad;   // empty until a gradient is accumulated
    bool requires_grad = false;

    std::vector<S>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), S(0));
        return grad;
    }
};

}  // namespace detail

// Dense rank-4 tensor (B, C, H, W), row-major, shared-storage handle. Copies
// alias the same buffer; gradients accumulate additively into the storage.
template <typename S>
class Tensor4 {
    static_assert(std::is_floating_point_v<S>, "Tensor4 requires a float type");

public:
    Tensor4() = default;

    explicit Tensor4(Shape4 shape, S fill = S(0))
        : st_(std::make_shared<detail::Storage<S>>()) {
        if (shape.b <= 0 || shape.c <= 0 || shape.h <= 0 || shape.w <= 0)
            throw ShapeError("Tensor4: non-positive extent in shape " + shape.str());
        st_->shape = shape;
        st_->data.assign(static_cast<std::size_t>(shape.numel()), fill);
    }

    Tensor4(Shape4 shape, std::vector<S> values)
        : st_(std::make_shared<detail::Storage<S>>()) {
        if (static_cast<std::int64_t>(values.size()) != shape.numel())
            throw ShapeError("Tensor4: value count " + std::to_string(values.size()) +
                             " does not fill shape " + shape.str());
        st_->shape = shape;
        st_->data = std::move(values);
    }

    bool defined() const { return st_ != nullptr; }

    const Shape4& shape() const { return st_->shape; }
    std::int64_t numel() const { return st_->shape.numel(); }

    S* data() { return st_->data.data(); }
    const S* data() const { return st_->data.data(); }

    bool requires_grad() const { return st_ && st_->requires_grad; }
    void set_requires_grad(bool v) { st_->requires_grad = v; }

    bool has_grad() const { return st_ && !st_->grad.empty(); }
    S* grad() { return st_->ensure_grad().data(); }
    const S* grad_or_null() const { return st_->grad.empty() ? nullptr : st_->grad.data(); }

    void zero_grad() {
        if (st_ && !st_->grad.empty()) st_->grad.assign(st_->data.size(), S(0));
    }

    S& at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) {
        return st_->data[static_cast<std::size_t>(index(b, c, h, w))];
    }
    S at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return st_->data[static_cast<std::size_t>(index(b, c, h, w))];
    }

    std::int64_t index(std::int64_t b, std::int64_t c, std::int64_t h,
                       std::int64_t w) const {
        const Shape4& s = st_->shape;
        return ((b * s.c + c) * s.h + h) * s.w + w;
    }

    // Deep copy with detached gradient state.
    Tensor4 clone() const {
        Tensor4 out(shape());
        out.st_->data = st_->data;
        return out;
    }

    std::shared_ptr<detail::Storage<S>> storage() const { return st_; }

private:
    std::shared_ptr<detail::Storage<S>> st_;
};

// Reverse-mode tape. Primitives append one node per executed op while any
// input requires a gradient; backward() replays the nodes once, strictly in
// reverse execution order. A tape is single-owner: record and backward must
// happen on one logical thread, and a second backward without reset() is an
// error so stale gradients cannot be mistaken for fresh ones.
template <typename S>
class Tape {
public:
    void record(std::function<void()> backward_fn) {
        nodes_.push_back(std::move(backward_fn));
    }

    std::size_t size() const { return nodes_.size(); }

    void backward(Tensor4<S>& loss) {
        if (spent_)
            throw ArgumentError("Tape::backward: tape already consumed; reset() first");
        if (!(loss.shape() == Shape4{1, 1, 1, 1}))
            throw ArgumentError("Tape::backward: loss must be scalar-shaped (1,1,1,1), got " +
                                loss.shape().str());
        loss.grad()[0] += S(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
        spent_ = true;
    }

    void reset() {
        nodes_.clear();
        spent_ = false;
    }

private:
    std::vector<std::function<void()>> nodes_;
    bool spent_ = false;
};

namespace detail {

template <typename S>
inline void check_finite(const Tensor4<S>& t, const char* op) {
    const S* p = t.data();
    const std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(static_cast<double>(p[i])))
            throw NumericError(std::string(op) + ": non-finite value at flat index " +
                               std::to_string(i));
    }
}

}  // namespace detail

}  // namespace wr
