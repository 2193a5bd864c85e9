#include "wr/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "wr/errors.hpp"

namespace wr::metrics {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;
constexpr double kRange = 1.0;

template <typename S>
double mse(const Tensor4<S>& a, const Tensor4<S>& b) {
    if (!(a.shape() == b.shape()))
        throw ShapeError("psnr: shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
    const std::int64_t n = a.numel();
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
        s += d * d;
    }
    return s / static_cast<double>(n);
}

const std::vector<double>& gaussian_kernel() {
    static const std::vector<double> k = [] {
        std::vector<double> v(kWin);
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            const double x = i - (kWin - 1) / 2.0;
            v[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * kSigma * kSigma));
            sum += v[static_cast<std::size_t>(i)];
        }
        for (double& x : v) x /= sum;
        return v;
    }();
    return k;
}

// separable Gaussian blur over the valid region: (H,W) -> (H-10, W-10)
void blur_valid(const std::vector<double>& img, std::int64_t h, std::int64_t w,
                std::vector<double>& tmp, std::vector<double>& out) {
    const auto& k = gaussian_kernel();
    const std::int64_t wv = w - (kWin - 1);
    const std::int64_t hv = h - (kWin - 1);
    tmp.assign(static_cast<std::size_t>(h * wv), 0.0);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < wv; ++x) {
            double s = 0.0;
            for (int i = 0; i < kWin; ++i) s += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y * w + x + i)];
            tmp[static_cast<std::size_t>(y * wv + x)] = s;
        }
    out.assign(static_cast<std::size_t>(hv * wv), 0.0);
    for (std::int64_t y = 0; y < hv; ++y)
        for (std::int64_t x = 0; x < wv; ++x) {
            double s = 0.0;
            for (int i = 0; i < kWin; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>((y + i) * wv + x)];
            out[static_cast<std::size_t>(y * wv + x)] = s;
        }
}

template <typename S>
double ssim_impl(const Tensor4<S>& a, const Tensor4<S>& b) {
    if (!(a.shape() == b.shape()))
        throw ShapeError("ssim: shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
    const Shape4 s = a.shape();
    if (s.h < kWin || s.w < kWin)
        throw ArgumentError("ssim: image " + s.str() + " smaller than the 11x11 window");

    const double c1 = (kK1 * kRange) * (kK1 * kRange);
    const double c2 = (kK2 * kRange) * (kK2 * kRange);
    const std::int64_t plane = s.h * s.w;
    std::vector<double> xa(static_cast<std::size_t>(plane)), xb(static_cast<std::size_t>(plane)),
        xaa(static_cast<std::size_t>(plane)), xbb(static_cast<std::size_t>(plane)),
        xab(static_cast<std::size_t>(plane));
    std::vector<double> tmp, mu_a, mu_b, m_aa, m_bb, m_ab;

    double total = 0.0;
    std::int64_t planes = 0;
    for (std::int64_t n = 0; n < s.b; ++n)
        for (std::int64_t c = 0; c < s.c; ++c) {
            const S* pa = a.data() + (n * s.c + c) * plane;
            const S* pb = b.data() + (n * s.c + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                const double va = static_cast<double>(pa[i]);
                const double vb = static_cast<double>(pb[i]);
                xa[static_cast<std::size_t>(i)] = va;
                xb[static_cast<std::size_t>(i)] = vb;
                xaa[static_cast<std::size_t>(i)] = va * va;
                xbb[static_cast<std::size_t>(i)] = vb * vb;
                xab[static_cast<std::size_t>(i)] = va * vb;
            }
            blur_valid(xa, s.h, s.w, tmp, mu_a);
            blur_valid(xb, s.h, s.w, tmp, mu_b);
            blur_valid(xaa, s.h, s.w, tmp, m_aa);
            blur_valid(xbb, s.h, s.w, tmp, m_bb);
            blur_valid(xab, s.h, s.w, tmp, m_ab);

            double acc = 0.0;
            for (std::size_t i = 0; i < mu_a.size(); ++i) {
                const double ma = mu_a[i], mb = mu_b[i];
                const double va = m_aa[i] - ma * ma;
                const double vb = m_bb[i] - mb * mb;
                const double cov = m_ab[i] - ma * mb;
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
            total += acc / static_cast<double>(mu_a.size());
            ++planes;
        }
    return total / static_cast<double>(planes);
}

template <typename S>
double psnr_impl(const Tensor4<S>& a, const Tensor4<S>& b, double peak) {
    if (!(peak > 0.0)) throw ArgumentError("psnr: peak must be positive");
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

}  // namespace

double psnr(const Tensor4<double>& a, const Tensor4<double>& b, double peak) {
    return psnr_impl(a, b, peak);
}
double psnr(const Tensor4<float>& a, const Tensor4<float>& b, double peak) {
    return psnr_impl(a, b, peak);
}
double ssim(const Tensor4<double>& a, const Tensor4<double>& b) { return ssim_impl(a, b); }
double ssim(const Tensor4<float>& a, const Tensor4<float>& b) { return ssim_impl(a, b); }

}  // namespace wr::metrics
