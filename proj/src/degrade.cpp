#include "wr/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "wr/errors.hpp"
#include "wr/rng.hpp"

namespace wr::data {

const char* weather_kind_name(WeatherKind k) {
    switch (k) {
        case WeatherKind::rain: return "rain";
        case WeatherKind::snow: return "snow";
        case WeatherKind::fog: return "fog";
        case WeatherKind::mixed: return "mixed";
    }
    return "?";
}

WeatherKind parse_weather_kind(const std::string& s) {
    if (s == "rain") return WeatherKind::rain;
    if (s == "snow") return WeatherKind::snow;
    if (s == "fog") return WeatherKind::fog;
    if (s == "mixed") return WeatherKind::mixed;
    throw ConfigError("unknown weather kind '" + s + "' (rain|snow|fog|mixed)");
}

void DegradationSpec::validate() const {
    if (!(intensity >= 0.0 && intensity <= 1.0))
        throw ArgumentError("degradation intensity must be in [0,1]");
    if (!(fog_alpha >= 0.0 && fog_alpha <= 1.0))
        throw ArgumentError("fog_alpha must be in [0,1]");
    if (streak_length < 1) throw ArgumentError("streak_length must be >= 1");
    if (!(flake_radius > 0.0)) throw ArgumentError("flake_radius must be positive");
    if (!(streak_angle > -90.0 && streak_angle < 90.0))
        throw ArgumentError("streak_angle must be in (-90,90) degrees off vertical");
}

namespace {

// One image plane-set (C,H,W) addressed as a dense double buffer; degradations
// are composited in double and converted back once at the end.
struct Canvas {
    std::vector<double> px;
    std::int64_t c, h, w;

    double& at(std::int64_t ch, std::int64_t y, std::int64_t x) {
        return px[(ch * h + y) * w + x];
    }
    void add_white(std::int64_t y, std::int64_t x, double v) {
        if (y < 0 || y >= h || x < 0 || x >= w) return;
        for (std::int64_t ch = 0; ch < c; ++ch) at(ch, y, x) += v;
    }
};

// Streak/flake budget for a full-intensity image; ceil(intensity * budget)
// are included, so any nonzero intensity draws at least one occluder.
std::int64_t occluder_budget(std::int64_t h, std::int64_t w, double per_px) {
    return std::max<std::int64_t>(1, std::llround(static_cast<double>(h * w) * per_px));
}

std::int64_t included_count(std::int64_t budget, double intensity) {
    if (intensity <= 0.0) return 0;
    return std::min<std::int64_t>(budget, static_cast<std::int64_t>(
        std::ceil(static_cast<double>(budget) * intensity)));
}

void draw_rain(Canvas& cv, const DegradationSpec& spec, std::uint64_t stream_tag) {
    const std::int64_t budget = occluder_budget(cv.h, cv.w, 1.0 / 160.0);
    const std::int64_t count = included_count(budget, spec.intensity);
    Rng rng(hash_combine(spec.seed, stream_tag));
    const double deg = 3.14159265358979323846 / 180.0;
    for (std::int64_t i = 0; i < budget; ++i) {
        // Candidate draws happen for the full budget regardless of intensity
        // so that lower intensities render an exact prefix of this set.
        const double cx = rng.uniform(0.0, static_cast<double>(cv.w));
        const double cy = rng.uniform(0.0, static_cast<double>(cv.h));
        const double len = spec.streak_length * rng.uniform(0.7, 1.3);
        const double ang = (spec.streak_angle + rng.uniform(-8.0, 8.0)) * deg;
        const double bright = rng.uniform(0.25, 0.55);
        if (i >= count) continue;
        const double dx = std::sin(ang), dy = std::cos(ang);
        const std::int64_t steps = std::max<std::int64_t>(1, std::llround(len));
        for (std::int64_t s = 0; s < steps; ++s) {
            const double t = static_cast<double>(s);
            const double fade = 1.0 - 0.5 * t / static_cast<double>(steps);
            const auto x = static_cast<std::int64_t>(std::lround(cx + t * dx));
            const auto y = static_cast<std::int64_t>(std::lround(cy + t * dy));
            cv.add_white(y, x, bright * fade);
        }
    }
}

void draw_snow(Canvas& cv, const DegradationSpec& spec, std::uint64_t stream_tag) {
    const std::int64_t budget = occluder_budget(cv.h, cv.w, 1.0 / 220.0);
    const std::int64_t count = included_count(budget, spec.intensity);
    Rng rng(hash_combine(spec.seed, stream_tag));
    for (std::int64_t i = 0; i < budget; ++i) {
        const double cx = rng.uniform(0.0, static_cast<double>(cv.w));
        const double cy = rng.uniform(0.0, static_cast<double>(cv.h));
        const double r = spec.flake_radius * rng.uniform(0.6, 1.6);
        const double bright = rng.uniform(0.5, 0.9);
        if (i >= count) continue;
        const double sigma = std::max(0.4, r * 0.5);
        const auto reach = static_cast<std::int64_t>(std::ceil(2.5 * sigma));
        const auto icx = static_cast<std::int64_t>(std::lround(cx));
        const auto icy = static_cast<std::int64_t>(std::lround(cy));
        for (std::int64_t oy = -reach; oy <= reach; ++oy) {
            for (std::int64_t ox = -reach; ox <= reach; ++ox) {
                const double ddx = static_cast<double>(icx + ox) - cx;
                const double ddy = static_cast<double>(icy + oy) - cy;
                const double d2 = ddx * ddx + ddy * ddy;
                cv.add_white(icy + oy, icx + ox,
                             bright * std::exp(-d2 / (2.0 * sigma * sigma)));
            }
        }
    }
}

void apply_fog(Canvas& cv, const DegradationSpec& spec) {
    const double alpha = std::clamp(spec.fog_alpha * spec.intensity, 0.0, 1.0);
    if (alpha == 0.0) return;
    for (double& v : cv.px) v = v * (1.0 - alpha) + alpha;
}

}  // namespace

template <typename S>
Tensor4<S> degrade(const Tensor4<S>& clean, const DegradationSpec& spec) {
    spec.validate();
    const Shape4 sh = clean.shape();
    Tensor4<S> out(sh);
    const std::int64_t plane = sh.c * sh.h * sh.w;
    const S* src = clean.data();
    S* dst = out.data();
    for (std::int64_t b = 0; b < sh.b; ++b) {
        Canvas cv;
        cv.c = sh.c;
        cv.h = sh.h;
        cv.w = sh.w;
        cv.px.assign(src + b * plane, src + (b + 1) * plane);
        // Per-batch-slot tag keeps slots independent under one seed.
        const auto slot = static_cast<std::uint64_t>(b);
        switch (spec.kind) {
            case WeatherKind::rain:
                draw_rain(cv, spec, hash_combine(0x7261696eULL, slot));
                break;
            case WeatherKind::snow:
                draw_snow(cv, spec, hash_combine(0x736e6f77ULL, slot));
                break;
            case WeatherKind::fog:
                apply_fog(cv, spec);
                break;
            case WeatherKind::mixed:
                apply_fog(cv, spec);
                draw_rain(cv, spec, hash_combine(0x7261696eULL, slot));
                break;
        }
        for (std::int64_t i = 0; i < plane; ++i) {
            const double v = std::clamp(cv.px[i], 0.0, 1.0);
            dst[b * plane + i] = static_cast<S>(v);
        }
    }
    return out;
}

template Tensor4<float> degrade<float>(const Tensor4<float>&, const DegradationSpec&);
template Tensor4<double> degrade<double>(const Tensor4<double>&, const DegradationSpec&);

}  // namespace wr::data
