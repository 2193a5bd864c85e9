#pragma once

// Synthetic weather degradations: additive oriented rain streaks, soft snow
// discs, an atmospheric fog veil, and their fog+rain composition. The seed
// fully determines the output. Candidate streaks/flakes are generated
// independently of intensity and included by prefix, so raising the intensity
// only ever adds occlusions: the degraded image moves monotonically away from
// the clean one.

#include <cstdint>
#include <string>

#include "wr/tensor.hpp"

namespace wr::data {

enum class WeatherKind { rain, snow, fog, mixed };

const char* weather_kind_name(WeatherKind k);
WeatherKind parse_weather_kind(const std::string& s);  // ConfigError on unknown

struct DegradationSpec {
    WeatherKind kind = WeatherKind::rain;
    double intensity = 1.0;      // [0,1]; 0 is the identity
    double streak_angle = 15.0;  // rain tilt, degrees off vertical
    int streak_length = 12;      // px
    double flake_radius = 1.6;   // px
    double fog_alpha = 0.6;      // white blend factor at intensity 1
    std::uint64_t seed = 0;

    void validate() const;  // ArgumentError on out-of-range fields
};

template <typename S>
struct SamplePair {
    Tensor4<S> degraded;
    Tensor4<S> clean;
    DegradationSpec spec;
};

// clean: (B,3,H,W) in [0,1]; output is clamped to [0,1].
template <typename S>
Tensor4<S> degrade(const Tensor4<S>& clean, const DegradationSpec& spec);

template <typename S>
SamplePair<S> synth_degrade(const Tensor4<S>& clean, const DegradationSpec& spec) {
    return SamplePair<S>{degrade(clean, spec), clean, spec};
}

}  // namespace wr::data
