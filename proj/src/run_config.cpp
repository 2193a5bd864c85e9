#include "wr/run_config.hpp"

#include <filesystem>
#include <fstream>

#include "wr/errors.hpp"

namespace wr::run {

void RunConfig::apply_kv(cfg::KvMap& kv) {
    model.apply_kv(kv);
    dataset_dir = cfg::take_string(kv, "dataset_dir", dataset_dir);
    out_dir = cfg::take_string(kv, "out_dir", out_dir);
    seed = static_cast<std::uint64_t>(cfg::take_int(kv, "seed", static_cast<std::int64_t>(seed)));
    precision = cfg::take_string(kv, "precision", precision);
    iterations = cfg::take_int(kv, "iterations", iterations);
    lr_initial = cfg::take_double(kv, "lr_initial", lr_initial);
    lr_final = cfg::take_double(kv, "lr_final", lr_final);
    checkpoint_every = cfg::take_int(kv, "checkpoint_every", checkpoint_every);
    log_every = cfg::take_int(kv, "log_every", log_every);
    schedule = cfg::take_string(kv, "schedule", schedule);
    loss_c = cfg::take_double(kv, "loss_c", loss_c);
    flip = cfg::take_bool(kv, "flip", flip);
    weather = cfg::take_string(kv, "weather", weather);
    intensity = cfg::take_double(kv, "intensity", intensity);
    streak_angle = cfg::take_double(kv, "streak_angle", streak_angle);
    streak_length = cfg::take_int(kv, "streak_length", streak_length);
    flake_radius = cfg::take_double(kv, "flake_radius", flake_radius);
    fog_alpha = cfg::take_double(kv, "fog_alpha", fog_alpha);
}

void RunConfig::validate() const {
    model.validate();
    if (precision != "f32" && precision != "f64")
        throw ConfigError("precision must be f32 or f64, got '" + precision + "'");
    if (!(loss_c > 0.0)) throw ConfigError("loss_c must be positive");
    data::parse_weather_kind(weather);
    degrade_spec().validate();
    train::parse_schedule(schedule);
    train_options().validate();
}

RunConfig RunConfig::parse_text(const std::string& text) {
    cfg::KvMap kv = cfg::parse_kv_text(text);
    RunConfig rc;
    rc.apply_kv(kv);
    cfg::reject_unknown(kv, "run config");
    rc.validate();
    return rc;
}

std::string RunConfig::canonical_text() const {
    std::string out = model.canonical_text();
    out += "dataset_dir=" + dataset_dir + "\n";
    out += "out_dir=" + out_dir + "\n";
    out += "seed=" + std::to_string(seed) + "\n";
    out += "precision=" + precision + "\n";
    out += "iterations=" + std::to_string(iterations) + "\n";
    out += "lr_initial=" + cfg::format_double(lr_initial) + "\n";
    out += "lr_final=" + cfg::format_double(lr_final) + "\n";
    out += "checkpoint_every=" + std::to_string(checkpoint_every) + "\n";
    out += "log_every=" + std::to_string(log_every) + "\n";
    out += "schedule=" + schedule + "\n";
    out += "loss_c=" + cfg::format_double(loss_c) + "\n";
    out += std::string("flip=") + (flip ? "true" : "false") + "\n";
    out += "weather=" + weather + "\n";
    out += "intensity=" + cfg::format_double(intensity) + "\n";
    out += "streak_angle=" + cfg::format_double(streak_angle) + "\n";
    out += "streak_length=" + std::to_string(streak_length) + "\n";
    out += "flake_radius=" + cfg::format_double(flake_radius) + "\n";
    out += "fog_alpha=" + cfg::format_double(fog_alpha) + "\n";
    return out;
}

data::DegradationSpec RunConfig::degrade_spec() const {
    data::DegradationSpec s;
    s.kind = data::parse_weather_kind(weather);
    s.intensity = intensity;
    s.streak_angle = streak_angle;
    s.streak_length = static_cast<int>(streak_length);
    s.flake_radius = flake_radius;
    s.fog_alpha = fog_alpha;
    s.seed = seed;
    return s;
}

train::TrainOptions RunConfig::train_options() const {
    train::TrainOptions o;
    o.iterations = iterations;
    o.lr_initial = lr_initial;
    o.lr_final = lr_final;
    o.checkpoint_every = checkpoint_every;
    o.log_every = log_every;
    o.schedule = train::parse_schedule(schedule);
    o.loss_c = loss_c;
    o.flip = flip;
    o.degrade = degrade_spec();
    o.seed = seed;
    return o;
}

void write_manifest(const RunConfig& rc) {
    std::filesystem::create_directories(rc.out_dir);
    const std::string path =
        (std::filesystem::path(rc.out_dir) / "manifest.txt").string();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write manifest " + path);
    out << rc.canonical_text();
}

}  // namespace wr::run
