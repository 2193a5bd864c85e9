#pragma once

// Fully resolved run settings: model topology plus data, schedule, and
// output options, all addressable as flat key=value text. Every command
// writes the canonical form to <out_dir>/manifest.txt; feeding that manifest
// back in reproduces the run, so the manifest is the provenance record.

#include <cstdint>
#include <string>

#include "wr/config_kv.hpp"
#include "wr/degrade.hpp"
#include "wr/model_config.hpp"
#include "wr/train.hpp"

namespace wr::run {

struct RunConfig {
    model::ModelConfig model;

    std::string dataset_dir;
    std::string out_dir = "runs/out";
    std::uint64_t seed = 1;
    std::string precision = "f64";  // f32 | f64

    // training
    std::int64_t iterations = 200;
    double lr_initial = 2e-3;
    double lr_final = 2e-5;
    std::int64_t checkpoint_every = 100;
    std::int64_t log_every = 1;
    std::string schedule = "0:4:32";  // start:batch:crop[,...]
    double loss_c = 0.03;
    bool flip = true;

    // synthetic weather
    std::string weather = "rain";
    double intensity = 0.8;
    double streak_angle = 15.0;
    std::int64_t streak_length = 12;
    double flake_radius = 1.6;
    double fog_alpha = 0.6;

    void apply_kv(cfg::KvMap& kv);  // consumes known keys, including the model's
    void validate() const;

    static RunConfig parse_text(const std::string& text);
    std::string canonical_text() const;

    data::DegradationSpec degrade_spec() const;
    train::TrainOptions train_options() const;
};

// Writes canonical_text to <out_dir>/manifest.txt, creating the directory.
void write_manifest(const RunConfig& rc);

}  // namespace wr::run
