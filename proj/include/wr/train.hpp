#pragma once

// Training loop: Adam on the robust per-sample loss with a cosine learning
// rate, a staged batch/crop schedule, tab-separated metrics logging, and
// periodic atomic checkpoints (model file + optimizer sidecar). All sampling
// is keyed by (seed, iteration), so stopping at a checkpoint and resuming
// replays the remaining iterations bit-exactly in double precision.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "wr/checkpoint.hpp"
#include "wr/dataset.hpp"
#include "wr/errors.hpp"
#include "wr/loss.hpp"
#include "wr/metrics.hpp"
#include "wr/model.hpp"
#include "wr/optim.hpp"

namespace wr::train {

// One stage of the progressive schedule: from start_iteration on, sample
// batches of `batch` crops of side `crop`.
struct ScheduleSegment {
    std::int64_t start_iteration = 0;
    std::int64_t batch = 4;
    std::int64_t crop = 32;
};

// "start:batch:crop[,start:batch:crop...]"; starts must begin at 0 and
// strictly increase. ConfigError otherwise.
std::vector<ScheduleSegment> parse_schedule(const std::string& text);
std::string format_schedule(const std::vector<ScheduleSegment>& segments);

struct TrainOptions {
    std::int64_t iterations = 200;
    double lr_initial = 2e-3;
    double lr_final = 2e-5;
    std::int64_t checkpoint_every = 100;
    std::int64_t log_every = 1;
    std::vector<ScheduleSegment> schedule{{0, 4, 32}};
    double loss_c = 0.03;
    bool flip = true;
    data::DegradationSpec degrade;
    std::uint64_t seed = 1;

    void validate() const {
        if (iterations < 1) throw ConfigError("train: iterations must be >= 1");
        if (!(lr_initial > 0.0) || !(lr_final > 0.0))
            throw ConfigError("train: learning rates must be positive");
        if (checkpoint_every < 1) throw ConfigError("train: checkpoint_every must be >= 1");
        if (log_every < 1) throw ConfigError("train: log_every must be >= 1");
        if (schedule.empty() || schedule.front().start_iteration != 0)
            throw ConfigError("train: schedule must start at iteration 0");
        for (std::size_t i = 1; i < schedule.size(); ++i)
            if (schedule[i].start_iteration <= schedule[i - 1].start_iteration)
                throw ConfigError("train: schedule starts must strictly increase");
        degrade.validate();
    }
};

// Cosine decay from lr_initial at iteration 0 to lr_final at the final
// iteration (total-1); a single-iteration run uses lr_initial.
inline double cosine_lr(const TrainOptions& opt, std::int64_t iteration) {
    if (opt.iterations <= 1) return opt.lr_initial;
    const double t = static_cast<double>(iteration) /
                     static_cast<double>(opt.iterations - 1);
    const double pi = 3.14159265358979323846;
    return opt.lr_final +
           0.5 * (opt.lr_initial - opt.lr_final) * (1.0 + std::cos(pi * t));
}

struct TrainResult {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::int64_t iterations_run = 0;
    std::string checkpoint_path;
    std::string optim_path;
    std::string log_path;
};

namespace detail {

inline const ScheduleSegment& segment_at(const std::vector<ScheduleSegment>& segs,
                                         std::int64_t iteration) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < segs.size(); ++i)
        if (segs[i].start_iteration <= iteration) best = i;
    return segs[best];
}

}  // namespace detail

// Runs iterations [start_iteration, opt.iterations) on the given model and
// optimizer, appending to out_dir/metrics.tsv and checkpointing to
// out_dir/model.ckpt (+ .optim sidecar). on_step, when set, observes
// (iteration, loss, lr) after each update.
template <typename S>
TrainResult train_run(
    model::Model<S>& m, optim::Adam<S>& adam, const std::vector<data::DatasetEntry>& entries,
    const TrainOptions& opt, const std::string& out_dir, std::int64_t start_iteration = 0,
    const std::function<void(std::int64_t, double, double)>& on_step = nullptr) {
    opt.validate();
    if (entries.empty()) throw ArgumentError("train: empty dataset");
    if (start_iteration < 0 || start_iteration > opt.iterations)
        throw ArgumentError("train: start iteration out of range");

    std::filesystem::create_directories(out_dir);
    TrainResult res;
    res.checkpoint_path = (std::filesystem::path(out_dir) / "model.ckpt").string();
    res.optim_path = res.checkpoint_path + ".optim";
    res.log_path = (std::filesystem::path(out_dir) / "metrics.tsv").string();

    std::ofstream log(res.log_path, std::ios::app);
    if (!log) throw FormatError("train: cannot open log " + res.log_path);

    // One stream per schedule segment, keyed by its start so a resumed run
    // rebuilds the identical sample sequence.
    std::unique_ptr<data::DatasetStream<S>> stream;
    std::int64_t stream_segment = -1;

    const auto save_state = [&](std::int64_t next_iteration) {
        ckpt::save_model(res.checkpoint_path, m);
        adam.save(res.optim_path, m, next_iteration);
    };

    bool have_initial = false;
    for (std::int64_t it = start_iteration; it < opt.iterations; ++it) {
        const ScheduleSegment& seg = detail::segment_at(opt.schedule, it);
        if (seg.start_iteration != stream_segment) {
            data::DatasetOptions dopt;
            dopt.batch = seg.batch;
            dopt.crop = seg.crop;
            dopt.flip = opt.flip;
            dopt.degrade = opt.degrade;
            stream = std::make_unique<data::DatasetStream<S>>(
                entries, dopt,
                hash_combine(opt.seed, static_cast<std::uint64_t>(seg.start_iteration)));
            stream_segment = seg.start_iteration;
        }
        stream->seek(it - seg.start_iteration);
        const auto batch = stream->next();

        m.zero_grads();
        Tape<S> tape;
        Tensor4<S> pred = m.forward(&tape, batch.degraded);
        Tensor4<S> loss =
            loss::pseudo_huber(&tape, pred, batch.clean, static_cast<S>(opt.loss_c));
        tape.backward(loss);
        const double lr = cosine_lr(opt, it);
        adam.step(m, lr);

        const double loss_value = static_cast<double>(loss.data()[0]);
        if (!have_initial) {
            res.initial_loss = loss_value;
            have_initial = true;
        }
        res.final_loss = loss_value;
        ++res.iterations_run;
        if (it % opt.log_every == 0 || it + 1 == opt.iterations) {
            char line[96];
            std::snprintf(line, sizeof(line), "%lld\t%.17g\t%.17g\n",
                          static_cast<long long>(it), loss_value, lr);
            log << line;
            log.flush();
        }
        if ((it + 1) % opt.checkpoint_every == 0 || it + 1 == opt.iterations)
            save_state(it + 1);
        if (on_step) on_step(it, loss_value, lr);
    }
    return res;
}

struct EvalResult {
    double psnr_degraded = 0.0;
    double psnr_restored = 0.0;
    double ssim_degraded = 0.0;
    double ssim_restored = 0.0;
    std::int64_t count = 0;
};

// Mean full-image metrics over up to max_images entries. Stored degraded
// images are used when present; otherwise each entry is synthesized with a
// per-index seed derived from eval_seed, so the held-out degradations are
// fixed across calls.
template <typename S>
EvalResult evaluate(model::Model<S>& m, const std::vector<data::DatasetEntry>& entries,
                    const data::DegradationSpec& degrade_template,
                    std::uint64_t eval_seed, std::int64_t max_images = 8) {
    EvalResult r;
    const std::int64_t n =
        std::min<std::int64_t>(max_images, static_cast<std::int64_t>(entries.size()));
    for (std::int64_t i = 0; i < n; ++i) {
        Tensor4<S> clean = img::to_tensor<S>(img::read_image(entries[i].clean_path));
        Tensor4<S> degraded;
        if (!entries[i].degraded_path.empty()) {
            degraded = img::to_tensor<S>(img::read_image(entries[i].degraded_path));
        } else {
            data::DegradationSpec spec = degrade_template;
            spec.seed = hash_combine(eval_seed, static_cast<std::uint64_t>(i));
            degraded = data::degrade(clean, spec);
        }
        Tensor4<S> restored = m.forward(nullptr, degraded);
        r.psnr_degraded += metrics::psnr(degraded, clean);
        r.psnr_restored += metrics::psnr(restored, clean);
        r.ssim_degraded += metrics::ssim(degraded, clean);
        r.ssim_restored += metrics::ssim(restored, clean);
        ++r.count;
    }
    if (r.count > 0) {
        const double inv = 1.0 / static_cast<double>(r.count);
        r.psnr_degraded *= inv;
        r.psnr_restored *= inv;
        r.ssim_degraded *= inv;
        r.ssim_restored *= inv;
    }
    return r;
}

}  // namespace wr::train
