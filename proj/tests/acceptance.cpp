// Acceptance gate: nine checks covering cost reproduction, scaling laws,
// gradient correctness, structural invariants, metric goldens, toy training,
// ablation directions, and serialization. Prints exactly one PASS/FAIL line
// per criterion and exits nonzero if any fail. All tolerances are pinned
// here, next to the values they guard.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "wr/checkpoint.hpp"
#include "wr/cost.hpp"
#include "wr/dataset.hpp"
#include "wr/degrade.hpp"
#include "wr/errors.hpp"
#include "wr/gradsuite.hpp"
#include "wr/image.hpp"
#include "wr/loss.hpp"
#include "wr/metrics.hpp"
#include "wr/model.hpp"
#include "wr/ops.hpp"
#include "wr/optim.hpp"
#include "wr/rng.hpp"
#include "wr/train.hpp"

namespace fs = std::filesystem;
using wr::Rng;
using wr::Shape4;
using wr::Tensor4;

namespace {

bool g_verbose = false;

void note(const char* fmt, ...) {
    if (!g_verbose) return;
    va_list ap;
    va_start(ap, fmt);
    std::vfprintf(stderr, fmt, ap);
    va_end(ap);
    std::fflush(stderr);
}

struct Gate {
    bool all_ok = true;
    void report(int n, bool ok, const std::string& what) {
        std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", n, what.c_str());
        std::fflush(stdout);
        all_ok = all_ok && ok;
    }
    // runs one criterion, turning exceptions into a FAIL line
    void run(int n, const std::function<std::pair<bool, std::string>()>& body) {
        try {
            const auto [ok, what] = body();
            report(n, ok, what);
        } catch (const std::exception& e) {
            report(n, false, std::string("threw: ") + e.what());
        }
    }
};

bool within_rel(double measured, double target, double rel) {
    return std::abs(measured - target) <= rel * std::abs(target);
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

wr::model::ModelConfig gating_config(bool gfn, bool dstage) {
    wr::model::ModelConfig c;
    c.gate_gfn = gfn;
    c.gate_dstage = dstage;
    return c;
}

// --------------------------------------------------------- toy training ----

struct TmpDir {
    fs::path path;
    explicit TmpDir(const std::string& tag) : path(fs::temp_directory_path() / tag) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TmpDir() { fs::remove_all(path); }
};

// smooth banded scenes with mild texture so streaks are separable from content
void write_scene(const fs::path& path, std::int64_t hw, std::uint64_t seed) {
    Rng rng(seed);
    wr::img::ImageU8 im;
    im.h = hw;
    im.w = hw;
    im.c = 3;
    im.data.resize(static_cast<std::size_t>(im.numel()));
    const double fx = rng.uniform(0.2, 0.5), fy = rng.uniform(0.15, 0.4);
    const double px = rng.uniform(0.0, 6.28), py = rng.uniform(0.0, 6.28);
    for (std::int64_t y = 0; y < hw; ++y)
        for (std::int64_t x = 0; x < hw; ++x) {
            const double base =
                0.45 + 0.25 * std::sin(fx * x + px) * std::cos(fy * y + py);
            for (std::int64_t c = 0; c < 3; ++c) {
                const double tint = 1.0 - 0.08 * static_cast<double>(c);
                const double v =
                    std::clamp(base * tint + 0.02 * rng.uniform(), 0.0, 1.0);
                im.data[static_cast<std::size_t>((y * hw + x) * 3 + c)] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    wr::img::write_image(path.string(), im);
}

std::vector<wr::data::DatasetEntry> scene_entries(const fs::path& dir, int count,
                                                  std::uint64_t seed0) {
    fs::create_directories(dir);
    std::vector<wr::data::DatasetEntry> entries;
    for (int k = 0; k < count; ++k) {
        const fs::path p = dir / ("scene" + std::to_string(k) + ".ppm");
        write_scene(p, 48, seed0 + static_cast<std::uint64_t>(k));
        entries.push_back({p.string(), ""});
    }
    return entries;
}

wr::train::TrainOptions toy_options() {
    wr::train::TrainOptions opt;
    opt.iterations = 200;
    opt.lr_initial = 2e-3;
    opt.lr_final = 2e-4;
    opt.checkpoint_every = 200;
    opt.log_every = 200;
    opt.schedule = {{0, 4, 32}};
    opt.loss_c = 0.03;
    opt.flip = true;
    opt.degrade.kind = wr::data::WeatherKind::mixed;
    opt.degrade.intensity = 0.9;
    opt.seed = 21;
    return opt;
}

struct ToyRun {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    wr::train::EvalResult held_out;
    double seconds = 0.0;
};

ToyRun train_toy(const wr::model::ModelConfig& cfg,
                 const std::vector<wr::data::DatasetEntry>& train_entries,
                 const std::vector<wr::data::DatasetEntry>& held_out_entries,
                 const fs::path& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto opt = toy_options();
    auto m = wr::model::Model<float>::init(cfg, 3);
    m.set_requires_grad(true);
    wr::optim::Adam<float> adam;
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(opt.iterations));
    const auto res = wr::train::train_run<float>(
        m, adam, train_entries, opt, out_dir.string(), 0,
        [&](std::int64_t it, double loss, double) {
            losses.push_back(loss);
            if (it % 25 == 0) note("  iter %lld loss %.4f\n", (long long)it, loss);
        });
    ToyRun r;
    r.initial_loss = res.initial_loss;
    r.final_loss = res.final_loss;
    r.held_out = wr::train::evaluate<float>(m, held_out_entries, opt.degrade,
                                            wr::hash_combine(opt.seed, 0xE7A1u), 8);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    note("  trained %s: loss %.4f -> %.4f, held-out psnr %.3f -> %.3f (%.1fs)\n",
         out_dir.filename().string().c_str(), r.initial_loss, r.final_loss,
         r.held_out.psnr_degraded, r.held_out.psnr_restored, r.seconds);
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 1; i < argc; ++i)
        if (std::string(argv[i]) == "-v") g_verbose = true;

    Gate gate;
    const wr::model::ModelConfig full;  // calibrated default architecture

    // 1. parameter counts of the four gating variants, plus the two deltas
    gate.run(1, [&] {
        const std::int64_t both = wr::cost::analyze(gating_config(true, true), 1, 64, 64).params;
        const std::int64_t gfn = wr::cost::analyze(gating_config(true, false), 1, 64, 64).params;
        const std::int64_t dstage = wr::cost::analyze(gating_config(false, true), 1, 64, 64).params;
        const std::int64_t neither = wr::cost::analyze(gating_config(false, false), 1, 64, 64).params;
        bool ok = within_rel(static_cast<double>(both), 24.32e6, 0.02) &&
                  within_rel(static_cast<double>(gfn), 23.76e6, 0.02) &&
                  within_rel(static_cast<double>(dstage), 20.56e6, 0.02) &&
                  within_rel(static_cast<double>(neither), 20.10e6, 0.02);
        const std::int64_t gfn_delta = gfn - neither;
        const std::int64_t dstage_delta = dstage - neither;
        ok = ok && within_rel(static_cast<double>(gfn_delta), 3.66e6, 0.10) &&
             within_rel(static_cast<double>(dstage_delta), 0.46e6, 0.15);
        return std::make_pair(
            ok, fmt("parameter totals within 2%% of pinned targets and gating deltas "
                    "within 10%%/15%% (both=%lld gfn=%lld dstage=%lld neither=%lld)",
                    (long long)both, (long long)gfn, (long long)dstage,
                    (long long)neither));
    });

    // 2. conv-only MAC totals at 1x3x720x480, and the d-stage gating overhead
    gate.run(2, [&] {
        const std::int64_t both = wr::cost::analyze(gating_config(true, true), 1, 480, 720).conv_macs;
        const std::int64_t gfn = wr::cost::analyze(gating_config(true, false), 1, 480, 720).conv_macs;
        const std::int64_t neither = wr::cost::analyze(gating_config(false, false), 1, 480, 720).conv_macs;
        const std::int64_t dstage = wr::cost::analyze(gating_config(false, true), 1, 480, 720).conv_macs;
        bool ok = within_rel(static_cast<double>(both), 377.21e9, 0.05) &&
                  within_rel(static_cast<double>(gfn), 356.76e9, 0.05) &&
                  within_rel(static_cast<double>(neither), 280.12e9, 0.05);
        const double overhead = 100.0 * (static_cast<double>(dstage) / static_cast<double>(neither) - 1.0);
        ok = ok && std::abs(overhead - 5.0) <= 2.0;
        return std::make_pair(
            ok, fmt("conv-only MACs at 720x480 within 5%% of pinned targets, stage "
                    "gating overhead %.2f%% within 5%%±2pp (both=%.2fG gfn=%.2fG "
                    "neither=%.2fG)",
                    overhead, both * 1e-9, gfn * 1e-9, neither * 1e-9));
    });

    // 3. conv-only MACs are an exact affine function of H*W
    gate.run(3, [&] {
        const std::int64_t hw1 = 64 * 64, hw2 = 128 * 128, hw3 = 256 * 256;
        const std::int64_t m1 = wr::cost::analyze(full, 1, 64, 64).conv_macs;
        const std::int64_t m2 = wr::cost::analyze(full, 1, 128, 128).conv_macs;
        const std::int64_t m3 = wr::cost::analyze(full, 1, 256, 256).conv_macs;
        // exact affinity: equal slopes between consecutive points, integral slope
        const bool affine = (m2 - m1) * (hw3 - hw2) == (m3 - m2) * (hw2 - hw1);
        const bool integral = (m2 - m1) % (hw2 - hw1) == 0;
        const std::int64_t slope = (m2 - m1) / (hw2 - hw1);
        const std::int64_t constant = m1 - slope * hw1;
        const bool consistent = m3 == constant + slope * hw3 && constant >= 0;
        const bool ok = affine && integral && consistent && m1 > 0;
        return std::make_pair(
            ok, fmt("conv-only MACs exactly affine in H*W over 64^2/128^2/256^2 "
                    "(slope=%lld MACs/px, constant=%lld)",
                    (long long)slope, (long long)constant));
    });

    // 4. finite-difference gradient suite, primitives through end-to-end loss
    gate.run(4, [&] {
        const auto t0 = std::chrono::steady_clock::now();
        const auto reports = wr::gradsuite::run_suite(1234, true, false);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        double worst = 0.0;
        std::string worst_op = "-";
        bool ok = !reports.empty();
        for (const auto& r : reports) {
            if (r.max_rel_err > worst) {
                worst = r.max_rel_err;
                worst_op = r.op;
            }
            ok = ok && r.ok;
            note("  %-26s %.3e %s\n", r.op.c_str(), r.max_rel_err, r.ok ? "ok" : "FAIL");
        }
        ok = ok && worst < 1e-5 && secs < 120.0;
        return std::make_pair(
            ok, fmt("gradient suite: %zu checks, max rel err %.3e (%s) < 1e-5 in %.1fs",
                    reports.size(), worst, worst_op.c_str(), secs));
    });

    // 5. structural invariants, 100 random cases each
    gate.run(5, [&] {
        Rng rng(77);
        int failures = 0;

        // forward preserves shape for any H,W divisible by 8
        {
            auto m = wr::model::Model<double>::init(wr::model::ModelConfig::tiny(), 5);
            m.for_each_param([&](const std::string&, Tensor4<double>& t) {
                for (std::int64_t i = 0; i < t.numel(); ++i)
                    t.data()[i] += 0.02 * rng.normal();
            });
            for (int k = 0; k < 100; ++k) {
                const std::int64_t h = 8 * rng.uniform_int(1, 4);
                const std::int64_t w = 8 * rng.uniform_int(1, 4);
                Tensor4<double> x(Shape4{1, 3, h, w});
                for (std::int64_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform();
                if (!(m.forward(nullptr, x).shape() == x.shape())) ++failures;
            }
        }
        // pixel unshuffle then shuffle is a bitwise identity
        for (int k = 0; k < 100; ++k) {
            const Shape4 s{rng.uniform_int(1, 3), rng.uniform_int(1, 8),
                           2 * rng.uniform_int(1, 8), 2 * rng.uniform_int(1, 8)};
            Tensor4<double> x(s);
            for (std::int64_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.normal();
            const auto back =
                wr::ops::pixel_shuffle<double>(nullptr, wr::ops::pixel_unshuffle<double>(nullptr, x, 2), 2);
            if (std::memcmp(back.data(), x.data(),
                            static_cast<std::size_t>(x.numel()) * sizeof(double)) != 0)
                ++failures;
        }
        // softmax rows sum to one
        for (int k = 0; k < 100; ++k) {
            const Shape4 s{rng.uniform_int(1, 2), rng.uniform_int(1, 3),
                           rng.uniform_int(1, 6), rng.uniform_int(2, 12)};
            Tensor4<double> x(s);
            for (std::int64_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform(-8.0, 8.0);
            const auto y = wr::ops::softmax_lastdim<double>(nullptr, x);
            const std::int64_t rows = y.numel() / s.w;
            for (std::int64_t r = 0; r < rows; ++r) {
                double sum = 0.0;
                for (std::int64_t j = 0; j < s.w; ++j) sum += y.data()[r * s.w + j];
                if (std::abs(sum - 1.0) > 1e-12) {
                    ++failures;
                    break;
                }
            }
        }
        // freshly initialized model (zero residual head) is an exact identity
        {
            auto m = wr::model::Model<double>::init(wr::model::ModelConfig::tiny(), 9);
            for (int k = 0; k < 100; ++k) {
                Tensor4<double> x(Shape4{1, 3, 16, 16});
                for (std::int64_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform();
                const auto y = m.forward(nullptr, x);
                if (std::memcmp(y.data(), x.data(),
                                static_cast<std::size_t>(x.numel()) * sizeof(double)) != 0)
                    ++failures;
            }
        }
        // spatial reduction always lands on a 7x7 grid
        for (int k = 0; k < 100; ++k) {
            const Shape4 s{1, rng.uniform_int(1, 4), rng.uniform_int(1, 40),
                           rng.uniform_int(1, 40)};
            Tensor4<double> x(s);
            for (std::int64_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.normal();
            const auto y = wr::ops::adaptive_avg_pool<double>(nullptr, x, 7);
            if (!(y.shape() == Shape4{s.b, s.c, 7, 7})) ++failures;
        }
        return std::make_pair(failures == 0,
                              fmt("structural invariants: 5 properties x 100 random "
                                  "cases, %d failure(s)",
                                  failures));
    });

    // 6. loss and metric golden values
    gate.run(6, [&] {
        Rng rng(31);
        bool ok = true;

        Tensor4<double> y(Shape4{2, 3, 8, 8});
        for (std::int64_t i = 0; i < y.numel(); ++i) y.data()[i] = rng.uniform();
        ok = ok && wr::loss::pseudo_huber<double>(nullptr, y, y, 0.03).data()[0] == 0.0;

        Tensor4<double> p(Shape4{1, 1, 1, 1}, 0.07), t(Shape4{1, 1, 1, 1}, 0.03);
        const double scalar = wr::loss::pseudo_huber<double>(nullptr, p, t, 0.03).data()[0];
        ok = ok && std::abs(scalar - 0.02) < 1e-9;

        Tensor4<double> a(Shape4{1, 3, 24, 24});
        for (std::int64_t i = 0; i < a.numel(); ++i) a.data()[i] = rng.uniform(0.2, 0.8);
        Tensor4<double> b(a.shape());
        for (std::int64_t i = 0; i < a.numel(); ++i) b.data()[i] = a.data()[i] + 0.1;
        const double db = wr::metrics::psnr(a, b);
        ok = ok && std::abs(db - 20.0) < 1e-6;

        Tensor4<double> s(Shape4{1, 3, 32, 32});
        for (std::int64_t i = 0; i < s.numel(); ++i) s.data()[i] = rng.uniform();
        ok = ok && std::abs(wr::metrics::ssim(s, s) - 1.0) < 1e-9;

        return std::make_pair(ok, fmt("goldens: zero-residual loss exactly 0, scalar "
                                      "case %.12f ~ 0.02, constant offset %.8f dB ~ 20, "
                                      "self-SSIM 1",
                                      scalar, db));
    });

    // shared toy dataset for criteria 7 and 8
    TmpDir tmp("wr_acceptance");
    const auto train_entries = scene_entries(tmp.path / "train", 8, 1000);
    const auto held_out_entries = scene_entries(tmp.path / "held_out", 4, 2000);
    ToyRun both_run;
    bool both_run_ok = false;

    // 7. toy training halves the loss and beats the degraded input by 1 dB
    gate.run(7, [&] {
        wr::model::ModelConfig tiny = wr::model::ModelConfig::tiny();
        both_run = train_toy(tiny, train_entries, held_out_entries, tmp.path / "both");
        both_run_ok = true;
        const double gain = both_run.held_out.psnr_restored - both_run.held_out.psnr_degraded;
        const bool ok = both_run.final_loss < 0.5 * both_run.initial_loss && gain >= 1.0 &&
                        both_run.seconds < 600.0;
        return std::make_pair(
            ok, fmt("toy training: loss %.4f -> %.4f (%.1f%%), held-out psnr %.2f -> "
                    "%.2f dB (+%.2f) in %.0fs",
                    both_run.initial_loss, both_run.final_loss,
                    100.0 * both_run.final_loss / both_run.initial_loss,
                    both_run.held_out.psnr_degraded, both_run.held_out.psnr_restored,
                    gain, both_run.seconds));
    });

    // 8. ablation directions: gating helps toy PSNR, depthwise Q/K/V is smaller
    gate.run(8, [&] {
        wr::model::ModelConfig no_gates = wr::model::ModelConfig::tiny();
        no_gates.gate_gfn = false;
        no_gates.gate_dstage = false;
        if (!both_run_ok)
            both_run = train_toy(wr::model::ModelConfig::tiny(), train_entries,
                                 held_out_entries, tmp.path / "both");
        const ToyRun bare =
            train_toy(no_gates, train_entries, held_out_entries, tmp.path / "no_gates");

        wr::model::ModelConfig conv1x1 = full, dwconv = full;
        conv1x1.qkv_style = wr::blocks::AttnStyle::conv1x1_only;
        dwconv.qkv_style = wr::blocks::AttnStyle::dwconv_only;
        const std::int64_t p_conv1x1 = wr::cost::analyze(conv1x1, 1, 64, 64).params;
        const std::int64_t p_dwconv = wr::cost::analyze(dwconv, 1, 64, 64).params;

        const bool psnr_dir =
            both_run.held_out.psnr_restored >= bare.held_out.psnr_restored;
        const bool param_dir = p_dwconv < p_conv1x1;
        return std::make_pair(
            psnr_dir && param_dir,
            fmt("ablation directions: gated toy psnr %.2f >= ungated %.2f; depthwise "
                "q/k/v params %lld < 1x1-only %lld",
                both_run.held_out.psnr_restored, bare.held_out.psnr_restored,
                (long long)p_dwconv, (long long)p_conv1x1));
    });

    // 9. serialization: bit-identical round trip, corruption always detected
    gate.run(9, [&] {
        Rng rng(41);
        auto m = wr::model::Model<double>::init(wr::model::ModelConfig::tiny(), 13);
        m.for_each_param([&](const std::string&, Tensor4<double>& t) {
            for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] += 0.05 * rng.normal();
        });
        Tensor4<double> x(Shape4{1, 3, 24, 24});
        for (std::int64_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform();
        const auto before = m.forward(nullptr, x);

        const fs::path ckpt = tmp.path / "roundtrip.ckpt";
        wr::ckpt::save_model(ckpt.string(), m);
        auto loaded = wr::ckpt::load_model<double>(ckpt.string());
        const auto after = loaded.forward(nullptr, x);
        const bool identical =
            before.shape() == after.shape() &&
            std::memcmp(before.data(), after.data(),
                        static_cast<std::size_t>(before.numel()) * sizeof(double)) == 0;

        // every corruption mode must raise a format error, never misload
        std::ifstream in(ckpt, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        in.close();
        int detected = 0;
        const int total = 3;
        const auto expect_reject = [&](const std::string& name,
                                       std::vector<char> mutated) {
            const fs::path p = tmp.path / name;
            std::ofstream out(p, std::ios::binary | std::ios::trunc);
            out.write(mutated.data(), static_cast<std::streamsize>(mutated.size()));
            out.close();
            try {
                wr::ckpt::load_model<double>(p.string());
            } catch (const wr::FormatError&) {
                ++detected;
            } catch (const std::exception&) {
            }
        };
        {
            auto v = bytes;
            v[v.size() / 2] = static_cast<char>(v[v.size() / 2] ^ 0x10);
            expect_reject("flipped.ckpt", v);
        }
        {
            auto v = bytes;
            v.resize(v.size() - 9);
            expect_reject("truncated.ckpt", v);
        }
        {
            auto v = bytes;
            v.insert(v.end(), {'x', 'y', 'z', 'w'});
            expect_reject("trailing.ckpt", v);
        }
        return std::make_pair(identical && detected == total,
                              fmt("serialization: save/load/forward bit-identical, "
                                  "%d/%d corruption modes rejected as format errors",
                                  detected, total));
    });

    return gate.all_ok ? 0 : 1;
}
