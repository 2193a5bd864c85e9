#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "wr/checkpoint.hpp"
#include "wr/dataset.hpp"
#include "wr/image.hpp"
#include "wr/model.hpp"
#include "wr/optim.hpp"
#include "wr/rng.hpp"
#include "wr/train.hpp"

using wr::Rng;
using wr::Shape4;
using wr::Tensor4;
namespace data = wr::data;
namespace train = wr::train;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
    fs::path root;
    explicit TmpDir(const std::string& tag) {
        root = fs::temp_directory_path() / ("wr_train_" + tag);
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TmpDir() { fs::remove_all(root); }
};

// small noisy scene images so there is structure to learn
void write_scene_ppm(const fs::path& path, std::int64_t h, std::int64_t w,
                     std::uint64_t seed) {
    Rng rng(seed);
    wr::img::ImageU8 im;
    im.h = h;
    im.w = w;
    im.c = 3;
    im.data.resize(static_cast<std::size_t>(im.numel()));
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            const double base = 0.3 + 0.3 * std::sin(0.4 * x + rng.uniform(0.0, 0.2)) *
                                          std::cos(0.3 * y);
            for (std::int64_t c = 0; c < 3; ++c)
                im.data[static_cast<std::size_t>((y * w + x) * 3 + c)] =
                    static_cast<std::uint8_t>(std::lround(
                        std::clamp(base + 0.1 * rng.uniform(), 0.0, 1.0) * 255.0));
        }
    wr::img::write_image(path.string(), im);
}

std::vector<data::DatasetEntry> make_entries(const TmpDir& tmp, int count,
                                             std::int64_t hw = 16) {
    fs::create_directories(tmp.root / "data" / "clean");
    for (int i = 0; i < count; ++i)
        write_scene_ppm(tmp.root / "data" / ("clean/img" + std::to_string(i) + ".ppm"),
                        hw, hw, 100 + static_cast<std::uint64_t>(i));
    return data::scan_dataset((tmp.root / "data").string());
}

train::TrainOptions toy_options(std::int64_t iterations) {
    train::TrainOptions opt;
    opt.iterations = iterations;
    opt.lr_initial = 1e-3;
    opt.lr_final = 1e-4;
    opt.checkpoint_every = 1000;
    opt.schedule = {{0, 2, 16}};
    opt.degrade.kind = data::WeatherKind::rain;
    opt.degrade.intensity = 0.8;
    opt.seed = 5;
    return opt;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("schedule: parse and format round trip") {
    auto segs = train::parse_schedule("0:4:32");
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].start_iteration == 0);
    CHECK(segs[0].batch == 4);
    CHECK(segs[0].crop == 32);
    auto two = train::parse_schedule("0:4:32,100:2:64");
    REQUIRE(two.size() == 2);
    CHECK(two[1].start_iteration == 100);
    CHECK(two[1].crop == 64);
    CHECK(train::format_schedule(two) == "0:4:32,100:2:64");

    CHECK_THROWS_AS(train::parse_schedule(""), wr::ConfigError);
    CHECK_THROWS_AS(train::parse_schedule("5:4:32"), wr::ConfigError);
    CHECK_THROWS_AS(train::parse_schedule("0:4:32,0:2:64"), wr::ConfigError);
    CHECK_THROWS_AS(train::parse_schedule("0:0:32"), wr::ConfigError);
    CHECK_THROWS_AS(train::parse_schedule("0:4:12"), wr::ConfigError);
    CHECK_THROWS_AS(train::parse_schedule("0:4"), wr::ConfigError);
    CHECK_THROWS_AS(train::parse_schedule("0:4:32x"), wr::ConfigError);
}

TEST_CASE("cosine learning rate hits both endpoints") {
    train::TrainOptions opt;
    opt.iterations = 101;
    opt.lr_initial = 2e-3;
    opt.lr_final = 2e-5;
    CHECK(train::cosine_lr(opt, 0) == doctest::Approx(2e-3).epsilon(1e-15));
    CHECK(train::cosine_lr(opt, 100) == doctest::Approx(2e-5).epsilon(1e-12));
    CHECK(train::cosine_lr(opt, 50) ==
          doctest::Approx(0.5 * (2e-3 + 2e-5)).epsilon(1e-12));
    // strictly decreasing
    double prev = 1.0;
    for (std::int64_t it = 0; it <= 100; it += 10) {
        CHECK(train::cosine_lr(opt, it) < prev);
        prev = train::cosine_lr(opt, it);
    }
}

TEST_CASE("adam: moments drive the update and serialize exactly") {
    auto cfg = wr::model::ModelConfig::tiny();
    wr::model::Model<double> a = wr::model::Model<double>::init(cfg, 9);
    wr::model::Model<double> b = wr::model::Model<double>::init(cfg, 9);

    // one synthetic gradient step on both, via identical fake grads
    const auto fake_step = [](wr::model::Model<double>& m, wr::optim::Adam<double>& ad) {
        std::uint64_t mark = 1;
        m.set_requires_grad(true);
        m.for_each_param([&](const std::string&, Tensor4<double>& p) {
            double* g = p.grad();
            for (std::int64_t i = 0; i < p.numel(); ++i)
                g[i] = 1e-3 * static_cast<double>((i + mark) % 7);
            ++mark;
        });
        ad.step(m, 1e-3);
        m.zero_grads();
    };

    wr::optim::Adam<double> oa;
    wr::optim::Adam<double> ob;
    fake_step(a, oa);
    fake_step(b, ob);
    CHECK(oa.step_count() == 1);

    TmpDir tmp("adam");
    const std::string side = (tmp.root / "state.optim").string();
    oa.save(side, a, 17);

    wr::optim::Adam<double> loaded;
    CHECK(loaded.load(side, b) == 17);
    CHECK(loaded.step_count() == 1);

    // second step must match bit for bit only if moments were restored
    fake_step(a, oa);
    fake_step(b, loaded);
    std::vector<double> va, vb;
    a.for_each_param([&](const std::string&, Tensor4<double>& p) {
        va.insert(va.end(), p.data(), p.data() + p.numel());
    });
    b.for_each_param([&](const std::string&, Tensor4<double>& p) {
        vb.insert(vb.end(), p.data(), p.data() + p.numel());
    });
    REQUIRE(va.size() == vb.size());
    for (std::size_t i = 0; i < va.size(); ++i) CHECK(va[i] == vb[i]);
}

TEST_CASE("train: loss drops on a toy run and the log is well formed") {
    TmpDir tmp("toydrop");
    auto entries = make_entries(tmp, 4);
    auto cfg = wr::model::ModelConfig::tiny();
    wr::model::Model<double> m = wr::model::Model<double>::init(cfg, 1);
    m.set_requires_grad(true);
    wr::optim::Adam<double> adam;
    auto opt = toy_options(30);

    // fixed probe batch: per-iteration batch losses are too noisy to compare
    data::DatasetOptions dopt;
    dopt.batch = 4;
    dopt.crop = 16;
    dopt.degrade = opt.degrade;
    data::DatasetStream<double> probe_stream(entries, dopt, 999);
    const auto probe = probe_stream.next();
    const auto probe_loss = [&] {
        Tensor4<double> pred = m.forward(nullptr, probe.degraded);
        return wr::loss::pseudo_huber<double>(nullptr, pred, probe.clean).data()[0];
    };

    const double before = probe_loss();
    auto res = train::train_run<double>(m, adam, entries, opt,
                                        (tmp.root / "run").string());
    CHECK(res.iterations_run == 30);
    CHECK(probe_loss() < before);
    CHECK(fs::exists(res.checkpoint_path));
    CHECK(fs::exists(res.optim_path));

    std::ifstream log(res.log_path);
    REQUIRE(log.good());
    std::string line;
    std::int64_t rows = 0;
    while (std::getline(log, line)) {
        std::stringstream ls(line);
        std::int64_t it = -1;
        double loss = -1.0, lr = -1.0;
        ls >> it >> loss >> lr;
        CHECK(it == rows);
        CHECK(loss >= 0.0);
        CHECK(lr > 0.0);
        ++rows;
    }
    CHECK(rows == 30);
}

TEST_CASE("train: interrupted run resumes bit-exactly in double precision") {
    auto cfg = wr::model::ModelConfig::tiny();
    auto opt = toy_options(8);
    opt.checkpoint_every = 4;

    // reference: straight 8 iterations
    TmpDir tmp_a("resume_a");
    auto entries_a = make_entries(tmp_a, 4);
    wr::model::Model<double> ma = wr::model::Model<double>::init(cfg, 2);
    ma.set_requires_grad(true);
    wr::optim::Adam<double> oa;
    train::train_run<double>(ma, oa, entries_a, opt, (tmp_a.root / "run").string());

    // interrupted: killed right after the iteration-4 checkpoint
    TmpDir tmp_b("resume_b");
    auto entries_b = make_entries(tmp_b, 4);
    wr::model::Model<double> mb = wr::model::Model<double>::init(cfg, 2);
    mb.set_requires_grad(true);
    wr::optim::Adam<double> ob;
    struct StopTraining {};
    const std::string run_b = (tmp_b.root / "run").string();
    bool interrupted = false;
    try {
        train::train_run<double>(mb, ob, entries_b, opt, run_b, 0,
                                 [&](std::int64_t it, double, double) {
                                     if (it == 3) throw StopTraining{};
                                 });
    } catch (const StopTraining&) {
        interrupted = true;
    }
    REQUIRE(interrupted);

    // reload state and finish the remaining iterations
    wr::model::Model<double> mb2 =
        wr::ckpt::load_model<double>(run_b + "/model.ckpt");
    mb2.set_requires_grad(true);
    wr::optim::Adam<double> ob2;
    const std::int64_t resume_at = ob2.load(run_b + "/model.ckpt.optim", mb2);
    CHECK(resume_at == 4);
    train::train_run<double>(mb2, ob2, entries_b, opt, run_b, resume_at);

    // parameters identical bit for bit
    std::vector<double> va, vb;
    ma.for_each_param([&](const std::string&, Tensor4<double>& p) {
        va.insert(va.end(), p.data(), p.data() + p.numel());
    });
    mb2.for_each_param([&](const std::string&, Tensor4<double>& p) {
        vb.insert(vb.end(), p.data(), p.data() + p.numel());
    });
    REQUIRE(va.size() == vb.size());
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < va.size(); ++i) mismatches += va[i] != vb[i];
    CHECK(mismatches == 0);

    // and the two metric logs agree line for line
    CHECK(read_text(tmp_a.root / "run" / "metrics.tsv") ==
          read_text(tmp_b.root / "run" / "metrics.tsv"));
}

TEST_CASE("train: schedule switches batch and crop mid-run") {
    TmpDir tmp("sched");
    auto entries = make_entries(tmp, 4, 24);
    auto cfg = wr::model::ModelConfig::tiny();
    wr::model::Model<double> m = wr::model::Model<double>::init(cfg, 3);
    m.set_requires_grad(true);
    wr::optim::Adam<double> adam;
    auto opt = toy_options(4);
    opt.schedule = train::parse_schedule("0:2:16,2:1:24");
    std::vector<std::int64_t> seen;
    auto res = train::train_run<double>(
        m, adam, entries, opt, (tmp.root / "run").string(), 0,
        [&](std::int64_t it, double, double) { seen.push_back(it); });
    CHECK(res.iterations_run == 4);
    CHECK(seen == std::vector<std::int64_t>{0, 1, 2, 3});
}

TEST_CASE("train: evaluate reports identity network as no-op restoration") {
    TmpDir tmp("eval");
    auto entries = make_entries(tmp, 3);
    auto cfg = wr::model::ModelConfig::tiny();
    // untrained: zero-initialized head leaves the input untouched
    wr::model::Model<double> m = wr::model::Model<double>::init(cfg, 4);
    data::DegradationSpec spec;
    spec.kind = data::WeatherKind::rain;
    spec.intensity = 0.8;
    auto ev = train::evaluate<double>(m, entries, spec, 77, 2);
    CHECK(ev.count == 2);
    CHECK(std::isfinite(ev.psnr_degraded));
    CHECK(ev.psnr_restored == ev.psnr_degraded);
    CHECK(ev.ssim_restored == ev.ssim_degraded);
    CHECK(ev.ssim_degraded < 1.0);
    CHECK(ev.ssim_degraded > 0.0);
}

TEST_CASE("train: option validation") {
    auto opt = toy_options(10);
    opt.iterations = 0;
    CHECK_THROWS_AS(opt.validate(), wr::ConfigError);
    opt = toy_options(10);
    opt.lr_initial = 0.0;
    CHECK_THROWS_AS(opt.validate(), wr::ConfigError);
    opt = toy_options(10);
    opt.schedule = {{5, 2, 16}};
    CHECK_THROWS_AS(opt.validate(), wr::ConfigError);
    opt = toy_options(10);
    opt.schedule = {{0, 2, 16}, {0, 2, 16}};
    CHECK_THROWS_AS(opt.validate(), wr::ConfigError);
}
