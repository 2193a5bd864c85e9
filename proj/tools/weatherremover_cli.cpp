// Command-line front end: train a restoration model, run inference, print
// parameter/MAC cost reports, sweep the architecture ablation grids, and run
// the gradient verification suite.
//
// Exit codes: 0 success; 1 verification failure; 2 usage or configuration
// error; 3 I/O or file-format error.

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "wr/checkpoint.hpp"
#include "wr/cost.hpp"
#include "wr/dataset.hpp"
#include "wr/errors.hpp"
#include "wr/gradsuite.hpp"
#include "wr/image.hpp"
#include "wr/metrics.hpp"
#include "wr/model.hpp"
#include "wr/optim.hpp"
#include "wr/run_config.hpp"
#include "wr/train.hpp"

namespace fs = std::filesystem;
using wr::Shape4;
using wr::Tensor4;

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> sets;
    std::int64_t seed = -1;  // <0: keep config value
    std::string precision;   // empty: keep config value
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "key=value config file");
    cmd->add_option("--set", flags.sets, "override: key=value (repeatable)");
    cmd->add_option("--seed", flags.seed, "random seed override");
    cmd->add_option("--precision", flags.precision, "f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw wr::FormatError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

wr::run::RunConfig resolve_config(const CommonFlags& flags) {
    wr::cfg::KvMap kv;
    if (!flags.config_path.empty())
        kv = wr::cfg::parse_kv_text(read_text_file(flags.config_path));
    for (const auto& s : flags.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0)
            throw wr::ConfigError("--set expects key=value, got '" + s + "'");
        kv[s.substr(0, eq)] = s.substr(eq + 1);  // overrides the file value
    }
    wr::run::RunConfig rc;
    rc.apply_kv(kv);
    wr::cfg::reject_unknown(kv, "run config");
    if (flags.seed >= 0) rc.seed = static_cast<std::uint64_t>(flags.seed);
    if (!flags.precision.empty()) rc.precision = flags.precision;
    rc.validate();
    return rc;
}

// "WxH" -> (h, w); both must be positive
std::pair<std::int64_t, std::int64_t> parse_res(const std::string& res) {
    const auto x = res.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= res.size())
        throw wr::ConfigError("--res expects WxH, got '" + res + "'");
    std::int64_t w = 0, h = 0;
    try {
        w = std::stoll(res.substr(0, x));
        h = std::stoll(res.substr(x + 1));
    } catch (const std::exception&) {
        throw wr::ConfigError("--res expects WxH integers, got '" + res + "'");
    }
    if (w <= 0 || h <= 0) throw wr::ConfigError("--res dimensions must be positive");
    return {h, w};
}

std::string giga(std::int64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f G", static_cast<double>(v) * 1e-9);
    return buf;
}

std::string mega_params(std::int64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f M", static_cast<double>(v) * 1e-6);
    return buf;
}

// ---------------------------------------------------------------- train ----

template <typename S>
int run_train(const wr::run::RunConfig& rc) {
    auto entries = wr::data::scan_dataset(rc.dataset_dir);
    wr::run::write_manifest(rc);
    const std::string ckpt = (fs::path(rc.out_dir) / "model.ckpt").string();
    const std::string side = ckpt + ".optim";

    wr::model::Model<S> m = wr::model::Model<S>::init(rc.model, rc.seed);
    wr::optim::Adam<S> adam;
    std::int64_t start = 0;
    if (fs::exists(ckpt) && fs::exists(side)) {
        m = wr::ckpt::load_model<S>(ckpt);
        if (!(m.config() == rc.model))
            throw wr::ConfigError("checkpoint in " + rc.out_dir +
                                  " was trained with a different model config");
        start = adam.load(side, m);
        std::printf("resuming from %s at iteration %" PRId64 "\n", ckpt.c_str(), start);
    }
    if (start >= rc.iterations) {
        std::printf("nothing to do: checkpoint already at iteration %" PRId64 "\n", start);
        return 0;
    }
    m.set_requires_grad(true);
    const auto res =
        wr::train::train_run<S>(m, adam, entries, rc.train_options(), rc.out_dir, start);
    std::printf("trained %" PRId64 " iterations, loss %.6g -> %.6g\n",
                res.iterations_run, res.initial_loss, res.final_loss);
    std::printf("checkpoint: %s\nmetrics: %s\n", res.checkpoint_path.c_str(),
                res.log_path.c_str());
    return 0;
}

int cmd_train(const CommonFlags& flags) {
    const auto rc = resolve_config(flags);
    if (rc.dataset_dir.empty())
        throw wr::ConfigError("train: dataset_dir must be set (--set dataset_dir=...)");
    return rc.precision == "f32" ? run_train<float>(rc) : run_train<double>(rc);
}

// ---------------------------------------------------------------- infer ----

// reflect-pads (mirror without repeating the border) bottom/right to the next
// multiple of 8; the caller crops the output back
template <typename S>
Tensor4<S> pad_to_multiple8(const Tensor4<S>& x) {
    const Shape4 s = x.shape();
    const std::int64_t ph = (8 - s.h % 8) % 8;
    const std::int64_t pw = (8 - s.w % 8) % 8;
    if (ph == 0 && pw == 0) return x;
    if (s.h <= ph || s.w <= pw)
        throw wr::ArgumentError("--pad: image too small to mirror-pad to a multiple of 8");
    Tensor4<S> out(Shape4{s.b, s.c, s.h + ph, s.w + pw});
    const auto mirror = [](std::int64_t i, std::int64_t n) {
        return i < n ? i : 2 * n - 2 - i;
    };
    for (std::int64_t b = 0; b < s.b; ++b)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < s.h + ph; ++y)
                for (std::int64_t xx = 0; xx < s.w + pw; ++xx)
                    out.data()[((b * s.c + c) * (s.h + ph) + y) * (s.w + pw) + xx] =
                        x.data()[((b * s.c + c) * s.h + mirror(y, s.h)) * s.w +
                                 mirror(xx, s.w)];
    return out;
}

template <typename S>
Tensor4<S> crop_to(const Tensor4<S>& x, std::int64_t h, std::int64_t w) {
    const Shape4 s = x.shape();
    if (s.h == h && s.w == w) return x;
    Tensor4<S> out(Shape4{s.b, s.c, h, w});
    for (std::int64_t b = 0; b < s.b; ++b)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t xx = 0; xx < w; ++xx)
                    out.data()[((b * s.c + c) * h + y) * w + xx] =
                        x.data()[((b * s.c + c) * s.h + y) * s.w + xx];
    return out;
}

struct InferFlags {
    std::string checkpoint;
    std::string out_dir = "restored";
    std::string ref_dir;
    std::vector<std::string> inputs;
    bool pad = false;
    std::string precision = "f64";
    std::string format = "table";
};

template <typename S>
int run_infer(const InferFlags& fl) {
    wr::model::Model<S> m = wr::ckpt::load_model<S>(fl.checkpoint);
    fs::create_directories(fl.out_dir);
    {
        std::ofstream manifest(fs::path(fl.out_dir) / "manifest.txt", std::ios::trunc);
        manifest << m.config().canonical_text() << "checkpoint=" << fl.checkpoint
                 << "\nprecision=" << fl.precision << "\npad=" << (fl.pad ? "true" : "false")
                 << "\n";
    }

    struct Row {
        std::string name;
        double psnr_in, psnr_out, ssim_in, ssim_out;
    };
    std::vector<Row> rows;
    for (const auto& input : fl.inputs) {
        const Tensor4<S> degraded = wr::img::to_tensor<S>(wr::img::read_image(input));
        const Shape4 s = degraded.shape();
        Tensor4<S> fed = fl.pad ? pad_to_multiple8(degraded) : degraded;
        Tensor4<S> restored = crop_to(m.forward(nullptr, fed), s.h, s.w);
        const std::string name = fs::path(input).filename().string();
        wr::img::write_image((fs::path(fl.out_dir) / name).string(),
                             wr::img::from_tensor(restored));
        if (!fl.ref_dir.empty()) {
            const fs::path ref = fs::path(fl.ref_dir) / name;
            if (fs::exists(ref)) {
                const Tensor4<S> clean = wr::img::to_tensor<S>(wr::img::read_image(ref.string()));
                rows.push_back(Row{name, wr::metrics::psnr(degraded, clean),
                                   wr::metrics::psnr(restored, clean),
                                   wr::metrics::ssim(degraded, clean),
                                   wr::metrics::ssim(restored, clean)});
            }
        }
    }
    std::printf("restored %zu image(s) into %s\n", fl.inputs.size(), fl.out_dir.c_str());
    if (!rows.empty()) {
        std::string table;
        char line[256];
        double mp_in = 0, mp_out = 0, ms_in = 0, ms_out = 0;
        if (fl.format == "table") {
            std::snprintf(line, sizeof(line), "%-24s %12s %12s %10s %10s\n", "image",
                          "psnr_in", "psnr_out", "ssim_in", "ssim_out");
            table += line;
        }
        for (const auto& r : rows) {
            if (fl.format == "table")
                std::snprintf(line, sizeof(line), "%-24s %12.4f %12.4f %10.6f %10.6f\n",
                              r.name.c_str(), r.psnr_in, r.psnr_out, r.ssim_in, r.ssim_out);
            else
                std::snprintf(line, sizeof(line),
                              "image{name=%s psnr_in=%.4f psnr_out=%.4f ssim_in=%.6f "
                              "ssim_out=%.6f}\n",
                              r.name.c_str(), r.psnr_in, r.psnr_out, r.ssim_in, r.ssim_out);
            table += line;
            mp_in += r.psnr_in;
            mp_out += r.psnr_out;
            ms_in += r.ssim_in;
            ms_out += r.ssim_out;
        }
        const double n = static_cast<double>(rows.size());
        if (fl.format == "table")
            std::snprintf(line, sizeof(line), "%-24s %12.4f %12.4f %10.6f %10.6f\n",
                          "mean", mp_in / n, mp_out / n, ms_in / n, ms_out / n);
        else
            std::snprintf(line, sizeof(line),
                          "mean{psnr_in=%.4f psnr_out=%.4f ssim_in=%.6f ssim_out=%.6f}\n",
                          mp_in / n, mp_out / n, ms_in / n, ms_out / n);
        table += line;
        std::fputs(table.c_str(), stdout);
        std::ofstream metrics(fs::path(fl.out_dir) / "metrics.txt", std::ios::trunc);
        metrics << table;
    }
    return 0;
}

// -------------------------------------------------------------- analyze ----

int cmd_analyze(const CommonFlags& flags, const std::string& res,
                const std::string& convention, const std::string& format) {
    const auto rc = resolve_config(flags);
    const auto [h, w] = parse_res(res);
    const wr::cost::ModelCost mc = wr::cost::analyze(rc.model, 1, h, w);
    const bool conv_only = convention == "conv-only";

    if (format == "table") {
        std::printf("%-22s %14s %16s %14s\n", "module", "params", "conv_macs",
                    "activations");
        for (const auto& r : mc.rows)
            std::printf("%-22s %14" PRId64 " %16" PRId64 " %14" PRId64 "\n",
                        r.path.c_str(), r.params, r.conv_macs, r.act_elems);
        std::printf("%-22s %14" PRId64 " %16" PRId64 "\n", "total", mc.params,
                    conv_only ? mc.conv_macs : mc.full_macs);
        std::printf("params: %s   conv-only macs: %s   full macs: %s   peak acts: %" PRId64
                    "\n",
                    mega_params(mc.params).c_str(), giga(mc.conv_macs).c_str(),
                    giga(mc.full_macs).c_str(), mc.peak_act_elems);
    } else {
        std::printf("report{res=%" PRId64 "x%" PRId64 " convention=%s\n", w, h,
                    convention.c_str());
        for (const auto& r : mc.rows)
            std::printf("  module{path=%s params=%" PRId64 " conv_macs=%" PRId64
                        " activations=%" PRId64 "}\n",
                        r.path.c_str(), r.params, r.conv_macs, r.act_elems);
        std::printf("  total{params=%" PRId64 " macs=%" PRId64 " conv_macs=%" PRId64
                    " full_macs=%" PRId64 " peak_activations=%" PRId64 "}\n}\n",
                    mc.params, conv_only ? mc.conv_macs : mc.full_macs, mc.conv_macs,
                    mc.full_macs, mc.peak_act_elems);
    }
    return 0;
}

// --------------------------------------------------------------- ablate ----

struct AblateVariant {
    std::string grid;
    std::string name;
    wr::model::ModelConfig cfg;
};

std::vector<AblateVariant> ablate_grid(const wr::model::ModelConfig& base) {
    using wr::blocks::AttnStyle;
    std::vector<AblateVariant> v;
    const auto gating = [&](bool gfn, bool dstage) {
        wr::model::ModelConfig c = base;
        c.gate_gfn = gfn;
        c.gate_dstage = dstage;
        return c;
    };
    v.push_back({"gating", "no_gates", gating(false, false)});
    v.push_back({"gating", "gfn_gate_only", gating(true, false)});
    v.push_back({"gating", "dstage_gate_only", gating(false, true)});
    v.push_back({"gating", "both_gates", gating(true, true)});

    const auto style = [&](AttnStyle s) {
        wr::model::ModelConfig c = base;
        c.qkv_style = s;
        return c;
    };
    v.push_back({"qkv_style", "conv1x1_only", style(AttnStyle::conv1x1_only)});
    v.push_back({"qkv_style", "dwconv_only", style(AttnStyle::dwconv_only)});
    v.push_back({"qkv_style", "separable_conv1x1", style(AttnStyle::separable_conv1x1)});
    v.push_back({"qkv_style", "conv1x1_dw", style(AttnStyle::conv1x1_dw)});

    const auto toggles = [&](bool sra, bool gfn_gate) {
        wr::model::ModelConfig c = base;
        c.sra_enabled = sra;
        c.gate_gfn = gfn_gate;
        return c;
    };
    v.push_back({"sra_gfn", "neither", toggles(false, false)});
    v.push_back({"sra_gfn", "sra_only", toggles(true, false)});
    v.push_back({"sra_gfn", "gfn_only", toggles(false, true)});
    v.push_back({"sra_gfn", "both", toggles(true, true)});
    return v;
}

template <typename S>
void ablate_train_metrics(const AblateVariant& var, const wr::run::RunConfig& rc,
                          double* psnr, double* ssim) {
    auto entries = wr::data::scan_dataset(rc.dataset_dir);
    wr::model::Model<S> m = wr::model::Model<S>::init(var.cfg, rc.seed);
    m.set_requires_grad(true);
    wr::optim::Adam<S> adam;
    auto opt = rc.train_options();
    const std::string dir =
        (fs::path(rc.out_dir) / ("ablate_" + var.grid + "_" + var.name)).string();
    wr::train::train_run<S>(m, adam, entries, opt, dir);
    const auto ev = wr::train::evaluate<S>(m, entries, opt.degrade,
                                           wr::hash_combine(rc.seed, 0xEA11u), 4);
    *psnr = ev.psnr_restored;
    *ssim = ev.ssim_restored;
}

int cmd_ablate(const CommonFlags& flags, const std::string& res,
               const std::string& convention, const std::string& format, bool with_train) {
    const auto rc = resolve_config(flags);
    const auto [h, w] = parse_res(res);
    if (with_train && rc.dataset_dir.empty())
        throw wr::ConfigError("ablate --train needs dataset_dir");
    if (with_train) wr::run::write_manifest(rc);
    const bool conv_only = convention == "conv-only";

    const bool table = format == "table";
    if (table)
        std::printf("%-10s %-20s %14s %16s%s\n", "grid", "variant", "params", "macs",
                    with_train ? "      psnr     ssim" : "");
    for (const auto& var : ablate_grid(rc.model)) {
        const auto mc = wr::cost::analyze(var.cfg, 1, h, w);
        const std::int64_t macs = conv_only ? mc.conv_macs : mc.full_macs;
        double psnr = 0.0, ssim = 0.0;
        if (with_train) {
            if (rc.precision == "f32")
                ablate_train_metrics<float>(var, rc, &psnr, &ssim);
            else
                ablate_train_metrics<double>(var, rc, &psnr, &ssim);
        }
        if (table) {
            std::printf("%-10s %-20s %14" PRId64 " %16" PRId64, var.grid.c_str(),
                        var.name.c_str(), mc.params, macs);
            if (with_train) std::printf("  %8.3f %8.5f", psnr, ssim);
            std::printf("\n");
        } else {
            std::printf("variant{grid=%s name=%s params=%" PRId64 " macs=%" PRId64,
                        var.grid.c_str(), var.name.c_str(), mc.params, macs);
            if (with_train) std::printf(" psnr=%.3f ssim=%.5f", psnr, ssim);
            std::printf("}\n");
        }
    }
    return 0;
}

// ------------------------------------------------------------ gradcheck ----

int cmd_gradcheck(std::int64_t seed, bool corrupt) {
    const auto reports = wr::gradsuite::run_suite(
        seed < 0 ? 1234u : static_cast<std::uint64_t>(seed), true, corrupt);
    std::printf("%-26s %14s %8s  %s\n", "op", "max_rel_err", "coords", "status");
    bool ok = true;
    for (const auto& r : reports) {
        std::printf("%-26s %14.3e %8" PRId64 "  %s\n", r.op.c_str(), r.max_rel_err,
                    r.coords, r.ok ? "ok" : "FAIL");
        ok = ok && r.ok;
    }
    std::printf("gradient suite: %s\n", ok ? "PASS" : "FAIL");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"transformer-based weather removal: training, inference, and "
                 "architecture cost analysis"};
    app.require_subcommand(1);

    CommonFlags train_flags;
    CLI::App* train_cmd = app.add_subcommand("train", "train a model");
    add_common(train_cmd, train_flags);

    InferFlags infer_flags;
    CLI::App* infer_cmd = app.add_subcommand("infer", "restore images with a checkpoint");
    infer_cmd->add_option("--checkpoint", infer_flags.checkpoint, "model checkpoint")
        ->required();
    infer_cmd->add_option("--out", infer_flags.out_dir, "output directory");
    infer_cmd->add_option("--ref", infer_flags.ref_dir,
                          "directory of clean references (matched by filename)");
    infer_cmd->add_option("images", infer_flags.inputs, "input images")->required();
    infer_cmd->add_flag("--pad", infer_flags.pad,
                        "mirror-pad inputs to a multiple of 8 and crop back");
    infer_cmd->add_option("--precision", infer_flags.precision, "f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    infer_cmd->add_option("--format", infer_flags.format, "table or structured-text")
        ->check(CLI::IsMember({"table", "structured-text"}));

    CommonFlags analyze_flags;
    std::string analyze_res = "720x480";
    std::string analyze_convention = "conv-only";
    std::string analyze_format = "table";
    CLI::App* analyze_cmd =
        app.add_subcommand("analyze", "parameter and MAC cost report");
    add_common(analyze_cmd, analyze_flags);
    analyze_cmd->add_option("--res", analyze_res, "input resolution WxH");
    analyze_cmd->add_option("--convention", analyze_convention, "MAC counting convention")
        ->check(CLI::IsMember({"conv-only", "full"}));
    analyze_cmd->add_option("--format", analyze_format, "output format")
        ->check(CLI::IsMember({"table", "structured-text"}));

    CommonFlags ablate_flags;
    std::string ablate_res = "64x64";
    std::string ablate_convention = "conv-only";
    std::string ablate_format = "table";
    bool ablate_train = false;
    CLI::App* ablate_cmd =
        app.add_subcommand("ablate", "gating / qkv-style / sra grids");
    add_common(ablate_cmd, ablate_flags);
    ablate_cmd->add_option("--res", ablate_res, "input resolution WxH");
    ablate_cmd->add_option("--convention", ablate_convention, "MAC counting convention")
        ->check(CLI::IsMember({"conv-only", "full"}));
    ablate_cmd->add_option("--format", ablate_format, "output format")
        ->check(CLI::IsMember({"table", "structured-text"}));
    ablate_cmd->add_flag("--train", ablate_train, "also train each variant and report PSNR/SSIM");

    std::int64_t grad_seed = -1;
    bool grad_corrupt = false;
    CLI::App* grad_cmd =
        app.add_subcommand("gradcheck", "finite-difference gradient verification");
    grad_cmd->add_option("--seed", grad_seed, "random seed");
    grad_cmd->add_flag("--corrupt", grad_corrupt, "inject a known-bad gradient fixture")
        ->group("");  // hidden: test fixture only

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(train_flags);
        if (infer_cmd->parsed())
            return infer_flags.precision == "f32" ? run_infer<float>(infer_flags)
                                                  : run_infer<double>(infer_flags);
        if (analyze_cmd->parsed())
            return cmd_analyze(analyze_flags, analyze_res, analyze_convention,
                               analyze_format);
        if (ablate_cmd->parsed())
            return cmd_ablate(ablate_flags, ablate_res, ablate_convention, ablate_format,
                              ablate_train);
        if (grad_cmd->parsed()) return cmd_gradcheck(grad_seed, grad_corrupt);
        std::fprintf(stderr, "no command selected\n");
        return 2;
    } catch (const wr::FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 3;
    } catch (const wr::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const wr::ArgumentError& e) {
        std::fprintf(stderr, "argument error: %s\n", e.what());
        return 2;
    } catch (const wr::ShapeError& e) {
        std::fprintf(stderr, "shape error: %s\n", e.what());
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 3;
    } catch (const wr::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
