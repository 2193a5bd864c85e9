#pragma once

// Closed-form cost census for the network: exact parameter counts and
// multiply-accumulate counts derived from the configuration alone, without
// instantiating any tensors. This is the independent check against the
// runtime model (the two are implemented separately on purpose) and the
// basis for width/ratio calibration against the design-point figures.
//
// Conventions, fixed here and relied on by the tests:
//   - "conv MACs" count kernel multiply-accumulates only: cout*cin*k*k per
//     output pixel for full convolutions, cout*k*k for depthwise; bias adds,
//     reshuffles, concats and splits are free.
//   - "full MACs" add attention matrix products (2*C*N*M per attention, N
//     query tokens, M key tokens) and one MAC per scalar for layer norms,
//     gelu, softmax, logit scaling, pooling (its input size), residual adds
//     and gate multiplies.
//   - At input (B,3,H,W) with H,W multiples of 8, conv MACs are an affine
//     function of H*W: a constant term from convolutions that run on the
//     pooled token grid plus a slope times the pixel count.

#include <cstdint>
#include <string>
#include <vector>

#include "wr/model_config.hpp"

namespace wr::cost {

struct CostRow {
    std::string path;
    std::int64_t params = 0;
    std::int64_t conv_macs = 0;   // at the analyzed input size
    std::int64_t act_elems = 0;   // output feature elements at that size
};

struct ModelCost {
    std::int64_t params = 0;
    std::int64_t conv_macs = 0;        // conv-only total
    std::int64_t conv_macs_const = 0;  // resolution-independent part of conv_macs
    std::int64_t full_macs = 0;        // conv + attention + pointwise convention
    std::int64_t peak_act_elems = 0;   // coarse live-activation peak, per batch
    std::vector<CostRow> rows;
};

ModelCost analyze(const model::ModelConfig& cfg, std::int64_t batch, std::int64_t h,
                  std::int64_t w);

// Standalone feed-forward unit operating directly on a (1,channels,H,W) map.
struct UnitCost {
    std::int64_t params = 0;
    std::int64_t conv_macs = 0;
};
UnitCost gfn_unit_cost(int channels, double ratio, bool gated, std::int64_t h,
                       std::int64_t w);

// Design-point figures the default configuration is expected to reproduce,
// with their acceptance tolerances. Parameter figures are in raw counts,
// MAC figures at a 3x720x480 input.
struct CostTargets {
    // parameter totals under the four gating combinations
    std::int64_t params_full = 24'320'000;
    std::int64_t params_gfn_only = 23'760'000;
    std::int64_t params_dstage_only = 20'560'000;
    std::int64_t params_neither = 20'100'000;
    // parameter deltas attributable to each gate
    std::int64_t params_gfn_delta = 3'660'000;       // gate_gfn on vs off, dstage off
    std::int64_t params_dstage_delta = 460'000;      // gate_dstage on vs off, gfn off
    // attention projection styles (both gates on)
    std::int64_t params_attn_conv1x1_only = 24'100'000;
    std::int64_t params_attn_dwconv_only = 18'870'000;
    std::int64_t params_attn_separable = 27'940'000;
    // pooled-token reduction disabled (stage gate stays on)
    std::int64_t params_sra_off_gfn_on = 22'490'000;
    std::int64_t params_sra_off_gfn_off = 18'720'000;
    // conv-only MAC totals at 720x480
    std::int64_t macs_full = 377'210'000'000;
    std::int64_t macs_gfn_only = 356'760'000'000;
    std::int64_t macs_neither = 280'120'000'000;
    double dstage_mac_overhead = 0.05;               // fraction over the ungated network
    // standalone feed-forward unit at 3 channels, ratio 2, gated, 640x480
    std::int64_t gfn_unit_params = 189;
    std::int64_t gfn_unit_macs = 49'770'000;

    double tol_params = 0.02;
    double tol_gfn_delta = 0.10;
    double tol_dstage_delta = 0.15;
    double tol_macs = 0.05;
    double tol_overhead_pp = 0.02;                   // percentage points on the overhead
    double tol_unit_macs = 0.01;
};

CostTargets design_targets();

// Grid search for the width/ratio pair that reproduces every design-point
// figure within tolerance. Throws CalibrationError when no grid point does,
// reporting the closest miss.
struct CalibrationResult {
    int width = 0;
    double gfn_ratio = 0.0;
    std::int64_t params_full = 0;
    double worst_rel_err = 0.0;
};

CalibrationResult calibrate();

// Relative error of every design target for one (width, ratio) candidate;
// used by calibrate() and the acceptance checks.
struct TargetReport {
    std::string name;
    double achieved = 0.0;
    double target = 0.0;
    double rel_err = 0.0;   // |achieved-target| / target (percentage points for overhead)
    double tolerance = 0.0;
    bool ok = false;
};
std::vector<TargetReport> evaluate_targets(int width, double gfn_ratio);

}  // namespace wr::cost
