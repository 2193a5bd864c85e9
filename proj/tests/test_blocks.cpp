#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "wr/blocks.hpp"
#include "wr/gradcheck.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

using wr::Rng;
using wr::Shape4;
using wr::Tape;
using wr::Tensor4;
using namespace wr::blocks;

namespace {

template <class P>
long long count_params(P& params) {
  long long n = 0;
  params.for_each("p", [&](const std::string&, Tensor4<double>& t) {
    n += static_cast<long long>(t.numel());
  });
  return n;
}

template <class P>
std::vector<std::pair<std::string, Tensor4<double>>> collect(P& params) {
  std::vector<std::pair<std::string, Tensor4<double>>> out;
  params.for_each("p", [&](const std::string& name, Tensor4<double>& t) {
    out.emplace_back(name, t);
  });
  return out;
}

Tensor4<double> rand_input(Shape4 s, Rng& rng) {
  Tensor4<double> t(s);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
  return t;
}

BlockSettings settings(int c, int heads, AttnStyle style, bool gate_gfn, bool sra, bool temp,
                       int pool = 7) {
  BlockSettings s;
  s.channels = c;
  s.heads = heads;
  s.style = style;
  s.gate_gfn = gate_gfn;
  s.sra_enabled = sra;
  s.temperature_enabled = temp;
  s.sra_pool = pool;
  return s;
}

// closed forms for the parameter census, gfn_ratio = 2
long long msa_expected(int c, int h, AttnStyle style, bool sra, bool temp) {
  const long long C = c;
  long long n = 0;
  switch (style) {
    case AttnStyle::conv1x1_dw: n = 3 * C * C + 33 * C; break;         // q_p+q_d+kv_p+kv_d
    case AttnStyle::conv1x1_only: n = 3 * C * C + 3 * C; break;        // q_p+kv_p
    case AttnStyle::dwconv_only: n = 30 * C; break;                    // q_d+k_d+v_d
    case AttnStyle::separable_conv1x1: n = 5 * C * C + 25 * C; break;  // dw+pw pairs added
  }
  n += C * C + C;               // out_p
  if (sra) n += C * C + 3 * C;  // sra_p + sra_ln
  if (temp) n += h;
  return n;
}

long long gfn_expected(int c, bool gated) {
  const long long C = c;
  return gated ? 6 * C * C + 45 * C : 4 * C * C + 23 * C;
}

long long block_expected(int c, int h, AttnStyle style, bool gated, bool sra, bool temp) {
  return msa_expected(c, h, style, sra, temp) + gfn_expected(c, gated) + 4LL * c;  // + 2 norms
}

}  // namespace

TEST_CASE("msa parameter census matches closed forms across styles") {
  Rng rng(7);
  const int c = 24, h = 4;
  for (AttnStyle style : {AttnStyle::conv1x1_dw, AttnStyle::conv1x1_only, AttnStyle::dwconv_only,
                          AttnStyle::separable_conv1x1}) {
    for (bool sra : {true, false}) {
      for (bool temp : {true, false}) {
        auto set = settings(c, h, style, true, sra, temp);
        auto msa = make_msa<double>(set, rng);
        CAPTURE(attn_style_name(style));
        CAPTURE(sra);
        CAPTURE(temp);
        CHECK(count_params(msa) == msa_expected(c, h, style, sra, temp));
      }
    }
  }
}

TEST_CASE("default msa census equals 5C^2 + 37C + h") {
  Rng rng(3);
  for (int c : {8, 16, 48}) {
    const int h = 4;
    auto set = settings(c, h, AttnStyle::conv1x1_dw, true, true, true);
    auto msa = make_msa<double>(set, rng);
    CHECK(count_params(msa) == 5LL * c * c + 37LL * c + h);
  }
}

TEST_CASE("gfn parameter census matches closed forms") {
  Rng rng(11);
  for (int c : {6, 24}) {
    for (bool gated : {true, false}) {
      auto set = settings(c, 2, AttnStyle::conv1x1_dw, gated, true, true);
      auto gfn = make_gfn<double>(set, rng);
      CAPTURE(c);
      CAPTURE(gated);
      CHECK(count_params(gfn) == gfn_expected(c, gated));
    }
  }
}

TEST_CASE("block parameter census matches closed forms") {
  Rng rng(5);
  const int c = 16, h = 4;
  for (AttnStyle style : {AttnStyle::conv1x1_dw, AttnStyle::separable_conv1x1}) {
    for (bool gated : {true, false}) {
      auto set = settings(c, h, style, gated, true, true);
      auto blk = make_block<double>(set, rng);
      CHECK(count_params(blk) == block_expected(c, h, style, gated, true, true));
    }
  }
}

TEST_CASE("gfn hidden width must be integral") {
  BlockSettings s;
  s.channels = 9;
  s.gfn_ratio = 1.5;  // 13.5 hidden channels
  CHECK_THROWS_AS(s.gfn_hidden(), wr::ConfigError);
  s.channels = 10;
  CHECK(s.gfn_hidden() == 15);
}

TEST_CASE("attn style names round trip") {
  for (AttnStyle style : {AttnStyle::conv1x1_dw, AttnStyle::conv1x1_only, AttnStyle::dwconv_only,
                          AttnStyle::separable_conv1x1}) {
    CHECK(parse_attn_style(attn_style_name(style)) == style);
  }
  CHECK_THROWS_AS(parse_attn_style("pointwise"), wr::ConfigError);
}

TEST_CASE("temperature initialises to inverse sqrt head dim") {
  Rng rng(2);
  auto set = settings(16, 4, AttnStyle::conv1x1_dw, true, true, true);
  auto msa = make_msa<double>(set, rng);
  REQUIRE(msa.temperature.defined());
  REQUIRE(msa.temperature.numel() == 4);
  for (int i = 0; i < 4; ++i)
    CHECK(msa.temperature.data()[i] == doctest::Approx(0.5).epsilon(1e-12));  // 1/sqrt(4)

  auto off = settings(16, 4, AttnStyle::conv1x1_dw, true, true, false);
  auto msa_off = make_msa<double>(off, rng);
  CHECK_FALSE(msa_off.temperature.defined());
}

TEST_CASE("msa forward preserves shape for every style") {
  Rng rng(13);
  for (AttnStyle style : {AttnStyle::conv1x1_dw, AttnStyle::conv1x1_only, AttnStyle::dwconv_only,
                          AttnStyle::separable_conv1x1}) {
    for (bool sra : {true, false}) {
      auto set = settings(8, 2, style, true, sra, true, 3);
      auto msa = make_msa<double>(set, rng);
      auto x = rand_input({2, 8, 6, 5}, rng);
      MsaProbe<double> probe;
      auto y = msa_forward<double>(nullptr, x, msa, set, &probe);
      CAPTURE(attn_style_name(style));
      CAPTURE(sra);
      CHECK(y.shape() == x.shape());
      CHECK(probe.kv_tokens == (sra ? 9 : 30));
      CHECK(probe.attn_rowsum_min == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(probe.attn_rowsum_max == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("pooled attention reduces key/value tokens to pool squared") {
  Rng rng(17);
  auto set = settings(8, 2, AttnStyle::conv1x1_dw, true, true, true, 7);
  auto msa = make_msa<double>(set, rng);
  auto x = rand_input({1, 8, 16, 16}, rng);
  MsaProbe<double> probe;
  auto y = msa_forward<double>(nullptr, x, msa, set, &probe);
  CHECK(y.shape() == x.shape());
  CHECK(probe.kv_tokens == 49);  // independent of the 256 query positions
}

TEST_CASE("block forward preserves shape and differs from input") {
  Rng rng(19);
  for (bool gated : {true, false}) {
    auto set = settings(8, 2, AttnStyle::conv1x1_dw, gated, true, true, 2);
    auto blk = make_block<double>(set, rng);
    auto x = rand_input({1, 8, 8, 8}, rng);
    auto y = block_forward<double>(nullptr, x, blk, set);
    CHECK(y.shape() == x.shape());
    double diff = 0;
    for (std::int64_t i = 0; i < y.numel(); ++i)
      diff = std::max(diff, std::abs(y.data()[i] - x.data()[i]));
    CHECK(diff > 1e-6);
  }
}

namespace {

template <class Fwd>
void gradcheck_block(const char* label, const Tensor4<double>& x,
                     std::vector<std::pair<std::string, Tensor4<double>>> params, Fwd&& fwd) {
  params.emplace_back("input", x);
  wr::GradCheckOptions opts;
  // Deep compositions make the default h = 1e-3 truncation-limited (the error
  // falls as h^2, confirmed empirically), so probe closer to the operating
  // point; roundoff is still ~1e-11 at this scale.
  opts.step = 1e-4;
  opts.max_coords_per_tensor = 12;
  auto res = wr::check_gradients<double>(
      [&](Tape<double>* tape) { return wr::ops::sum_all(tape, fwd(tape)); }, params, opts);
  CAPTURE(label);
  CAPTURE(res.worst.name);
  CAPTURE(res.worst.index);
  CAPTURE(res.max_rel_err);
  CHECK(res.ok);
}

}  // namespace

TEST_CASE("block gradients match finite differences (gated, pooled)") {
  Rng rng(23);
  auto set = settings(4, 2, AttnStyle::conv1x1_dw, true, true, true, 2);
  auto blk = make_block<double>(set, rng);
  auto x = rand_input({1, 4, 4, 4}, rng);
  gradcheck_block("gated_pooled", x, collect(blk),
                  [&](Tape<double>* tape) { return block_forward<double>(tape, x, blk, set); });
}

TEST_CASE("block gradients match finite differences (ungated, full attention, no temperature)") {
  Rng rng(29);
  auto set = settings(4, 2, AttnStyle::conv1x1_dw, false, false, false);
  auto blk = make_block<double>(set, rng);
  auto x = rand_input({1, 4, 4, 3}, rng);
  gradcheck_block("ungated_full", x, collect(blk),
                  [&](Tape<double>* tape) { return block_forward<double>(tape, x, blk, set); });
}

TEST_CASE("block gradients match finite differences (separable projections)") {
  Rng rng(31);
  auto set = settings(4, 2, AttnStyle::separable_conv1x1, true, true, true, 2);
  auto blk = make_block<double>(set, rng);
  auto x = rand_input({1, 4, 4, 4}, rng);
  gradcheck_block("separable", x, collect(blk),
                  [&](Tape<double>* tape) { return block_forward<double>(tape, x, blk, set); });
}

TEST_CASE("block gradients match finite differences (depthwise-only projections)") {
  Rng rng(37);
  auto set = settings(4, 2, AttnStyle::dwconv_only, true, true, true, 2);
  auto blk = make_block<double>(set, rng);
  auto x = rand_input({1, 4, 4, 4}, rng);
  gradcheck_block("dwconv_only", x, collect(blk),
                  [&](Tape<double>* tape) { return block_forward<double>(tape, x, blk, set); });
}

TEST_CASE("msa rejects mismatched channel count") {
  Rng rng(41);
  auto set = settings(8, 2, AttnStyle::conv1x1_dw, true, true, true, 2);
  auto msa = make_msa<double>(set, rng);
  auto x = rand_input({1, 6, 4, 4}, rng);
  CHECK_THROWS_AS(msa_forward<double>(nullptr, x, msa, set, nullptr), wr::ShapeError);
}
