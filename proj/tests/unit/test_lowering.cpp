#include <doctest.h>

#include <random>

#include "../support.hpp"
#include "cimmlc/errors.hpp"
#include "cimmlc/lowering.hpp"

using namespace cim;

namespace {

OpNode conv_node(std::vector<int64_t> k, int bits, std::vector<int64_t> out) {
  OpNode n;
  n.kind = OpKind::Conv;
  n.attrs.kernel = std::move(k);
  n.attrs.weight_bits = bits;
  n.output = {std::move(out), 8};
  return n;
}

OpNode fc_node(int64_t out, int64_t in, int bits) {
  OpNode n;
  n.kind = OpKind::FC;
  n.attrs.kernel = {out, in};
  n.attrs.weight_bits = bits;
  n.output = {{out, 1, 1}, 8};
  return n;
}

}  // namespace

TEST_CASE("example conv weight matrix") {
  const HwSpec hw = testing::arch("example");
  const OpNode n = conv_node({32, 3, 3, 3}, 8, {32, 32, 32});
  const WeightMatrix wm = weight_matrix_of(n, hw, {BitBinding::XBC});
  CHECK(wm.logical_rows == 27);
  CHECK(wm.logical_cols == 32);
  CHECK(wm.phys_rows == 27);
  CHECK(wm.phys_cols == 128);
  const VxbPlan p = vxb_plan(wm, hw);
  CHECK(p.v == 1);
  CHECK(p.h == 1);
  CHECK(p.xbars_per_vxb == 1);
  CHECK(p.core_vxb == 2);
  CHECK(mvm_count(n) == 1024);
}

TEST_CASE("bit binding to separate crossbars") {
  const HwSpec hw = testing::arch("example");
  const WeightMatrix wm = weight_matrix_of(conv_node({32, 3, 3, 3}, 8, {32, 32, 32}), hw, {BitBinding::XB});
  CHECK(wm.phys_cols == 32);
  CHECK(wm.bit_planes == 4);
  CHECK(vxb_plan(wm, hw).xbars_per_vxb == 4);
}

TEST_CASE("fc with matching cell width is unsliced") {
  const HwSpec hw = testing::arch("example");
  const OpNode n = fc_node(10, 64, 2);
  const WeightMatrix wm = weight_matrix_of(n, hw);
  CHECK(wm.logical_rows == 64);
  CHECK(wm.logical_cols == 10);
  CHECK(wm.phys_rows == 64);
  CHECK(wm.phys_cols == 10);
  CHECK(mvm_count(n) == 1);
  CHECK(mvm_count(conv_node({4, 8, 5, 5}, 8, {4, 1, 1})) == 1);
}

TEST_CASE("tiling over several crossbars") {
  HwSpec hw = testing::arch("example");
  hw.chip.core_number = 64;
  WeightMatrix wm;
  wm.logical_rows = wm.phys_rows = 100;
  wm.logical_cols = wm.phys_cols = 300;
  wm.weight_bits = wm.cell_bits = 2;
  const VxbPlan p = vxb_plan(wm, hw);
  CHECK(p.v == 4);
  CHECK(p.h == 3);
  CHECK(p.xbars_per_vxb == 12);
  CHECK(p.tiles.size() == 12);
  int64_t cells = 0;
  for (const Tile& t : p.tiles) {
    CHECK(t.rows() <= hw.xbar.xb_rows);
    CHECK(t.cols() <= hw.xbar.xb_cols);
    cells += t.rows() * t.cols();
  }
  CHECK(cells == 100 * 300);

  hw.xbar.xb_rows = 512;
  hw.xbar.parallel_row = 16;
  wm.phys_rows = wm.logical_rows = 768;
  wm.phys_cols = wm.logical_cols = 64;
  CHECK(vxb_plan(wm, hw).v == 2);
}

TEST_CASE("bit slicing reassembles every weight") {
  for (int wb = 1; wb <= 8; ++wb)
    for (int cb = 1; cb <= 8; ++cb) {
      const int planes = bit_planes(wb, cb);
      CHECK(planes == (wb + cb - 1) / cb);
      for (int w = -(1 << (wb - 1)); w < (1 << (wb - 1)); ++w) {
        std::vector<int> cells;
        int64_t sum = 0;
        for (int p = 0; p < planes; ++p) {
          const int c = slice_cell(w, wb, cb, p);
          REQUIRE(c >= 0);
          REQUIRE(c < (1 << cb));
          cells.push_back(c);
          sum += int64_t{cell_read_value(c, wb, cb, p)} << (p * cb);
        }
        CHECK(reassemble(cells, wb, cb) == w);
        CHECK(sum == w);
      }
    }
}

TEST_CASE("sliced dot product equals the integer dot product") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int wb = 2 + trial % 7, cb = 1 + trial % 4;
    std::uniform_int_distribution<int> wd(-(1 << (wb - 1)), (1 << (wb - 1)) - 1), xd(-128, 127);
    std::vector<int> w(19), x(19);
    int64_t want = 0;
    for (int i = 0; i < 19; ++i) {
      w[i] = wd(rng);
      x[i] = xd(rng);
      want += int64_t{w[i]} * x[i];
    }
    int64_t got = 0;
    for (int p = 0; p < bit_planes(wb, cb); ++p) {
      int64_t col = 0;
      for (int i = 0; i < 19; ++i) col += int64_t{cell_read_value(slice_cell(w[i], wb, cb, p), wb, cb, p)} * x[i];
      got += col * (int64_t{1} << (p * cb));
    }
    CHECK(got == want);
  }
}

TEST_CASE("conv rows follow r, s, c order") {
  OpNode n = conv_node({2, 3, 2, 2}, 8, {2, 3, 3});
  Tensor t{"w", {2, 3, 2, 2}, {}};
  for (int i = 0; i < 24; ++i) t.values.push_back(i - 12);
  // row = (r * S + s) * C + c
  for (int k = 0; k < 2; ++k)
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < 2; ++r)
        for (int s = 0; s < 2; ++s)
          CHECK(logical_weight(n, t, (r * 2 + s) * 3 + c, k) == t.values[((k * 3 + c) * 2 + r) * 2 + s]);
}

TEST_CASE("window sources and padding") {
  OpNode n = conv_node({1, 2, 3, 3}, 8, {1, 4, 4});
  n.attrs.padding = 1;
  const Shape3 in{2, 4, 4};
  // window 0 is centred on (0,0): the first kernel row is all padding
  CHECK(window_source(n, in, 0, 0) == -1);
  // r=1, s=1, c=1 is input (0,0) channel 1; HWC offset 1
  CHECK(window_source(n, in, 0, (1 * 3 + 1) * 2 + 1) == 1);
  // window 5 = output (1,1); r=0,s=0,c=0 is input (0,0)
  CHECK(window_source(n, in, 5, 0) == 0);
  // r=2,s=2,c=0 of window 5 is input (2,2): (2*4+2)*2
  CHECK(window_source(n, in, 5, (2 * 3 + 2) * 2) == 20);
}

TEST_CASE("weights outside the declared bit width are rejected") {
  const OpNode n = fc_node(2, 2, 4);
  CHECK_NOTHROW(check_weights(n, Tensor{"w", {2, 2}, {-8, 7, 0, 1}}));
  CHECK_THROWS(check_weights(n, Tensor{"w", {2, 2}, {-9, 7, 0, 1}}));
  CHECK_THROWS(check_weights(n, Tensor{"w", {2, 3}, {0, 0, 0, 0, 0, 0}}));
}
