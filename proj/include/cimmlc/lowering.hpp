#pragma once

#include <cstdint>
#include <vector>

#include "cimmlc/arch.hpp"
#include "cimmlc/graph.hpp"
#include "cimmlc/tensor.hpp"

namespace cim {

// Matrix rows always go to crossbar rows and matrix columns to crossbar columns;
// only the bit dimension has a choice.
struct DimBinding {
  BitBinding b_to = BitBinding::XBC;
};

struct WeightMatrix {
  int node = 0;
  int64_t logical_rows = 0;
  int64_t logical_cols = 0;
  int weight_bits = 8;
  int cell_bits = 1;
  int bit_planes = 1;
  BitBinding binding = BitBinding::XBC;
  int64_t phys_rows = 0;
  int64_t phys_cols = 0;
};

// One physical crossbar's share of a weight matrix. `plane` is always 0 under XBC.
struct Tile {
  int plane = 0;
  int vt = 0;
  int ht = 0;
  int64_t row_lo = 0, row_hi = 0;  // [lo, hi) in physical matrix rows
  int64_t col_lo = 0, col_hi = 0;  // [lo, hi) in physical matrix columns

  int64_t rows() const { return row_hi - row_lo; }
  int64_t cols() const { return col_hi - col_lo; }
};

struct VxbPlan {
  int v = 1;
  int h = 1;
  int planes = 1;  // crossbar-separated planes: 1 under XBC
  int xbars_per_vxb = 1;
  int num_vxb = 1;
  int core_vxb = 0;           // floor(xb_number / xbars_per_vxb)
  int cores_per_replica = 1;  // ceil(xbars_per_vxb * num_vxb / xb_number)
  std::vector<Tile> tiles;    // order: plane, vt, ht
};

int bit_planes(int weight_bits, int cell_bits);

WeightMatrix weight_matrix_of(const OpNode& node, const HwSpec& hw, DimBinding binding);
WeightMatrix weight_matrix_of(const OpNode& node, const HwSpec& hw);
VxbPlan vxb_plan(const WeightMatrix& wm, const HwSpec& hw);
int64_t mvm_count(const OpNode& node);

// Unsigned cell holding bits [plane*cb, plane*cb + cb) of the two's-complement weight.
int slice_cell(int weight, int weight_bits, int cell_bits, int plane);
// Value a crossbar column contributes per unit input: the top plane reads signed.
int cell_read_value(int cell, int weight_bits, int cell_bits, int plane);
// Inverse of slicing; used to check faithfulness.
int reassemble(const std::vector<int>& cells, int weight_bits, int cell_bits);

// Rows of a conv weight matrix are ordered (r, s, c); columns are output channels.
int logical_weight(const OpNode& node, const Tensor& weights, int64_t row, int64_t col);

// Cell at a physical (row, col) of the sliced matrix. `plane` selects the crossbar
// under XB binding and is ignored under XBC.
int physical_cell(const WeightMatrix& wm, const OpNode& node, const Tensor& weights, int64_t prow, int64_t pcol,
                  int plane);
// Logical column and bit plane behind a physical column.
void physical_col_info(const WeightMatrix& wm, int64_t pcol, int tile_plane, int64_t& logical_col, int& plane);

// Offset of the input element feeding matrix row `row` in window `window` (HWC layout
// of the input tensor), or -1 for a padding position.
int64_t window_source(const OpNode& node, const Shape3& in, int64_t window, int64_t row);

// Checks that a weight tensor matches the node's kernel and bit width.
void check_weights(const OpNode& node, const Tensor& weights);

}  // namespace cim
