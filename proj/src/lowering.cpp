#include "cimmlc/lowering.hpp"

#include <algorithm>

#include "cimmlc/errors.hpp"

namespace cim {

int bit_planes(int weight_bits, int cell_bits) { return (weight_bits + cell_bits - 1) / cell_bits; }

WeightMatrix weight_matrix_of(const OpNode& node, const HwSpec& hw, DimBinding binding) {
  if (!is_cim(node.kind))
    throw UnsupportedOp(std::string(to_string(node.kind)) + " node " + std::to_string(node.id) +
                        " has no weight matrix");
  WeightMatrix wm;
  wm.node = node.id;
  const auto& k = node.attrs.kernel;
  if (node.kind == OpKind::Conv) {
    wm.logical_rows = k[1] * k[2] * k[3];
    wm.logical_cols = k[0];
  } else {
    wm.logical_rows = k[1];
    wm.logical_cols = k[0];
  }
  wm.weight_bits = node.attrs.weight_bits;
  wm.cell_bits = hw.xbar.cell_precision_bits;
  wm.bit_planes = bit_planes(wm.weight_bits, wm.cell_bits);
  wm.binding = binding.b_to;
  wm.phys_rows = wm.logical_rows;
  wm.phys_cols = binding.b_to == BitBinding::XBC ? wm.logical_cols * wm.bit_planes : wm.logical_cols;
  return wm;
}

WeightMatrix weight_matrix_of(const OpNode& node, const HwSpec& hw) {
  return weight_matrix_of(node, hw, DimBinding{hw.xbar.bit_binding});
}

VxbPlan vxb_plan(const WeightMatrix& wm, const HwSpec& hw) {
  VxbPlan p;
  const int64_t xr = hw.xbar.xb_rows, xc = hw.xbar.xb_cols;
  p.v = static_cast<int>((wm.phys_rows + xr - 1) / xr);
  p.h = static_cast<int>((wm.phys_cols + xc - 1) / xc);
  p.planes = wm.binding == BitBinding::XB ? wm.bit_planes : 1;
  const int64_t x = int64_t{p.v} * p.h * p.planes;
  if (x > hw.total_crossbars())
    throw CapacityError("node " + std::to_string(wm.node) + " needs " + std::to_string(x) +
                        " crossbars per replica; the chip has " + std::to_string(hw.total_crossbars()));
  p.xbars_per_vxb = static_cast<int>(x);
  p.num_vxb = 1;
  p.core_vxb = hw.core.xb_number / p.xbars_per_vxb;
  p.cores_per_replica = (p.xbars_per_vxb * p.num_vxb + hw.core.xb_number - 1) / hw.core.xb_number;
  for (int pl = 0; pl < p.planes; ++pl)
    for (int vt = 0; vt < p.v; ++vt)
      for (int ht = 0; ht < p.h; ++ht) {
        Tile t;
        t.plane = pl;
        t.vt = vt;
        t.ht = ht;
        t.row_lo = vt * xr;
        t.row_hi = std::min<int64_t>(wm.phys_rows, (vt + 1) * xr);
        t.col_lo = ht * xc;
        t.col_hi = std::min<int64_t>(wm.phys_cols, (ht + 1) * xc);
        p.tiles.push_back(t);
      }
  return p;
}

int64_t mvm_count(const OpNode& node) {
  if (!is_cim(node.kind))
    throw UnsupportedOp(std::string(to_string(node.kind)) + " node " + std::to_string(node.id) + " has no MVMs");
  if (node.kind == OpKind::FC) return 1;
  const Shape3 out = as_shape3(node.output);
  return out.h * out.w;
}

int slice_cell(int weight, int weight_bits, int cell_bits, int plane) {
  const uint32_t u = static_cast<uint32_t>(weight) & ((1u << weight_bits) - 1u);
  return static_cast<int>((u >> (plane * cell_bits)) & ((1u << cell_bits) - 1u));
}

int cell_read_value(int cell, int weight_bits, int cell_bits, int plane) {
  const int planes = bit_planes(weight_bits, cell_bits);
  if (plane != planes - 1) return cell;
  const int top = weight_bits - (planes - 1) * cell_bits;
  return cell >= (1 << (top - 1)) ? cell - (1 << top) : cell;
}

int reassemble(const std::vector<int>& cells, int weight_bits, int cell_bits) {
  int v = 0;
  for (int p = 0; p < static_cast<int>(cells.size()); ++p)
    v += cell_read_value(cells[p], weight_bits, cell_bits, p) * (1 << (p * cell_bits));
  return v;
}

int logical_weight(const OpNode& node, const Tensor& w, int64_t row, int64_t col) {
  const auto& k = node.attrs.kernel;
  if (node.kind == OpKind::Conv) {
    const int64_t C = k[1], R = k[2], S = k[3];
    const int64_t r = row / (S * C), s = (row / C) % S, c = row % C;
    return w.values[((col * C + c) * R + r) * S + s];
  }
  return w.values[col * k[1] + row];
}

void physical_col_info(const WeightMatrix& wm, int64_t pcol, int tile_plane, int64_t& logical_col, int& plane) {
  if (wm.binding == BitBinding::XBC) {
    logical_col = pcol / wm.bit_planes;
    plane = static_cast<int>(pcol % wm.bit_planes);
  } else {
    logical_col = pcol;
    plane = tile_plane;
  }
}

int physical_cell(const WeightMatrix& wm, const OpNode& node, const Tensor& weights, int64_t prow, int64_t pcol,
                  int tile_plane) {
  int64_t col;
  int plane;
  physical_col_info(wm, pcol, tile_plane, col, plane);
  return slice_cell(logical_weight(node, weights, prow, col), wm.weight_bits, wm.cell_bits, plane);
}

int64_t window_source(const OpNode& node, const Shape3& in, int64_t window, int64_t row) {
  if (node.kind == OpKind::FC) return row;
  const auto& k = node.attrs.kernel;
  const int64_t C = k[1], S = k[3];
  const int64_t wout = as_shape3(node.output).w;
  const int64_t oh = window / wout, ow = window % wout;
  const int64_t r = row / (S * C), s = (row / C) % S, c = row % C;
  const int64_t ih = oh * node.attrs.stride - node.attrs.padding + r;
  const int64_t iw = ow * node.attrs.stride - node.attrs.padding + s;
  if (ih < 0 || iw < 0 || ih >= in.h || iw >= in.w) return -1;
  return (ih * in.w + iw) * in.c + c;
}

void check_weights(const OpNode& node, const Tensor& w) {
  int64_t n = 1;
  for (auto d : node.attrs.kernel) n *= d;
  if (w.elements() != n || static_cast<int64_t>(w.values.size()) != n)
    throw ValidationError("weight '" + w.name + "' has " + std::to_string(w.values.size()) + " values, node " +
                          std::to_string(node.id) + " needs " + std::to_string(n));
  const int lo = -(1 << (node.attrs.weight_bits - 1)), hi = (1 << (node.attrs.weight_bits - 1)) - 1;
  for (auto v : w.values)
    if (v < lo || v > hi)
      throw ValidationError("weight '" + w.name + "' value " + std::to_string(v) + " outside " +
                            std::to_string(node.attrs.weight_bits) + "-bit signed range");
}

}  // namespace cim
