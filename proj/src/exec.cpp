// Functional execution of a flow: byte buffers, crossbar cell arrays, integer DCOMs.
#include <algorithm>
#include <array>
#include <cstring>
#include <optional>
#include <set>

#include "cimmlc/errors.hpp"
#include "cimmlc/lowering.hpp"
#include "cimmlc/simulator.hpp"

namespace cim {

using nlohmann::json;

int8_t saturate8(int64_t v) { return static_cast<int8_t>(std::clamp<int64_t>(v, -128, 127)); }

int64_t shift_right(int64_t v, int shift) { return v >> shift; }

int64_t floor_div(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

namespace {

class Buffer {
 public:
  Buffer(std::string name, Limit bits) : name_(std::move(name)) {
    if (bits) limit_ = *bits / 8;
  }

  uint8_t* span(int64_t addr, int64_t len) {
    if (addr < 0 || len < 0 || (limit_ && addr + len > *limit_))
      throw AddressOutOfRange(name_ + " access [" + std::to_string(addr) + ", " + std::to_string(addr + len) +
                              ") outside buffer");
    if (static_cast<int64_t>(data_.size()) < addr + len) data_.resize(addr + len, 0);
    return data_.data() + addr;
  }

  int8_t get8(int64_t addr) { return static_cast<int8_t>(*span(addr, 1)); }
  void set8(int64_t addr, int8_t v) { *span(addr, 1) = static_cast<uint8_t>(v); }

  int32_t get32(int64_t addr) {
    int32_t v;
    std::memcpy(&v, span(addr, 4), 4);
    return v;
  }
  void set32(int64_t addr, int32_t v) { std::memcpy(span(addr, 4), &v, 4); }

 private:
  std::string name_;
  std::optional<int64_t> limit_;
  std::vector<uint8_t> data_;
};

struct Crossbar {
  int64_t cols = 0;
  std::vector<std::vector<int>> cells;  // per row; empty = unwritten
  std::vector<int> col_plane;
  int weight_bits = 8;
  int cell_bits = 1;
  std::optional<int> node;
};

OpNode node_from_param(const json& p) {
  OpNode n;
  n.id = p.at("node").get<int>();
  n.kind = op_kind_from_string(p.at("kind").get<std::string>());
  n.attrs.kernel = p.at("kernel").get<std::vector<int64_t>>();
  n.attrs.weight_bits = p.at("weight_bits").get<int>();
  n.attrs.weight = p.at("weight").get<std::string>();
  if (p.contains("stride")) n.attrs.stride = p.at("stride").get<int64_t>();
  if (p.contains("padding")) n.attrs.padding = p.at("padding").get<int64_t>();
  if (p.contains("out_dims")) n.output.dims = p.at("out_dims").get<std::vector<int64_t>>();
  return n;
}

WeightMatrix wm_from_param(const json& p, const OpNode& n, const HwSpec& hw) {
  WeightMatrix wm = weight_matrix_of(n, hw, DimBinding{bit_binding_from_string(p.at("binding").get<std::string>())});
  wm.cell_bits = p.at("cell_bits").get<int>();
  wm.bit_planes = bit_planes(wm.weight_bits, wm.cell_bits);
  wm.phys_cols = wm.binding == BitBinding::XBC ? wm.logical_cols * wm.bit_planes : wm.logical_cols;
  return wm;
}

class Machine {
 public:
  Machine(const Flow& flow, const HwSpec& hw, const TensorMap& weights)
      : flow_(flow), hw_(hw), weights_(weights), l0_("L0", hw.chip.l0_size_bits) {
    for (int c = 0; c < hw.chip.core_number; ++c) {
      l1_.emplace_back("L1." + std::to_string(c), hw.core.l1_size_bits);
      xbs_.emplace_back(hw.core.xb_number);
    }
    core_param_.resize(hw.chip.core_number);
  }

  Buffer& buf(const Level& l) {
    if (l.is_l0()) return l0_;
    if (l.core >= static_cast<int>(l1_.size())) throw AddressOutOfRange("no core " + std::to_string(l.core));
    return l1_[l.core];
  }

  void run() {
    XbShapes shapes;
    for (const auto& st : flow_.body) {
      if (st.parallel)
        check_independent(st, shapes);
      else
        for (const auto& op : st.ops) op_access(op, flow_, hw_, shapes);
      for (const auto& op : st.ops) exec(op);
    }
  }

 private:
  const Flow& flow_;
  const HwSpec& hw_;
  const TensorMap& weights_;
  Buffer l0_;
  std::vector<Buffer> l1_;
  std::vector<std::vector<Crossbar>> xbs_;
  std::vector<std::string> core_param_;

  void check_independent(const Statement& st, XbShapes& shapes) {
    struct R {
      Region r;
      size_t op;
      bool write;
    };
    std::vector<R> rs;
    std::set<std::pair<int, int>> xb_used;
    for (size_t k = 0; k < st.ops.size(); ++k) {
      const MetaOp& op = st.ops[k];
      const Access a = op_access(op, flow_, hw_, shapes);
      for (const auto& r : a.reads) rs.push_back({r, k, false});
      for (const auto& r : a.writes) rs.push_back({r, k, true});
      const bool xb = op.code == OpCode::ReadXb || op.code == OpCode::WriteXb || op.code == OpCode::ReadRows ||
                      op.code == OpCode::WriteRows;
      if (xb && !xb_used.insert({op.core, op.xb}).second)
        throw ParallelConflictError("crossbar (" + std::to_string(op.core) + "," + std::to_string(op.xb) +
                                    ") used twice in one parallel block");
    }
    for (size_t i = 0; i < rs.size(); ++i)
      for (size_t j = i + 1; j < rs.size(); ++j) {
        const R &a = rs[i], &b = rs[j];
        if (a.op == b.op || (!a.write && !b.write) || a.r.level != b.r.level) continue;
        if (a.r.lo < b.r.hi && b.r.lo < a.r.hi && a.r.lo < a.r.hi && b.r.lo < b.r.hi)
          throw ParallelConflictError("ops " + std::to_string(a.op) + " and " + std::to_string(b.op) +
                                      " of a parallel block touch " + a.r.level.str() + " [" +
                                      std::to_string(std::max(a.r.lo, b.r.lo)) + ", ...)");
      }
  }

  Crossbar& xb(int core, int x) {
    if (core < 0 || core >= hw_.chip.core_number || x < 0 || x >= hw_.core.xb_number)
      throw AddressOutOfRange("no crossbar (" + std::to_string(core) + "," + std::to_string(x) + ")");
    return xbs_[core][x];
  }

  const Tensor& weight_of(const OpNode& n) {
    auto it = weights_.find(n.attrs.weight);
    if (it == weights_.end()) throw MissingTensorError("missing weight tensor '" + n.attrs.weight + "'");
    check_weights(n, it->second);
    return it->second;
  }

  // Stores matrix rows [r0, r1) x physical cols [c0, c1) at crossbar rows starting at `at`;
  // `slab` rows are written in total, the excess zero.
  void program(int core, int x, const json& p, int64_t at, int64_t slab) {
    const OpNode n = node_from_param(p);
    const WeightMatrix wm = wm_from_param(p, n, hw_);
    const Tensor& w = weight_of(n);
    const int64_t r0 = p.at("rows")[0].get<int64_t>(), r1 = p.at("rows")[1].get<int64_t>();
    const int64_t c0 = p.at("cols")[0].get<int64_t>(), c1 = p.at("cols")[1].get<int64_t>();
    const int tile_plane = p.at("plane").get<int>();
    Crossbar& X = xb(core, x);
    if (c1 - c0 > hw_.xbar.xb_cols || at + slab > hw_.xbar.xb_rows)
      throw AddressOutOfRange("tile does not fit crossbar (" + std::to_string(core) + "," + std::to_string(x) + ")");
    X.cols = c1 - c0;
    X.cells.resize(hw_.xbar.xb_rows);
    X.weight_bits = wm.weight_bits;
    X.cell_bits = wm.cell_bits;
    X.node = n.id;
    X.col_plane.assign(X.cols, 0);
    for (int64_t c = c0; c < c1; ++c) {
      int64_t lc;
      int pl;
      physical_col_info(wm, c, tile_plane, lc, pl);
      X.col_plane[c - c0] = pl;
    }
    for (int64_t i = 0; i < slab; ++i) {
      auto& row = X.cells[at + i];
      row.assign(X.cols, 0);
      if (r0 + i < r1)
        for (int64_t c = c0; c < c1; ++c) row[c - c0] = physical_cell(wm, n, w, r0 + i, c, tile_plane);
    }
  }

  // Dot products of rows [lo, hi] with the input bytes at L1 src, int32 per column at des.
  void read_rows(int core, int x, int64_t lo, int64_t hi, int64_t src, int64_t des) {
    Crossbar& X = xb(core, x);
    Buffer& b = l1_.at(core);
    std::vector<int64_t> acc(X.cols, 0);
    for (int64_t r = lo; r <= hi; ++r) {
      if (r >= static_cast<int64_t>(X.cells.size()) || X.cells[r].empty())
        throw UnwrittenCellError("crossbar (" + std::to_string(core) + "," + std::to_string(x) + ") row " +
                                 std::to_string(r) + " read before it was written");
      const int64_t in = b.get8(src + (r - lo));
      for (int64_t c = 0; c < X.cols; ++c)
        acc[c] += in * cell_read_value(X.cells[r][c], X.weight_bits, X.cell_bits, X.col_plane[c]);
    }
    for (int64_t c = 0; c < X.cols; ++c) b.set32(des + 4 * c, static_cast<int32_t>(acc[c]));
  }

  void read_core(const MetaOp& op) {
    if (core_param_.at(op.core) != op.param)
      throw UnwrittenCellError("core " + std::to_string(op.core) + " does not hold " + op.param);
    const json& p = flow_.param(op.param);
    const OpNode n = node_from_param(p);
    const WeightMatrix wm = wm_from_param(p, n, hw_);
    const Tensor& w = weight_of(n);
    const int cpr = p.at("cores_per_replica").get<int>();
    for (int k = 1; k < cpr; ++k)
      if (op.core + k >= hw_.chip.core_number || core_param_[op.core + k] != op.param)
        throw UnwrittenCellError("core " + std::to_string(op.core + k) + " does not hold " + op.param);
    const auto in = p.at("in_dims").get<std::vector<int64_t>>();
    const auto out = p.at("out_dims").get<std::vector<int64_t>>();
    const Shape3 ins{in[0], in[1], in[2]};
    int64_t lo = -1, hi = -1;
    for (const auto& r : p.at("replicas"))
      if (r.at("core").get<int>() == op.core) {
        lo = r.at("oh")[0].get<int64_t>();
        hi = r.at("oh")[1].get<int64_t>();
      }
    if (lo < 0) throw UnwrittenCellError("core " + std::to_string(op.core) + " has no band in " + op.param);
    int64_t in_base = op.src, out_base = op.des;
    int64_t w_lo = 0, w_hi = 1;
    const int64_t K = wm.logical_cols;
    if (n.kind == OpKind::Conv) {
      in_base -= std::max<int64_t>(0, lo * n.attrs.stride - n.attrs.padding) * ins.w * ins.c;
      out_base -= lo * out[2] * K;
      w_lo = lo * out[2];
      w_hi = hi * out[2];
    }
    // Cells of the whole replica, sliced like the crossbar path would hold them.
    const int tplanes = wm.binding == BitBinding::XB ? wm.bit_planes : 1;
    const int shift = p.at("shift").get<int>();
    std::vector<int8_t> x(wm.phys_rows);
    for (int64_t win = w_lo; win < w_hi; ++win) {
      for (int64_t r = 0; r < wm.phys_rows; ++r) {
        const int64_t off = window_source(n, ins, win, r);
        x[r] = off < 0 ? 0 : l0_.get8(in_base + off);
      }
      std::vector<int64_t> acc(K, 0);
      for (int tp = 0; tp < tplanes; ++tp)
        for (int64_t c = 0; c < wm.phys_cols; ++c) {
          int64_t lc;
          int pl;
          physical_col_info(wm, c, tp, lc, pl);
          int64_t s = 0;
          for (int64_t r = 0; r < wm.phys_rows; ++r)
            s += x[r] * cell_read_value(physical_cell(wm, n, w, r, c, tp), wm.weight_bits, wm.cell_bits, pl);
          acc[lc] += s * (int64_t{1} << (pl * wm.cell_bits));
        }
      for (int64_t k = 0; k < K; ++k) l0_.set8(out_base + win * K + k, saturate8(shift_right(acc[k], shift)));
    }
  }

  void shift_acc(const MetaOp& op) {
    const json& p = flow_.param(op.param);
    Buffer& b = buf(op.src_level);
    const int64_t K = p.at("K").get<int64_t>();
    const int cb = p.at("cell_bits").get<int>();
    const BitBinding bind = bit_binding_from_string(p.at("binding").get<std::string>());
    const int planes = p.at("planes").get<int>();
    if (op.len != K) throw SemanticError("shift_acc length differs from K");
    std::vector<int64_t> acc(K, 0);
    int64_t off = op.src;
    for (const auto& part : p.at("parts")) {
      const int tp = part[0].get<int>();
      const int64_t c0 = part[1].get<int64_t>(), wdt = part[2].get<int64_t>();
      for (int64_t c = c0; c < c0 + wdt; ++c, off += 4) {
        const int64_t lc = bind == BitBinding::XBC ? c / planes : c;
        const int pl = bind == BitBinding::XBC ? static_cast<int>(c % planes) : tp;
        acc.at(lc) += int64_t{b.get32(off)} * (int64_t{1} << (pl * cb));
      }
    }
    const int shift = p.at("shift").get<int>();
    for (int64_t k = 0; k < K; ++k) b.set8(op.des + k, saturate8(shift_right(acc[k], shift)));
  }

  void pool(const MetaOp& op, bool is_max) {
    const json& p = flow_.param(op.param);
    Buffer& b = buf(op.src_level);
    const auto in = p.at("in_dims").get<std::vector<int64_t>>();
    const auto out = p.at("out_dims").get<std::vector<int64_t>>();
    const auto k = p.at("kernel").get<std::vector<int64_t>>();
    const int64_t st = p.at("stride").get<int64_t>(), pad = p.at("padding").get<int64_t>();
    const int64_t C = in[0], H = in[1], W = in[2];
    std::vector<int8_t> res;
    res.reserve(out[0] * out[1] * out[2]);
    for (int64_t oh = 0; oh < out[1]; ++oh)
      for (int64_t ow = 0; ow < out[2]; ++ow)
        for (int64_t c = 0; c < C; ++c) {
          int64_t m = -128, s = 0;
          for (int64_t r = 0; r < k[0]; ++r)
            for (int64_t q = 0; q < k[1]; ++q) {
              const int64_t ih = oh * st - pad + r, iw = ow * st - pad + q;
              if (ih < 0 || iw < 0 || ih >= H || iw >= W) continue;
              const int64_t v = b.get8(op.src + (ih * W + iw) * C + c);
              m = std::max(m, v);
              s += v;
            }
          res.push_back(is_max ? static_cast<int8_t>(m) : saturate8(floor_div(s, k[0] * k[1])));
        }
    if (static_cast<int64_t>(res.size()) != op.len) throw SemanticError("pool length differs from output size");
    for (int64_t i = 0; i < op.len; ++i) b.set8(op.des + i, res[i]);
  }

  void exec(const MetaOp& op) {
    switch (op.code) {
      case OpCode::WriteCore: {
        const json& p = flow_.param(op.param);
        (void)weight_of(node_from_param(p));
        if (op.core < 0 || op.core >= hw_.chip.core_number)
          throw AddressOutOfRange("no core " + std::to_string(op.core));
        core_param_[op.core] = op.param;
        break;
      }
      case OpCode::ReadCore:
        read_core(op);
        break;
      case OpCode::WriteXb: {
        const json& p = flow_.param(op.param);
        const int64_t rows = p.at("rows")[1].get<int64_t>() - p.at("rows")[0].get<int64_t>();
        xb(op.core, op.xb).cells.assign(hw_.xbar.xb_rows, {});
        program(op.core, op.xb, p, 0, rows);
        break;
      }
      case OpCode::WriteRows:
        program(op.core, op.xb, flow_.param(op.param), op.row_lo, op.row_hi - op.row_lo + 1);
        break;
      case OpCode::ReadXb: {
        Crossbar& X = xb(op.core, op.xb);
        int64_t rows = 0;
        while (rows < static_cast<int64_t>(X.cells.size()) && !X.cells[rows].empty()) ++rows;
        if (rows == 0)
          throw UnwrittenCellError("crossbar (" + std::to_string(op.core) + "," + std::to_string(op.xb) +
                                   ") read before it was written");
        read_rows(op.core, op.xb, 0, rows - 1, op.src, op.des);
        break;
      }
      case OpCode::ReadRows:
        read_rows(op.core, op.xb, op.row_lo, op.row_hi, op.src, op.des);
        break;
      case OpCode::Mov: {
        Buffer& s = buf(op.src_level);
        Buffer& d = buf(op.des_level);
        std::vector<uint8_t> tmp(s.span(op.src, op.len), s.span(op.src, op.len) + op.len);
        if (op.len) std::memcpy(d.span(op.des, op.len), tmp.data(), op.len);
        break;
      }
      case OpCode::Dcom: {
        Buffer& b = buf(op.src_level);
        if (op.name == "relu") {
          for (int64_t i = 0; i < op.len; ++i) b.set8(op.des + i, std::max<int8_t>(0, b.get8(op.src + i)));
        } else if (op.name == "add") {
          const json& p = flow_.param(op.param);
          const int64_t sb = p.at("src_b").get<int64_t>();
          const int shift = p.at("shift").get<int>();
          for (int64_t i = 0; i < op.len; ++i)
            b.set8(op.des + i, saturate8(shift_right(int64_t{b.get8(op.src + i)} + b.get8(sb + i), shift)));
        } else if (op.name == "shift_acc") {
          shift_acc(op);
        } else if (op.name == "maxpool" || op.name == "avgpool") {
          pool(op, op.name == "maxpool");
        } else {
          throw SemanticError("unknown dcom function '" + op.name + "'");
        }
        break;
      }
    }
  }
};

// Binding dims as C, H, W; missing trailing dims are 1.
std::array<int64_t, 3> dims3(const std::vector<int64_t>& d) {
  if (d.empty() || d.size() > 3) throw ShapeError("binding needs 1 to 3 dims");
  std::array<int64_t, 3> out{1, 1, 1};
  for (size_t i = 0; i < d.size(); ++i) out[i] = d[i];
  return out;
}

}  // namespace

TensorMap exec_flow(const Flow& flow, const HwSpec& hw, const TensorMap& inputs, const TensorMap& weights) {
  Machine m(flow, hw, weights);
  for (const auto& b : flow.inputs) {
    auto it = inputs.find(b.name);
    if (it == inputs.end()) throw MissingTensorError("missing input tensor '" + b.name + "'");
    const Tensor& t = it->second;
    const auto [C, H, W] = dims3(b.dims);
    if (t.elements() != C * H * W || static_cast<int64_t>(t.values.size()) != C * H * W)
      throw MissingTensorError("input '" + b.name + "' has " + std::to_string(t.values.size()) + " values, expected " +
                               std::to_string(C * H * W));
    Buffer& buf = m.buf(b.level);
    for (int64_t c = 0; c < C; ++c)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t w = 0; w < W; ++w) {
          const int32_t v = t.values[(c * H + h) * W + w];
          if (v < -128 || v > 127) throw DomainError("input '" + b.name + "' holds a value outside int8");
          buf.set8(b.addr + (h * W + w) * C + c, static_cast<int8_t>(v));
        }
  }
  m.run();
  TensorMap out;
  for (const auto& b : flow.outputs) {
    const auto [C, H, W] = dims3(b.dims);
    Tensor t{b.name, b.dims, std::vector<int32_t>(C * H * W)};
    Buffer& buf = m.buf(b.level);
    for (int64_t c = 0; c < C; ++c)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t w = 0; w < W; ++w) t.values[(c * H + h) * W + w] = buf.get8(b.addr + (h * W + w) * C + c);
    out[b.name] = std::move(t);
  }
  return out;
}

}  // namespace cim
