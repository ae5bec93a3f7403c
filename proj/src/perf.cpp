// Event-driven timing over a flow: byte-range scoreboard plus interval-booked resources.
#include <algorithm>
#include <cmath>
#include <sstream>

#include "cimmlc/errors.hpp"
#include "cimmlc/lowering.hpp"
#include "cimmlc/simulator.hpp"

namespace cim {

using nlohmann::json;

namespace {

// Per-byte last write end and last read end, stored as runs.
class Scoreboard {
 public:
  struct Seg {
    int64_t w = 0, r = 0;
  };

  Scoreboard() { runs_[INT64_MIN] = {}; }

  Seg query(int64_t lo, int64_t hi) const {
    Seg out;
    if (lo >= hi) return out;
    auto it = std::prev(runs_.upper_bound(lo));
    for (; it != runs_.end() && it->first < hi; ++it) {
      out.w = std::max(out.w, it->second.w);
      out.r = std::max(out.r, it->second.r);
    }
    return out;
  }

  void on_read(int64_t lo, int64_t hi, int64_t end) {
    if (lo >= hi) return;
    auto a = split(lo);
    auto b = split(hi);
    for (auto it = a; it != b; ++it) it->second.r = std::max(it->second.r, end);
  }

  void on_write(int64_t lo, int64_t hi, int64_t end) {
    if (lo >= hi) return;
    auto a = split(lo);
    auto b = split(hi);
    int64_t r = 0;
    for (auto it = a; it != b; ++it) r = std::max(r, it->second.r);
    runs_.erase(a, b);
    runs_[lo] = {end, std::max(r, end)};
  }

 private:
  std::map<int64_t, Seg> runs_;

  std::map<int64_t, Seg>::iterator split(int64_t at) {
    auto it = std::prev(runs_.upper_bound(at));
    if (it->first == at) return it;
    return runs_.emplace_hint(std::next(it), at, it->second);
  }
};

// Busy intervals of one unit; new work goes into the earliest gap that fits.
class Timeline {
 public:
  bool free(int64_t s, int64_t d) const {
    if (d <= 0) return true;
    auto it = busy_.upper_bound(s);
    if (it != busy_.end() && it->first < s + d) return false;
    if (it != busy_.begin() && std::prev(it)->second > s) return false;
    return true;
  }

  int64_t fit(int64_t t, int64_t d) const {
    if (d <= 0) return t;
    int64_t s = t;
    auto it = busy_.upper_bound(s);
    if (it != busy_.begin() && std::prev(it)->second > s) s = std::prev(it)->second;
    for (; it != busy_.end(); ++it) {
      if (it->first >= s + d) break;
      s = std::max(s, it->second);
    }
    return s;
  }

  void book(int64_t s, int64_t d) {
    if (d > 0) busy_[s] = s + d;
  }

 private:
  std::map<int64_t, int64_t> busy_;
};

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

struct Timed {
  const MetaOp* op = nullptr;
  int64_t ready = 0;
  int64_t dur = 0;
  std::vector<int> res;  // resource ids
  int64_t xbars = 0;     // active crossbars while running (reads only)
  bool is_read = false;
  bool is_mov = false;
  Access acc;
  std::vector<int> xb_reads, xb_writes;  // crossbar contents as dependencies
  int node = -1;
};

class PerfModel {
 public:
  PerfModel(const Flow& flow, const HwSpec& hw) : flow_(flow), hw_(hw) {
    const int nx = hw.total_crossbars();
    timelines_.resize(nx);
    xb_w_.assign(nx, 0);
    xb_r_.assign(nx, 0);
    xb_node_.assign(nx, -1);
  }

  SimReport run() {
    SimReport rep;
    size_t i = 0;
    // Leading weight programming is reported apart from the run.
    for (; i < flow_.body.size(); ++i) {
      const auto& st = flow_.body[i];
      const bool writes = std::all_of(st.ops.begin(), st.ops.end(), [](const MetaOp& o) {
        return o.code == OpCode::WriteCore || o.code == OpCode::WriteXb || o.code == OpCode::WriteRows;
      });
      if (!writes) break;
      statement(st);
    }
    rep.program_cycles = makespan_;
    reset_time();
    for (; i < flow_.body.size(); ++i) statement(flow_.body[i]);
    rep.total_cycles = makespan_;

    // Sweep of active units.
    std::map<int64_t, std::pair<int64_t, int64_t>> delta;
    for (const auto& e : events_) {
      if (e.e <= e.s) continue;
      delta[e.s].first += e.xbars;
      delta[e.e].first -= e.xbars;
      delta[e.s].second += e.movs;
      delta[e.e].second -= e.movs;
      rep.xbar_active_cycles += (e.e - e.s) * e.xbars;
    }
    int64_t xb = 0, mv = 0;
    const auto& pw = hw_.power;
    for (const auto& [t, d] : delta) {
      xb += d.first;
      mv += d.second;
      rep.trace.push_back({t, xb, mv});
      rep.peak_xbars = std::max(rep.peak_xbars, xb);
      rep.peak_power_proxy =
          std::max(rep.peak_power_proxy, (pw.xb_active + pw.adc_dac) * static_cast<double>(xb) + pw.data_move * mv);
    }
    rep.read_ops = read_ops_;
    rep.first_read = first_read_;
    rep.last_read_end = last_read_end_;
    for (auto& [k, v] : out_writes_) std::sort(v.begin(), v.end());
    rep.output_writes = out_writes_;
    if (rep.total_cycles > 0)
      rep.utilization = static_cast<double>(rep.xbar_active_cycles) /
                        (static_cast<double>(hw_.total_crossbars()) * static_cast<double>(rep.total_cycles));
    return rep;
  }

 private:
  struct Event {
    int64_t s, e, xbars, movs;
  };

  const Flow& flow_;
  const HwSpec& hw_;
  XbShapes shapes_;
  std::map<int, Scoreboard> board_;  // key: core, -1 for L0
  std::vector<Timeline> timelines_;  // one per crossbar
  std::vector<int64_t> xb_w_, xb_r_;
  std::vector<int> xb_node_;
  std::vector<Event> events_;
  int64_t makespan_ = 0;
  int64_t read_ops_ = 0;
  std::map<int, int64_t> first_read_, last_read_end_;
  std::map<std::string, std::vector<int64_t>> out_writes_;

  void reset_time() {
    for (auto& t : timelines_) t = Timeline{};
    board_.clear();
    std::fill(xb_w_.begin(), xb_w_.end(), 0);
    std::fill(xb_r_.begin(), xb_r_.end(), 0);
    events_.clear();
    makespan_ = 0;
  }

  int gxb(int core, int xb) const { return core * hw_.core.xb_number + xb; }

  int64_t cpm(int64_t rows) const {
    return cycles_per_mvm(hw_, std::clamp<int64_t>(rows, 1, hw_.xbar.xb_rows), 8);
  }

  int64_t mov_cycles(int64_t bytes, const Level& src, const Level& des) const {
    const int64_t bits = bytes * 8;
    Limit bw;
    auto take = [&](const Limit& l) {
      if (l) bw = bw ? std::min(*bw, *l) : *l;
    };
    if (src.is_l0() || des.is_l0()) take(hw_.chip.l0_bw_bits_per_cycle);
    for (const Level& l : {src, des})
      if (!l.is_l0()) take(hw_.core.l1_bw_bits_per_cycle);
    double noc = hw_.chip.noc_cost_cycles_per_bit;
    if (src == des) noc = src.is_l0() ? 0.0 : hw_.core.noc_cost_cycles_per_bit;
    return (bw ? ceil_div(bits, *bw) : 0) + static_cast<int64_t>(std::ceil(noc * static_cast<double>(bits)));
  }

  OpNode param_node(const json& p) const {
    OpNode n;
    n.id = p.at("node").get<int>();
    n.kind = op_kind_from_string(p.at("kind").get<std::string>());
    n.attrs.kernel = p.at("kernel").get<std::vector<int64_t>>();
    n.attrs.weight_bits = p.at("weight_bits").get<int>();
    return n;
  }

  VxbPlan param_plan(const json& p) const {
    const OpNode n = param_node(p);
    return vxb_plan(weight_matrix_of(n, hw_, DimBinding{bit_binding_from_string(p.at("binding").get<std::string>())}),
                    hw_);
  }

  Timed prepare(const MetaOp& op) {
    Timed t;
    t.op = &op;
    t.acc = op_access(op, flow_, hw_, shapes_);
    const int64_t wc = hw_.xbar.write_cycles_per_row;
    switch (op.code) {
      case OpCode::ReadCore: {
        const json& p = flow_.param(op.param);
        const VxbPlan plan = param_plan(p);
        const int cpr = p.at("cores_per_replica").get<int>();
        int64_t rows = 0;
        for (const auto& tl : plan.tiles) rows = std::max(rows, tl.rows());
        int64_t windows = 1;
        if (p.at("kind").get<std::string>() == "conv")
          for (const auto& r : p.at("replicas"))
            if (r.at("core").get<int>() == op.core)
              windows = (r.at("oh")[1].get<int64_t>() - r.at("oh")[0].get<int64_t>()) * p.at("out_dims")[2].get<int64_t>();
        // Windows stream through the core; the first load and the last
        // accumulate/store are not hidden.
        const int64_t K = plan.tiles.empty() ? 0 : p.at("kernel")[0].get<int64_t>();
        const Limit& alu = hw_.core.alu_ops_per_cycle;
        const int64_t acc = alu ? std::max<int64_t>(1, ceil_div(K, *alu)) : 1;
        int64_t in_rows = 0;
        for (const auto& tl : plan.tiles) in_rows = std::max(in_rows, tl.row_hi);
        t.dur = windows * cpm(rows) + mov_cycles(in_rows, Level{}, Level{op.core}) + acc +
                mov_cycles(K, Level{op.core}, Level{});
        t.is_read = true;
        t.xbars = plan.xbars_per_vxb;
        t.node = p.at("node").get<int>();
        for (int c = op.core; c < op.core + cpr; ++c)
          for (int x = 0; x < hw_.core.xb_number; ++x) {
            t.res.push_back(gxb(c, x));
            t.xb_reads.push_back(gxb(c, x));
          }
        break;
      }
      case OpCode::WriteCore: {
        const json& p = flow_.param(op.param);
        const VxbPlan plan = param_plan(p);
        int64_t rows = 0;
        for (const auto& tl : plan.tiles) rows = std::max(rows, tl.rows());
        t.dur = rows * wc;
        for (int x = 0; x < hw_.core.xb_number; ++x) {
          t.res.push_back(gxb(op.core, x));
          t.xb_writes.push_back(gxb(op.core, x));
        }
        break;
      }
      case OpCode::WriteXb:
      case OpCode::WriteRows: {
        const json& p = flow_.param(op.param);
        const int64_t rows = op.code == OpCode::WriteXb
                                 ? p.at("rows")[1].get<int64_t>() - p.at("rows")[0].get<int64_t>()
                                 : op.row_hi - op.row_lo + 1;
        t.dur = rows * wc;
        const int g = gxb(op.core, op.xb);
        t.res.push_back(g);
        t.xb_writes.push_back(g);
        xb_node_[g] = p.at("node").get<int>();
        break;
      }
      case OpCode::ReadXb:
      case OpCode::ReadRows: {
        const int64_t rows = op.code == OpCode::ReadXb ? shapes_.at({op.core, op.xb}).rows : op.row_hi - op.row_lo + 1;
        t.dur = cpm(rows);
        t.is_read = true;
        t.xbars = 1;
        const int g = gxb(op.core, op.xb);
        t.res.push_back(g);
        t.xb_reads.push_back(g);
        t.node = xb_node_[g];
        break;
      }
      case OpCode::Dcom: {
        const Limit& alu = op.src_level.is_l0() ? hw_.chip.alu_ops_per_cycle : hw_.core.alu_ops_per_cycle;
        t.dur = alu ? std::max<int64_t>(1, ceil_div(op.len, *alu)) : 1;
        break;
      }
      case OpCode::Mov: {
        t.dur = mov_cycles(op.len, op.src_level, op.des_level);
        t.is_mov = true;
        break;
      }
    }
    // Operand readiness.
    for (const auto& r : t.acc.reads) t.ready = std::max(t.ready, board_[r.level.core].query(r.lo, r.hi).w);
    for (const auto& r : t.acc.writes) {
      const auto s = board_[r.level.core].query(r.lo, r.hi);
      t.ready = std::max({t.ready, s.w, s.r});
    }
    for (int g : t.xb_reads) t.ready = std::max(t.ready, xb_w_[g]);
    for (int g : t.xb_writes) t.ready = std::max({t.ready, xb_w_[g], xb_r_[g]});
    return t;
  }

  bool fits(const Timed& t, int64_t s) const {
    for (int r : t.res)
      if (!timelines_[r].free(s, t.dur)) return false;
    return true;
  }

  int64_t earliest(const Timed& t, int64_t from) const {
    int64_t s = from;
    for (;;) {
      int64_t next = s;
      for (int r : t.res) next = std::max(next, timelines_[r].fit(s, t.dur));
      if (next == s && fits(t, s)) return s;
      s = next;
    }
  }

  void commit(const Timed& t, int64_t s) {
    const int64_t e = s + t.dur;
    for (int r : t.res) timelines_[r].book(s, t.dur);
    for (const auto& r : t.acc.reads) board_[r.level.core].on_read(r.lo, r.hi, e);
    for (const auto& r : t.acc.writes) {
      board_[r.level.core].on_write(r.lo, r.hi, e);
      if (r.level.is_l0())
        for (const auto& b : flow_.outputs) {
          const int64_t n = b.dims.at(0) * b.dims.at(1) * b.dims.at(2);
          if (b.level.is_l0() && r.lo < b.addr + n && b.addr < r.hi) out_writes_[b.name].push_back(e);
        }
    }
    for (int g : t.xb_reads) xb_r_[g] = std::max(xb_r_[g], e);
    for (int g : t.xb_writes) xb_w_[g] = std::max(xb_w_[g], e);
    if (t.is_read) {
      ++read_ops_;
      if (t.node >= 0) {
        auto it = first_read_.find(t.node);
        if (it == first_read_.end() || s < it->second) first_read_[t.node] = s;
        last_read_end_[t.node] = std::max(last_read_end_[t.node], e);
      }
    }
    if (t.is_read || t.is_mov) events_.push_back({s, e, t.xbars, t.is_mov && t.dur > 0 ? 1 : 0});
    makespan_ = std::max(makespan_, e);
  }

  void statement(const Statement& st) {
    std::vector<Timed> ops;
    ops.reserve(st.ops.size());
    for (const auto& op : st.ops) ops.push_back(prepare(op));
    // Reads of a parallel block fire together; everything else is placed on its own.
    int64_t joint = -1;
    std::vector<size_t> group;
    for (size_t k = 0; k < ops.size(); ++k)
      if (st.parallel && ops[k].is_read) {
        group.push_back(k);
        joint = std::max(joint, ops[k].ready);
      }
    if (!group.empty()) {
      for (;;) {
        int64_t next = joint;
        for (size_t k : group) next = std::max(next, earliest(ops[k], joint));
        if (next == joint) break;
        joint = next;
      }
    }
    for (size_t k = 0; k < ops.size(); ++k) {
      const bool grouped = std::find(group.begin(), group.end(), k) != group.end();
      commit(ops[k], grouped ? joint : earliest(ops[k], ops[k].ready));
    }
  }
};

}  // namespace

SimReport perf_model(const Flow& flow, const HwSpec& hw) { return PerfModel(flow, hw).run(); }

json report_to_json(const SimReport& r) {
  json trace = json::array();
  for (const auto& s : r.trace) trace.push_back({s.cycle, s.xbars, s.movs});
  json first = json::object(), last = json::object(), outs = json::object();
  for (const auto& [k, v] : r.first_read) first[std::to_string(k)] = v;
  for (const auto& [k, v] : r.last_read_end) last[std::to_string(k)] = v;
  for (const auto& [k, v] : r.output_writes) outs[k] = v;
  return {{"total_cycles", r.total_cycles},
          {"program_cycles", r.program_cycles},
          {"xbar_active_cycles", r.xbar_active_cycles},
          {"read_ops", r.read_ops},
          {"peak_active_xbars", r.peak_xbars},
          {"peak_power_proxy", r.peak_power_proxy},
          {"utilization", r.utilization},
          {"first_read", first},
          {"last_read_end", last},
          {"output_writes", outs},
          {"trace", trace}};
}

std::string report_table(const SimReport& r) {
  std::ostringstream os;
  os << "total_cycles        " << r.total_cycles << "\n"
     << "program_cycles      " << r.program_cycles << "\n"
     << "read_ops            " << r.read_ops << "\n"
     << "xbar_active_cycles  " << r.xbar_active_cycles << "\n"
     << "peak_active_xbars   " << r.peak_xbars << "\n"
     << "peak_power_proxy    " << r.peak_power_proxy << "\n"
     << "utilization         " << r.utilization << "\n";
  for (const auto& [n, t] : r.first_read) os << "first_read n" << n << "       " << t << "\n";
  return os.str();
}

}  // namespace cim
