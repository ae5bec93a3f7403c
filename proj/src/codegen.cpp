#include "cimmlc/codegen.hpp"

#include <algorithm>
#include <queue>
#include <set>

#include "cimmlc/errors.hpp"
#include "cimmlc/lowering.hpp"

namespace cim {

using nlohmann::json;

L0Layout layout_l0(const CompGraph& graph, const HwSpec& hw, int64_t zero_page_bytes) {
  L0Layout l;
  int64_t top = 0;
  for (const auto& in : graph.inputs) {
    l.input_addr.push_back(top);
    top += in.spec.elements();
  }
  for (int id : topo_order(graph)) {
    l.node_addr[id] = top;
    top += graph.node(id).output.elements();
  }
  l.zero_page = top;
  l.end = top + zero_page_bytes;
  if (hw.chip.l0_size_bits && l.end * 8 > *hw.chip.l0_size_bits)
    throw CapacityError("activations need " + std::to_string(l.end * 8) + " bits of L0; the chip has " +
                        std::to_string(*hw.chip.l0_size_bits));
  return l;
}

std::pair<int64_t, int64_t> replica_band(int64_t units, int dup, int j) {
  const int64_t b = (units + dup - 1) / dup;
  return {std::min(units, j * b), std::min(units, (j + 1) * b)};
}

namespace {

std::vector<int64_t> chw(const TensorSpec& s) {
  const Shape3 sh = as_shape3(s);
  return {sh.c, sh.h, sh.w};
}

void bind_io(Flow& flow, const CompGraph& graph, const L0Layout& l0) {
  for (size_t i = 0; i < graph.inputs.size(); ++i)
    flow.inputs.push_back({graph.inputs[i].name, Level{}, l0.input_addr[i], chw(graph.inputs[i].spec)});
  for (int id : graph.outputs)
    flow.outputs.push_back({"n" + std::to_string(id), Level{}, l0.node_addr.at(id), chw(graph.node(id).output)});
}

Statement single(MetaOp op) { return {false, {std::move(op)}}; }

void push_block(Flow& flow, std::vector<MetaOp> ops) {
  if (ops.empty()) return;
  if (ops.size() == 1)
    flow.body.push_back(single(std::move(ops[0])));
  else
    flow.body.push_back({true, std::move(ops)});
}

// Digital node evaluated on L0 as a whole tensor.
MetaOp digital_op(Flow& flow, const CompGraph& graph, const OpNode& n, const L0Layout& l0) {
  const int64_t src = l0.addr(n.inputs[0]);
  const int64_t des = l0.node_addr.at(n.id);
  const int64_t len = n.output.elements();
  switch (n.kind) {
    case OpKind::Relu:
      return dcom("relu", Level{}, src, des, len);
    case OpKind::Add: {
      const std::string p = flow.add_param(
          {{"type", "add"}, {"node", n.id}, {"src_b", l0.addr(n.inputs[1])}, {"shift", requant_shift(n, graph)}});
      return dcom("add", Level{}, src, des, len, p);
    }
    case OpKind::MaxPool:
    case OpKind::AvgPool: {
      const std::string p = flow.add_param({{"type", to_string(n.kind)},
                                            {"node", n.id},
                                            {"in_dims", chw(graph.value_spec(n.inputs[0]))},
                                            {"out_dims", chw(n.output)},
                                            {"kernel", n.attrs.kernel},
                                            {"stride", n.attrs.stride},
                                            {"padding", n.attrs.padding}});
      return dcom(to_string(n.kind), Level{}, src, des, len, p);
    }
    default:
      throw EmitError("node " + std::to_string(n.id) + " is not digital");
  }
}

json weight_fields(const OpNode& n, const HwSpec& hw) {
  return {{"node", n.id},
          {"kind", to_string(n.kind)},
          {"weight", n.attrs.weight},
          {"kernel", n.attrs.kernel},
          {"weight_bits", n.attrs.weight_bits},
          {"cell_bits", hw.xbar.cell_precision_bits},
          {"binding", to_string(hw.xbar.bit_binding)}};
}

}  // namespace

// ---------------------------------------------------------------- CM

Flow emit_cm(const CompGraph& graph, const SubgraphPlan& plan, const HwSpec& hw) {
  Flow flow;
  flow.arch_hash = arch_hash(hw);
  flow.mode = "cm";
  const L0Layout l0 = layout_l0(graph, hw, 0);
  bind_io(flow, graph, l0);
  const auto order = topo_order(graph);
  for (const auto& sub : plan.subgraphs) {
    std::map<int, std::string> pname;
    std::vector<Statement> writes;
    for (int id : sub.nodes) {
      const OpNode& n = graph.node(id);
      if (!is_cim(n.kind)) continue;
      if (!sub.dup.cores.count(id)) throw EmitError("node " + std::to_string(id) + " has no core assignment");
      const int D = sub.dup.dup.at(id);
      const int cpr = sub.dup.cores_per_replica.at(id);
      const auto& cores = sub.dup.cores.at(id);
      const Shape3 out = as_shape3(n.output);
      const int64_t units = n.kind == OpKind::Conv ? out.h : 1;
      json reps = json::array();
      for (int j = 0; j < D; ++j) {
        const auto [lo, hi] = replica_band(units, D, j);
        if (lo >= hi) continue;
        reps.push_back({{"core", cores.at(j * cpr)}, {"oh", {lo, hi}}});
      }
      json p = weight_fields(n, hw);
      p["type"] = "core";
      p["stride"] = n.attrs.stride;
      p["padding"] = n.attrs.padding;
      p["shift"] = requant_shift(n, graph);
      p["in_dims"] = chw(graph.value_spec(n.inputs[0]));
      p["out_dims"] = chw(n.output);
      p["replicas"] = reps;
      p["cores_per_replica"] = cpr;
      pname[id] = flow.add_param(p);
      for (const auto& r : reps)
        for (int k = 0; k < cpr; ++k) writes.push_back(single(write_core(r["core"].get<int>() + k, pname[id])));
    }
    flow.body.insert(flow.body.end(), writes.begin(), writes.end());
    for (int id : order) {
      if (std::find(sub.nodes.begin(), sub.nodes.end(), id) == sub.nodes.end()) continue;
      const OpNode& n = graph.node(id);
      if (!is_cim(n.kind)) {
        flow.body.push_back(single(digital_op(flow, graph, n, l0)));
        continue;
      }
      const json& p = flow.param(pname[id]);
      const Shape3 in = as_shape3(graph.value_spec(n.inputs[0]));
      const Shape3 out = as_shape3(n.output);
      std::vector<MetaOp> reads;
      for (const auto& r : p["replicas"]) {
        const int64_t lo = r["oh"][0].get<int64_t>();
        int64_t src = l0.addr(n.inputs[0]);
        int64_t des = l0.node_addr.at(id);
        if (n.kind == OpKind::Conv) {
          src += std::max<int64_t>(0, lo * n.attrs.stride - n.attrs.padding) * in.w * in.c;
          des += lo * out.w * out.c;
        }
        reads.push_back(read_core(to_string(n.kind), pname[id], r["core"].get<int>(), src, des));
      }
      push_block(flow, std::move(reads));
    }
  }
  return flow;
}

// ---------------------------------------------------------------- XBM / WLM

namespace {

class L1Alloc {
 public:
  L1Alloc(int cores, Limit bits) : top_(cores, 0) {
    if (bits) size_ = *bits / 8;
  }

  // Wraps every core whose remaining space is below `need` back to 0.
  void reserve(int64_t need) {
    if (!size_) return;
    if (need > *size_) throw CapacityError("one segment needs " + std::to_string(need) + " bytes of L1");
    for (auto& t : top_)
      if (t + need > *size_) t = 0;
  }

  int64_t alloc(int core, int64_t bytes) {
    const int64_t a = top_.at(core);
    top_[core] += bytes;
    return a;
  }

 private:
  std::vector<int64_t> top_;
  std::optional<int64_t> size_;
};

struct UnitKey {
  int node = 0;
  int64_t seg = 0;
  auto operator<=>(const UnitKey&) const = default;
};

struct XbEmitter {
  const CompGraph& graph;
  const MappingPlan& map;
  const VxbSchedule& sch;
  const HwSpec& hw;
  bool staged;
  bool wlm;
  Flow flow;
  L0Layout l0;
  L1Alloc l1;
  std::map<std::string, std::string> param_cache;
  std::map<int, std::string> shift_param;
  std::map<int, int> folded_relu;  // CIM node -> relu node evaluated per segment
  std::set<int> folded;

  XbEmitter(const CompGraph& g, const MappingPlan& m, const VxbSchedule& s, const HwSpec& h, bool st)
      : graph(g), map(m), sch(s), hw(h), staged(st), wlm(m.mode == Mode::WLM),
        l1(h.chip.core_number, h.core.l1_size_bits) {}

  std::string param(const json& p) {
    const std::string key = p.dump();
    auto it = param_cache.find(key);
    if (it != param_cache.end()) return it->second;
    return param_cache[key] = flow.add_param(p);
  }

  std::string tile_param(const OpNode& n, const NodeMapping& m, const Tile& t, int64_t lo, int64_t hi) {
    json p = weight_fields(n, hw);
    p["type"] = "tile";
    p["rows"] = {lo, hi};
    p["cols"] = {t.col_lo, t.col_hi};
    p["plane"] = t.plane;
    (void)m;
    return param(p);
  }

  void preamble(const Subgraph& sub) {
    for (int id : sub.nodes) {
      if (!map.nodes.count(id)) continue;
      const NodeMapping& m = map.nodes.at(id);
      const OpNode& n = graph.node(id);
      for (const auto& inst : m.instances)
        for (const auto& tm : inst.tiles) {
          const Tile& t = m.plan.tiles[tm.tile];
          if (!wlm) {
            const XbRef xb = tm.groups.front().xb;
            flow.body.push_back(single(write_xb(xb.core, xb.xb, tile_param(n, m, t, t.row_lo, t.row_hi))));
          } else if (!inst.remapped || tm.groups.size() == 1) {
            const XbRef xb = tm.groups.front().xb;
            flow.body.push_back(single(write_rows(xb.core, xb.xb, 0, static_cast<int>(t.rows()) - 1,
                                                  tile_param(n, m, t, t.row_lo, t.row_hi))));
          } else {
            for (const auto& g : tm.groups)
              flow.body.push_back(single(write_rows(g.xb.core, g.xb.xb, g.xb_row_lo, g.xb_row_lo + g.slab_rows - 1,
                                                    tile_param(n, m, t, g.row_lo, g.row_hi))));
          }
        }
      json parts = json::array();
      for (const auto& tm : m.instances.front().tiles) {
        const Tile& t = m.plan.tiles[tm.tile];
        for (size_t k = 0; k < tm.groups.size(); ++k) parts.push_back({t.plane, t.col_lo, t.cols()});
      }
      json p = weight_fields(n, hw);
      p.erase("weight");
      p.erase("kernel");
      p["type"] = "shift_acc";
      p["K"] = m.wm.logical_cols;
      p["planes"] = m.wm.bit_planes;
      p["shift"] = requant_shift(n, graph);
      p["parts"] = parts;
      shift_param[id] = param(p);
    }
  }

  int64_t segment_bound(const NodeMapping& m) const {
    int64_t b = 0;
    for (const auto& inst : m.instances) {
      for (const auto& tm : inst.tiles)
        for (const auto& g : tm.groups) b += m.plan.tiles[tm.tile].rows() + 2 * m.plan.tiles[tm.tile].cols() * 4 + g.rows();
      b += m.wm.logical_cols;
    }
    return b;
  }

  void emit_segment(int id, int64_t s) {
    const NodeMapping& m = map.nodes.at(id);
    const OpNode& n = graph.node(id);
    const Shape3 in = as_shape3(graph.value_spec(n.inputs[0]));
    const int64_t in_base = l0.addr(n.inputs[0]);
    const int64_t out_base = l0.node_addr.at(id);
    const int64_t K = m.wm.logical_cols;
    const int64_t ninst = static_cast<int64_t>(m.instances.size());
    l1.reserve(segment_bound(m));

    struct Live {
      int64_t window;
      const Instance* inst;
      int64_t block = 0;  // partial block on the home core
      std::vector<int64_t> part_off;
    };
    std::vector<Live> live;
    for (int64_t i = 0; i < ninst; ++i) {
      const int64_t w = s * ninst + i;
      if (w >= m.windows) break;
      Live lv{w, &m.instances[i], 0, {}};
      int64_t bytes = 0;
      for (const auto& tm : lv.inst->tiles)
        for (size_t k = 0; k < tm.groups.size(); ++k) {
          lv.part_off.push_back(bytes);
          bytes += m.plan.tiles[tm.tile].cols() * 4;
        }
      lv.block = l1.alloc(lv.inst->home_core, bytes);
      live.push_back(std::move(lv));
    }

    std::vector<MetaOp> part_movs;
    const int slices = staged ? m.plan.v : 1;
    for (int vs = 0; vs < slices; ++vs) {
      std::vector<MetaOp> movs;
      std::vector<std::vector<MetaOp>> reads;  // per group index
      std::map<std::tuple<int, int64_t, int64_t, int64_t>, int64_t> slice_addr;
      for (const auto& lv : live) {
        size_t part = 0;
        for (const auto& tm : lv.inst->tiles) {
          const Tile& t = m.plan.tiles[tm.tile];
          if (staged && t.vt != vs) {
            part += tm.groups.size();
            continue;
          }
          for (size_t k = 0; k < tm.groups.size(); ++k, ++part) {
            const RowGroup& g = tm.groups[k];
            const int core = g.xb.core;
            const int64_t lo = lv.inst->remapped ? g.row_lo : t.row_lo;
            const int64_t hi = lv.inst->remapped ? g.row_hi : t.row_hi;
            const auto key = std::make_tuple(core, lv.window, lo, hi);
            auto it = slice_addr.find(key);
            if (it == slice_addr.end()) {
              const int64_t base = l1.alloc(core, hi - lo);
              it = slice_addr.emplace(key, base).first;
              emit_slice_movs(n, in, in_base, lv.window, lo, hi, Level{core}, base, movs);
            }
            const int64_t src = it->second + (g.row_lo - lo);
            const int64_t width = t.cols() * 4;
            int64_t des;
            if (core == lv.inst->home_core) {
              des = lv.block + lv.part_off[part];
            } else {
              des = l1.alloc(core, width);
              part_movs.push_back(mov(Level{core}, des, Level{lv.inst->home_core}, lv.block + lv.part_off[part], width));
            }
            const size_t slot = lv.inst->remapped ? 0 : k;
            if (reads.size() <= slot) reads.resize(slot + 1);
            if (wlm)
              reads[slot].push_back(read_rows(core, g.xb.xb, g.xb_row_lo, g.xb_row_lo + static_cast<int>(g.rows()) - 1,
                                              src, des));
            else
              reads[slot].push_back(read_xb(core, g.xb.xb, src, des));
          }
        }
      }
      push_block(flow, std::move(movs));
      for (auto& r : reads) push_block(flow, std::move(r));
    }
    push_block(flow, std::move(part_movs));

    std::vector<MetaOp> accs, outs;
    for (const auto& lv : live) {
      const int home = lv.inst->home_core;
      const int64_t tmp = l1.alloc(home, K);
      accs.push_back(dcom("shift_acc", Level{home}, lv.block, tmp, K, shift_param.at(id)));
      outs.push_back(mov(Level{home}, tmp, Level{}, out_base + lv.window * K, K));
    }
    push_block(flow, std::move(accs));
    push_block(flow, std::move(outs));

    auto fr = folded_relu.find(id);
    if (fr != folded_relu.end()) {
      const int64_t lo = live.front().window * K;
      const int64_t len = static_cast<int64_t>(live.size()) * K;
      flow.body.push_back(single(dcom("relu", Level{}, out_base + lo, l0.node_addr.at(fr->second) + lo, len)));
    }
  }

  // Gathers matrix rows [lo, hi) of one window into L1, merging contiguous sources.
  void emit_slice_movs(const OpNode& n, const Shape3& in, int64_t in_base, int64_t window, int64_t lo, int64_t hi,
                       Level dst, int64_t base, std::vector<MetaOp>& movs) {
    int64_t run_src = -2, run_dst = 0, run_len = 0;
    bool run_pad = false;
    auto flush = [&] {
      if (run_len > 0) movs.push_back(mov(Level{}, run_src, dst, run_dst, run_len));
      run_len = 0;
    };
    for (int64_t r = lo; r < hi; ++r) {
      const int64_t off = window_source(n, in, window, r);
      const bool pad = off < 0;
      const int64_t d = base + (r - lo);
      if (run_len > 0 && pad == run_pad && (pad || in_base + off == run_src + run_len)) {
        ++run_len;
        continue;
      }
      flush();
      run_pad = pad;
      run_src = pad ? l0.zero_page : in_base + off;
      run_dst = d;
      run_len = 1;
    }
    flush();
  }

  Flow run() {
    flow.arch_hash = arch_hash(hw);
    flow.mode = wlm ? "wlm" : "xbm";
    l0 = layout_l0(graph, hw, hw.xbar.xb_rows);
    bind_io(flow, graph, l0);
    const auto order = topo_order(graph);
    std::map<int, int> topo_index;
    for (size_t i = 0; i < order.size(); ++i) topo_index[order[i]] = static_cast<int>(i);

    for (size_t si = 0; si < map.cg.subgraphs.size(); ++si) {
      const Subgraph& sub = map.cg.subgraphs[si];
      std::set<int> members(sub.nodes.begin(), sub.nodes.end());
      for (int id : sub.nodes) {
        const OpNode& n = graph.node(id);
        if (n.kind == OpKind::Relu && !n.inputs[0].graph_input && members.count(n.inputs[0].index) &&
            map.nodes.count(n.inputs[0].index) && !folded_relu.count(n.inputs[0].index)) {
          folded_relu[n.inputs[0].index] = id;
          folded.insert(id);
        }
      }
      preamble(sub);

      // Units: CIM segments, and whole digital nodes that are not folded.
      std::map<UnitKey, std::set<UnitKey>> deps;
      std::map<UnitKey, int64_t> prio;
      std::map<std::pair<int, int64_t>, int64_t> seg_start;
      for (const auto& a : sch.acts) {
        if (!map.nodes.count(a.node)) continue;
        const int64_t seg = a.window / static_cast<int64_t>(map.nodes.at(a.node).instances.size());
        auto key = std::make_pair(a.node, seg);
        auto it = seg_start.find(key);
        if (it == seg_start.end() || a.start < it->second) seg_start[key] = a.start;
      }
      auto producer_units = [&](const ValueRef& r, std::vector<int64_t>* pixels, std::set<UnitKey>& out) {
        if (r.graph_input || !members.count(r.index)) return;
        int p = r.index;
        if (folded.count(p)) p = graph.node(p).inputs[0].index;
        if (map.nodes.count(p)) {
          const int64_t n = static_cast<int64_t>(map.nodes.at(p).instances.size());
          if (pixels) {
            for (int64_t px : *pixels) out.insert({p, px / n});
          } else {
            for (int64_t s = 0; s < map.nodes.at(p).segments(); ++s) out.insert({p, s});
          }
        } else {
          out.insert({p, 0});
        }
      };
      std::vector<int64_t> pix;
      for (int id : sub.nodes) {
        if (folded.count(id)) continue;
        const OpNode& n = graph.node(id);
        if (map.nodes.count(id)) {
          const NodeMapping& m = map.nodes.at(id);
          const Shape3 in = as_shape3(graph.value_spec(n.inputs[0]));
          for (int64_t s = 0; s < m.segments(); ++s) {
            const UnitKey u{id, s};
            std::set<int64_t> need;
            for (int64_t w = s * m.instances.size(); w < std::min<int64_t>(m.windows, (s + 1) * m.instances.size());
                 ++w)
              for (int64_t r = 0; r < m.wm.phys_rows; ++r) {
                const int64_t off = window_source(n, in, w, r);
                if (off >= 0) need.insert(off / in.c);
              }
            pix.assign(need.begin(), need.end());
            producer_units(n.inputs[0], &pix, deps[u]);
            auto it = seg_start.find({id, s});
            prio[u] = it == seg_start.end() ? 0 : it->second;
          }
        } else {
          const UnitKey u{id, 0};
          deps[u];
          for (const auto& r : n.inputs) producer_units(r, nullptr, deps[u]);
          int64_t t = 0;
          for (const auto& r : n.inputs)
            if (!r.graph_input && sch.ready.count(r.index))
              for (int64_t v : sch.ready.at(r.index)) t = std::max(t, v);
          prio[u] = t;
        }
      }
      // Kahn's algorithm, earliest scheduled unit first.
      std::map<UnitKey, int> indeg;
      std::map<UnitKey, std::vector<UnitKey>> succ;
      for (const auto& [u, ds] : deps) {
        indeg[u] += 0;
        for (const auto& d : ds) {
          succ[d].push_back(u);
          ++indeg[u];
        }
      }
      using Entry = std::tuple<int64_t, int, int64_t, int>;
      std::priority_queue<Entry, std::vector<Entry>, std::greater<>> ready;
      for (const auto& [u, d] : indeg)
        if (d == 0) ready.push({prio[u], topo_index[u.node], u.seg, u.node});
      size_t emitted = 0;
      while (!ready.empty()) {
        const auto [pr, ti, seg, node] = ready.top();
        ready.pop();
        (void)pr;
        (void)ti;
        ++emitted;
        if (map.nodes.count(node))
          emit_segment(node, seg);
        else
          flow.body.push_back(single(digital_op(flow, graph, graph.node(node), l0)));
        for (const auto& v : succ[{node, seg}])
          if (--indeg[v] == 0) ready.push({prio[v], topo_index[v.node], v.seg, v.node});
      }
      if (emitted != deps.size()) throw EmitError("segment dependency cycle");
    }
    return flow;
  }
};

}  // namespace

Flow emit_xbm(const CompGraph& graph, const MappingPlan& map, const VxbSchedule& schedule, const HwSpec& hw,
              bool staged) {
  if (map.mode != Mode::XBM) throw EmitError("emit_xbm needs an XBM mapping");
  return XbEmitter(graph, map, schedule, hw, staged).run();
}

Flow emit_wlm(const CompGraph& graph, const MappingPlan& map, const VxbSchedule& schedule, const HwSpec& hw,
              bool staged) {
  if (map.mode != Mode::WLM) throw EmitError("emit_wlm needs a WLM mapping");
  return XbEmitter(graph, map, schedule, hw, staged).run();
}

}  // namespace cim
