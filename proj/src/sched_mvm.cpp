#include "cimmlc/sched_mvm.hpp"

#include <algorithm>
#include <set>

#include "cimmlc/errors.hpp"

namespace cim {

std::vector<XbRef> Instance::crossbars() const {
  std::vector<XbRef> out;
  for (const auto& t : tiles)
    for (const auto& g : t.groups)
      if (std::find(out.begin(), out.end(), g.xb) == out.end()) out.push_back(g.xb);
  return out;
}

int mvm_duplicate(int cores_per_replica, int dup, int core_vxb, int num_vxb, int64_t mvm_count) {
  int64_t d = int64_t{cores_per_replica} * dup * core_vxb / std::max(1, num_vxb);
  d = std::max<int64_t>(d, dup);
  d = std::min<int64_t>(d, std::max<int64_t>(mvm_count, dup));
  return static_cast<int>(d);
}

namespace {

std::vector<RowGroup> tile_groups(const Tile& t, XbRef xb, const HwSpec& hw, Mode mode) {
  std::vector<RowGroup> out;
  if (mode != Mode::WLM) {
    out.push_back({t.row_lo, t.row_hi, xb, 0, static_cast<int>(t.rows())});
    return out;
  }
  const int pr = hw.xbar.parallel_row;
  for (int64_t lo = t.row_lo; lo < t.row_hi; lo += pr) {
    const int64_t hi = std::min<int64_t>(t.row_hi, lo + pr);
    out.push_back({lo, hi, xb, static_cast<int>(lo - t.row_lo), static_cast<int>(hi - lo)});
  }
  return out;
}

}  // namespace

MappingPlan build_mapping(const CompGraph& graph, const SubgraphPlan& cg, const HwSpec& hw, Mode mode) {
  MappingPlan map;
  map.mode = mode;
  map.cg = cg;
  const int xbn = hw.core.xb_number;
  for (size_t si = 0; si < cg.subgraphs.size(); ++si) {
    const Subgraph& sub = cg.subgraphs[si];
    for (int id : sub.nodes) {
      const OpNode& node = graph.node(id);
      if (!is_cim(node.kind)) continue;
      NodeMapping m;
      m.node = id;
      m.subgraph = static_cast<int>(si);
      m.wm = weight_matrix_of(node, hw);
      m.plan = vxb_plan(m.wm, hw);
      m.dup = sub.dup.dup.at(id);
      m.granted_cores = sub.dup.cores.at(id);
      m.windows = mvm_count(node);
      const int X = m.plan.xbars_per_vxb;
      const int cpr = m.plan.cores_per_replica;
      m.dup_mvm = mvm_duplicate(cpr, m.dup, m.plan.core_vxb, m.plan.num_vxb, m.windows);
      for (int j = 0; j < m.dup_mvm; ++j) {
        Instance inst;
        for (size_t t = 0; t < m.plan.tiles.size(); ++t) {
          XbRef xb;
          if (m.plan.core_vxb >= 1) {
            xb.core = m.granted_cores.at(j / m.plan.core_vxb);
            xb.xb = (j % m.plan.core_vxb) * X + static_cast<int>(t);
          } else {
            xb.core = m.granted_cores.at(j * cpr + static_cast<int>(t) / xbn);
            xb.xb = static_cast<int>(t) % xbn;
          }
          inst.tiles.push_back({static_cast<int>(t), tile_groups(m.plan.tiles[t], xb, hw, mode)});
        }
        inst.home_core = inst.tiles.front().groups.front().xb.core;
        m.instances.push_back(std::move(inst));
      }
      map.nodes[id] = std::move(m);
    }
  }
  return map;
}

int64_t dcom_cycles(int64_t len, const Limit& alu) {
  if (!alu) return 1;
  return std::max<int64_t>(1, (len + *alu - 1) / *alu);
}

int64_t VxbSchedule::first_start(int node) const {
  int64_t best = -1;
  for (const auto& a : acts)
    if (a.node == node && (best < 0 || a.start < best)) best = a.start;
  return best;
}

namespace {

// Pixels of the input that matrix rows [lo, hi) touch in `window`.
void needed_pixels(const OpNode& node, const Shape3& in, int64_t window, int64_t lo, int64_t hi,
                   std::vector<int64_t>& out) {
  out.clear();
  const int64_t C = in.c;
  if (node.kind == OpKind::FC) {
    for (int64_t q = lo / C; q <= (hi - 1) / C; ++q) out.push_back(q);
    return;
  }
  const int64_t S = node.attrs.kernel[3];
  const int64_t wout = as_shape3(node.output).w;
  const int64_t oh = window / wout, ow = window % wout;
  for (int64_t q = lo / C; q <= (hi - 1) / C; ++q) {
    const int64_t ih = oh * node.attrs.stride - node.attrs.padding + q / S;
    const int64_t iw = ow * node.attrs.stride - node.attrs.padding + q % S;
    if (ih < 0 || iw < 0 || ih >= in.h || iw >= in.w) continue;
    out.push_back(ih * in.w + iw);
  }
}

int64_t read_cycles(const NodeMapping& m, const Instance& inst, const TileMap& tm, const HwSpec& hw, int in_bits) {
  if (inst.remapped) {
    int64_t c = 0;
    for (const auto& g : tm.groups) c = std::max(c, cycles_per_mvm(hw, g.rows(), in_bits));
    return c;
  }
  int64_t c = 0;
  for (const auto& g : tm.groups) c += cycles_per_mvm(hw, g.rows(), in_bits);
  (void)m;
  return c;
}

}  // namespace

VxbSchedule mvm_pipeline(const CompGraph& graph, const HwSpec& hw, const MappingPlan& map, bool staged) {
  VxbSchedule sch;
  std::map<int, int64_t> xb_free;
  std::vector<int64_t> sub_start(map.cg.subgraphs.size(), 0);
  std::vector<int64_t> sub_end(map.cg.subgraphs.size(), 0);

  auto input_ready = [&](const ValueRef& r) -> std::vector<int64_t> {
    if (r.graph_input) {
      const Shape3 s = as_shape3(graph.inputs[r.index].spec);
      return std::vector<int64_t>(s.h * s.w, 0);
    }
    return sch.ready.at(r.index);
  };

  std::vector<int64_t> pix;
  for (size_t si = 0; si < map.cg.subgraphs.size(); ++si) {
    const Subgraph& sub = map.cg.subgraphs[si];
    if (si > 0) sub_start[si] = sub_end[si - 1] + sub.reprogram_cycles;
    const int64_t t0 = sub_start[si];
    for (int id : topo_order(graph)) {
      if (std::find(sub.nodes.begin(), sub.nodes.end(), id) == sub.nodes.end()) continue;
      const OpNode& node = graph.node(id);
      const Shape3 out = as_shape3(node.output);
      std::vector<int64_t> ready(out.h * out.w, t0);

      if (is_cim(node.kind)) {
        const NodeMapping& m = map.nodes.at(id);
        const std::vector<int64_t> in_ready = input_ready(node.inputs[0]);
        const Shape3 in = as_shape3(graph.value_spec(node.inputs[0]));
        const int in_bits = graph.value_spec(node.inputs[0]).precision_bits;
        const int64_t n = static_cast<int64_t>(m.instances.size());
        const int vslices = m.plan.v;
        std::vector<int64_t> win_ready(m.windows, t0);
        for (int64_t s = 0; s < m.segments(); ++s) {
          for (int vs = 0; vs < (staged ? vslices : 1); ++vs) {
            struct Pending {
              int inst;
              int64_t window;
              const TileMap* tm;
              int64_t dur;
            };
            std::vector<Pending> reads;
            int64_t start = t0;
            for (int64_t i = 0; i < n; ++i) {
              const int64_t w = s * n + i;
              if (w >= m.windows) break;
              const Instance& inst = m.instances[i];
              for (const auto& tm : inst.tiles) {
                const Tile& tile = m.plan.tiles[tm.tile];
                if (staged && tile.vt != vs) continue;
                needed_pixels(node, in, w, tile.row_lo, tile.row_hi, pix);
                for (int64_t p : pix) start = std::max(start, in_ready[p]);
                for (const auto& g : tm.groups) start = std::max(start, xb_free[g.xb.global(hw)]);
                reads.push_back({static_cast<int>(i), w, &tm, read_cycles(m, inst, tm, hw, in_bits)});
              }
            }
            for (const auto& r : reads) {
              Activation a;
              a.node = id;
              a.instance = r.inst;
              a.window = r.window;
              a.tile = r.tm->tile;
              a.start = start;
              a.end = start + r.dur;
              for (const auto& g : r.tm->groups) {
                const int gx = g.xb.global(hw);
                if (std::find(a.xbars.begin(), a.xbars.end(), gx) == a.xbars.end()) a.xbars.push_back(gx);
                xb_free[gx] = a.end;
                a.in_bytes += g.rows();
              }
              win_ready[r.window] = std::max(win_ready[r.window], a.end + 1);
              sch.acts.push_back(std::move(a));
            }
          }
        }
        if (node.kind == OpKind::FC)
          ready.assign(1, win_ready[0]);
        else
          ready = win_ready;
      } else {
        const Limit& alu = hw.chip.alu_ops_per_cycle;
        const ValueRef& src = node.inputs[0];
        if (node.kind == OpKind::Relu && !src.graph_input && is_cim(graph.node(src.index).kind) &&
            map.nodes.count(src.index)) {
          const NodeMapping& pm = map.nodes.at(src.index);
          const std::vector<int64_t> in_ready = input_ready(src);
          const int64_t n = static_cast<int64_t>(pm.instances.size());
          const int64_t per_win = out.c * static_cast<int64_t>(in_ready.size()) / pm.windows;
          for (int64_t s = 0; s < pm.segments(); ++s) {
            const int64_t lo = s * n, hi = std::min(pm.windows, lo + n);
            int64_t t = t0;
            for (int64_t w = lo; w < hi; ++w) t = std::max(t, in_ready[w * in_ready.size() / pm.windows]);
            t += dcom_cycles((hi - lo) * per_win, alu);
            for (int64_t w = lo; w < hi; ++w)
              for (size_t p = w * in_ready.size() / pm.windows; p < (w + 1) * in_ready.size() / pm.windows; ++p)
                ready[p] = t;
          }
        } else {
          int64_t t = t0;
          for (const auto& r : node.inputs)
            for (int64_t v : input_ready(r)) t = std::max(t, v);
          ready.assign(ready.size(), t + dcom_cycles(out.elements(), alu));
        }
      }
      for (int64_t v : ready) sub_end[si] = std::max(sub_end[si], v);
      sch.ready[id] = std::move(ready);
    }
    sch.makespan = std::max(sch.makespan, sub_end[si]);
  }
  return sch;
}

int peak_active(const VxbSchedule& schedule) {
  std::map<int64_t, int64_t> delta;
  for (const auto& a : schedule.acts) {
    if (a.end <= a.start) continue;
    delta[a.start] += static_cast<int64_t>(a.xbars.size());
    delta[a.end] -= static_cast<int64_t>(a.xbars.size());
  }
  int64_t cur = 0, best = 0;
  for (const auto& [t, d] : delta) {
    cur += d;
    best = std::max(best, cur);
  }
  return static_cast<int>(best);
}

nlohmann::json schedule_to_json(const VxbSchedule& schedule) {
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& a : schedule.acts)
    acts.push_back({{"node", a.node},
                    {"instance", a.instance},
                    {"window", a.window},
                    {"tile", a.tile},
                    {"start", a.start},
                    {"end", a.end},
                    {"xbars", a.xbars},
                    {"in_bytes", a.in_bytes}});
  return {{"activations", acts}, {"makespan", schedule.makespan}, {"peak_active", peak_active(schedule)}};
}

nlohmann::json mapping_to_json(const MappingPlan& map, const HwSpec& hw) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& [id, m] : map.nodes) {
    nlohmann::json insts = nlohmann::json::array();
    for (const auto& inst : m.instances) {
      nlohmann::json tiles = nlohmann::json::array();
      for (const auto& tm : inst.tiles) {
        nlohmann::json groups = nlohmann::json::array();
        for (const auto& g : tm.groups)
          groups.push_back({{"rows", {g.row_lo, g.row_hi}},
                            {"core", g.xb.core},
                            {"xb", g.xb.xb},
                            {"xb_rows", {g.xb_row_lo, g.xb_row_lo + g.slab_rows - 1}}});
        tiles.push_back({{"tile", tm.tile}, {"groups", groups}});
      }
      insts.push_back({{"remapped", inst.remapped}, {"home_core", inst.home_core}, {"tiles", tiles}});
    }
    nodes.push_back({{"id", id},
                     {"subgraph", m.subgraph},
                     {"D", m.dup},
                     {"D_mvm", m.dup_mvm},
                     {"D_vvm", m.remapped},
                     {"xbars_per_vxb", m.plan.xbars_per_vxb},
                     {"core_vxb", m.plan.core_vxb},
                     {"tile_grid", {m.plan.v, m.plan.h, m.plan.planes}},
                     {"windows", m.windows},
                     {"segments", m.segments()},
                     {"granted_cores", m.granted_cores},
                     {"instances", insts}});
  }
  (void)hw;
  return {{"mode", to_string(map.mode)}, {"nodes", nodes}};
}

}  // namespace cim
