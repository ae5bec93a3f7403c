#include "cimmlc/sched_vvm.hpp"

#include <algorithm>
#include <set>

#include "cimmlc/errors.hpp"

namespace cim {

int row_split(int64_t rows_used, const HwSpec& hw) {
  const int64_t r = std::min<int64_t>(rows_used, hw.xbar.xb_rows);
  return static_cast<int>((r + hw.xbar.parallel_row - 1) / hw.xbar.parallel_row);
}

int row_split(const WeightMatrix& wm, const HwSpec& hw) { return row_split(wm.phys_rows, hw); }

namespace {

Instance remapped_instance(const NodeMapping& m, const HwSpec& hw, const std::vector<XbRef>& xbs, size_t& next) {
  Instance inst;
  inst.remapped = true;
  const int pr = hw.xbar.parallel_row;
  for (size_t t = 0; t < m.plan.tiles.size(); ++t) {
    const Tile& tile = m.plan.tiles[t];
    TileMap tm;
    tm.tile = static_cast<int>(t);
    for (int64_t lo = tile.row_lo; lo < tile.row_hi; lo += pr) {
      const int64_t hi = std::min<int64_t>(tile.row_hi, lo + pr);
      tm.groups.push_back({lo, hi, xbs.at(next++), 0, pr});
    }
    inst.tiles.push_back(std::move(tm));
  }
  inst.home_core = inst.tiles.front().groups.front().xb.core;
  return inst;
}

Instance naive_instance(const NodeMapping& m, const HwSpec& hw, const std::vector<XbRef>& xbs, size_t& next) {
  Instance inst;
  const int pr = hw.xbar.parallel_row;
  for (size_t t = 0; t < m.plan.tiles.size(); ++t) {
    const Tile& tile = m.plan.tiles[t];
    const XbRef xb = xbs.at(next++);
    TileMap tm;
    tm.tile = static_cast<int>(t);
    for (int64_t lo = tile.row_lo; lo < tile.row_hi; lo += pr) {
      const int64_t hi = std::min<int64_t>(tile.row_hi, lo + pr);
      tm.groups.push_back({lo, hi, xb, static_cast<int>(lo - tile.row_lo), static_cast<int>(hi - lo)});
    }
    inst.tiles.push_back(std::move(tm));
  }
  inst.home_core = inst.tiles.front().groups.front().xb.core;
  return inst;
}

// Cycles for one window on an instance: row groups in parallel when remapped, in turn otherwise.
int64_t window_cycles(const NodeMapping& m, const HwSpec& hw, bool remapped) {
  const int pr = hw.xbar.parallel_row;
  int64_t worst = 0;
  for (const auto& t : m.plan.tiles) {
    int64_t sum = 0, top = 0;
    for (int64_t lo = t.row_lo; lo < t.row_hi; lo += pr) {
      const int64_t c = cycles_per_mvm(hw, std::min<int64_t>(t.row_hi, lo + pr) - lo, 8);
      sum += c;
      top = std::max(top, c);
    }
    worst = std::max(worst, remapped ? top : sum);
  }
  return worst;
}

}  // namespace

void remap(MappingPlan& map, const CompGraph& graph, const HwSpec& hw) {
  const int xbn = hw.core.xb_number;
  for (size_t si = 0; si < map.cg.subgraphs.size(); ++si) {
    const Subgraph& sub = map.cg.subgraphs[si];
    std::set<int> granted;
    std::set<XbRef> claimed;
    for (int id : sub.nodes)
      if (map.nodes.count(id)) {
        for (int c : map.nodes[id].granted_cores) granted.insert(c);
        for (const auto& inst : map.nodes[id].instances)
          for (const auto& xb : inst.crossbars()) claimed.insert(xb);
      }
    for (int id : topo_order(graph)) {
      if (!map.nodes.count(id) || map.nodes[id].subgraph != static_cast<int>(si)) continue;
      NodeMapping& m = map.nodes[id];
      int xr = 0;
      for (const auto& t : m.plan.tiles) xr += row_split(t.rows(), hw);
      const int X = m.plan.xbars_per_vxb;
      if (xr == X) {
        for (auto& inst : m.instances) inst.remapped = true;
        m.remapped = static_cast<int>(m.instances.size());
        continue;
      }
      std::vector<XbRef> pool;
      for (const auto& inst : m.instances)
        for (const auto& t : inst.tiles) pool.push_back(t.groups.front().xb);
      const size_t dpp = pool.size() / xr;
      std::vector<Instance> insts;
      size_t next = 0;
      if (dpp >= 1) {
        // Windows advance in lockstep, so a slow naive instance paces the whole segment.
        const double t_r = static_cast<double>(window_cycles(m, hw, true));
        const double t_n = static_cast<double>(window_cycles(m, hw, false));
        if (static_cast<double>(dpp) / t_r < static_cast<double>(m.instances.size()) / t_n) {
          m.remapped = 0;
          continue;
        }
        for (size_t k = 0; k < dpp; ++k) insts.push_back(remapped_instance(m, hw, pool, next));
        const size_t naive = (pool.size() - next) / X;
        if (naive > 0 && static_cast<double>(dpp + naive) / std::max(t_r, t_n) > static_cast<double>(dpp) / t_r)
          for (size_t k = 0; k < naive; ++k) insts.push_back(naive_instance(m, hw, pool, next));
        for (size_t k = next; k < pool.size(); ++k) claimed.erase(pool[k]);
      } else {
        if (1.0 / static_cast<double>(window_cycles(m, hw, true)) <
            static_cast<double>(m.instances.size()) / static_cast<double>(window_cycles(m, hw, false))) {
          m.remapped = 0;
          continue;
        }
        std::vector<XbRef> cand = pool;
        for (int c : m.granted_cores)
          for (int x = 0; x < xbn; ++x)
            if (!claimed.count({c, x})) cand.push_back({c, x});
        for (int c = 0; c < hw.chip.core_number && static_cast<int>(cand.size()) < xr; ++c) {
          if (granted.count(c)) continue;
          for (int x = 0; x < xbn; ++x)
            if (!claimed.count({c, x})) cand.push_back({c, x});
        }
        if (static_cast<int>(cand.size()) < xr) {
          m.remapped = 0;
          continue;
        }
        insts.push_back(remapped_instance(m, hw, cand, next));
        for (size_t k = 0; k < next; ++k) claimed.insert(cand[k]);
      }
      m.instances = std::move(insts);
      m.remapped = static_cast<int>(dpp >= 1 ? dpp : 1);
    }
  }
}

VxbSchedule vvm_pipeline(const CompGraph& graph, const HwSpec& hw, const MappingPlan& map, bool staged) {
  return mvm_pipeline(graph, hw, map, staged);
}

nlohmann::json remap_to_json(const MappingPlan& map, const HwSpec& hw) {
  nlohmann::json doc = mapping_to_json(map, hw);
  for (auto& n : doc["nodes"]) {
    const NodeMapping& m = map.nodes.at(n["id"].get<int>());
    std::vector<int> g;
    for (const auto& t : m.plan.tiles) g.push_back(row_split(t.rows(), hw));
    n["split_factor"] = g;
    n["naive_instances"] = static_cast<int>(m.instances.size()) - m.remapped;
  }
  return doc;
}

}  // namespace cim
