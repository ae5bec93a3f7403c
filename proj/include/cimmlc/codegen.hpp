#pragma once

#include "cimmlc/flow.hpp"
#include "cimmlc/graph.hpp"
#include "cimmlc/sched_cg.hpp"
#include "cimmlc/sched_mvm.hpp"

namespace cim {

// L0 placement: graph inputs from address 0, then node outputs in topological order,
// then a zero page used as the source of padding.
struct L0Layout {
  std::vector<int64_t> input_addr;
  std::map<int, int64_t> node_addr;
  int64_t zero_page = 0;
  int64_t end = 0;

  int64_t addr(const ValueRef& r) const { return r.graph_input ? input_addr.at(r.index) : node_addr.at(r.index); }
};

L0Layout layout_l0(const CompGraph& graph, const HwSpec& hw, int64_t zero_page_bytes);

// Band of output rows [lo, hi) computed by replica j of D.
std::pair<int64_t, int64_t> replica_band(int64_t units, int dup, int j);

Flow emit_cm(const CompGraph& graph, const SubgraphPlan& plan, const HwSpec& hw);

// XBM and WLM share one emitter; the instruction set follows map.mode.
// `staged`: one mov+read block per vertical tile slice; otherwise one block per segment.
Flow emit_xbm(const CompGraph& graph, const MappingPlan& map, const VxbSchedule& schedule, const HwSpec& hw,
              bool staged = true);
Flow emit_wlm(const CompGraph& graph, const MappingPlan& map, const VxbSchedule& schedule, const HwSpec& hw,
              bool staged = true);

}  // namespace cim
