#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "cimmlc/arch.hpp"
#include "cimmlc/graph.hpp"
#include "cimmlc/lowering.hpp"
#include "cimmlc/sched_cg.hpp"

namespace cim {

struct XbRef {
  int core = 0;
  int xb = 0;

  int global(const HwSpec& hw) const { return core * hw.core.xb_number + xb; }
  bool operator==(const XbRef&) const = default;
  auto operator<=>(const XbRef&) const = default;
};

// A run of matrix rows read together. Written at crossbar rows
// [xb_row_lo, xb_row_lo + slab_rows); only the first row_hi - row_lo are meaningful.
struct RowGroup {
  int64_t row_lo = 0, row_hi = 0;
  XbRef xb;
  int xb_row_lo = 0;
  int slab_rows = 0;

  int64_t rows() const { return row_hi - row_lo; }
};

struct TileMap {
  int tile = 0;
  std::vector<RowGroup> groups;
};

// One copy of an operator's weights able to compute a window on its own.
struct Instance {
  bool remapped = false;
  int home_core = 0;
  std::vector<TileMap> tiles;  // parallel to VxbPlan::tiles

  std::vector<XbRef> crossbars() const;
};

struct NodeMapping {
  int node = 0;
  int subgraph = 0;
  WeightMatrix wm;
  VxbPlan plan;
  int dup = 1;        // D
  int dup_mvm = 1;    // D'
  int remapped = 0;   // D'': instances using row remapping
  std::vector<int> granted_cores;
  std::vector<Instance> instances;
  int64_t windows = 1;

  int64_t segments() const {
    const int64_t n = static_cast<int64_t>(instances.size());
    return (windows + n - 1) / n;
  }
};

struct MappingPlan {
  Mode mode = Mode::XBM;
  SubgraphPlan cg;
  std::map<int, NodeMapping> nodes;
};

// floor(cores_per_replica * dup * core_vxb / num_vxb), never below dup, never above mvm_count.
int mvm_duplicate(int cores_per_replica, int dup, int core_vxb, int num_vxb, int64_t mvm_count = INT64_MAX);

// Places D' instances of every CIM node inside the cores CG granted it.
MappingPlan build_mapping(const CompGraph& graph, const SubgraphPlan& cg, const HwSpec& hw, Mode mode);

struct Activation {
  int node = 0;
  int instance = 0;
  int64_t window = 0;
  int tile = -1;  // -1: all tiles together
  int64_t start = 0, end = 0;
  std::vector<int> xbars;  // global crossbar ids
  int64_t in_bytes = 0;
};

struct VxbSchedule {
  std::vector<Activation> acts;
  // Per node, per output pixel (h * W + w): cycle the value is usable.
  std::map<int, std::vector<int64_t>> ready;
  int64_t makespan = 0;

  // -1 if the node never activates.
  int64_t first_start(int node) const;
};

// Event-driven crossbar schedule. `staged`: a tile fires once its own input slice is
// ready; otherwise all tiles of a window wait for the whole window input.
VxbSchedule mvm_pipeline(const CompGraph& graph, const HwSpec& hw, const MappingPlan& map, bool staged = true);

int peak_active(const VxbSchedule& schedule);
nlohmann::json schedule_to_json(const VxbSchedule& schedule);
nlohmann::json mapping_to_json(const MappingPlan& map, const HwSpec& hw);

// Cycle cost of a DCOM over `len` elements on an ALU.
int64_t dcom_cycles(int64_t len, const Limit& alu);

}  // namespace cim
