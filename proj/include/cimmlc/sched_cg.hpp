#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "cimmlc/arch.hpp"
#include "cimmlc/graph.hpp"
#include "cimmlc/lowering.hpp"

namespace cim {

// Work of one node split into `units` equal bands (output rows for conv).
struct NodeCost {
  int node = 0;
  bool cim = false;
  int64_t units = 1;
  int64_t unit_work = 1;  // cycles per band on one replica
  int cores_per_replica = 0;
  int64_t row_elems = 0;  // output elements per band
  int64_t max_tile_rows = 0;

  int64_t time(int dup) const { return (units + dup - 1) / dup * unit_work; }
};

NodeCost node_cost(const OpNode& node, const CompGraph& graph, const HwSpec& hw);
int64_t node_work(const OpNode& node, const CompGraph& graph, const HwSpec& hw);

struct DupAssignment {
  std::map<int, int> dup;
  std::map<int, int> cores_per_replica;
  std::map<int, std::vector<int>> cores;
  int64_t ii = 0;

  int total_cores() const;
};

// Duplication over the listed CIM nodes minimising the initiation interval under a core budget.
DupAssignment cg_duplicate(const std::vector<NodeCost>& costs, int core_budget);
DupAssignment cg_duplicate(const CompGraph& graph, const std::vector<int>& nodes, const HwSpec& hw);
DupAssignment cg_duplicate(const CompGraph& graph, const HwSpec& hw);

// Smallest achievable II by trying every duplication vector. Exponential; tests only.
int64_t exhaustive_min_ii(const std::vector<NodeCost>& costs, int core_budget);

DupAssignment balance_pipeline(const CompGraph& graph, const DupAssignment& dup, const HwSpec& hw);

// Consecutive core ids per node, in the given order.
void assign_cores(DupAssignment& dup, const std::vector<int>& order, int first_core = 0);

struct Subgraph {
  std::vector<int> nodes;
  DupAssignment dup;
  int64_t reprogram_cycles = 0;  // paid before this subgraph runs; 0 for the first
  int64_t latency = 0;
};

struct SubgraphPlan {
  std::vector<Subgraph> subgraphs;

  int64_t total_latency() const;
  int subgraph_of(int node) const;
};

// Pipelined latency of a subgraph under a duplication: fill offsets plus II times remaining slots.
int64_t pipelined_latency(const std::vector<NodeCost>& costs, const std::map<int, int>& dup);
int64_t sequential_latency(const std::vector<NodeCost>& costs, const std::map<int, int>& dup);

SubgraphPlan segment_graph(const CompGraph& graph, const HwSpec& hw);
// Greedy split with no popping; the reference the popped split must not lose to.
SubgraphPlan segment_graph_greedy(const CompGraph& graph, const HwSpec& hw);

// Latency of the four CG variants.
struct CgVariants {
  int64_t none = 0;
  int64_t dup_only = 0;
  int64_t pipe_only = 0;
  int64_t pipe_dup = 0;
};
CgVariants cg_variants(const CompGraph& graph, const HwSpec& hw);

// Annotates graph nodes with dup / subgraph / cores.
void annotate(CompGraph& graph, const SubgraphPlan& plan);
nlohmann::json cg_to_json(const CompGraph& graph, const SubgraphPlan& plan);

}  // namespace cim
