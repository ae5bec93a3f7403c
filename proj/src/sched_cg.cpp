#include "cimmlc/sched_cg.hpp"

#include <algorithm>
#include <functional>
#include <limits>

#include "cimmlc/errors.hpp"

namespace cim {

namespace {

constexpr int64_t kInf = std::numeric_limits<int64_t>::max() / 4;

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

}  // namespace

NodeCost node_cost(const OpNode& node, const CompGraph& graph, const HwSpec& hw) {
  NodeCost c;
  c.node = node.id;
  const Shape3 out = as_shape3(node.output);
  if (is_cim(node.kind)) {
    const WeightMatrix wm = weight_matrix_of(node, hw);
    const VxbPlan plan = vxb_plan(wm, hw);
    const int in_bits = graph.value_spec(node.inputs[0]).precision_bits;
    const int64_t rows_used = std::min<int64_t>(wm.phys_rows, hw.xbar.xb_rows);
    const int64_t cpm = cycles_per_mvm(hw, rows_used, in_bits);
    c.cim = true;
    c.cores_per_replica = plan.cores_per_replica;
    for (const auto& t : plan.tiles) c.max_tile_rows = std::max(c.max_tile_rows, t.rows());
    if (node.kind == OpKind::Conv) {
      c.units = out.h;
      c.unit_work = out.w * cpm;
      c.row_elems = out.w * out.c;
    } else {
      c.units = 1;
      c.unit_work = cpm;
      c.row_elems = out.c;
    }
  } else {
    c.units = 1;
    c.unit_work = node_work(node, graph, hw);
    c.row_elems = out.elements();
  }
  return c;
}

int64_t node_work(const OpNode& node, const CompGraph& graph, const HwSpec& hw) {
  if (is_cim(node.kind)) {
    const NodeCost c = node_cost(node, graph, hw);
    return c.units * c.unit_work;
  }
  const int64_t ops = as_shape3(node.output).elements();
  if (!hw.chip.alu_ops_per_cycle) return 1;
  return std::max<int64_t>(1, ceil_div(ops, *hw.chip.alu_ops_per_cycle));
}

int DupAssignment::total_cores() const {
  int n = 0;
  for (const auto& [id, d] : dup) {
    auto it = cores_per_replica.find(id);
    if (it != cores_per_replica.end()) n += d * it->second;
  }
  return n;
}

DupAssignment cg_duplicate(const std::vector<NodeCost>& costs, int core_budget) {
  std::vector<const NodeCost*> cim;
  DupAssignment out;
  int need = 0;
  for (const auto& c : costs) {
    out.dup[c.node] = 1;
    out.cores_per_replica[c.node] = c.cim ? c.cores_per_replica : 0;
    if (c.cim) {
      cim.push_back(&c);
      need += c.cores_per_replica;
    }
  }
  if (need > core_budget)
    throw CapacityError("operators need " + std::to_string(need) + " cores at duplication 1; budget is " +
                        std::to_string(core_budget));
  if (cim.empty()) return out;

  // dp[c]: smallest max-II of the nodes seen so far using at most c cores.
  const int B = core_budget;
  std::vector<int64_t> dp(B + 1, 0), next(B + 1);
  for (const NodeCost* n : cim) {
    std::fill(next.begin(), next.end(), kInf);
    for (int c = 0; c <= B; ++c) {
      for (int64_t d = 1; d <= n->units && d * n->cores_per_replica <= c; ++d) {
        const int64_t prev = dp[c - d * n->cores_per_replica];
        if (prev >= kInf) continue;
        next[c] = std::min(next[c], std::max(prev, n->time(static_cast<int>(d))));
      }
    }
    dp.swap(next);
  }
  const int64_t best = dp[B];
  // Fewest replicas that still meet the optimum.
  for (const NodeCost* n : cim) {
    int d = 1;
    while (n->time(d) > best) ++d;
    out.dup[n->node] = d;
    out.ii = std::max(out.ii, n->time(d));
  }
  return out;
}

DupAssignment cg_duplicate(const CompGraph& graph, const std::vector<int>& nodes, const HwSpec& hw) {
  std::vector<NodeCost> costs;
  for (int id : nodes) costs.push_back(node_cost(graph.node(id), graph, hw));
  return cg_duplicate(costs, hw.chip.core_number);
}

DupAssignment cg_duplicate(const CompGraph& graph, const HwSpec& hw) {
  return cg_duplicate(graph, topo_order(graph), hw);
}

int64_t exhaustive_min_ii(const std::vector<NodeCost>& costs, int core_budget) {
  std::vector<const NodeCost*> cim;
  for (const auto& c : costs)
    if (c.cim) cim.push_back(&c);
  int64_t best = kInf;
  std::function<void(size_t, int, int64_t)> rec = [&](size_t i, int left, int64_t ii) {
    if (i == cim.size()) {
      best = std::min(best, ii);
      return;
    }
    const NodeCost* n = cim[i];
    for (int64_t d = 1; d <= n->units && d * n->cores_per_replica <= left; ++d)
      rec(i + 1, left - static_cast<int>(d * n->cores_per_replica), std::max(ii, n->time(static_cast<int>(d))));
  };
  rec(0, core_budget, 0);
  return cim.empty() ? 0 : best;
}

DupAssignment balance_pipeline(const CompGraph& graph, const DupAssignment& dup, const HwSpec& hw) {
  DupAssignment out = dup;
  out.ii = 0;
  for (auto& [id, d] : out.dup) {
    const OpNode& n = graph.node(id);
    if (!is_cim(n.kind)) continue;
    const NodeCost c = node_cost(n, graph, hw);
    const int64_t row_bits = c.row_elems * 8;
    int64_t cap = d;
    if (hw.chip.l0_bw_bits_per_cycle) cap = std::min(cap, *hw.chip.l0_bw_bits_per_cycle * c.unit_work / row_bits);
    if (hw.chip.noc_cost_cycles_per_bit > 0)
      cap = std::min(cap, static_cast<int64_t>(c.unit_work / (row_bits * hw.chip.noc_cost_cycles_per_bit)));
    if (hw.chip.alu_ops_per_cycle) {
      for (int s : graph.consumers(id))
        if (!is_cim(graph.node(s).kind)) cap = std::min(cap, *hw.chip.alu_ops_per_cycle * c.unit_work / c.row_elems);
    }
    d = static_cast<int>(std::max<int64_t>(1, cap));
    // Fewest replicas giving the same band count; avoids empty bands.
    const int64_t bands = (c.units + d - 1) / d;
    d = static_cast<int>((c.units + bands - 1) / bands);
    out.ii = std::max(out.ii, c.time(d));
  }
  return out;
}

void assign_cores(DupAssignment& dup, const std::vector<int>& order, int first_core) {
  int next = first_core;
  dup.cores.clear();
  for (int id : order) {
    auto it = dup.cores_per_replica.find(id);
    if (it == dup.cores_per_replica.end() || it->second == 0) continue;
    const int n = dup.dup.at(id) * it->second;
    auto& list = dup.cores[id];
    for (int i = 0; i < n; ++i) list.push_back(next++);
  }
}

int64_t pipelined_latency(const std::vector<NodeCost>& costs, const std::map<int, int>& dup) {
  if (costs.empty()) return 0;
  int64_t slots = 1, sum = 0, tmax = 0;
  for (const auto& c : costs) {
    const int d = dup.count(c.node) ? dup.at(c.node) : 1;
    slots = std::max(slots, ceil_div(c.units, d));
    const int64_t t = c.time(d);
    sum += t;
    tmax = std::max(tmax, t);
  }
  return ceil_div(sum + tmax * (slots - 1), slots);
}

int64_t sequential_latency(const std::vector<NodeCost>& costs, const std::map<int, int>& dup) {
  int64_t sum = 0;
  for (const auto& c : costs) sum += c.time(dup.count(c.node) ? dup.at(c.node) : 1);
  return sum;
}

int64_t SubgraphPlan::total_latency() const {
  int64_t t = 0;
  for (const auto& s : subgraphs) t += s.latency + s.reprogram_cycles;
  return t;
}

int SubgraphPlan::subgraph_of(int node) const {
  for (size_t i = 0; i < subgraphs.size(); ++i)
    if (std::find(subgraphs[i].nodes.begin(), subgraphs[i].nodes.end(), node) != subgraphs[i].nodes.end())
      return static_cast<int>(i);
  return -1;
}

namespace {

struct Segmenter {
  const CompGraph& graph;
  const HwSpec& hw;
  std::vector<int> order;
  std::vector<NodeCost> costs;  // parallel to order
  std::vector<int64_t> greedy_memo;

  Segmenter(const CompGraph& g, const HwSpec& h) : graph(g), hw(h), order(topo_order(g)) {
    for (int id : order) costs.push_back(node_cost(g.node(id), g, h));
    greedy_memo.assign(order.size() + 1, -1);
  }

  int64_t act_bits(size_t i) const { return as_shape3(graph.node(order[i]).output).elements() * 8; }

  // End (exclusive) of the maximal segment starting at `a`.
  size_t grow(size_t a) const {
    int cores = 0;
    int64_t bits = 0;
    size_t b = a;
    while (b < order.size()) {
      const int nc = cores + (costs[b].cim ? costs[b].cores_per_replica : 0);
      const int64_t nb = bits + act_bits(b);
      if (b > a && (nc > hw.chip.core_number || (hw.chip.l0_size_bits && nb > *hw.chip.l0_size_bits))) break;
      if (nc > hw.chip.core_number)
        throw CapacityError("node " + std::to_string(order[b]) + " alone exceeds the chip's " +
                            std::to_string(hw.chip.core_number) + " cores");
      cores = nc;
      bits = nb;
      ++b;
    }
    return b;
  }

  Subgraph build(size_t a, size_t b, bool first) const {
    Subgraph s;
    std::vector<NodeCost> sub(costs.begin() + a, costs.begin() + b);
    s.nodes.assign(order.begin() + a, order.begin() + b);
    s.dup = balance_pipeline(graph, cg_duplicate(sub, hw.chip.core_number), hw);
    assign_cores(s.dup, s.nodes);
    s.latency = pipelined_latency(sub, s.dup.dup);
    if (!first) {
      int64_t rows = 0;
      for (const auto& c : sub) rows = std::max(rows, c.cim ? c.max_tile_rows : 0);
      s.reprogram_cycles = rows * hw.xbar.write_cycles_per_row;
    }
    return s;
  }

  int64_t cost_of(const Subgraph& s) const { return s.latency + s.reprogram_cycles; }

  int64_t greedy_from(size_t a) {
    if (a >= order.size()) return 0;
    if (greedy_memo[a] >= 0) return greedy_memo[a];
    const size_t b = grow(a);
    return greedy_memo[a] = cost_of(build(a, b, a == 0)) + greedy_from(b);
  }
};

}  // namespace

SubgraphPlan segment_graph_greedy(const CompGraph& graph, const HwSpec& hw) {
  Segmenter seg(graph, hw);
  SubgraphPlan plan;
  for (size_t a = 0; a < seg.order.size();) {
    const size_t b = seg.grow(a);
    plan.subgraphs.push_back(seg.build(a, b, a == 0));
    a = b;
  }
  return plan;
}

SubgraphPlan segment_graph(const CompGraph& graph, const HwSpec& hw) {
  Segmenter seg(graph, hw);
  SubgraphPlan plan;
  for (size_t a = 0; a < seg.order.size();) {
    const size_t b = seg.grow(a);
    Subgraph best = seg.build(a, b, a == 0);
    size_t end = b;
    int64_t best_cost = seg.cost_of(best) + seg.greedy_from(b);
    // Pop tail nodes while the estimated total keeps dropping.
    for (size_t e = b - 1; e > a; --e) {
      Subgraph cand = seg.build(a, e, a == 0);
      const int64_t cost = seg.cost_of(cand) + seg.greedy_from(e);
      if (cost >= best_cost) break;
      best = std::move(cand);
      best_cost = cost;
      end = e;
    }
    plan.subgraphs.push_back(std::move(best));
    a = end;
  }
  return plan;
}

CgVariants cg_variants(const CompGraph& graph, const HwSpec& hw) {
  CgVariants v;
  const SubgraphPlan plan = segment_graph(graph, hw);
  for (const auto& s : plan.subgraphs) {
    std::vector<NodeCost> costs;
    for (int id : s.nodes) costs.push_back(node_cost(graph.node(id), graph, hw));
    const std::map<int, int> ones;
    v.none += sequential_latency(costs, ones) + s.reprogram_cycles;
    v.dup_only += sequential_latency(costs, s.dup.dup) + s.reprogram_cycles;
    v.pipe_only += pipelined_latency(costs, ones) + s.reprogram_cycles;
    v.pipe_dup += pipelined_latency(costs, s.dup.dup) + s.reprogram_cycles;
  }
  return v;
}

void annotate(CompGraph& graph, const SubgraphPlan& plan) {
  for (size_t i = 0; i < plan.subgraphs.size(); ++i) {
    const auto& s = plan.subgraphs[i];
    for (int id : s.nodes) {
      OpNode& n = graph.node(id);
      n.anno.dup = s.dup.dup.at(id);
      n.anno.subgraph = static_cast<int>(i);
      auto it = s.dup.cores.find(id);
      n.anno.cores = it == s.dup.cores.end() ? std::vector<int>{} : it->second;
    }
  }
}

nlohmann::json cg_to_json(const CompGraph& graph, const SubgraphPlan& plan) {
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& s : plan.subgraphs) {
    nlohmann::json nodes = nlohmann::json::array();
    for (int id : s.nodes) {
      const OpNode& n = graph.node(id);
      auto it = s.dup.cores.find(id);
      nodes.push_back({{"id", id},
                       {"kind", to_string(n.kind)},
                       {"D", s.dup.dup.at(id)},
                       {"cores_per_replica", s.dup.cores_per_replica.at(id)},
                       {"cores", it == s.dup.cores.end() ? std::vector<int>{} : it->second}});
    }
    subs.push_back({{"nodes", nodes},
                    {"ii", s.dup.ii},
                    {"latency", s.latency},
                    {"reprogram_cycles", s.reprogram_cycles}});
  }
  return {{"subgraphs", subs}, {"total_latency", plan.total_latency()}};
}

}  // namespace cim
