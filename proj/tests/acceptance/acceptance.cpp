// One line per acceptance criterion; exit status is the number of failures.
#include <chrono>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "../support.hpp"
#include "cimmlc/compiler.hpp"
#include "cimmlc/errors.hpp"
#include "cimmlc/sched_vvm.hpp"

using namespace cim;
using Clock = std::chrono::steady_clock;

namespace {

struct Check {
  std::ostringstream why;
  bool ok = true;

  template <class T>
  void expect(bool cond, const T& msg) {
    if (!cond) {
      if (!ok) why << "; ";
      why << msg;
      ok = false;
    }
  }
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

const std::vector<std::string> kModels{"conv_relu", "pipe_pair", "row_split", "vgg_small", "resblock", "mlp", "fc_single", "vgg8"};
const std::vector<std::string> kArchs{"baseline", "example", "pipe_pair", "row_split", "sram_macro", "mesh_tile", "tiny_macro"};

int64_t steady_interval(const std::vector<int64_t>& w) {
  if (w.size() < 8) return -1;
  return (w.back() - w[w.size() - 8]) / 7;
}

void golden_walkthrough(Check& c) {
  const auto t0 = Clock::now();
  const HwSpec hw = testing::arch("example");
  const CompGraph g = testing::model("conv_relu");

  const Compiled cm = compile(g, hw, {Mode::CM});
  const FlowStats s_cm = flow_stats(cm.flow);
  c.expect(cm.graph.node(0).anno.dup == 2, "CM D != 2");
  c.expect(s_cm.parallel_blocks == 1 && s_cm.read_blocks.count({OpCode::ReadCore, 2}) &&
               s_cm.read_blocks.at({OpCode::ReadCore, 2}) == 1,
           "CM flow lacks exactly one 2-way ReadCore block");
  bool addrs = false;
  for (const auto& st : cm.flow.body)
    if (st.parallel)
      addrs = st.ops == std::vector<MetaOp>{read_core("conv", "p0", 0, 0, 3072), read_core("conv", "p0", 1, 1440, 19456)};
  c.expect(addrs, "CM ReadCore addresses differ from 0/3072 and 1440/19456");

  const Compiled xb = compile(g, hw, {Mode::XBM});
  const FlowStats s_xb = flow_stats(xb.flow);
  c.expect(xb.map->nodes.at(0).dup_mvm == 4, "XBM D' != 4");
  c.expect(s_xb.read_blocks.size() == 1 && s_xb.read_blocks.count({OpCode::ReadXb, 4}) &&
               s_xb.read_blocks.at({OpCode::ReadXb, 4}) == 256,
           "XBM flow is not 256 blocks of 4 ReadXb");

  const Compiled wl = compile(g, hw, {Mode::WLM});
  const FlowStats s_wl = flow_stats(wl.flow);
  const NodeMapping& m = wl.map->nodes.at(0);
  c.expect(row_split(m.wm, hw) == 2, "WLM g != 2");
  c.expect(m.remapped == 2, "WLM D'' != 2");
  int64_t blocks = 0;
  for (const auto& [k, n] : s_wl.read_blocks)
    if (k.first == OpCode::ReadRows) blocks += n;
  c.expect(blocks == 512 && s_wl.read_blocks.size() == 1, "WLM flow does not have 512 compute blocks");
  bool second_group = false;
  for (const auto& st : wl.flow.body)
    for (const auto& op : st.ops)
      if (op.code == OpCode::WriteRows && op.core == 0 && op.xb == 1 && op.row_lo == 0 && op.row_hi == 15 &&
          wl.flow.param(op.param).at("rows")[0] == 16)
        second_group = true;
  c.expect(second_group, "second row group not written to crossbar 1 rows 0-15");

  const double secs = seconds_since(t0);
  c.expect(secs < 5.0, "took " + std::to_string(secs) + " s");
  c.why << (c.ok ? "D=2, D'=4 with 256x4 ReadXb, g=2 D''=2 with 512 blocks, " : " (") << secs << " s"
        << (c.ok ? "" : ")");
}

void functional_equivalence(Check& c) {
  const auto t0 = Clock::now();
  int graphs = 0, cases = 0, passed = 0;
  std::string first;
  for (uint64_t seed = 1; graphs < 100 || seed <= 120; ++seed) {
    const CompGraph g = random_graph(seed, 5, 16);
    ++graphs;
    for (Mode mode : {Mode::CM, Mode::XBM, Mode::WLM}) {
      const int cell = 1 + static_cast<int>(seed % 4);
      const BitBinding bind = seed % 3 == 0 ? BitBinding::XB : BitBinding::XBC;
      const HwSpec hw = testing::small_arch(mode, cell, bind, 32, 32, seed % 2 ? 8 : 16);
      ++cases;
      try {
        const VerifyReport r = verify(g, hw, seed * 7919, 1);
        if (r.passed == 1)
          ++passed;
        else if (first.empty())
          first = "graph seed " + std::to_string(seed) + " " + to_string(mode) + ": " + r.counterexample;
      } catch (const Error& e) {
        if (first.empty()) first = "graph seed " + std::to_string(seed) + " " + to_string(mode) + ": " + e.what();
      }
    }
  }
  const double secs = seconds_since(t0);
  c.expect(passed == cases, first);
  c.expect(secs < 120.0, "took " + std::to_string(secs) + " s");
  c.why << (c.ok ? "" : "; ") << passed << "/" << cases << " bit-exact over " << graphs << " graphs, " << secs << " s";
}

void peak_reduction(Check& c) {
  const HwSpec hw = testing::arch("pipe_pair");
  const CompGraph g = testing::model("pipe_pair");
  CompileOptions o;
  const Compiled s = compile(g, hw, o);
  o.staged = false;
  const Compiled t = compile(g, hw, o);
  c.expect(s.map->nodes.at(0).instances.size() == 2 && s.map->nodes.at(1).plan.xbars_per_vxb == 4,
           "fixture is not OP1 on 2 VXBs, OP2 on 4 crossbars");
  const SimReport rs = perf_model(s.flow, hw), rt = perf_model(t.flow, hw);
  const double red = 1.0 - rs.peak_power_proxy / rt.peak_power_proxy;
  c.expect(peak_active(*t.schedule) == 6 && rt.peak_xbars == 6, "traditional peak != 6");
  c.expect(peak_active(*s.schedule) == 4 && rs.peak_xbars == 4, "staged peak != 4");
  c.expect(red >= 0.30, "proxy reduction below 30%");
  c.why << (c.ok ? "" : "; ") << "peak traditional " << rt.peak_xbars << ", staged " << rs.peak_xbars
        << ", proxy reduction " << static_cast<int>(red * 1000) / 10.0 << "%";
}

void remap_timing(Check& c) {
  const HwSpec hw = testing::arch("row_split");
  const CompGraph g = testing::model("row_split");
  CompileOptions o;
  const Compiled r = compile(g, hw, o);
  o.remap = false;
  const Compiled n = compile(g, hw, o);
  const SimReport rr = perf_model(r.flow, hw), rn = perf_model(n.flow, hw);
  const int64_t fr = rr.first_read.count(1) ? rr.first_read.at(1) : -1;
  const int64_t fn = rn.first_read.count(1) ? rn.first_read.at(1) : -1;
  c.expect(fn == 3, "naive OP2 first activation at " + std::to_string(fn));
  c.expect(fr == 2, "remapped OP2 first activation at " + std::to_string(fr));
  c.expect(vvm_pipeline(r.graph, hw, *r.map).first_start(1) == 2 && vvm_pipeline(n.graph, hw, *n.map).first_start(1) == 3,
           "schedule disagrees with the simulator");
  const auto& wr = rr.output_writes.at("n1");
  const auto& wn = rn.output_writes.at("n1");
  const int64_t ir = steady_interval(wr), in = steady_interval(wn);
  c.expect(wr.size() >= 8 && wn.size() >= 8, "fewer than 8 windows");
  c.expect(ir > 0 && in == 2 * ir, "output interval naive " + std::to_string(in) + " vs remapped " + std::to_string(ir));
  c.why << (c.ok ? "" : "; ") << "OP2 first read naive " << fn << ", remapped " << fr << "; output interval " << in
        << " -> " << ir << " over " << wr.size() << " windows";
}

void mode_dominance(Check& c) {
  const HwSpec hw = testing::arch("baseline");
  int graphs = 0;
  for (const auto& name : kModels) {
    const CompGraph g = testing::model(name);
    const auto r = compare_modes(g, hw);
    c.expect(r[2].latency <= r[1].latency && r[1].latency <= r[0].latency,
             name + ": CM " + std::to_string(r[0].latency) + " XBM " + std::to_string(r[1].latency) + " WLM " +
                 std::to_string(r[2].latency));
    const CgVariants v = cg_variants(g, hw);
    c.expect(v.pipe_dup <= std::min(v.pipe_only, v.dup_only), name + ": CG-P&D above a single optimization");
    ++graphs;
  }
  c.why << (c.ok ? "" : "; ") << graphs << " fixture graphs, WLM <= XBM <= CM and P&D <= min(pipe, dup)";
}

void core_scaling(Check& c) {
  const CompGraph g = testing::model("vgg8");
  for (Mode mode : {Mode::CM, Mode::XBM, Mode::WLM}) {
    std::ostringstream row;
    int64_t prev = INT64_MAX;
    for (int cores : {256, 512, 768, 1024}) {
      HwSpec hw = testing::arch("baseline");
      hw.chip.core_number = cores;
      const int64_t lat = perf_model(compile(g, hw, {mode}).flow, hw).total_cycles;
      c.expect(lat <= prev, std::string(to_string(mode)) + " latency rises at " + std::to_string(cores) + " cores");
      row << (prev == INT64_MAX ? "" : ">=") << lat;
      prev = lat;
    }
    c.why << (c.ok ? "" : "; ") << to_string(mode) << " " << row.str() << "  ";
  }
}

void dp_optimality(Check& c) {
  std::mt19937 rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    const int n = 1 + trial % 6;
    const int budget = 1 + static_cast<int>(rng() % 32);
    std::vector<NodeCost> costs;
    int need = 0;
    for (int i = 0; i < n; ++i) {
      NodeCost k;
      k.node = i;
      k.cim = true;
      k.units = 1 + rng() % 64;
      k.unit_work = 1 + rng() % 100;
      k.cores_per_replica = 1 + rng() % 4;
      need += k.cores_per_replica;
      costs.push_back(k);
    }
    if (need > budget) continue;
    const int64_t dp = cg_duplicate(costs, budget).ii, ex = exhaustive_min_ii(costs, budget);
    c.expect(dp == ex, "trial " + std::to_string(trial) + ": dp " + std::to_string(dp) + " vs " + std::to_string(ex));
    ++checked;
  }
  // Costs drawn from real operators of random graphs.
  int from_graphs = 0;
  for (uint64_t seed = 1; seed <= 200; ++seed) {
    const CompGraph g = random_graph(seed, 8, 16);
    const HwSpec hw = testing::small_arch(Mode::XBM);
    std::vector<NodeCost> costs;
    int cim_nodes = 0, need = 0;
    for (const auto& node : g.nodes) {
      costs.push_back(node_cost(node, g, hw));
      if (costs.back().cim) {
        ++cim_nodes;
        need += costs.back().cores_per_replica;
      }
    }
    if (cim_nodes > 6) continue;
    for (int budget = std::max(need, 1); budget <= 32; budget += 3) {
      const int64_t dp = cg_duplicate(costs, budget).ii, ex = exhaustive_min_ii(costs, budget);
      c.expect(dp == ex, "graph seed " + std::to_string(seed) + " budget " + std::to_string(budget));
      ++from_graphs;
    }
  }
  c.why << (c.ok ? "" : "; ") << checked << " synthetic and " << from_graphs << " graph-derived instances match";
}

void round_trips(Check& c) {
  int flows = 0;
  for (const auto& a : kArchs) {
    const HwSpec hw = testing::arch(a);
    for (const auto& m : kModels)
      for (Mode mode : {Mode::CM, Mode::XBM, Mode::WLM})
        for (bool staged : {true, false}) {
          CompileOptions o;
          o.mode = mode;
          o.staged = staged;
          Flow f;
          try {
            f = compile(testing::model(m), hw, o).flow;
          } catch (const CapacityError&) {
            continue;
          }
          const std::string text = serialize_flow(f);
          const Flow back = parse_flow(text);
          c.expect(back == f && serialize_flow(back) == text, a + "/" + m + "/" + to_string(mode));
          ++flows;
        }
  }
  const HwSpec b = testing::arch("baseline");
  const bool table = b.chip.core_number == 768 && b.core.xb_number == 16 && b.xbar.xb_rows == 128 &&
                     b.xbar.xb_cols == 128 && b.xbar.parallel_row == 8 && b.xbar.dac_bits == 1 &&
                     b.xbar.adc_bits == 8 && b.xbar.cell_type == CellType::ReRAM && b.xbar.cell_precision_bits == 2 &&
                     b.chip.alu_ops_per_cycle == 1024 && b.chip.l0_bw_bits_per_cycle == 384 &&
                     b.core.l1_bw_bits_per_cycle == 8192;
  c.expect(table, "baseline arch values differ");
  const HwSpec e = testing::arch("example");
  c.expect(e.chip.core_number == 2 && e.core.xb_number == 2 && e.xbar.xb_rows == 32 && e.xbar.xb_cols == 128 &&
               e.xbar.parallel_row == 16 && e.xbar.cell_precision_bits == 2,
           "example arch values differ");
  c.why << (c.ok ? "" : "; ") << flows << " flows round-trip; baseline and example arch values exact";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
      {"golden walkthrough", golden_walkthrough},   {"functional equivalence", functional_equivalence},
      {"MVM peak reduction", peak_reduction},       {"VVM remap timing", remap_timing},
      {"mode dominance", mode_dominance},           {"core scaling", core_scaling},
      {"DP optimality", dp_optimality},             {"round trips", round_trips},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("threw: ") + e.what());
    }
    failed += c.ok ? 0 : 1;
    std::cout << "criterion " << i + 1 << " (" << criteria[i].first << "): " << (c.ok ? "PASS" : "FAIL") << " - "
              << c.why.str() << std::endl;
  }
  return failed;
}
