#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cimmlc/arch.hpp"
#include "cimmlc/codegen.hpp"
#include "cimmlc/flow.hpp"
#include "cimmlc/graph.hpp"
#include "cimmlc/sched_cg.hpp"
#include "cimmlc/sched_mvm.hpp"
#include "cimmlc/simulator.hpp"

namespace cim {

struct CompileOptions {
  std::optional<Mode> mode;  // nullopt: the arch's own mode
  bool staged = true;        // staged MVM pipeline
  bool remap = true;         // WLM row remapping
};

struct Compiled {
  CompGraph graph;  // annotated
  Mode mode = Mode::CM;
  SubgraphPlan cg;
  std::optional<MappingPlan> map;
  std::optional<VxbSchedule> schedule;
  Flow flow;
};

// CG always; MVM for XBM and WLM; VVM for WLM.
Compiled compile(const CompGraph& graph, const HwSpec& hw, const CompileOptions& opt = {});

struct ModeReport {
  Mode mode = Mode::CM;
  int64_t latency = 0;
  int64_t peak_xbars = 0;
  double peak_power = 0.0;
};

// Latencies of the graph compiled under CM, XBM and WLM on the same hardware.
std::vector<ModeReport> compare_modes(const CompGraph& graph, const HwSpec& hw);

struct VerifyReport {
  int cases = 0;
  int passed = 0;
  std::string counterexample;  // first failure, empty if none
};

// Random inputs and weights per case; exec_flow against reference_oracle.
// `corrupt` flips one weight cell parameter in the flow to exercise the failure path.
VerifyReport verify(const CompGraph& graph, const HwSpec& hw, uint64_t seed, int n, bool corrupt = false,
                    const CompileOptions& opt = {});

// Synthetic small graphs used by property tests: chains and diamonds of all op kinds.
CompGraph random_graph(uint64_t seed, int max_nodes = 5, int max_dim = 16);

}  // namespace cim
