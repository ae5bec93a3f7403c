#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cimmlc/arch.hpp"
#include "cimmlc/flow.hpp"
#include "cimmlc/graph.hpp"
#include "cimmlc/tensor.hpp"

namespace cim {

// Tensors are exchanged as [C, H, W] in CHW order (rank-1 for FC-only inputs is fine).
// Weights: Conv [K, C, R, S], FC [out, in] with `in` indexing the HWC-flattened input.
TensorMap exec_flow(const Flow& flow, const HwSpec& hw, const TensorMap& inputs, const TensorMap& weights);

TensorMap reference_oracle(const CompGraph& graph, const TensorMap& inputs, const TensorMap& weights);

// Integer semantics shared by both evaluators (scalar helpers only).
int8_t saturate8(int64_t v);
int64_t shift_right(int64_t v, int shift);  // arithmetic
int64_t floor_div(int64_t a, int64_t b);

struct TraceStep {
  int64_t cycle = 0;  // counts hold from here until the next step
  int64_t xbars = 0;
  int64_t movs = 0;
};

struct SimReport {
  int64_t total_cycles = 0;
  int64_t program_cycles = 0;  // leading weight writes, not part of total
  int64_t xbar_active_cycles = 0;
  int64_t read_ops = 0;
  int64_t peak_xbars = 0;
  double peak_power_proxy = 0.0;
  double utilization = 0.0;
  std::vector<TraceStep> trace;
  // First cycle a crossbar holding node weights is read, and last read end.
  std::map<int, int64_t> first_read;
  std::map<int, int64_t> last_read_end;
  // End cycles of movs into L0 output regions, per output binding, sorted.
  std::map<std::string, std::vector<int64_t>> output_writes;
};

SimReport perf_model(const Flow& flow, const HwSpec& hw);
nlohmann::json report_to_json(const SimReport& r);
std::string report_table(const SimReport& r);

// Random int8 tensors for every graph input and a weight tensor for every CIM node.
TensorMap random_inputs(const CompGraph& graph, uint64_t seed);
TensorMap random_weights(const CompGraph& graph, uint64_t seed);

}  // namespace cim
