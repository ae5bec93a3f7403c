#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace cim {

struct TensorSpec {
  std::vector<int64_t> dims;
  int precision_bits = 8;

  int64_t elements() const;
  bool operator==(const TensorSpec&) const = default;
};

// Activation tensors are handled as [C, H, W]; rank-1 specs become [N, 1, 1].
struct Shape3 {
  int64_t c = 1;
  int64_t h = 1;
  int64_t w = 1;

  int64_t elements() const { return c * h * w; }
  bool operator==(const Shape3&) const = default;
};

Shape3 as_shape3(const TensorSpec& spec);

enum class OpKind { Conv, FC, Relu, MaxPool, AvgPool, Add };

const char* to_string(OpKind kind);
OpKind op_kind_from_string(const std::string& name);

// Conv and FC run on crossbars; everything else goes to an ALU as a DCOM.
bool is_cim(OpKind kind);

struct OpAttrs {
  // Conv: [K, C, R, S]. FC: [out, in]. Pools: [kh, kw].
  std::vector<int64_t> kernel;
  int64_t stride = 1;
  int64_t padding = 0;
  int weight_bits = 8;
  // Arithmetic right shift applied when an accumulator is requantized to int8.
  std::optional<int> shift;
  // Name of the weight tensor (Conv/FC). Defaults to "w<id>".
  std::string weight;

  bool operator==(const OpAttrs&) const = default;
};

// Reference to a producer: either a node id or a graph input index.
struct ValueRef {
  bool graph_input = false;
  int index = 0;

  bool operator==(const ValueRef&) const = default;
  auto operator<=>(const ValueRef&) const = default;
};

struct Annotation {
  int dup = 0;  // 0 until assigned
  int subgraph = -1;
  std::vector<int> cores;
  std::vector<int> vxbs;

  bool operator==(const Annotation&) const = default;
};

struct OpNode {
  int id = 0;
  OpKind kind = OpKind::Relu;
  OpAttrs attrs;
  std::vector<ValueRef> inputs;
  TensorSpec output;  // filled by shape inference
  Annotation anno;
};

struct GraphInput {
  std::string name;
  TensorSpec spec;
};

struct Edge {
  int producer = 0;
  int consumer = 0;
  TensorSpec spec;
};

class CompGraph {
 public:
  std::vector<GraphInput> inputs;
  std::vector<OpNode> nodes;  // sorted by id
  std::vector<Edge> edges;
  std::vector<int> outputs;

  const OpNode& node(int id) const;
  OpNode& node(int id);
  bool has_node(int id) const;
  bool empty() const { return nodes.empty(); }

  // Spec of the tensor a reference points at.
  const TensorSpec& value_spec(const ValueRef& ref) const;
  std::vector<int> consumers(int id) const;
};

// Output shape of `node` given its (first) input. Add expects both inputs equal and
// is checked by the caller.
TensorSpec infer_output_shape(const OpNode& node, const TensorSpec& input);

// Topological order, ties broken by ascending id.
std::vector<int> topo_order(const CompGraph& graph);

// Parses, validates and shape-infers a graph document.
CompGraph parse_graph(const nlohmann::json& doc);
CompGraph parse_graph_text(const std::string& text);
CompGraph load_graph(const std::string& path);

nlohmann::json graph_to_json(const CompGraph& graph);

// Requantization shift used for a Conv/FC node when none is given in attrs.
int default_shift(const OpNode& node, const CompGraph& graph);
int requant_shift(const OpNode& node, const CompGraph& graph);

}  // namespace cim
