#include "cimmlc/graph.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include "cimmlc/errors.hpp"

namespace cim {

using nlohmann::json;

int64_t TensorSpec::elements() const {
  int64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

Shape3 as_shape3(const TensorSpec& spec) {
  const auto& d = spec.dims;
  switch (d.size()) {
    case 1:
      return {d[0], 1, 1};
    case 2:
      return {d[0], d[1], 1};
    case 3:
      return {d[0], d[1], d[2]};
    default:
      throw ShapeError("activation tensors must have rank 1..3, got rank " +
                       std::to_string(d.size()));
  }
}

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Conv:
      return "conv";
    case OpKind::FC:
      return "fc";
    case OpKind::Relu:
      return "relu";
    case OpKind::MaxPool:
      return "maxpool";
    case OpKind::AvgPool:
      return "avgpool";
    case OpKind::Add:
      return "add";
  }
  return "?";
}

OpKind op_kind_from_string(const std::string& raw) {
  std::string name = raw;
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  if (name == "conv") return OpKind::Conv;
  if (name == "fc" || name == "matmul" || name == "gemm") return OpKind::FC;
  if (name == "relu") return OpKind::Relu;
  if (name == "maxpool") return OpKind::MaxPool;
  if (name == "avgpool") return OpKind::AvgPool;
  if (name == "add") return OpKind::Add;
  throw ValidationError("unknown op kind '" + raw + "'");
}

bool is_cim(OpKind kind) { return kind == OpKind::Conv || kind == OpKind::FC; }

const OpNode& CompGraph::node(int id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                             [](const OpNode& n, int v) { return n.id < v; });
  if (it == nodes.end() || it->id != id) throw ValidationError("no node with id " + std::to_string(id));
  return *it;
}

OpNode& CompGraph::node(int id) {
  return const_cast<OpNode&>(static_cast<const CompGraph&>(*this).node(id));
}

bool CompGraph::has_node(int id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                             [](const OpNode& n, int v) { return n.id < v; });
  return it != nodes.end() && it->id == id;
}

const TensorSpec& CompGraph::value_spec(const ValueRef& ref) const {
  if (ref.graph_input) {
    if (ref.index < 0 || ref.index >= static_cast<int>(inputs.size()))
      throw ValidationError("graph input index out of range");
    return inputs[ref.index].spec;
  }
  return node(ref.index).output;
}

std::vector<int> CompGraph::consumers(int id) const {
  std::vector<int> out;
  for (const auto& e : edges)
    if (e.producer == id) out.push_back(e.consumer);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

int64_t window_count(int64_t in, int64_t pad, int64_t k, int64_t stride, const std::string& what) {
  if (stride < 1) throw ShapeError(what + ": stride must be >= 1");
  if (pad < 0) throw ShapeError(what + ": padding must be >= 0");
  if (in + 2 * pad < k)
    throw ShapeError(what + ": kernel " + std::to_string(k) + " larger than padded input " +
                     std::to_string(in + 2 * pad));
  return (in + 2 * pad - k) / stride + 1;
}

int ceil_log2(int64_t v) {
  int bits = 0;
  while ((int64_t{1} << bits) < v) ++bits;
  return bits;
}

}  // namespace

TensorSpec infer_output_shape(const OpNode& node, const TensorSpec& input) {
  const Shape3 in = as_shape3(input);
  const auto& a = node.attrs;
  const std::string what = std::string(to_string(node.kind)) + " node " + std::to_string(node.id);
  switch (node.kind) {
    case OpKind::Conv: {
      if (a.kernel.size() != 4) throw ShapeError(what + ": conv kernel must be [K,C,R,S]");
      if (a.kernel[1] != in.c)
        throw ShapeError(what + ": kernel expects " + std::to_string(a.kernel[1]) +
                         " input channels, got " + std::to_string(in.c));
      const int64_t ho = window_count(in.h, a.padding, a.kernel[2], a.stride, what);
      const int64_t wo = window_count(in.w, a.padding, a.kernel[3], a.stride, what);
      return {{a.kernel[0], ho, wo}, input.precision_bits};
    }
    case OpKind::FC: {
      if (a.kernel.size() != 2) throw ShapeError(what + ": fc kernel must be [out,in]");
      if (a.kernel[1] != in.elements())
        throw ShapeError(what + ": fc expects " + std::to_string(a.kernel[1]) + " inputs, got " +
                         std::to_string(in.elements()));
      return {{a.kernel[0], 1, 1}, input.precision_bits};
    }
    case OpKind::MaxPool:
    case OpKind::AvgPool: {
      if (a.kernel.size() != 2) throw ShapeError(what + ": pool kernel must be [kh,kw]");
      const int64_t ho = window_count(in.h, a.padding, a.kernel[0], a.stride, what);
      const int64_t wo = window_count(in.w, a.padding, a.kernel[1], a.stride, what);
      return {{in.c, ho, wo}, input.precision_bits};
    }
    case OpKind::Relu:
    case OpKind::Add:
      return {{in.c, in.h, in.w}, input.precision_bits};
  }
  throw ShapeError(what + ": unhandled kind");
}

std::vector<int> topo_order(const CompGraph& graph) {
  std::map<int, int> indegree;
  for (const auto& n : graph.nodes) indegree[n.id] = 0;
  for (const auto& e : graph.edges) indegree[e.consumer]++;
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (const auto& [id, deg] : indegree)
    if (deg == 0) ready.push(id);
  std::vector<int> order;
  order.reserve(graph.nodes.size());
  while (!ready.empty()) {
    int id = ready.top();
    ready.pop();
    order.push_back(id);
    for (const auto& e : graph.edges) {
      if (e.producer != id) continue;
      if (--indegree[e.consumer] == 0) ready.push(e.consumer);
    }
  }
  if (order.size() != graph.nodes.size()) throw CycleError("computation graph contains a cycle");
  return order;
}

namespace {

TensorSpec parse_tensor_spec(const json& j, const std::string& ctx) {
  TensorSpec spec;
  const json& dims = j.is_array() ? j : j.at("dims");
  for (const auto& d : dims) {
    if (!d.is_number_integer()) throw ParseError(ctx + ": dims must be integers");
    int64_t v = d.get<int64_t>();
    if (v < 1) throw ValidationError(ctx + ": every dim must be >= 1");
    spec.dims.push_back(v);
  }
  if (spec.dims.empty()) throw ValidationError(ctx + ": empty dims");
  if (j.is_object() && j.contains("precision")) spec.precision_bits = j.at("precision").get<int>();
  if (spec.precision_bits < 1 || spec.precision_bits > 32)
    throw ValidationError(ctx + ": precision must be in 1..32");
  return spec;
}

OpAttrs parse_attrs(const json& j, OpKind kind, int id) {
  OpAttrs a;
  if (j.contains("kernel")) a.kernel = j.at("kernel").get<std::vector<int64_t>>();
  if (j.contains("stride")) a.stride = j.at("stride").get<int64_t>();
  if (j.contains("padding")) a.padding = j.at("padding").get<int64_t>();
  if (j.contains("weight_bits")) a.weight_bits = j.at("weight_bits").get<int>();
  if (j.contains("shift")) a.shift = j.at("shift").get<int>();
  if (j.contains("weight")) a.weight = j.at("weight").get<std::string>();
  if (is_cim(kind) && a.weight.empty()) a.weight = "w" + std::to_string(id);
  if (a.weight_bits < 1 || a.weight_bits > 8)
    throw ValidationError("node " + std::to_string(id) + ": weight_bits must be in 1..8");
  if (a.shift && (*a.shift < 0 || *a.shift > 31))
    throw ValidationError("node " + std::to_string(id) + ": shift must be in 0..31");
  for (auto k : a.kernel)
    if (k < 1) throw ValidationError("node " + std::to_string(id) + ": kernel dims must be >= 1");
  return a;
}

}  // namespace

CompGraph parse_graph(const json& doc) {
  CompGraph g;
  std::set<int> ids;
  try {
    if (!doc.is_object()) throw ParseError("graph document must be a JSON object");
    if (doc.contains("inputs")) {
      int idx = 0;
      for (const auto& in : doc.at("inputs")) {
        GraphInput gi;
        gi.name = in.is_object() && in.contains("name") ? in.at("name").get<std::string>()
                                                        : "in" + std::to_string(idx);
        gi.spec = parse_tensor_spec(in, "input " + gi.name);
        g.inputs.push_back(std::move(gi));
        ++idx;
      }
    }
    if (doc.contains("nodes")) {
      for (const auto& jn : doc.at("nodes")) {
        OpNode n;
        n.id = jn.at("id").get<int>();
        if (!ids.insert(n.id).second) throw ValidationError("duplicate node id " + std::to_string(n.id));
        n.kind = op_kind_from_string(jn.at("kind").get<std::string>());
        n.attrs = parse_attrs(jn.value("attrs", json::object()), n.kind, n.id);
        for (const auto& ji : jn.value("inputs", json::array())) {
          if (ji.is_number_integer()) {
            n.inputs.push_back({false, ji.get<int>()});
          } else if (ji.is_string()) {
            const auto name = ji.get<std::string>();
            auto it = std::find_if(g.inputs.begin(), g.inputs.end(),
                                   [&](const GraphInput& x) { return x.name == name; });
            if (it == g.inputs.end())
              throw ValidationError("node " + std::to_string(n.id) + " references unknown input '" + name + "'");
            n.inputs.push_back({true, static_cast<int>(it - g.inputs.begin())});
          } else {
            throw ParseError("node inputs must be node ids or input names");
          }
        }
        g.nodes.push_back(std::move(n));
      }
    }
    if (doc.contains("outputs")) g.outputs = doc.at("outputs").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed graph: ") + e.what());
  }

  std::sort(g.nodes.begin(), g.nodes.end(), [](const OpNode& a, const OpNode& b) { return a.id < b.id; });

  for (const auto& n : g.nodes) {
    const size_t want = n.kind == OpKind::Add ? 2 : 1;
    if (n.inputs.size() != want)
      throw ValidationError("node " + std::to_string(n.id) + " (" + to_string(n.kind) + ") needs " +
                            std::to_string(want) + " input(s)");
    for (const auto& in : n.inputs) {
      if (in.graph_input) continue;
      if (!ids.count(in.index))
        throw ValidationError("dangling edge: node " + std::to_string(n.id) + " consumes missing node " +
                              std::to_string(in.index));
      g.edges.push_back({in.index, n.id, {}});
    }
  }
  for (int out : g.outputs)
    if (!ids.count(out)) throw ValidationError("graph output references missing node " + std::to_string(out));

  const auto order = topo_order(g);
  for (int id : order) {
    OpNode& n = g.node(id);
    const TensorSpec& first = g.value_spec(n.inputs[0]);
    if (n.kind == OpKind::Add) {
      const TensorSpec& second = g.value_spec(n.inputs[1]);
      if (as_shape3(first) != as_shape3(second))
        throw ShapeError("add node " + std::to_string(id) + ": input shapes differ");
    }
    n.output = infer_output_shape(n, first);
  }
  for (auto& e : g.edges) e.spec = g.node(e.producer).output;
  if (g.outputs.empty()) {
    for (const auto& n : g.nodes)
      if (g.consumers(n.id).empty()) g.outputs.push_back(n.id);
  }
  return g;
}

CompGraph parse_graph_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("graph is not valid JSON: ") + e.what());
  }
  return parse_graph(doc);
}

CompGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open graph file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_graph_text(ss.str());
}

json graph_to_json(const CompGraph& g) {
  json doc;
  doc["inputs"] = json::array();
  for (const auto& in : g.inputs)
    doc["inputs"].push_back({{"name", in.name}, {"dims", in.spec.dims}, {"precision", in.spec.precision_bits}});
  doc["nodes"] = json::array();
  for (const auto& n : g.nodes) {
    json attrs = json::object();
    if (!n.attrs.kernel.empty()) attrs["kernel"] = n.attrs.kernel;
    if (n.kind == OpKind::Conv || n.kind == OpKind::MaxPool || n.kind == OpKind::AvgPool) {
      attrs["stride"] = n.attrs.stride;
      attrs["padding"] = n.attrs.padding;
    }
    if (is_cim(n.kind)) {
      attrs["weight_bits"] = n.attrs.weight_bits;
      attrs["weight"] = n.attrs.weight;
    }
    if (n.attrs.shift) attrs["shift"] = *n.attrs.shift;
    json inputs = json::array();
    for (const auto& r : n.inputs) {
      if (r.graph_input)
        inputs.push_back(g.inputs[r.index].name);
      else
        inputs.push_back(r.index);
    }
    doc["nodes"].push_back({{"id", n.id}, {"kind", to_string(n.kind)}, {"attrs", attrs}, {"inputs", inputs}});
  }
  doc["outputs"] = g.outputs;
  return doc;
}

int default_shift(const OpNode& node, const CompGraph& graph) {
  switch (node.kind) {
    case OpKind::Conv: {
      const auto& k = node.attrs.kernel;
      return node.attrs.weight_bits - 1 + ceil_log2(k[1] * k[2] * k[3]);
    }
    case OpKind::FC:
      return node.attrs.weight_bits - 1 + ceil_log2(node.attrs.kernel[1]);
    default:
      (void)graph;
      return 0;
  }
}

int requant_shift(const OpNode& node, const CompGraph& graph) {
  return node.attrs.shift ? *node.attrs.shift : default_shift(node, graph);
}

}  // namespace cim
