#include "cimmlc/compiler.hpp"

#include <random>
#include <sstream>

#include "cimmlc/errors.hpp"
#include "cimmlc/sched_vvm.hpp"

namespace cim {

using nlohmann::json;

Compiled compile(const CompGraph& graph, const HwSpec& hw, const CompileOptions& opt) {
  Compiled c;
  c.graph = graph;
  c.mode = opt.mode.value_or(hw.mode);
  c.cg = segment_graph(c.graph, hw);
  annotate(c.graph, c.cg);
  if (c.mode == Mode::CM) {
    c.flow = emit_cm(c.graph, c.cg, hw);
    return c;
  }
  c.map = build_mapping(c.graph, c.cg, hw, c.mode);
  if (c.mode == Mode::WLM && opt.remap) remap(*c.map, c.graph, hw);
  c.schedule = mvm_pipeline(c.graph, hw, *c.map, opt.staged);
  c.flow = c.mode == Mode::XBM ? emit_xbm(c.graph, *c.map, *c.schedule, hw, opt.staged)
                               : emit_wlm(c.graph, *c.map, *c.schedule, hw, opt.staged);
  return c;
}

std::vector<ModeReport> compare_modes(const CompGraph& graph, const HwSpec& hw) {
  std::vector<ModeReport> out;
  for (Mode m : {Mode::CM, Mode::XBM, Mode::WLM}) {
    CompileOptions o;
    o.mode = m;
    const Compiled c = compile(graph, hw, o);
    const SimReport r = perf_model(c.flow, hw);
    out.push_back({m, r.total_cycles, r.peak_xbars, r.peak_power_proxy});
  }
  return out;
}

namespace {

void corrupt_flow(Flow& flow) {
  for (auto& [name, p] : flow.params)
    if (p.contains("shift")) {
      const int s = p.at("shift").get<int>();
      p["shift"] = s > 0 ? 0 : 4;
      return;
    }
  // No requantizing op: turn the first relu into a copy.
  for (auto& st : flow.body)
    for (auto& op : st.ops)
      if (op.code == OpCode::Dcom && op.name == "relu") {
        op = mov(op.src_level, op.src, op.src_level, op.des, op.len);
        return;
      }
}

}  // namespace

VerifyReport verify(const CompGraph& graph, const HwSpec& hw, uint64_t seed, int n, bool corrupt,
                    const CompileOptions& opt) {
  VerifyReport rep;
  rep.cases = n;
  if (n <= 0) return rep;
  Flow flow = compile(graph, hw, opt).flow;
  if (corrupt) corrupt_flow(flow);
  for (int i = 0; i < n; ++i) {
    const uint64_t s = seed + static_cast<uint64_t>(i);
    const TensorMap in = random_inputs(graph, s);
    const TensorMap w = random_weights(graph, s);
    std::ostringstream why;
    try {
      const TensorMap got = exec_flow(flow, hw, in, w);
      const TensorMap want = reference_oracle(graph, in, w);
      for (const auto& [name, t] : want) {
        auto it = got.find(name);
        if (it == got.end()) {
          why << "case " << i << " (seed " << s << "): output " << name << " missing";
          break;
        }
        for (size_t k = 0; k < t.values.size(); ++k)
          if (it->second.values.at(k) != t.values[k]) {
            why << "case " << i << " (seed " << s << "): output " << name << "[" << k << "] flow "
                << it->second.values[k] << " oracle " << t.values[k];
            break;
          }
        if (!why.str().empty()) break;
      }
    } catch (const Error& e) {
      why << "case " << i << " (seed " << s << "): " << e.what();
    }
    if (why.str().empty())
      ++rep.passed;
    else if (rep.counterexample.empty())
      rep.counterexample = why.str();
  }
  return rep;
}

CompGraph random_graph(uint64_t seed, int max_nodes, int max_dim) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  struct Val {
    json ref;
    Shape3 s;
  };
  const int lim = std::min(max_dim, 8);
  Shape3 s0{pick(1, std::min(max_dim, 4)), pick(1, lim), pick(1, lim)};
  json doc;
  doc["inputs"] = json::array({{{"name", "x"}, {"dims", {s0.c, s0.h, s0.w}}}});
  doc["nodes"] = json::array();
  std::vector<Val> vals{{"x", s0}};
  Val cur = vals[0];
  const int count = pick(1, max_nodes);
  for (int id = 0; id < count; ++id) {
    int kind = id == 0 ? pick(0, 1) : pick(0, 5);
    json attrs = json::object();
    json inputs = json::array({cur.ref});
    Shape3 out = cur.s;
    if (kind == 5) {
      const Val* other = nullptr;
      for (const auto& v : vals)
        if (v.s == cur.s && v.ref != cur.ref) other = &v;
      if (!other) kind = 2;
      else inputs.push_back(other->ref);
    }
    std::string name;
    switch (kind) {
      case 0: {  // conv
        const int64_t k = pick(1, std::min<int>(max_dim, 8));
        int64_t pad = pick(0, 1);
        int64_t r = pick(1, 3), q = pick(1, 3);
        if (std::min(r, q) == 1) pad = 0;
        r = std::min<int64_t>(r, cur.s.h + 2 * pad);
        q = std::min<int64_t>(q, cur.s.w + 2 * pad);
        if (std::min(r, q) == 1) pad = 0;
        r = std::min<int64_t>(r, cur.s.h + 2 * pad);
        q = std::min<int64_t>(q, cur.s.w + 2 * pad);
        const int64_t st = pick(1, 2);
        attrs = {{"kernel", {k, cur.s.c, r, q}}, {"stride", st}, {"padding", pad}, {"weight_bits", pick(2, 8)}};
        out = {k, (cur.s.h + 2 * pad - r) / st + 1, (cur.s.w + 2 * pad - q) / st + 1};
        name = "conv";
        break;
      }
      case 1: {  // fc
        const int64_t o = pick(1, max_dim);
        attrs = {{"kernel", {o, cur.s.elements()}}, {"weight_bits", pick(2, 8)}};
        out = {o, 1, 1};
        name = "fc";
        break;
      }
      case 2:
        name = "relu";
        break;
      case 3:
      case 4: {
        const int64_t k = std::min<int64_t>(pick(1, 2), std::min(cur.s.h, cur.s.w));
        const int64_t st = pick(1, 2);
        attrs = {{"kernel", {k, k}}, {"stride", st}, {"padding", 0}};
        out = {cur.s.c, (cur.s.h - k) / st + 1, (cur.s.w - k) / st + 1};
        name = kind == 3 ? "maxpool" : "avgpool";
        break;
      }
      default:
        name = "add";
        attrs = {{"shift", pick(0, 1)}};
        break;
    }
    doc["nodes"].push_back({{"id", id}, {"kind", name}, {"attrs", attrs}, {"inputs", inputs}});
    cur = {id, out};
    vals.push_back(cur);
  }
  return parse_graph(doc);
}

}  // namespace cim
