// Direct nested-loop evaluation of a graph in CHW order. Independent of lowering.
#include <random>

#include "cimmlc/errors.hpp"
#include "cimmlc/simulator.hpp"

namespace cim {

namespace {

struct Act {
  int64_t c = 1, h = 1, w = 1;
  std::vector<int64_t> v;  // CHW

  int64_t at(int64_t ci, int64_t hi, int64_t wi) const { return v[(ci * h + hi) * w + wi]; }
};

Act from_tensor(const Tensor& t, const TensorSpec& spec) {
  const Shape3 s = as_shape3(spec);
  if (static_cast<int64_t>(t.values.size()) != s.elements())
    throw MissingTensorError("tensor '" + t.name + "' has " + std::to_string(t.values.size()) + " values, expected " +
                             std::to_string(s.elements()));
  Act a{s.c, s.h, s.w, {}};
  for (int32_t x : t.values) {
    if (x < -128 || x > 127) throw DomainError("tensor '" + t.name + "' holds a value outside int8");
    a.v.push_back(x);
  }
  return a;
}

const Tensor& weight(const OpNode& n, const TensorMap& weights) {
  auto it = weights.find(n.attrs.weight);
  if (it == weights.end()) throw MissingTensorError("missing weight tensor '" + n.attrs.weight + "'");
  int64_t need = 1;
  for (int64_t k : n.attrs.kernel) need *= k;
  if (static_cast<int64_t>(it->second.values.size()) != need)
    throw ShapeError("weight '" + n.attrs.weight + "' has the wrong size");
  return it->second;
}

Act conv(const OpNode& n, const Act& x, const Tensor& wt, int shift) {
  const auto& k = n.attrs.kernel;  // K C R S
  const Shape3 o = as_shape3(n.output);
  Act y{o.c, o.h, o.w, std::vector<int64_t>(o.elements())};
  for (int64_t kk = 0; kk < k[0]; ++kk)
    for (int64_t oh = 0; oh < o.h; ++oh)
      for (int64_t ow = 0; ow < o.w; ++ow) {
        int64_t s = 0;
        for (int64_t c = 0; c < k[1]; ++c)
          for (int64_t r = 0; r < k[2]; ++r)
            for (int64_t q = 0; q < k[3]; ++q) {
              const int64_t ih = oh * n.attrs.stride - n.attrs.padding + r;
              const int64_t iw = ow * n.attrs.stride - n.attrs.padding + q;
              if (ih < 0 || iw < 0 || ih >= x.h || iw >= x.w) continue;
              s += int64_t{wt.values[((kk * k[1] + c) * k[2] + r) * k[3] + q]} * x.at(c, ih, iw);
            }
        y.v[(kk * o.h + oh) * o.w + ow] = saturate8(shift_right(s, shift));
      }
  return y;
}

Act fc(const OpNode& n, const Act& x, const Tensor& wt, int shift) {
  const int64_t out = n.attrs.kernel[0], in = n.attrs.kernel[1];
  // The feature vector is the input read in (h, w, c) order.
  std::vector<int64_t> flat;
  for (int64_t h = 0; h < x.h; ++h)
    for (int64_t w = 0; w < x.w; ++w)
      for (int64_t c = 0; c < x.c; ++c) flat.push_back(x.at(c, h, w));
  if (static_cast<int64_t>(flat.size()) != in) throw ShapeError("fc input size mismatch");
  Act y{out, 1, 1, std::vector<int64_t>(out)};
  for (int64_t o = 0; o < out; ++o) {
    int64_t s = 0;
    for (int64_t i = 0; i < in; ++i) s += int64_t{wt.values[o * in + i]} * flat[i];
    y.v[o] = saturate8(shift_right(s, shift));
  }
  return y;
}

Act pool(const OpNode& n, const Act& x, bool is_max) {
  const Shape3 o = as_shape3(n.output);
  const int64_t kh = n.attrs.kernel[0], kw = n.attrs.kernel[1];
  Act y{o.c, o.h, o.w, std::vector<int64_t>(o.elements())};
  for (int64_t c = 0; c < o.c; ++c)
    for (int64_t oh = 0; oh < o.h; ++oh)
      for (int64_t ow = 0; ow < o.w; ++ow) {
        int64_t best = -128, sum = 0;
        for (int64_t r = 0; r < kh; ++r)
          for (int64_t q = 0; q < kw; ++q) {
            const int64_t ih = oh * n.attrs.stride - n.attrs.padding + r;
            const int64_t iw = ow * n.attrs.stride - n.attrs.padding + q;
            if (ih < 0 || iw < 0 || ih >= x.h || iw >= x.w) continue;
            best = std::max(best, x.at(c, ih, iw));
            sum += x.at(c, ih, iw);
          }
        y.v[(c * o.h + oh) * o.w + ow] = is_max ? best : saturate8(floor_div(sum, kh * kw));
      }
  return y;
}

}  // namespace

TensorMap reference_oracle(const CompGraph& graph, const TensorMap& inputs, const TensorMap& weights) {
  std::vector<Act> in;
  for (const auto& gi : graph.inputs) {
    auto it = inputs.find(gi.name);
    if (it == inputs.end()) throw MissingTensorError("missing input tensor '" + gi.name + "'");
    in.push_back(from_tensor(it->second, gi.spec));
  }
  std::map<int, Act> val;
  auto get = [&](const ValueRef& r) -> const Act& { return r.graph_input ? in.at(r.index) : val.at(r.index); };
  for (int id : topo_order(graph)) {
    const OpNode& n = graph.node(id);
    const Act& x = get(n.inputs[0]);
    switch (n.kind) {
      case OpKind::Conv:
        val[id] = conv(n, x, weight(n, weights), requant_shift(n, graph));
        break;
      case OpKind::FC:
        val[id] = fc(n, x, weight(n, weights), requant_shift(n, graph));
        break;
      case OpKind::Relu: {
        Act y = x;
        for (auto& v : y.v) v = std::max<int64_t>(0, v);
        val[id] = std::move(y);
        break;
      }
      case OpKind::Add: {
        const Act& b = get(n.inputs[1]);
        Act y = x;
        const int sh = requant_shift(n, graph);
        for (size_t i = 0; i < y.v.size(); ++i) y.v[i] = saturate8(shift_right(x.v[i] + b.v[i], sh));
        val[id] = std::move(y);
        break;
      }
      case OpKind::MaxPool:
        val[id] = pool(n, x, true);
        break;
      case OpKind::AvgPool:
        val[id] = pool(n, x, false);
        break;
    }
  }
  TensorMap out;
  for (int id : graph.outputs) {
    const Act& a = val.at(id);
    Tensor t{"n" + std::to_string(id), {a.c, a.h, a.w}, {}};
    for (int64_t v : a.v) t.values.push_back(static_cast<int32_t>(v));
    out[t.name] = std::move(t);
  }
  return out;
}

TensorMap random_inputs(const CompGraph& graph, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(-128, 127);
  TensorMap m;
  for (const auto& gi : graph.inputs) {
    const Shape3 s = as_shape3(gi.spec);
    Tensor t{gi.name, {s.c, s.h, s.w}, {}};
    for (int64_t i = 0; i < s.elements(); ++i) t.values.push_back(d(rng));
    m[gi.name] = std::move(t);
  }
  return m;
}

TensorMap random_weights(const CompGraph& graph, uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  TensorMap m;
  for (const auto& n : graph.nodes) {
    if (!is_cim(n.kind)) continue;
    const int64_t half = int64_t{1} << (n.attrs.weight_bits - 1);
    std::uniform_int_distribution<int64_t> d(-half, half - 1);
    Tensor t{n.attrs.weight, n.attrs.kernel, {}};
    for (int64_t i = 0; i < t.elements(); ++i) t.values.push_back(static_cast<int32_t>(d(rng)));
    m[t.name] = std::move(t);
  }
  return m;
}

}  // namespace cim
