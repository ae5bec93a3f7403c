// Thin bindings; structured values cross the boundary as JSON text.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cimmlc/compiler.hpp"
#include "cimmlc/errors.hpp"

namespace py = pybind11;
using namespace cim;
using nlohmann::json;

namespace {

CompileOptions options(const std::string& mode, bool staged, bool remap) {
  CompileOptions o;
  if (mode != "auto") o.mode = mode_from_string(mode);
  o.staged = staged;
  o.remap = remap;
  return o;
}

}  // namespace

PYBIND11_MODULE(_cimmlc, m) {
  m.doc() = "compute-in-memory compiler and simulator";

  static py::exception<Error> base(m, "CimError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def(
      "compile_flow",
      [](const std::string& graph, const std::string& arch, const std::string& mode, bool staged, bool remap) {
        return serialize_flow(compile(parse_graph_text(graph), parse_arch_text(arch), options(mode, staged, remap)).flow);
      },
      py::arg("graph"), py::arg("arch"), py::arg("mode") = "auto", py::arg("staged") = true, py::arg("remap") = true,
      "Graph and arch JSON text in, flow text out.");

  m.def(
      "perf",
      [](const std::string& flow, const std::string& arch) {
        const HwSpec hw = parse_arch_text(arch);
        const Flow f = parse_flow(flow);
        check_flow(f, hw);
        return report_to_json(perf_model(f, hw)).dump();
      },
      py::arg("flow"), py::arg("arch"));

  m.def(
      "run",
      [](const std::string& flow, const std::string& arch, const std::string& inputs, const std::string& weights) {
        return tensors_to_json(exec_flow(parse_flow(flow), parse_arch_text(arch), parse_tensors(json::parse(inputs)),
                                         parse_tensors(json::parse(weights))))
            .dump();
      },
      py::arg("flow"), py::arg("arch"), py::arg("inputs"), py::arg("weights"));

  m.def(
      "reference",
      [](const std::string& graph, const std::string& inputs, const std::string& weights) {
        return tensors_to_json(reference_oracle(parse_graph_text(graph), parse_tensors(json::parse(inputs)),
                                                parse_tensors(json::parse(weights))))
            .dump();
      },
      py::arg("graph"), py::arg("inputs"), py::arg("weights"));

  m.def(
      "random_tensors",
      [](const std::string& graph, uint64_t seed) {
        const CompGraph g = parse_graph_text(graph);
        return py::make_tuple(tensors_to_json(random_inputs(g, seed)).dump(),
                              tensors_to_json(random_weights(g, seed)).dump());
      },
      py::arg("graph"), py::arg("seed"));

  m.def(
      "verify",
      [](const std::string& graph, const std::string& arch, uint64_t seed, int n, const std::string& mode) {
        const VerifyReport r = verify(parse_graph_text(graph), parse_arch_text(arch), seed, n, false,
                                      options(mode, true, true));
        return py::make_tuple(r.passed, r.cases, r.counterexample);
      },
      py::arg("graph"), py::arg("arch"), py::arg("seed") = 1, py::arg("n") = 20, py::arg("mode") = "auto");

  m.def(
      "compare_modes",
      [](const std::string& graph, const std::string& arch) {
        std::vector<std::tuple<std::string, int64_t, int64_t>> out;
        for (const auto& r : compare_modes(parse_graph_text(graph), parse_arch_text(arch)))
          out.emplace_back(to_string(r.mode), r.latency, r.peak_xbars);
        return out;
      },
      py::arg("graph"), py::arg("arch"));

  m.def("arch_hash", [](const std::string& arch) { return arch_hash(parse_arch_text(arch)); });
}
