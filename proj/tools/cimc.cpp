// cimc: compile, simulate, verify, modes-report.
#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "cimmlc/compiler.hpp"
#include "cimmlc/errors.hpp"
#include "cimmlc/sched_vvm.hpp"

using namespace cim;
using nlohmann::json;

namespace {

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw ParseError("cannot write '" + path + "'");
  f << text;
}

std::optional<Mode> parse_mode(const std::string& s) {
  if (s == "auto") return std::nullopt;
  return mode_from_string(s);
}

int run_compile(const std::string& model, const std::string& arch, const std::string& mode,
                const std::vector<std::string>& emit, const std::string& out, bool traditional, bool no_remap) {
  const CompGraph g = load_graph(model);
  const HwSpec hw = load_arch(arch);
  CompileOptions opt;
  opt.mode = parse_mode(mode);
  opt.staged = !traditional;
  opt.remap = !no_remap;
  const Compiled c = compile(g, hw, opt);
  write_out(out, serialize_flow(c.flow));
  for (const auto& pass : emit) {
    json doc;
    if (pass == "sched-cg") {
      doc = cg_to_json(c.graph, c.cg);
    } else if (pass == "sched-mvm") {
      if (!c.map) throw ValidationError("sched-mvm is not run in mode cm");
      doc = mapping_to_json(*c.map, hw);
      doc["schedule"] = schedule_to_json(*c.schedule);
    } else if (pass == "sched-vvm") {
      if (c.mode != Mode::WLM) throw ValidationError("sched-vvm only runs in mode wlm");
      doc = remap_to_json(*c.map, hw);
    } else if (pass == "graph") {
      doc = graph_to_json(c.graph);
    } else {
      throw ValidationError("unknown pass '" + pass + "'");
    }
    const std::string text = doc.dump(2) + "\n";
    write_out(out.empty() || out == "-" ? "" : out + "." + pass + ".json", text);
  }
  return 0;
}

int run_simulate(const std::string& flow_path, const std::string& arch, const std::string& tensors, bool perf,
                 bool func, bool force, const std::string& out) {
  const HwSpec hw = load_arch(arch);
  const Flow flow = load_flow(flow_path);
  if (flow.arch_hash != arch_hash(hw) && !force)
    throw ArchMismatchError("flow was compiled for arch " + flow.arch_hash + ", '" + arch + "' hashes to " +
                            arch_hash(hw) + " (use --force to run anyway)");
  check_flow(flow, hw);
  if (!perf && !func) perf = true;
  json doc = json::object();
  if (func) {
    if (tensors.empty()) throw MissingTensorError("--func needs --tensors");
    const TensorMap t = load_tensors(tensors);
    doc["outputs"] = tensors_to_json(exec_flow(flow, hw, t, t));
  }
  if (perf) {
    const SimReport r = perf_model(flow, hw);
    doc["report"] = report_to_json(r);
    if (out.empty()) std::cerr << report_table(r);
  }
  write_out(out, doc.dump(2) + "\n");
  return 0;
}

int run_verify(const std::string& model, const std::string& arch, const std::string& mode, uint64_t seed, int n,
               bool corrupt) {
  const CompGraph g = load_graph(model);
  const HwSpec hw = load_arch(arch);
  CompileOptions opt;
  opt.mode = parse_mode(mode);
  const VerifyReport r = verify(g, hw, seed, n, corrupt, opt);
  if (r.cases == 0) {
    std::cout << "0 cases: nothing to check\n";
    return 0;
  }
  std::cout << r.passed << "/" << r.cases << " pass\n";
  if (!r.counterexample.empty()) {
    std::cout << "counterexample: " << r.counterexample << "\n";
    return static_cast<int>(ExitCode::kSimulation);
  }
  return 0;
}

int run_tensors(const std::string& model, uint64_t seed, bool oracle, const std::string& out) {
  const CompGraph g = load_graph(model);
  TensorMap t = random_inputs(g, seed);
  const TensorMap w = random_weights(g, seed);
  json doc;
  if (oracle) {
    doc["outputs"] = tensors_to_json(reference_oracle(g, t, w));
  } else {
    t.insert(w.begin(), w.end());
    doc = tensors_to_json(t);
  }
  write_out(out, doc.dump(2) + "\n");
  return 0;
}

int run_modes(const std::vector<std::string>& models, const std::string& arch) {
  const HwSpec hw = load_arch(arch);
  std::cout << std::left << std::setw(28) << "model" << std::setw(6) << "mode" << std::right << std::setw(14)
            << "latency" << std::setw(8) << "peak" << std::setw(12) << "power" << "\n";
  for (const auto& m : models) {
    const CompGraph g = load_graph(m);
    for (const auto& r : compare_modes(g, hw))
      std::cout << std::left << std::setw(28) << m.substr(m.find_last_of('/') + 1) << std::setw(6) << to_string(r.mode)
                << std::right << std::setw(14) << r.latency << std::setw(8) << r.peak_xbars << std::setw(12)
                << std::fixed << std::setprecision(3) << r.peak_power << "\n";
    const CgVariants v = cg_variants(g, hw);
    std::cout << "  cg: none " << v.none << "  dup " << v.dup_only << "  pipe " << v.pipe_only << "  p&d " << v.pipe_dup
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cimc: compiler and simulator for compute-in-memory accelerators"};
  app.require_subcommand(1);

  std::string model, arch, mode = "auto", out, flow_path, tensors;
  std::vector<std::string> emit, models;
  uint64_t seed = 1;
  int n = 20;
  bool perf = false, func = false, force = false, corrupt = false, traditional = false, no_remap = false;

  auto* c = app.add_subcommand("compile", "compile a model to a meta-operator flow");
  c->add_option("--model", model, "graph JSON")->required();
  c->add_option("--arch", arch, "arch JSON")->required();
  c->add_option("--mode", mode, "auto|cm|xbm|wlm")->check(CLI::IsMember({"auto", "cm", "xbm", "wlm"}));
  c->add_option("--emit", emit, "pass dumps: sched-cg, sched-mvm, sched-vvm, graph");
  c->add_option("-o", out, "output flow path");
  c->add_option("--seed", seed, "unused by compile; accepted for scripts");
  c->add_flag("--traditional", traditional, "fire whole windows instead of staged tile slices");
  c->add_flag("--no-remap", no_remap, "keep naive row groups in wlm");

  auto* s = app.add_subcommand("simulate", "run a flow");
  s->add_option("flow", flow_path, "flow file")->required();
  s->add_option("--arch", arch, "arch JSON")->required();
  s->add_option("--tensors", tensors, "inputs and weights JSON");
  s->add_flag("--perf", perf, "performance report");
  s->add_flag("--func", func, "functional outputs");
  s->add_flag("--force", force, "ignore arch hash mismatch");
  s->add_option("-o", out, "output path");

  auto* v = app.add_subcommand("verify", "random inputs through flow and reference");
  v->add_option("--model", model, "graph JSON")->required();
  v->add_option("--arch", arch, "arch JSON")->required();
  v->add_option("--mode", mode, "auto|cm|xbm|wlm")->check(CLI::IsMember({"auto", "cm", "xbm", "wlm"}));
  v->add_option("--seed", seed, "first seed");
  v->add_option("-n", n, "cases");
  v->add_flag("--corrupt", corrupt, "inject a fault into the flow");

  bool oracle = false;
  auto* t = app.add_subcommand("tensors", "random inputs and weights for a model");
  t->add_option("--model", model, "graph JSON")->required();
  t->add_option("--seed", seed, "seed");
  t->add_flag("--oracle", oracle, "write reference outputs for those tensors instead");
  t->add_option("-o", out, "output path");

  auto* r = app.add_subcommand("modes-report", "latency per computing mode");
  r->add_option("--model", models, "graph JSON (repeatable)")->required();
  r->add_option("--arch", arch, "arch JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*c) return run_compile(model, arch, mode, emit, out, traditional, no_remap);
    if (*s) return run_simulate(flow_path, arch, tensors, perf, func, force, out);
    if (*v) return run_verify(model, arch, mode, seed, n, corrupt);
    if (*t) return run_tensors(model, seed, oracle, out);
    if (*r) return run_modes(models, arch);
  } catch (const Error& e) {
    std::cerr << "cimc: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "cimc: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kValidation);
  }
  return static_cast<int>(ExitCode::kUsage);
}
