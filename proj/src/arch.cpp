#include "cimmlc/arch.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cimmlc/errors.hpp"

namespace cim {

using nlohmann::json;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

Limit parse_limit(const json& obj, const char* key) {
  if (!obj.contains(key)) return std::nullopt;
  const json& v = obj.at(key);
  if (v.is_null()) return std::nullopt;
  if (v.is_string()) {
    if (lower(v.get<std::string>()) == "unbounded") return std::nullopt;
    throw ParseError(std::string(key) + ": expected a positive integer or \"unbounded\"");
  }
  int64_t n = v.get<int64_t>();
  if (n < 1) throw ValidationError(std::string(key) + " must be positive");
  return n;
}

NocKind parse_noc(const json& obj) {
  std::string s = lower(obj.value("noc", std::string("shared-memory")));
  if (s == "shared-memory" || s == "shared_memory" || s == "shared") return NocKind::SharedMemory;
  if (s == "mesh") return NocKind::Mesh;
  throw ValidationError("unknown noc kind '" + s + "'");
}

CellType parse_cell(const std::string& raw) {
  std::string s = lower(raw);
  if (s == "sram") return CellType::SRAM;
  if (s == "reram" || s == "rram") return CellType::ReRAM;
  if (s == "pcm") return CellType::PCM;
  if (s == "flash") return CellType::FLASH;
  throw ValidationError("unknown cell type '" + raw + "'");
}

json limit_json(const Limit& l) { return l ? json(*l) : json("unbounded"); }

}  // namespace

const char* to_string(Mode m) {
  switch (m) {
    case Mode::CM:
      return "cm";
    case Mode::XBM:
      return "xbm";
    case Mode::WLM:
      return "wlm";
  }
  return "?";
}

Mode mode_from_string(const std::string& raw) {
  std::string s = lower(raw);
  if (s == "cm") return Mode::CM;
  if (s == "xbm") return Mode::XBM;
  if (s == "wlm") return Mode::WLM;
  throw ValidationError("unknown computing mode '" + raw + "'");
}

const char* to_string(NocKind k) { return k == NocKind::Mesh ? "mesh" : "shared-memory"; }

const char* to_string(CellType t) {
  switch (t) {
    case CellType::SRAM:
      return "SRAM";
    case CellType::ReRAM:
      return "ReRAM";
    case CellType::PCM:
      return "PCM";
    case CellType::FLASH:
      return "FLASH";
  }
  return "?";
}

const char* to_string(BitBinding b) { return b == BitBinding::XB ? "XB" : "XBC"; }

BitBinding bit_binding_from_string(const std::string& s) {
  if (s == "XBC" || s == "xbc") return BitBinding::XBC;
  if (s == "XB" || s == "xb") return BitBinding::XB;
  throw ValidationError("bit_binding must be XBC or XB");
}

void validate(const HwSpec& hw) {
  if (hw.chip.core_number < 1) throw ValidationError("core_number must be >= 1");
  if (hw.core.xb_number < 1) throw ValidationError("xb_number must be >= 1");
  if (hw.xbar.xb_rows < 1 || hw.xbar.xb_cols < 1) throw ValidationError("xb_size must be positive");
  if (hw.xbar.parallel_row < 1 || hw.xbar.parallel_row > hw.xbar.xb_rows)
    throw ValidationError("parallel_row must be in 1..xb_rows (" + std::to_string(hw.xbar.xb_rows) + "), got " +
                          std::to_string(hw.xbar.parallel_row));
  if (hw.xbar.dac_bits < 1 || hw.xbar.adc_bits < 1) throw ValidationError("DAC/ADC precision must be positive");
  if (hw.xbar.cell_precision_bits < 1 || hw.xbar.cell_precision_bits > 8)
    throw ValidationError("cell precision must be in 1..8 bits");
  if (hw.xbar.write_cycles_per_row < 0) throw ValidationError("write_cycles_per_row must be >= 0");
  if (hw.chip.noc_cost_cycles_per_bit < 0 || hw.core.noc_cost_cycles_per_bit < 0)
    throw ValidationError("NoC cost must be non-negative");
  const auto& p = hw.power;
  if (p.adc_dac < 0 || p.xb_active < 0 || p.data_move < 0) throw ValidationError("power weights must be >= 0");
}

HwSpec parse_arch(const json& doc) {
  HwSpec hw;
  try {
    if (!doc.is_object()) throw ParseError("arch document must be a JSON object");
    hw.name = doc.value("name", std::string());
    hw.mode = mode_from_string(doc.at("mode").get<std::string>());

    const json chip = doc.value("chip", json::object());
    hw.chip.core_number = chip.at("core_number").get<int>();
    hw.chip.alu_ops_per_cycle = parse_limit(chip, "alu_ops_per_cycle");
    hw.chip.l0_size_bits = parse_limit(chip, "l0_size_bits");
    hw.chip.l0_bw_bits_per_cycle = parse_limit(chip, "l0_bw_bits_per_cycle");
    hw.chip.noc_kind = parse_noc(chip);
    hw.chip.noc_cost_cycles_per_bit = chip.value("noc_cost_cycles_per_bit", 0.0);

    const json core = doc.value("core", json::object());
    hw.core.xb_number = core.at("xb_number").get<int>();
    hw.core.alu_ops_per_cycle = parse_limit(core, "alu_ops_per_cycle");
    hw.core.l1_size_bits = parse_limit(core, "l1_size_bits");
    hw.core.l1_bw_bits_per_cycle = parse_limit(core, "l1_bw_bits_per_cycle");
    hw.core.noc_kind = parse_noc(core);
    hw.core.noc_cost_cycles_per_bit = core.value("noc_cost_cycles_per_bit", 0.0);

    const json xb = doc.value("crossbar", json::object());
    const auto size = xb.at("xb_size").get<std::vector<int>>();
    if (size.size() != 2) throw ParseError("xb_size must be [rows, cols]");
    hw.xbar.xb_rows = size[0];
    hw.xbar.xb_cols = size[1];
    hw.xbar.parallel_row = xb.value("parallel_row", hw.xbar.xb_rows);
    hw.xbar.dac_bits = xb.value("dac_bits", 1);
    hw.xbar.adc_bits = xb.value("adc_bits", 8);
    hw.xbar.cell_type = parse_cell(xb.value("cell_type", std::string("ReRAM")));
    hw.xbar.cell_precision_bits = xb.value("cell_precision_bits", 1);
    const int default_write = hw.xbar.cell_type == CellType::SRAM ? 1 : 100;
    hw.xbar.write_cycles_per_row = xb.value("write_cycles_per_row", default_write);
    const std::string bind = lower(xb.value("bit_binding", std::string("xbc")));
    if (bind == "xbc")
      hw.xbar.bit_binding = BitBinding::XBC;
    else if (bind == "xb")
      hw.xbar.bit_binding = BitBinding::XB;
    else
      throw ValidationError("bit_binding must be XBC or XB");

    if (doc.contains("power_weights")) {
      const json& pw = doc.at("power_weights");
      hw.power.adc_dac = pw.value("adc_dac", hw.power.adc_dac);
      hw.power.xb_active = pw.value("xb_active", hw.power.xb_active);
      hw.power.data_move = pw.value("data_move", hw.power.data_move);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed arch: ") + e.what());
  }
  validate(hw);
  const double sum = hw.power.adc_dac + hw.power.xb_active + hw.power.data_move;
  if (sum <= 0) throw ValidationError("power weights must not all be zero");
  hw.power.adc_dac /= sum;
  hw.power.xb_active /= sum;
  hw.power.data_move /= sum;
  return hw;
}

HwSpec parse_arch_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("arch is not valid JSON: ") + e.what());
  }
  return parse_arch(doc);
}

HwSpec load_arch(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open arch file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_arch_text(ss.str());
}

json arch_to_json(const HwSpec& hw) {
  json doc;
  doc["name"] = hw.name;
  doc["mode"] = to_string(hw.mode);
  doc["chip"] = {{"core_number", hw.chip.core_number},
                 {"alu_ops_per_cycle", limit_json(hw.chip.alu_ops_per_cycle)},
                 {"l0_size_bits", limit_json(hw.chip.l0_size_bits)},
                 {"l0_bw_bits_per_cycle", limit_json(hw.chip.l0_bw_bits_per_cycle)},
                 {"noc", to_string(hw.chip.noc_kind)},
                 {"noc_cost_cycles_per_bit", hw.chip.noc_cost_cycles_per_bit}};
  doc["core"] = {{"xb_number", hw.core.xb_number},
                 {"alu_ops_per_cycle", limit_json(hw.core.alu_ops_per_cycle)},
                 {"l1_size_bits", limit_json(hw.core.l1_size_bits)},
                 {"l1_bw_bits_per_cycle", limit_json(hw.core.l1_bw_bits_per_cycle)},
                 {"noc", to_string(hw.core.noc_kind)},
                 {"noc_cost_cycles_per_bit", hw.core.noc_cost_cycles_per_bit}};
  doc["crossbar"] = {{"xb_size", {hw.xbar.xb_rows, hw.xbar.xb_cols}},
                     {"parallel_row", hw.xbar.parallel_row},
                     {"dac_bits", hw.xbar.dac_bits},
                     {"adc_bits", hw.xbar.adc_bits},
                     {"cell_type", to_string(hw.xbar.cell_type)},
                     {"cell_precision_bits", hw.xbar.cell_precision_bits},
                     {"write_cycles_per_row", hw.xbar.write_cycles_per_row},
                     {"bit_binding", to_string(hw.xbar.bit_binding)}};
  doc["power_weights"] = {{"adc_dac", hw.power.adc_dac},
                          {"xb_active", hw.power.xb_active},
                          {"data_move", hw.power.data_move}};
  return doc;
}

int64_t core_weight_capacity_bits(const HwSpec& hw) {
  return int64_t{hw.core.xb_number} * hw.xbar.xb_rows * hw.xbar.xb_cols * hw.xbar.cell_precision_bits;
}

int64_t dac_passes(const HwSpec& hw, int input_bits) {
  return (input_bits + hw.xbar.dac_bits - 1) / hw.xbar.dac_bits;
}

int64_t cycles_per_mvm(const HwSpec& hw, int64_t rows_used, int input_bits) {
  if (rows_used < 1 || rows_used > hw.xbar.xb_rows)
    throw DomainError("rows_used " + std::to_string(rows_used) + " outside 1.." + std::to_string(hw.xbar.xb_rows));
  if (input_bits < 1) throw DomainError("input_bits must be positive");
  const int64_t row_passes = (rows_used + hw.xbar.parallel_row - 1) / hw.xbar.parallel_row;
  return dac_passes(hw, input_bits) * row_passes;
}

}  // namespace cim
