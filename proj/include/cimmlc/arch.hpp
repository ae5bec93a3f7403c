#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"

namespace cim {

enum class Mode { CM, XBM, WLM };
enum class NocKind { SharedMemory, Mesh };
enum class CellType { SRAM, ReRAM, PCM, FLASH };
// Where weight bit-slices go: adjacent columns or separate crossbars.
enum class BitBinding { XBC, XB };

const char* to_string(Mode m);
Mode mode_from_string(const std::string& s);
const char* to_string(NocKind k);
const char* to_string(CellType t);
const char* to_string(BitBinding b);
BitBinding bit_binding_from_string(const std::string& s);

// std::nullopt means "unbounded" (ideal) throughout.
using Limit = std::optional<int64_t>;

struct ChipTier {
  int core_number = 1;
  Limit alu_ops_per_cycle;
  Limit l0_size_bits;
  Limit l0_bw_bits_per_cycle;
  NocKind noc_kind = NocKind::SharedMemory;
  double noc_cost_cycles_per_bit = 0.0;
};

struct CoreTier {
  int xb_number = 1;
  Limit alu_ops_per_cycle;
  Limit l1_size_bits;
  Limit l1_bw_bits_per_cycle;
  NocKind noc_kind = NocKind::SharedMemory;
  double noc_cost_cycles_per_bit = 0.0;
};

struct CrossbarTier {
  int xb_rows = 1;
  int xb_cols = 1;
  int parallel_row = 1;
  int dac_bits = 1;
  int adc_bits = 8;
  CellType cell_type = CellType::ReRAM;
  int cell_precision_bits = 1;
  int write_cycles_per_row = 100;
  BitBinding bit_binding = BitBinding::XBC;
};

struct PowerWeights {
  double adc_dac = 0.10;
  double xb_active = 0.83;
  double data_move = 0.07;
};

struct HwSpec {
  std::string name;
  ChipTier chip;
  CoreTier core;
  CrossbarTier xbar;
  Mode mode = Mode::CM;
  PowerWeights power;

  int total_crossbars() const { return chip.core_number * core.xb_number; }
};

HwSpec parse_arch(const nlohmann::json& doc);
HwSpec parse_arch_text(const std::string& text);
HwSpec load_arch(const std::string& path);
nlohmann::json arch_to_json(const HwSpec& hw);

// Checks tier invariants; throws ValidationError.
void validate(const HwSpec& hw);

int64_t core_weight_capacity_bits(const HwSpec& hw);

// ceil(input_bits / dac_bits) * ceil(rows_used / parallel_row)
int64_t cycles_per_mvm(const HwSpec& hw, int64_t rows_used, int input_bits);

// Number of bit-serial DAC passes for one input vector.
int64_t dac_passes(const HwSpec& hw, int input_bits);

}  // namespace cim
