#include <doctest.h>

#include "../support.hpp"
#include "cimmlc/errors.hpp"
#include "cimmlc/flow.hpp"

using namespace cim;

TEST_CASE("baseline arch values") {
  const HwSpec hw = testing::arch("baseline");
  CHECK(hw.chip.core_number == 768);
  CHECK(hw.core.xb_number == 16);
  CHECK(hw.xbar.xb_rows == 128);
  CHECK(hw.xbar.xb_cols == 128);
  CHECK(hw.xbar.parallel_row == 8);
  CHECK(hw.xbar.dac_bits == 1);
  CHECK(hw.xbar.adc_bits == 8);
  CHECK(hw.xbar.cell_type == CellType::ReRAM);
  CHECK(hw.xbar.cell_precision_bits == 2);
  CHECK(hw.chip.alu_ops_per_cycle == 1024);
  CHECK(hw.chip.l0_bw_bits_per_cycle == 384);
  CHECK(hw.core.l1_bw_bits_per_cycle == 8192);
  CHECK(core_weight_capacity_bits(hw) == 16 * 128 * 128 * 2);
  CHECK(cycles_per_mvm(hw, 128, 8) == 8 * 16);
}

TEST_CASE("example arch values") {
  const HwSpec hw = testing::arch("example");
  CHECK(hw.chip.core_number == 2);
  CHECK(hw.core.xb_number == 2);
  CHECK(hw.xbar.xb_rows == 32);
  CHECK(hw.xbar.xb_cols == 128);
  CHECK(hw.xbar.parallel_row == 16);
  CHECK(hw.xbar.cell_precision_bits == 2);
  CHECK(core_weight_capacity_bits(hw) == 2 * 32 * 128 * 2);
  CHECK_FALSE(hw.chip.alu_ops_per_cycle.has_value());
  // 27 rows over 16 parallel rows, inputs in one DAC pass
  CHECK(cycles_per_mvm(hw, 27, 8) == 2);
  CHECK(cycles_per_mvm(hw, 16, 8) == 1);
}

TEST_CASE("bundled arch files all load") {
  for (const char* name : {"baseline", "example", "pipe_pair", "row_split", "sram_macro", "mesh_tile", "tiny_macro"}) {
    CAPTURE(name);
    CHECK_NOTHROW(testing::arch(name));
  }
}

TEST_CASE("1x1 one-bit crossbar") {
  HwSpec hw = testing::arch("example");
  hw.core.xb_number = 1;
  hw.xbar.xb_rows = hw.xbar.xb_cols = 1;
  hw.xbar.parallel_row = 1;
  hw.xbar.cell_precision_bits = 1;
  CHECK(core_weight_capacity_bits(hw) == 1);
}

TEST_CASE("arch invariants") {
  nlohmann::json doc = arch_to_json(testing::arch("example"));
  doc["crossbar"]["parallel_row"] = 64;
  CHECK_THROWS_AS(parse_arch(doc), ValidationError);
  doc["crossbar"]["parallel_row"] = 16;
  doc["crossbar"]["cell_precision_bits"] = 9;
  CHECK_THROWS_AS(parse_arch(doc), ValidationError);
  doc["crossbar"]["cell_precision_bits"] = 2;
  doc["mode"] = "fast";
  CHECK_THROWS_AS(parse_arch(doc), ValidationError);
}

TEST_CASE("power weights normalize") {
  nlohmann::json doc = arch_to_json(testing::arch("example"));
  doc["power_weights"] = {{"xb_active", 2.0}, {"adc_dac", 1.0}, {"data_move", 1.0}};
  const HwSpec hw = parse_arch(doc);
  CHECK(hw.power.xb_active == doctest::Approx(0.5));
  CHECK(hw.power.adc_dac + hw.power.xb_active + hw.power.data_move == doctest::Approx(1.0));
}

TEST_CASE("arch json round trip and hash") {
  const HwSpec hw = testing::arch("baseline");
  const HwSpec again = parse_arch(arch_to_json(hw));
  CHECK(arch_to_json(again) == arch_to_json(hw));
  CHECK(arch_hash(again) == arch_hash(hw));
  CHECK(arch_hash(hw) != arch_hash(testing::arch("example")));
}
