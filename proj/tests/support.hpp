#pragma once

#include <string>

#include "cimmlc/arch.hpp"
#include "cimmlc/graph.hpp"

#ifndef CIMMLC_DATA_DIR
#define CIMMLC_DATA_DIR "data"
#endif

namespace testing {

inline std::string data(const std::string& rel) { return std::string(CIMMLC_DATA_DIR) + "/" + rel; }

inline cim::HwSpec arch(const std::string& name) { return cim::load_arch(data("arch/" + name + ".json")); }
inline cim::CompGraph model(const std::string& name) { return cim::load_graph(data("models/" + name + ".json")); }

// Small arch for randomized runs.
inline cim::HwSpec small_arch(cim::Mode mode, int cell_bits = 2, cim::BitBinding bind = cim::BitBinding::XBC,
                              int rows = 32, int cols = 32, int pr = 8, int dac = 2) {
  nlohmann::json doc = {
      {"name", "small"},
      {"mode", cim::to_string(mode)},
      {"chip", {{"core_number", 24}, {"alu_ops_per_cycle", 64}, {"l0_bw_bits_per_cycle", 256}}},
      {"core", {{"xb_number", 4}, {"alu_ops_per_cycle", 16}, {"l1_bw_bits_per_cycle", 512}}},
      {"crossbar",
       {{"xb_size", {rows, cols}},
        {"parallel_row", pr},
        {"dac_bits", dac},
        {"cell_precision_bits", cell_bits},
        {"bit_binding", cim::to_string(bind)}}}};
  return cim::parse_arch(doc);
}

}  // namespace testing
