#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cimmlc/arch.hpp"
#include "json.hpp"

namespace cim {

enum class OpCode { ReadCore, WriteCore, ReadXb, WriteXb, ReadRows, WriteRows, Dcom, Mov };

const char* to_string(OpCode c);

// Buffer level: L0 (chip) when core < 0, otherwise L1 of that core.
struct Level {
  int core = -1;

  bool is_l0() const { return core < 0; }
  std::string str() const { return core < 0 ? "L0" : "L1." + std::to_string(core); }
  bool operator==(const Level&) const = default;
  auto operator<=>(const Level&) const = default;
};

struct MetaOp {
  OpCode code = OpCode::Mov;
  std::string name;   // ReadCore op kind or Dcom func
  std::string param;  // symbol, may be empty for Dcom
  int core = 0;
  int xb = 0;
  int row_lo = 0, row_hi = 0;  // inclusive, rows ops only
  int64_t src = 0, des = 0, len = 0;
  Level src_level, des_level;  // Mov uses both; Dcom uses src_level

  bool operator==(const MetaOp&) const = default;
};

MetaOp read_core(const std::string& kind, const std::string& param, int core, int64_t src, int64_t des);
MetaOp write_core(int core, const std::string& param);
MetaOp read_xb(int core, int xb, int64_t src, int64_t des);
MetaOp write_xb(int core, int xb, const std::string& param);
MetaOp read_rows(int core, int xb, int lo, int hi, int64_t src, int64_t des);
MetaOp write_rows(int core, int xb, int lo, int hi, const std::string& param);
MetaOp dcom(const std::string& func, Level level, int64_t src, int64_t des, int64_t len, const std::string& param = "");
MetaOp mov(Level src_level, int64_t src, Level des_level, int64_t des, int64_t len);

struct Statement {
  bool parallel = false;
  std::vector<MetaOp> ops;

  bool operator==(const Statement&) const = default;
};

// A tensor bound to a buffer region: graph inputs and outputs.
struct Binding {
  std::string name;
  Level level;
  int64_t addr = 0;
  std::vector<int64_t> dims;

  bool operator==(const Binding&) const = default;
};

struct Flow {
  std::string arch_hash;
  std::string mode;
  std::vector<Binding> inputs;
  std::vector<Binding> outputs;
  std::vector<std::pair<std::string, nlohmann::json>> params;
  std::vector<Statement> body;

  const nlohmann::json& param(const std::string& name) const;
  std::string add_param(nlohmann::json value);
  bool operator==(const Flow&) const = default;
};

std::string serialize_instr(const MetaOp& op);
std::string serialize_statement(const Statement& st);
std::string serialize_flow(const Flow& flow);
Flow parse_flow(const std::string& text);
Flow load_flow(const std::string& path);

std::string sha256_hex(const std::string& data);
std::string arch_hash(const HwSpec& hw);

// Byte range [lo, hi) of one buffer level.
struct Region {
  Level level;
  int64_t lo = 0, hi = 0;
};

struct Access {
  std::vector<Region> reads;
  std::vector<Region> writes;
};

// Crossbar contents relevant to addressing: columns and rows of what was written.
struct XbShape {
  int64_t cols = 0;
  int64_t rows = 0;
};
using XbShapes = std::map<std::pair<int, int>, XbShape>;

// Regions an op touches. `shapes` holds the crossbar state built from earlier writes
// and is updated by write ops.
Access op_access(const MetaOp& op, const Flow& flow, const HwSpec& hw, XbShapes& shapes);

// Throws SemanticError on index, span, mode, write-before-read or parallel-independence violations.
void check_flow(const Flow& flow, const HwSpec& hw);

struct FlowStats {
  int64_t statements = 0;
  int64_t parallel_blocks = 0;
  std::map<OpCode, int64_t> ops;
  // Parallel blocks made only of reads of a given code, keyed by code and block width.
  std::map<std::pair<OpCode, int64_t>, int64_t> read_blocks;
};
FlowStats flow_stats(const Flow& flow);

}  // namespace cim
