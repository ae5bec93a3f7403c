#include <doctest.h>

#include "../support.hpp"
#include "cimmlc/compiler.hpp"
#include "cimmlc/errors.hpp"
#include "cimmlc/flow.hpp"

using namespace cim;

namespace {

Flow with_header(const std::string& mode, const HwSpec& hw) {
  Flow f;
  f.arch_hash = arch_hash(hw);
  f.mode = mode;
  return f;
}

}  // namespace

TEST_CASE("instruction rendering") {
  CHECK(serialize_instr(mov(Level{}, 0, Level{0}, 0, 216)) == "mov(L0,0,L1.0,0,216)");
  Statement st{true, {read_core("conv", "p0", 0, 0, 3072), read_core("conv", "p0", 1, 1440, 19456)}};
  CHECK(serialize_statement(st) == "parallel{cim.read_core(conv,p0,0,0,3072),cim.read_core(conv,p0,1,1440,19456)}");
  CHECK(serialize_flow(Flow{}).empty());
}

TEST_CASE("compiled flows round trip") {
  for (const char* arch : {"example", "pipe_pair", "row_split"})
    for (Mode m : {Mode::CM, Mode::XBM, Mode::WLM})
      for (const char* model : {"conv_relu", "pipe_pair", "row_split"}) {
        const HwSpec hw = testing::arch(arch);
        Compiled c;
        try {
          c = compile(testing::model(model), hw, {m});
        } catch (const CapacityError&) {
          continue;
        }
        CAPTURE(arch);
        CAPTURE(model);
        const std::string text = serialize_flow(c.flow);
        const Flow back = parse_flow(text);
        CHECK(back == c.flow);
        CHECK(serialize_flow(back) == text);
        CHECK_NOTHROW(check_flow(back, hw));
      }
}

TEST_CASE("syntax errors") {
  CHECK_THROWS_AS(parse_flow("parallel{cim.read_xb(0,0,0,0)\n"), SyntaxError);
  CHECK_THROWS_AS(parse_flow("cim.read_xb(0,0,0\n"), SyntaxError);
  CHECK_THROWS_AS(parse_flow("cim.frobnicate(1)\n"), SyntaxError);
  try {
    parse_flow("mov(L0,0,L1.0,0,8)\nmov(L0,0,L2,0,8)\n");
    FAIL("expected a syntax error");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("semantic checks") {
  const HwSpec hw = testing::arch("example");
  SUBCASE("row span wider than parallel_row") {
    Flow f = with_header("wlm", hw);
    f.add_param({{"type", "rows"}});
    f.body.push_back({false, {write_rows(0, 0, 0, 31, "p0")}});
    f.body.push_back({false, {read_rows(0, 0, 0, 31, 0, 0)}});
    CHECK_THROWS_AS(check_flow(f, hw), SemanticError);
  }
  SUBCASE("crossbar index out of range") {
    Flow f = with_header("xbm", hw);
    f.body.push_back({false, {read_xb(0, 2, 0, 0)}});
    CHECK_THROWS_AS(check_flow(f, hw), SemanticError);
  }
  SUBCASE("read before write") {
    Flow f = with_header("xbm", hw);
    f.body.push_back({false, {read_xb(0, 0, 0, 0)}});
    CHECK_THROWS_AS(check_flow(f, hw), SemanticError);
  }
  SUBCASE("mode gating") {
    Flow f = with_header("cm", hw);
    f.body.push_back({false, {read_xb(0, 0, 0, 0)}});
    CHECK_THROWS_AS(check_flow(f, hw), SemanticError);
  }
  SUBCASE("parallel ops writing one region") {
    Flow f = with_header("cm", hw);
    f.body.push_back({true, {mov(Level{}, 0, Level{0}, 0, 16), mov(Level{}, 64, Level{0}, 8, 16)}});
    CHECK_THROWS_AS(check_flow(f, hw), SemanticError);
  }
  SUBCASE("parallel op reading another's destination") {
    Flow f = with_header("cm", hw);
    f.body.push_back({true, {mov(Level{}, 0, Level{}, 100, 16), mov(Level{}, 104, Level{0}, 0, 16)}});
    CHECK_THROWS_AS(check_flow(f, hw), SemanticError);
  }
  SUBCASE("independent parallel movs are fine") {
    Flow f = with_header("cm", hw);
    f.body.push_back({true, {mov(Level{}, 0, Level{0}, 0, 16), mov(Level{}, 16, Level{1}, 0, 16)}});
    CHECK_NOTHROW(check_flow(f, hw));
  }
}

TEST_CASE("flow stats") {
  const Compiled c = compile(testing::model("conv_relu"), testing::arch("example"), {Mode::CM});
  const FlowStats s = flow_stats(c.flow);
  CHECK(s.parallel_blocks == 1);
  CHECK(s.read_blocks.at({OpCode::ReadCore, 2}) == 1);
  CHECK(s.ops.at(OpCode::WriteCore) == 2);
  CHECK(s.ops.at(OpCode::Dcom) == 1);
}

TEST_CASE("sha256 of a known string") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
