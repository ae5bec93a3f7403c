#include <doctest.h>

#include <set>

#include "../support.hpp"
#include "cimmlc/compiler.hpp"
#include "cimmlc/sched_mvm.hpp"

using namespace cim;
using nlohmann::json;

namespace {

Compiled pipe_pair(bool staged) {
  CompileOptions o;
  o.staged = staged;
  return compile(testing::model("pipe_pair"), testing::arch("pipe_pair"), o);
}

}  // namespace

TEST_CASE("mvm duplication") {
  CHECK(mvm_duplicate(1, 2, 2, 1, 1024) == 4);
  CHECK(mvm_duplicate(2, 3, 4, 5) == 4);
  // replica fills its cores
  CHECK(mvm_duplicate(2, 3, 4, 8) == 3);
  // never above the number of mvms
  CHECK(mvm_duplicate(1, 2, 2, 1, 3) == 3);
}

TEST_CASE("example conv reaches four instances") {
  const HwSpec hw = testing::arch("example");
  const Compiled c = compile(testing::model("conv_relu"), hw, {Mode::XBM});
  const NodeMapping& m = c.map->nodes.at(0);
  CHECK(m.dup == 2);
  CHECK(m.dup_mvm == 4);
  CHECK(m.instances.size() == 4);
  CHECK(m.windows == 1024);
  CHECK(m.segments() == 256);
  std::set<XbRef> used;
  for (const auto& inst : m.instances)
    for (const auto& x : inst.crossbars()) CHECK(used.insert(x).second);
}

TEST_CASE("pipe_pair staged pipeline activates at most four crossbars") {
  const Compiled staged = pipe_pair(true), trad = pipe_pair(false);
  REQUIRE(staged.map);
  CHECK(staged.map->nodes.at(0).instances.size() == 2);
  CHECK(staged.map->nodes.at(1).plan.xbars_per_vxb == 4);
  CHECK(peak_active(*staged.schedule) == 4);
  CHECK(peak_active(*trad.schedule) == 6);
  CHECK(staged.schedule->first_start(1) < trad.schedule->first_start(1));
  const int total = testing::arch("pipe_pair").total_crossbars();
  CHECK(peak_active(*staged.schedule) <= total);
}

TEST_CASE("staged activations wait for their input slice") {
  const Compiled c = pipe_pair(true);
  const auto& ready = c.schedule->ready.at(0);
  for (const auto& a : c.schedule->acts) {
    if (a.node != 1) continue;
    // OP2 window w, tile vt reads OP1 pixels 4w + 2vt and 4w + 2vt + 1
    const int64_t px = a.window * 4 + a.tile / 2 * 2;
    CAPTURE(a.window);
    CAPTURE(a.tile);
    CHECK(a.start >= std::max(ready.at(px), ready.at(px + 1)));
  }
}

TEST_CASE("single crossbar node is the same either way") {
  const CompGraph g = parse_graph(json{{"inputs", {{{"name", "x"}, {"dims", {4}}}}},
                                       {"nodes", {{{"id", 0}, {"kind", "fc"}, {"attrs", {{"kernel", {2, 4}}}}, {"inputs", {"x"}}}}}});
  CompileOptions o;
  const Compiled s = compile(g, testing::arch("pipe_pair"), o);
  o.staged = false;
  const Compiled t = compile(g, testing::arch("pipe_pair"), o);
  CHECK(peak_active(*s.schedule) == 1);
  CHECK(peak_active(*t.schedule) == 1);
}

TEST_CASE("two-tile chain starts earlier when staged") {
  const CompGraph g = parse_graph(json{
      {"inputs", {{{"name", "x"}, {"dims", {2, 1, 16}}}}},
      {"nodes",
       {{{"id", 0}, {"kind", "conv"}, {"attrs", {{"kernel", {2, 2, 1, 1}}}}, {"inputs", {"x"}}},
        {{"id", 1}, {"kind", "conv"}, {"attrs", {{"kernel", {2, 2, 1, 4}}, {"stride", 4}}}, {"inputs", {0}}}}}});
  const HwSpec hw = testing::arch("pipe_pair");
  CompileOptions o;
  const Compiled s = compile(g, hw, o);
  o.staged = false;
  const Compiled t = compile(g, hw, o);
  CHECK(s.map->nodes.at(1).plan.xbars_per_vxb == 2);
  CHECK(s.schedule->first_start(1) + 1 <= t.schedule->first_start(1));
}

TEST_CASE("peak_active counts overlap") {
  CHECK(peak_active(VxbSchedule{}) == 0);
  VxbSchedule s;
  s.acts.push_back({0, 0, 0, -1, 0, 5, {0, 1, 2}, 0});
  s.acts.push_back({1, 0, 0, -1, 2, 4, {3, 4, 5}, 0});
  CHECK(peak_active(s) == 6);
  s.acts[1].start = 5;
  s.acts[1].end = 7;
  CHECK(peak_active(s) == 3);
}

TEST_CASE("schedule dump") {
  const Compiled c = pipe_pair(true);
  const json j = schedule_to_json(*c.schedule);
  CHECK(j.at("peak_active") == 4);
  CHECK(j.at("activations").size() == c.schedule->acts.size());
  CHECK(j.at("makespan") == c.schedule->makespan);
}

TEST_CASE("dcom cost") {
  CHECK(dcom_cycles(1000, std::nullopt) == 1);
  CHECK(dcom_cycles(1000, 64) == 16);
  CHECK(dcom_cycles(0, 64) == 1);
}
