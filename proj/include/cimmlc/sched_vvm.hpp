#pragma once

#include "cimmlc/sched_mvm.hpp"

namespace cim {

// Row groups needed so each group fits within parallel_row: ceil(min(rows, xb_rows) / parallel_row).
int row_split(int64_t rows_used, const HwSpec& hw);
int row_split(const WeightMatrix& wm, const HwSpec& hw);

// Rewrites WLM instances so that every row group of a tile sits on its own crossbar.
// Leftover pool crossbars keep naive instances; when the pool cannot hold one remapped
// instance, spare crossbars of granted cores and then idle cores are borrowed.
// A node stays naive when remapping would lower its window throughput, and leftover
// naive instances are dropped when they would pace the remapped ones.
void remap(MappingPlan& map, const CompGraph& graph, const HwSpec& hw);

// Same event model as mvm_pipeline; remapped groups fire together in one row pass.
VxbSchedule vvm_pipeline(const CompGraph& graph, const HwSpec& hw, const MappingPlan& map, bool staged = true);

nlohmann::json remap_to_json(const MappingPlan& map, const HwSpec& hw);

}  // namespace cim
