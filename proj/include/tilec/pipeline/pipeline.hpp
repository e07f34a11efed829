// SPDX-License-Identifier: Apache-2.0
//
// Fixed-order compilation pipeline from tensor-level MLP modules down to
// micro-kernel calls. Toggles switch stages off; they never reorder them.
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tilec/ir/ir.hpp"
#include "tilec/transforms/pack.hpp"

namespace tilec {

enum class StopAfter { Pack, TileFuse, Bufferize, Xsmm, None };

std::string_view to_string(StopAfter stage);

struct PipelineConfig {
  PackingOptions packing;
  bool pack = true;  // false: no packing passes (naive baseline)
  bool fuse = true;
  int64_t gm = 1, gn = 1;
  int threads = 1;  // execution threads; recorded here for the driver
  bool hoist = true;
  StopAfter stop_after = StopAfter::None;
};

/// Pass names in execution order, as accepted by `--print-ir-after`.
const std::vector<std::string_view>& pipeline_stage_names();

struct PipelineResult {
  Module module;
  // (stage name, module after that stage), in order.
  std::vector<std::pair<std::string, Module>> snapshots;

  const Module* snapshot(std::string_view stage) const;
};

/// Runs the pipeline and verifies after every stage. A failure throws
/// CompileError whose message starts with the stage name.
PipelineResult run_pipeline(const Module& module, const PipelineConfig& config);

}  // namespace tilec
