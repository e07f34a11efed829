// SPDX-License-Identifier: Apache-2.0
#include "tilec/pipeline/pipeline.hpp"

#include <functional>

#include "tilec/ir/verifier.hpp"
#include "tilec/transforms/bufferize.hpp"
#include "tilec/transforms/tile_fuse.hpp"
#include "tilec/xsmm/lower.hpp"

namespace tilec {

std::string_view to_string(StopAfter stage) {
  switch (stage) {
    case StopAfter::Pack: return "pack";
    case StopAfter::TileFuse: return "tile-fuse";
    case StopAfter::Bufferize: return "bufferize";
    case StopAfter::Xsmm: return "xsmm";
    case StopAfter::None: return "none";
  }
  return "?";
}

const std::vector<std::string_view>& pipeline_stage_names() {
  static const std::vector<std::string_view> names = {
      "pack-matmuls",    "propagate-packs", "fold-pack-unpack", "fold-constant-packs",
      "tile-and-fuse",   "bufferize",       "convert-to-xsmm",  "fuse-xsmm-calls",
      "parallelize-2d",  "hoist-tile-config"};
  return names;
}

const Module* PipelineResult::snapshot(std::string_view stage) const {
  for (const auto& [name, m] : snapshots) {
    if (name == stage) return &m;
  }
  return nullptr;
}

PipelineResult run_pipeline(const Module& module, const PipelineConfig& config) {
  config.packing.validate();
  if (config.gm < 1 || config.gn < 1) throw CompileError("pipeline: grid factors must be positive");
  if (config.threads < 1) throw CompileError("pipeline: threads must be positive");
  verify_or_throw(module, "input");

  PipelineResult result;
  result.module = module;
  auto stage = [&](std::string_view name, const std::function<Module(const Module&)>& pass) {
    try {
      result.module = pass(result.module);
    } catch (const CompileError& e) {
      Diagnostic diag = e.diagnostic();
      std::string prefix = std::string(name) + ": ";
      if (!diag.message.starts_with(prefix)) diag.message = prefix + diag.message;
      throw CompileError(std::move(diag));
    }
    verify_or_throw(result.module, name);
    result.snapshots.emplace_back(std::string(name), result.module);
  };

  if (config.pack) {
    stage("pack-matmuls", [&](const Module& m) { return pack_matmuls(m, config.packing); });
    stage("propagate-packs", [](const Module& m) { return propagate_packs(m); });
    stage("fold-pack-unpack", [](const Module& m) { return fold_pack_unpack(m); });
    stage("fold-constant-packs", [](const Module& m) { return fold_constant_packs(m); });
  }
  if (config.stop_after == StopAfter::Pack) return result;
  stage("tile-and-fuse", [&](const Module& m) { return tile_and_fuse(m, config.fuse); });
  if (config.stop_after == StopAfter::TileFuse) return result;
  stage("bufferize", [](const Module& m) { return bufferize(m); });
  if (config.stop_after == StopAfter::Bufferize) return result;
  stage("convert-to-xsmm", [](const Module& m) { return xsmm::convert_to_xsmm(m); });
  if (config.fuse) stage("fuse-xsmm-calls", [](const Module& m) { return xsmm::fuse_xsmm_calls(m); });
  if (config.stop_after == StopAfter::Xsmm) return result;
  stage("parallelize-2d",
        [&](const Module& m) { return xsmm::parallelize_2d(m, config.gm, config.gn); });
  stage("hoist-tile-config",
        [&](const Module& m) { return xsmm::hoist_tile_config(m, config.hoist); });
  return result;
}

}  // namespace tilec
