// SPDX-License-Identifier: Apache-2.0
//
// Data-layout passes: block packing of matmuls, layout propagation through
// element-wise ops, pack/unpack cancellation and compile-time packing of
// constants.
#pragma once

#include <cstdint>
#include <optional>

#include "tilec/ir/ir.hpp"
#include "tilec/ir/ops.hpp"

namespace tilec {

struct PackingOptions {
  int64_t tile_m = 32;
  int64_t tile_n = 32;
  int64_t tile_k = 32;
  int64_t min_iters = 2;
  // Unset: on for BF16 only.
  std::optional<bool> vnni;
  int64_t vnni_factor = 2;

  bool use_vnni(ElemType elem) const { return vnni.value_or(elem == ElemType::BF16); }
  /// Throws CompileError on nonsensical settings.
  void validate() const;
};

bool should_pack(const Function& fn, const Op& matmul, const PackingOptions& options);

// Pack spec helpers shared with the model generator.
PackSpec lhs_pack_spec(const PackingOptions& o);   // [M,K] -> [MB,KB,mb,kb]
PackSpec rhs_pack_spec(const PackingOptions& o);   // [K,N] -> [NB,KB,kb,nb]
PackSpec vnni_pack_spec(const PackingOptions& o);  // [NB,KB,kb,nb] -> [NB,KB,kb/2,nb,2]
PackSpec out_pack_spec(const PackingOptions& o);   // [M,N] -> [MB,NB,mb,nb]
PackSpec bias_pack_spec(int64_t tile_n);           // [N] -> [NB,nb]

Function pack_matmuls(const Function& fn, const PackingOptions& options);
Function propagate_packs(const Function& fn);
Function fold_pack_unpack(const Function& fn);
Function fold_constant_packs(const Function& fn);

Module pack_matmuls(const Module& module, const PackingOptions& options);
Module propagate_packs(const Module& module);
Module fold_pack_unpack(const Module& module);
Module fold_constant_packs(const Module& module);

}  // namespace tilec
