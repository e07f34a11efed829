// SPDX-License-Identifier: Apache-2.0
//
// Tiling of packed contractions over their outer parallel dims, with the
// surrounding element-wise ops pulled into the tile loop body.
#pragma once

#include <cstddef>
#include <vector>

#include "tilec/ir/ir.hpp"

namespace tilec {

/// A packed_matmul and the element-wise ops fused with it. Indices refer to
/// top-level ops of the function; `members` is sorted and excludes the anchor.
struct FusionCluster {
  size_t anchor = 0;
  std::vector<size_t> members;

  size_t size() const { return members.size() + 1; }
};

/// Bottom-up over packed_matmuls. Each anchor claims its single-use chain of
/// bias_add/relu consumers and the single-use element-wise producers of its
/// init. An op is claimed by at most one cluster. With `fuse` off every
/// cluster is the bare anchor.
std::vector<FusionCluster> build_fusion_clusters(const Function& fn, bool fuse = true);

/// Rewrites each cluster into a `forall` over [MB, NB] output tiles. Packed
/// element-wise ops outside any cluster get a forall of their own.
Function tile_and_fuse(const Function& fn, const std::vector<FusionCluster>& clusters);

Module tile_and_fuse(const Module& module, bool fuse = true);

}  // namespace tilec
