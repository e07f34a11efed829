// SPDX-License-Identifier: Apache-2.0
//
// Runs buffer-form and micro-kernel-form functions. Parallel loops are
// spread over OpenMP threads with a static contiguous split of the block
// iterations; everything else runs in program order.
#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tilec/interp/interpreter.hpp"
#include "tilec/ir/ir.hpp"
#include "tilec/xsmm/kernels.hpp"

namespace tilec::xsmm {

struct ExecOptions {
  int threads = 1;
  // Kernel cache for xsmm.dispatch; null means KernelCache::global().
  KernelCache* cache = nullptr;
  // Track initialization of every allocated element and fail on a read of
  // uninitialized memory or a write to a read-only buffer. Forces one thread.
  bool check_init = false;
};

/// Counters of the most recent run.
struct ExecStats {
  int64_t tile_setups = 0;
  int64_t tile_releases = 0;
  int64_t dispatch_lookups = 0;
  int64_t parallel_iterations = 0;
  std::array<int64_t, 5> invokes{};  // indexed by CallKind
  std::vector<uint64_t> dispatch_ids;  // kernel id returned by each dispatch, in order

  int64_t invokes_of(CallKind kind) const { return invokes[static_cast<size_t>(kind)]; }
  std::string summary() const;
};

/// A function prepared for repeated execution. Allocations are made on the
/// first run and reused afterwards.
class Executable {
 public:
  explicit Executable(Function fn, ExecOptions options = {});
  ~Executable();
  Executable(Executable&&) noexcept;
  Executable& operator=(Executable&&) noexcept;

  std::vector<TensorData> run(std::span<const TensorData> inputs);

  const ExecStats& stats() const;
  const Function& function() const;
  void set_threads(int threads);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::vector<TensorData> execute(const Function& fn, std::span<const TensorData> inputs,
                                const ExecOptions& options = {}, ExecStats* stats = nullptr);

}  // namespace tilec::xsmm
