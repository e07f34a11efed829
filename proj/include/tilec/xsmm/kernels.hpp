// SPDX-License-Identifier: Apache-2.0
//
// Micro-kernel runtime. Kernels are resolved in two steps: `dispatch` maps a
// key (shapes, leading dims, dtype, flags) to a cached kernel handle, and
// `invoke` runs that kernel on raw pointers. "Compilation" picks one of a
// fixed set of specialized implementations.
//
// Data is held as F32 in memory for both dtypes; BF16 kernels round every
// stored element to BF16 (round to nearest even).
#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "tilec/ir/ir.hpp"

namespace tilec::xsmm {

enum class CallKind : uint8_t { Unary, Binary, Gemm, Brgemm, FusedBrgemm };
enum class UnaryKind : uint8_t { None, Relu, Zero, Copy };
enum class BinaryKind : uint8_t { None, Add, Mul };

std::string_view to_string(CallKind kind);
std::string_view to_string(UnaryKind kind);
std::string_view to_string(BinaryKind kind);

inline bool is_gemm_family(CallKind k) {
  return k == CallKind::Gemm || k == CallKind::Brgemm || k == CallKind::FusedBrgemm;
}

/// Identity of a kernel. Matrices are row-major with the given leading
/// dimensions (element stride between rows).
///
///  unary     out[m,n] = op(in[m,n])            lda: in, ldc: out
///  binary    out[m,n] = in1[m,n] op in0        lda: in0, ldb: in1, ldc: out
///            with bcast_col_in0, in0 is one row of n values reused for every row
///  gemm-family C[m,n] (+)= sum_b A_b[m,k] * B_b[k,n]
///            stride_a / stride_b step between batch entries; with vnni, B_b
///            is stored [k/2, n, 2] and ldb is the stride between pair rows.
struct DispatchKey {
  CallKind kind = CallKind::Unary;
  ElemType dtype = ElemType::F32;
  int64_t m = 1, n = 1, k = 1, batch = 1;
  int64_t lda = 0, ldb = 0, ldc = 0;
  int64_t stride_a = 0, stride_b = 0;
  bool beta_zero = false;
  bool vnni = false;
  bool bcast_col_in0 = false;
  UnaryKind unary = UnaryKind::None;
  BinaryKind binary = BinaryKind::None;

  auto operator<=>(const DispatchKey&) const = default;

  /// Throws CompileError for invalid dims or leading dims.
  void validate() const;
  AttrDict to_attrs() const;
  static DispatchKey from_op(const Op& dispatch);
  std::string str() const;
};

struct KernelArgs {
  const float* a = nullptr;
  const float* b = nullptr;
  float* c = nullptr;
  const float* bias = nullptr;  // fused_brgemm epilogue operand
};

struct Kernel;
using KernelFn = void (*)(const Kernel&, const KernelArgs&);

struct Kernel {
  DispatchKey key;
  std::string variant;
  KernelFn fn = nullptr;
  uint64_t id = 0;
};

struct KernelHandle {
  const Kernel* kernel = nullptr;

  uint64_t id() const { return kernel ? kernel->id : 0; }
  bool operator==(const KernelHandle& o) const { return kernel == o.kernel; }
};

/// Builds a kernel for `key` without caching (the "compiler").
Kernel compile_kernel(const DispatchKey& key);

/// Reference implementation for any key; the optimized variants must match
/// it bitwise.
void reference_kernel(const Kernel& kernel, const KernelArgs& args);

void invoke(const KernelHandle& handle, const KernelArgs& args);

/// Thread-safe kernel cache; each key is compiled at most once.
class KernelCache {
 public:
  static KernelCache& global();

  KernelHandle dispatch(const DispatchKey& key);

  /// Compilations performed for `key` (0 or 1).
  int64_t dispatch_count(const DispatchKey& key) const;
  int64_t total_compiles() const;
  int64_t lookups() const;
  size_t size() const;
  size_t gemm_family_size() const;
  std::vector<DispatchKey> keys() const;
  void clear();

 private:
  mutable std::mutex mu_;
  std::map<DispatchKey, std::unique_ptr<Kernel>> kernels_;
  std::map<DispatchKey, int64_t> compiles_;
  int64_t lookups_ = 0;
  uint64_t next_id_ = 1;
};

namespace testing {
/// While enabled, every gemm-family invoke adds `delta` to the first element
/// of its output. Negative control for the verification harness.
void set_fault_injection(bool enabled, float delta = 1.0f);
bool fault_injection_enabled();
}  // namespace testing

}  // namespace tilec::xsmm
