// SPDX-License-Identifier: Apache-2.0
#include "tilec/xsmm/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "tilec/ir/bf16.hpp"

namespace tilec::xsmm {

std::string_view to_string(CallKind kind) {
  switch (kind) {
    case CallKind::Unary:
      return "unary";
    case CallKind::Binary:
      return "binary";
    case CallKind::Gemm:
      return "gemm";
    case CallKind::Brgemm:
      return "brgemm";
    case CallKind::FusedBrgemm:
      return "fused_brgemm";
  }
  return "?";
}

std::string_view to_string(UnaryKind kind) {
  switch (kind) {
    case UnaryKind::None:
      return "none";
    case UnaryKind::Relu:
      return "relu";
    case UnaryKind::Zero:
      return "zero";
    case UnaryKind::Copy:
      return "copy";
  }
  return "?";
}

std::string_view to_string(BinaryKind kind) {
  switch (kind) {
    case BinaryKind::None:
      return "none";
    case BinaryKind::Add:
      return "add";
    case BinaryKind::Mul:
      return "mul";
  }
  return "?";
}

namespace {

template <class E>
E parse_enum(std::string_view text, std::initializer_list<E> all, const char* what) {
  for (E e : all) {
    if (to_string(e) == text) return e;
  }
  throw CompileError(std::string("unknown ") + what + " '" + std::string(text) + "'");
}

[[noreturn]] void invalid(const DispatchKey& key, const std::string& why) {
  throw CompileError("invalid dispatch key (" + key.str() + "): " + why);
}

}  // namespace

void DispatchKey::validate() const {
  if (m < 1 || n < 1 || k < 1 || batch < 1) invalid(*this, "dims must be positive");
  auto need_ld = [&](int64_t ld, int64_t extent, const char* name) {
    if (ld < extent) {
      invalid(*this, std::string(name) + "=" + std::to_string(ld) + " is smaller than the row extent " +
                         std::to_string(extent));
    }
  };
  switch (kind) {
    case CallKind::Unary:
      if (unary == UnaryKind::None) invalid(*this, "unary kind missing");
      if (unary != UnaryKind::Zero) need_ld(lda, n, "lda");
      need_ld(ldc, n, "ldc");
      break;
    case CallKind::Binary:
      if (binary == BinaryKind::None) invalid(*this, "binary kind missing");
      if (!bcast_col_in0) need_ld(lda, n, "lda");
      need_ld(ldb, n, "ldb");
      need_ld(ldc, n, "ldc");
      break;
    case CallKind::Gemm:
    case CallKind::Brgemm:
    case CallKind::FusedBrgemm:
      if (kind == CallKind::Gemm && batch != 1) invalid(*this, "gemm has no batch");
      if (vnni && k % 2 != 0) invalid(*this, "vnni needs an even k");
      need_ld(lda, k, "lda");
      need_ld(ldb, vnni ? 2 * n : n, "ldb");
      need_ld(ldc, n, "ldc");
      if (kind != CallKind::FusedBrgemm && (unary != UnaryKind::None || binary != BinaryKind::None)) {
        invalid(*this, "only fused_brgemm carries an epilogue");
      }
      if (binary != BinaryKind::None && !bcast_col_in0) {
        invalid(*this, "fused epilogue operand must be a broadcast row");
      }
      if (unary != UnaryKind::None && unary != UnaryKind::Relu) {
        invalid(*this, "fused unary must be relu");
      }
      break;
  }
}

AttrDict DispatchKey::to_attrs() const {
  AttrDict a;
  a["kind"] = std::string(to_string(kind));
  a["dtype"] = std::string(tilec::to_string(dtype));
  a["m"] = m;
  a["n"] = n;
  auto put = [&](const char* key, int64_t v, int64_t def) {
    if (v != def) a[key] = v;
  };
  put("k", k, 1);
  put("batch", batch, 1);
  put("lda", lda, 0);
  put("ldb", ldb, 0);
  put("ldc", ldc, 0);
  put("stride_a", stride_a, 0);
  put("stride_b", stride_b, 0);
  IdentList flags;
  if (beta_zero) flags.emplace_back("beta_zero");
  if (vnni) flags.emplace_back("vnni");
  if (bcast_col_in0) flags.emplace_back("bcast_col_in0");
  if (!flags.empty()) a["flags"] = std::move(flags);
  if (unary != UnaryKind::None) a["unary"] = std::string(to_string(unary));
  if (binary != BinaryKind::None) a["binary"] = std::string(to_string(binary));
  return a;
}

DispatchKey DispatchKey::from_op(const Op& op) {
  DispatchKey key;
  using enum CallKind;
  key.kind = parse_enum(op.ident_attr("kind"), {Unary, Binary, Gemm, Brgemm, FusedBrgemm}, "call kind");
  auto elem = parse_elem_type(op.ident_attr("dtype"));
  if (!elem) throw CompileError("unknown dtype '" + op.ident_attr("dtype") + "'");
  key.dtype = *elem;
  auto get = [&](const char* name, int64_t def) { return op.has_attr(name) ? op.int_attr(name) : def; };
  key.m = get("m", 1);
  key.n = get("n", 1);
  key.k = get("k", 1);
  key.batch = get("batch", 1);
  key.lda = get("lda", 0);
  key.ldb = get("ldb", 0);
  key.ldc = get("ldc", 0);
  key.stride_a = get("stride_a", 0);
  key.stride_b = get("stride_b", 0);
  if (op.has_attr("flags")) {
    for (const std::string& f : op.idents_attr("flags")) {
      if (f == "beta_zero") {
        key.beta_zero = true;
      } else if (f == "vnni") {
        key.vnni = true;
      } else if (f == "bcast_col_in0") {
        key.bcast_col_in0 = true;
      } else {
        throw CompileError("unknown xsmm flag '" + f + "'");
      }
    }
  }
  if (op.has_attr("unary")) {
    key.unary = parse_enum(op.ident_attr("unary"),
                           {UnaryKind::None, UnaryKind::Relu, UnaryKind::Zero, UnaryKind::Copy},
                           "unary kind");
  }
  if (op.has_attr("binary")) {
    key.binary = parse_enum(op.ident_attr("binary"),
                            {BinaryKind::None, BinaryKind::Add, BinaryKind::Mul}, "binary kind");
  }
  return key;
}

std::string DispatchKey::str() const {
  std::ostringstream os;
  os << to_string(kind) << ' ' << tilec::to_string(dtype) << " m=" << m << " n=" << n;
  if (is_gemm_family(kind)) os << " k=" << k << " batch=" << batch;
  os << " lda=" << lda << " ldb=" << ldb << " ldc=" << ldc;
  if (is_gemm_family(kind)) os << " stride_a=" << stride_a << " stride_b=" << stride_b;
  if (beta_zero) os << " beta_zero";
  if (vnni) os << " vnni";
  if (bcast_col_in0) os << " bcast_col_in0";
  if (unary != UnaryKind::None) os << " unary=" << to_string(unary);
  if (binary != BinaryKind::None) os << " binary=" << to_string(binary);
  return os.str();
}

namespace {

// Epilogue shared by every gemm-family variant: round the accumulator, then
// the optional bias add and relu, each rounded to the storage type.
inline void store_row(const DispatchKey& key, const float* acc, float* crow, const float* bias) {
  bool bf16 = key.dtype == ElemType::BF16;
  for (int64_t j = 0; j < key.n; ++j) {
    float v = bf16 ? round_bf16(acc[j]) : acc[j];
    if (key.binary == BinaryKind::Add) {
      v = v + bias[j];
      if (bf16) v = round_bf16(v);
    } else if (key.binary == BinaryKind::Mul) {
      v = v * bias[j];
      if (bf16) v = round_bf16(v);
    }
    if (key.unary == UnaryKind::Relu) v = relu_scalar(v);
    crow[j] = v;
  }
}

void gemm_reference(const Kernel& kernel, const KernelArgs& x) {
  const DispatchKey& key = kernel.key;
  thread_local std::vector<float> acc;
  acc.resize(static_cast<size_t>(key.n));
  for (int64_t i = 0; i < key.m; ++i) {
    float* crow = x.c + i * key.ldc;
    for (int64_t j = 0; j < key.n; ++j) acc[static_cast<size_t>(j)] = key.beta_zero ? 0.0f : crow[j];
    for (int64_t b = 0; b < key.batch; ++b) {
      const float* arow = x.a + b * key.stride_a + i * key.lda;
      const float* bb = x.b + b * key.stride_b;
      for (int64_t p = 0; p < key.k; ++p) {
        float av = arow[p];
        if (key.vnni) {
          const float* brow = bb + (p / 2) * key.ldb + (p % 2);
          for (int64_t j = 0; j < key.n; ++j) acc[static_cast<size_t>(j)] += av * brow[2 * j];
        } else {
          const float* brow = bb + p * key.ldb;
          for (int64_t j = 0; j < key.n; ++j) acc[static_cast<size_t>(j)] += av * brow[j];
        }
      }
    }
    store_row(key, acc.data(), crow, x.bias);
  }
}

// Register-blocked variant: four rows of C share each loaded row of B. The
// per-element accumulation order is the reference order, so results match
// it bitwise. With VNNI, a pair row holds B[p][j] at 2j and B[p+1][j] at 2j+1.
template <int N, bool Vnni>
void gemm_blocked(const Kernel& kernel, const KernelArgs& x) {
  const DispatchKey& key = kernel.key;
  const int64_t lda = key.lda, ldb = key.ldb, ldc = key.ldc;
  int64_t i = 0;
  for (; i + 4 <= key.m; i += 4) {
    alignas(64) float acc[4][N];
    for (int r = 0; r < 4; ++r) {
      const float* crow = x.c + (i + r) * ldc;
      for (int j = 0; j < N; ++j) acc[r][j] = key.beta_zero ? 0.0f : crow[j];
    }
    for (int64_t b = 0; b < key.batch; ++b) {
      const float* __restrict a0 = x.a + b * key.stride_a + i * lda;
      const float* __restrict bb = x.b + b * key.stride_b;
      if constexpr (Vnni) {
        for (int64_t p = 0; p < key.k; p += 2) {
          const float* __restrict brow = bb + (p / 2) * ldb;
          const float e0 = a0[p], e1 = a0[lda + p], e2 = a0[2 * lda + p], e3 = a0[3 * lda + p];
          const float o0 = a0[p + 1], o1 = a0[lda + p + 1], o2 = a0[2 * lda + p + 1],
                      o3 = a0[3 * lda + p + 1];
          for (int j = 0; j < N; ++j) {
            const float be = brow[2 * j], bo = brow[2 * j + 1];
            acc[0][j] += e0 * be;
            acc[1][j] += e1 * be;
            acc[2][j] += e2 * be;
            acc[3][j] += e3 * be;
            acc[0][j] += o0 * bo;
            acc[1][j] += o1 * bo;
            acc[2][j] += o2 * bo;
            acc[3][j] += o3 * bo;
          }
        }
      } else {
        for (int64_t p = 0; p < key.k; ++p) {
          const float* __restrict brow = bb + p * ldb;
          const float v0 = a0[p], v1 = a0[lda + p], v2 = a0[2 * lda + p], v3 = a0[3 * lda + p];
          for (int j = 0; j < N; ++j) {
            const float bv = brow[j];
            acc[0][j] += v0 * bv;
            acc[1][j] += v1 * bv;
            acc[2][j] += v2 * bv;
            acc[3][j] += v3 * bv;
          }
        }
      }
    }
    for (int r = 0; r < 4; ++r) store_row(key, acc[r], x.c + (i + r) * ldc, x.bias);
  }
  for (; i < key.m; ++i) {
    alignas(64) float acc[N];
    const float* crow = x.c + i * ldc;
    for (int j = 0; j < N; ++j) acc[j] = key.beta_zero ? 0.0f : crow[j];
    for (int64_t b = 0; b < key.batch; ++b) {
      const float* arow = x.a + b * key.stride_a + i * lda;
      const float* bb = x.b + b * key.stride_b;
      for (int64_t p = 0; p < key.k; ++p) {
        const float* brow = Vnni ? bb + (p / 2) * ldb + (p % 2) : bb + p * ldb;
        const float av = arow[p];
        for (int j = 0; j < N; ++j) acc[j] += av * brow[Vnni ? 2 * j : j];
      }
    }
    store_row(key, acc, x.c + i * ldc, x.bias);
  }
}

void unary_kernel(const Kernel& kernel, const KernelArgs& x) {
  const DispatchKey& key = kernel.key;
  for (int64_t i = 0; i < key.m; ++i) {
    float* out = x.c + i * key.ldc;
    const float* in = x.a ? x.a + i * key.lda : nullptr;
    switch (key.unary) {
      case UnaryKind::Zero:
        std::fill(out, out + key.n, 0.0f);
        break;
      case UnaryKind::Copy:
        std::copy(in, in + key.n, out);
        break;
      case UnaryKind::Relu:
        for (int64_t j = 0; j < key.n; ++j) out[j] = relu_scalar(in[j]);
        break;
      case UnaryKind::None:
        break;
    }
  }
}

void binary_kernel(const Kernel& kernel, const KernelArgs& x) {
  const DispatchKey& key = kernel.key;
  bool bf16 = key.dtype == ElemType::BF16;
  for (int64_t i = 0; i < key.m; ++i) {
    const float* in0 = key.bcast_col_in0 ? x.a : x.a + i * key.lda;
    const float* in1 = x.b + i * key.ldb;
    float* out = x.c + i * key.ldc;
    for (int64_t j = 0; j < key.n; ++j) {
      float v = key.binary == BinaryKind::Add ? in1[j] + in0[j] : in1[j] * in0[j];
      out[j] = bf16 ? round_bf16(v) : v;
    }
  }
}

std::atomic<bool> g_fault{false};
std::atomic<float> g_fault_delta{1.0f};

}  // namespace

void reference_kernel(const Kernel& kernel, const KernelArgs& args) {
  switch (kernel.key.kind) {
    case CallKind::Unary:
      unary_kernel(kernel, args);
      break;
    case CallKind::Binary:
      binary_kernel(kernel, args);
      break;
    default:
      gemm_reference(kernel, args);
      break;
  }
}

Kernel compile_kernel(const DispatchKey& key) {
  key.validate();
  Kernel k;
  k.key = key;
  switch (key.kind) {
    case CallKind::Unary:
      k.variant = "unary_" + std::string(to_string(key.unary));
      k.fn = unary_kernel;
      return k;
    case CallKind::Binary:
      k.variant = "binary_" + std::string(to_string(key.binary));
      k.fn = binary_kernel;
      return k;
    default:
      break;
  }
  {
    std::string suffix = key.vnni ? "_vnni" : "";
    switch (key.n) {
      case 16:
        k.variant = "blocked_n16" + suffix;
        k.fn = key.vnni ? gemm_blocked<16, true> : gemm_blocked<16, false>;
        return k;
      case 32:
        k.variant = "blocked_n32" + suffix;
        k.fn = key.vnni ? gemm_blocked<32, true> : gemm_blocked<32, false>;
        return k;
      case 64:
        k.variant = "blocked_n64" + suffix;
        k.fn = key.vnni ? gemm_blocked<64, true> : gemm_blocked<64, false>;
        return k;
      default:
        break;
    }
  }
  k.variant = key.vnni ? "reference_vnni" : "reference";
  k.fn = gemm_reference;
  return k;
}

void invoke(const KernelHandle& handle, const KernelArgs& args) {
  if (!handle.kernel) throw CompileError("invoke on an empty kernel handle");
  const Kernel& k = *handle.kernel;
  k.fn(k, args);
  if (is_gemm_family(k.key.kind) && g_fault.load(std::memory_order_relaxed)) {
    args.c[0] += g_fault_delta.load(std::memory_order_relaxed);
  }
}

KernelCache& KernelCache::global() {
  static KernelCache cache;
  return cache;
}

KernelHandle KernelCache::dispatch(const DispatchKey& key) {
  std::lock_guard lock(mu_);
  ++lookups_;
  auto it = kernels_.find(key);
  if (it == kernels_.end()) {
    auto kernel = std::make_unique<Kernel>(compile_kernel(key));
    kernel->id = next_id_++;
    ++compiles_[key];
    it = kernels_.emplace(key, std::move(kernel)).first;
  }
  return KernelHandle{it->second.get()};
}

int64_t KernelCache::dispatch_count(const DispatchKey& key) const {
  std::lock_guard lock(mu_);
  auto it = compiles_.find(key);
  return it == compiles_.end() ? 0 : it->second;
}

int64_t KernelCache::total_compiles() const {
  std::lock_guard lock(mu_);
  int64_t total = 0;
  for (const auto& [key, n] : compiles_) total += n;
  return total;
}

int64_t KernelCache::lookups() const {
  std::lock_guard lock(mu_);
  return lookups_;
}

size_t KernelCache::size() const {
  std::lock_guard lock(mu_);
  return kernels_.size();
}

size_t KernelCache::gemm_family_size() const {
  std::lock_guard lock(mu_);
  return static_cast<size_t>(std::count_if(kernels_.begin(), kernels_.end(), [](const auto& kv) {
    return is_gemm_family(kv.first.kind);
  }));
}

std::vector<DispatchKey> KernelCache::keys() const {
  std::lock_guard lock(mu_);
  std::vector<DispatchKey> out;
  for (const auto& [key, kernel] : kernels_) out.push_back(key);
  return out;
}

void KernelCache::clear() {
  std::lock_guard lock(mu_);
  kernels_.clear();
  compiles_.clear();
  lookups_ = 0;
}

namespace testing {
void set_fault_injection(bool enabled, float delta) {
  g_fault_delta.store(delta);
  g_fault.store(enabled);
}
bool fault_injection_enabled() { return g_fault.load(); }
}  // namespace testing

}  // namespace tilec::xsmm
