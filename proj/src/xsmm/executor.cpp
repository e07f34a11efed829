// SPDX-License-Identifier: Apache-2.0
#include "tilec/xsmm/executor.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <map>
#include <mutex>
#include <sstream>
#include <variant>

#include "tilec/ir/bf16.hpp"
#include "tilec/ir/ops.hpp"
#include "tilec/xsmm/lower.hpp"

namespace tilec::xsmm {

std::string ExecStats::summary() const {
  std::ostringstream os;
  os << "parallel_iterations=" << parallel_iterations << " tile_setups=" << tile_setups
     << " tile_releases=" << tile_releases << " dispatch_lookups=" << dispatch_lookups;
  for (CallKind k : {CallKind::Unary, CallKind::Binary, CallKind::Gemm, CallKind::Brgemm,
                     CallKind::FusedBrgemm}) {
    os << " invokes." << to_string(k) << "=" << invokes_of(k);
  }
  return os.str();
}

namespace {

constexpr int kMaxRank = 8;
constexpr size_t kAlignBytes = 64 * sizeof(float);

struct View {
  float* data = nullptr;
  int rank = 0;
  std::array<int64_t, kMaxRank> shape{};
  std::array<int64_t, kMaxRank> strides{};

  std::span<const int64_t> dims() const { return {shape.data(), static_cast<size_t>(rank)}; }
  std::span<const int64_t> steps() const { return {strides.data(), static_cast<size_t>(rank)}; }
  int64_t elements() const { return product(dims()); }
  bool contiguous() const {
    int64_t expect = 1;
    for (int d = rank - 1; d >= 0; --d) {
      if (shape[static_cast<size_t>(d)] != 1 && strides[static_cast<size_t>(d)] != expect) return false;
      expect *= shape[static_cast<size_t>(d)];
    }
    return true;
  }
};

View make_view(float* data, const Type& t) {
  if (t.rank() > kMaxRank) throw CompileError("executor: rank above " + std::to_string(kMaxRank));
  View v;
  v.data = data;
  v.rank = static_cast<int>(t.rank());
  for (size_t d = 0; d < t.shape.size(); ++d) {
    v.shape[d] = t.shape[d];
    v.strides[d] = t.strides.empty() ? row_major_strides(t.shape)[d] : t.strides[d];
  }
  return v;
}

template <class F>
void for_each_element(const View& v, F&& f) {
  if (v.rank == 0) {
    f(v.data);
    return;
  }
  for (int d = 0; d < v.rank; ++d) {
    if (v.shape[static_cast<size_t>(d)] == 0) return;
  }
  std::array<int64_t, kMaxRank> idx{};
  int last = v.rank - 1;
  float* base = v.data;
  while (true) {
    for (int64_t i = 0; i < v.shape[static_cast<size_t>(last)]; ++i) f(base + i * v.strides[static_cast<size_t>(last)]);
    int d = last;
    while (true) {
      if (d == 0) return;
      --d;
      base += v.strides[static_cast<size_t>(d)];
      if (++idx[static_cast<size_t>(d)] < v.shape[static_cast<size_t>(d)]) break;
      base -= v.strides[static_cast<size_t>(d)] * v.shape[static_cast<size_t>(d)];
      idx[static_cast<size_t>(d)] = 0;
    }
  }
}

struct AlignedFree {
  void operator()(float* p) const { std::free(p); }
};
using AlignedBuffer = std::unique_ptr<float[], AlignedFree>;

AlignedBuffer aligned_buffer(int64_t elements) {
  size_t bytes = static_cast<size_t>(std::max<int64_t>(elements, 1)) * sizeof(float);
  bytes = (bytes + kAlignBytes - 1) / kAlignBytes * kAlignBytes;
  auto* p = static_cast<float*>(std::aligned_alloc(kAlignBytes, bytes));
  if (!p) throw std::bad_alloc();
  return AlignedBuffer(p);
}

using Slot = std::variant<std::monostate, int64_t, View, const Kernel*>;

struct Shadow {
  float* begin;
  float* end;
  bool readonly;
  std::vector<uint8_t> init;
};

struct Ctx {
  std::vector<Slot> slots;
  std::vector<const Kernel*> active;  // open tile configs, innermost last
  std::vector<AlignedBuffer> scratch;
};

[[noreturn]] void mismatch(const Op& op, const std::string& why) {
  throw CompileError("invoke " + std::string(op_name(op.kind)) + ": view/handle mismatch: " + why);
}

struct Matrix {
  int64_t rows, cols, ld;
};

std::optional<Matrix> matrix_of(const View& v) {
  if (v.rank == 0 || v.strides[static_cast<size_t>(v.rank - 1)] != 1) return std::nullopt;
  int64_t cols = v.shape[static_cast<size_t>(v.rank - 1)];
  if (v.rank == 1) return Matrix{1, cols, cols};
  if (v.rank == 2) return Matrix{v.shape[0], cols, v.strides[0]};
  if (!v.contiguous()) return std::nullopt;
  return Matrix{v.elements() / cols, cols, cols};
}

void expect_matrix(const Op& op, const View& v, int64_t rows, int64_t cols, int64_t ld,
                   const char* name) {
  auto m = matrix_of(v);
  if (!m || m->rows != rows || m->cols != cols || (rows > 1 && m->ld != ld)) {
    mismatch(op, std::string(name) + " is not a " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " matrix with ld " + std::to_string(ld));
  }
}

void expect_dims(const Op& op, const View& v, std::initializer_list<int64_t> shape,
                 std::initializer_list<int64_t> strides, const char* name) {
  bool ok = v.rank == static_cast<int>(shape.size());
  size_t d = 0;
  for (auto s = shape.begin(), t = strides.begin(); ok && s != shape.end(); ++s, ++t, ++d) {
    ok = v.shape[d] == *s && (*s == 1 || v.strides[d] == *t);
  }
  if (!ok) mismatch(op, std::string(name) + " does not match the kernel's batch layout");
}

}  // namespace

struct Executable::Impl {
  Function fn;
  ExecOptions options;
  KernelCache local_cache;  // kernels for ops that were never lowered
  std::map<const Op*, DispatchKey> dispatch_keys;
  std::map<const Op*, std::pair<KernelHandle, CallLowering>> direct_calls;
  std::map<ValueId, AlignedBuffer> allocs;
  std::vector<Shadow> shadows;
  std::vector<View> outputs;
  std::mutex out_mu;

  std::atomic<int64_t> setups{0}, releases{0}, lookups{0}, par_iters{0};
  std::mutex ids_mu;
  std::vector<uint64_t> dispatch_ids;
  std::array<std::atomic<int64_t>, 5> invokes{};
  ExecStats stats;

  Impl(Function f, ExecOptions o) : fn(std::move(f)), options(o) {
    if (options.threads < 1) throw CompileError("executor: threads must be positive");
    walk(fn.body, [&](const Op& op) {
      if (op.kind == OpKind::XsmmDispatch) {
        DispatchKey key = DispatchKey::from_op(op);
        key.validate();
        dispatch_keys[&op] = key;
      }
      if (is_direct_compute(op)) {
        std::vector<Type> types;
        for (ValueId v : op.operands) types.push_back(fn.type(v));
        CallLowering lowering = lower_call(op, types);
        direct_calls[&op] = {local_cache.dispatch(lowering.key), lowering};
      }
    });
  }

  static bool is_direct_compute(const Op& op) {
    switch (op.kind) {
      case OpKind::TileZero:
      case OpKind::TileRelu:
      case OpKind::TileBiasAdd:
      case OpKind::TileMatmulAccum:
      case OpKind::Matmul:
      case OpKind::BiasAdd:
      case OpKind::Relu:
        return !op.result;  // buffer form only
      default:
        return false;
    }
  }

  KernelCache& cache() { return options.cache ? *options.cache : KernelCache::global(); }

  View& view(Ctx& ctx, ValueId v) {
    auto* p = std::get_if<View>(&ctx.slots[static_cast<size_t>(v)]);
    if (!p) throw CompileError("executor: %" + std::to_string(v) + " is not a buffer");
    return *p;
  }

  int64_t index(Ctx& ctx, ValueId v) {
    auto* p = std::get_if<int64_t>(&ctx.slots[static_cast<size_t>(v)]);
    if (!p) throw CompileError("executor: %" + std::to_string(v) + " is not an index");
    return *p;
  }

  // Shadow-memory checks.
  Shadow* shadow_of(const float* p) {
    for (Shadow& s : shadows) {
      if (p >= s.begin && p < s.end) return &s;
    }
    return nullptr;
  }

  void check_read(const Op& op, const View& v) {
    if (!options.check_init) return;
    for_each_element(v, [&](float* p) {
      Shadow* s = shadow_of(p);
      if (s && !s->init[static_cast<size_t>(p - s->begin)]) {
        throw CompileError("read of uninitialized memory in '" + std::string(op_name(op.kind)) +
                           "' at buffer offset " + std::to_string(p - s->begin));
      }
    });
  }

  void mark_write(const Op& op, const View& v) {
    if (!options.check_init) return;
    for_each_element(v, [&](float* p) {
      Shadow* s = shadow_of(p);
      if (!s) return;
      if (s->readonly) {
        throw CompileError("write to read-only buffer in '" + std::string(op_name(op.kind)) + "'");
      }
      s->init[static_cast<size_t>(p - s->begin)] = 1;
    });
  }

  void track(float* data, int64_t n, bool readonly, bool initialized) {
    if (!options.check_init) return;
    for (Shadow& s : shadows) {
      if (s.begin == data) {
        std::fill(s.init.begin(), s.init.end(), initialized ? 1 : 0);
        return;
      }
    }
    shadows.push_back({data, data + n, readonly, std::vector<uint8_t>(static_cast<size_t>(n), initialized)});
  }

  std::vector<TensorData> run(std::span<const TensorData> inputs) {
    const auto& args = fn.args();
    if (inputs.size() != args.size()) {
      throw CompileError("executor: expected " + std::to_string(args.size()) + " inputs, got " +
                         std::to_string(inputs.size()));
    }
    setups = releases = lookups = par_iters = 0;
    dispatch_ids.clear();
    for (auto& c : invokes) c = 0;
    outputs.clear();
    // Shadows of arguments point at caller memory; rebuild every run.
    std::erase_if(shadows, [](const Shadow& s) { return s.readonly; });
    Ctx ctx;
    ctx.slots.resize(fn.types.size());
    for (size_t i = 0; i < args.size(); ++i) {
      const Type& t = fn.type(args[i]);
      if (inputs[i].type.shape != t.shape || inputs[i].type.elem != t.elem) {
        throw CompileError("executor: input " + std::to_string(i) + " has type " +
                           to_string(inputs[i].type) + ", expected " + to_string(t));
      }
      auto* data = const_cast<float*>(inputs[i].values.data());
      ctx.slots[static_cast<size_t>(args[i])] = make_view(data, Type::memref(t.shape, t.elem));
      track(data, t.num_elements(), true, true);
    }
    exec_block(fn.body, ctx);
    if (!ctx.active.empty()) throw CompileError("executor: tile config left open at function end");

    std::vector<TensorData> result;
    for (const View& v : outputs) {
      std::vector<int64_t> shape(v.dims().begin(), v.dims().end());
      size_t i = result.size();
      TensorData t = TensorData::zeros(Type::tensor(shape, fn.result_types.at(i).elem));
      strided_copy(t.values.data(), row_major_strides(shape), v.data, v.steps(), shape);
      result.push_back(std::move(t));
    }
    stats.tile_setups = setups;
    stats.tile_releases = releases;
    stats.dispatch_lookups = lookups;
    stats.parallel_iterations = par_iters;
    stats.dispatch_ids = dispatch_ids;
    for (size_t k = 0; k < invokes.size(); ++k) stats.invokes[k] = invokes[k];
    return result;
  }

  void exec_block(const Block& block, Ctx& ctx) {
    for (const Op& op : block.ops) exec(op, ctx);
  }

  void exec(const Op& op, Ctx& ctx) {
    auto set = [&](Slot s) { ctx.slots[static_cast<size_t>(*op.result)] = std::move(s); };
    switch (op.kind) {
      case OpKind::Constant: {
        const Type& t = fn.type(*op.result);
        auto* data = const_cast<float*>(op.dense_attr("value").values.data());
        set(make_view(data, t.is_memref() ? t : Type::memref(t.shape, t.elem)));
        track(data, t.num_elements(), true, true);
        return;
      }
      case OpKind::Alloc: {
        const Type& t = fn.type(*op.result);
        float* data;
        if (&op >= fn.body.ops.data() && &op < fn.body.ops.data() + fn.body.ops.size()) {
          auto& buf = allocs[*op.result];
          if (!buf) buf = aligned_buffer(t.num_elements());
          data = buf.get();
        } else {
          ctx.scratch.push_back(aligned_buffer(t.num_elements()));
          data = ctx.scratch.back().get();
        }
        set(make_view(data, t));
        track(data, t.num_elements(), false, false);
        return;
      }
      case OpKind::Fill: {
        View& v = view(ctx, op.operands[0]);
        float value = round_to(fn.type(op.operands[0]).elem, static_cast<float>(op.float_attr("value")));
        mark_write(op, v);
        for_each_element(v, [&](float* p) { *p = value; });
        return;
      }
      case OpKind::Copy: {
        View& src = view(ctx, op.operands[0]);
        View& dst = view(ctx, op.operands[1]);
        check_read(op, src);
        mark_write(op, dst);
        strided_copy(dst.data, dst.steps(), src.data, src.steps(), src.dims());
        return;
      }
      case OpKind::Pack:
      case OpKind::Unpack:
        relayout(op, ctx);
        return;
      case OpKind::Subview: {
        const View& src = view(ctx, op.operands[0]);
        const IntList& dims = op.ints_attr("dims");
        View v;
        v.data = src.data;
        for (size_t i = 0; i < dims.size(); ++i) {
          int64_t at = index(ctx, op.operands[1 + i]);
          auto d = static_cast<size_t>(dims[i]);
          if (at < 0 || at >= src.shape[d]) throw CompileError("executor: subview offset out of bounds");
          v.data += at * src.strides[d];
        }
        for (int d = 0; d < src.rank; ++d) {
          if (std::find(dims.begin(), dims.end(), d) != dims.end()) continue;
          v.shape[static_cast<size_t>(v.rank)] = src.shape[static_cast<size_t>(d)];
          v.strides[static_cast<size_t>(v.rank)] = src.strides[static_cast<size_t>(d)];
          ++v.rank;
        }
        set(v);
        return;
      }
      case OpKind::IndexAffine:
        set(index(ctx, op.operands[0]) * op.int_attr("scale") + index(ctx, op.operands[1]));
        return;
      case OpKind::Parallel:
        run_parallel(op, ctx);
        return;
      case OpKind::For:
        run_for(op, ctx);
        return;
      case OpKind::XsmmDispatch:
        {
          ++lookups;
          KernelHandle h = cache().dispatch(dispatch_keys.at(&op));
          std::lock_guard lock(ids_mu);
          dispatch_ids.push_back(h.id());
          set(h.kernel);
        }
        return;
      case OpKind::XsmmTileConfig:
        ++setups;
        ctx.active.push_back(kernel(ctx, op.operands[0]));
        return;
      case OpKind::XsmmTileRelease: {
        const Kernel* k = kernel(ctx, op.operands[0]);
        if (ctx.active.empty() || ctx.active.back() != k) {
          throw CompileError("executor: tile_release does not match the open tile_config");
        }
        ctx.active.pop_back();
        ++releases;
        return;
      }
      case OpKind::XsmmUnary:
      case OpKind::XsmmBinary:
      case OpKind::XsmmGemm:
      case OpKind::XsmmBrgemm:
      case OpKind::XsmmFusedBrgemm: {
        std::vector<ValueId> operands(op.operands.begin() + 1, op.operands.end());
        call(op, kernel(ctx, op.operands[0]), operands, ctx);
        return;
      }
      case OpKind::Return: {
        std::lock_guard lock(out_mu);
        for (ValueId v : op.operands) outputs.push_back(view(ctx, v));
        return;
      }
      default:
        break;
    }
    if (auto it = direct_calls.find(&op); it != direct_calls.end()) {
      std::vector<ValueId> operands;
      for (size_t i : it->second.second.operands) operands.push_back(op.operands[i]);
      call(op, it->second.first.kernel, operands, ctx);
      return;
    }
    throw CompileError("executor: cannot execute '" + std::string(op_name(op.kind)) +
                       "'; run the function through bufferize first");
  }

  const Kernel* kernel(Ctx& ctx, ValueId v) {
    auto* p = std::get_if<const Kernel*>(&ctx.slots[static_cast<size_t>(v)]);
    if (!p || !*p) throw CompileError("executor: %" + std::to_string(v) + " is not a kernel handle");
    return *p;
  }

  void call(const Op& op, const Kernel* k, const std::vector<ValueId>& operands, Ctx& ctx) {
    const DispatchKey& key = k->key;
    KernelArgs args;
    auto v = [&](size_t i) -> View& { return view(ctx, operands.at(i)); };
    switch (key.kind) {
      case CallKind::Unary: {
        if (operands.size() != 2) mismatch(op, "unary takes (in, out)");
        if (key.unary != UnaryKind::Zero) expect_matrix(op, v(0), key.m, key.n, key.lda, "input");
        expect_matrix(op, v(1), key.m, key.n, key.ldc, "output");
        if (key.unary != UnaryKind::Zero) check_read(op, v(0));
        mark_write(op, v(1));
        args.a = v(0).data;
        args.c = v(1).data;
        break;
      }
      case CallKind::Binary: {
        if (operands.size() != 3) mismatch(op, "binary takes (in0, in1, out)");
        if (key.bcast_col_in0) {
          expect_matrix(op, v(0), 1, key.n, key.n, "broadcast input");
        } else {
          expect_matrix(op, v(0), key.m, key.n, key.lda, "input 0");
        }
        expect_matrix(op, v(1), key.m, key.n, key.ldb, "input 1");
        expect_matrix(op, v(2), key.m, key.n, key.ldc, "output");
        check_read(op, v(0));
        check_read(op, v(1));
        mark_write(op, v(2));
        args.a = v(0).data;
        args.b = v(1).data;
        args.c = v(2).data;
        break;
      }
      default: {
        size_t want = key.binary != BinaryKind::None ? 4 : 3;
        if (operands.size() != want) mismatch(op, "expected " + std::to_string(want) + " operands");
        if (key.kind == CallKind::Gemm) {
          expect_matrix(op, v(0), key.m, key.k, key.lda, "A");
          expect_matrix(op, v(1), key.k, key.n, key.ldb, "B");
        } else {
          expect_dims(op, v(0), {key.batch, key.m, key.k}, {key.stride_a, key.lda, 1}, "A");
          if (key.vnni) {
            expect_dims(op, v(1), {key.batch, key.k / 2, key.n, 2}, {key.stride_b, key.ldb, 2, 1}, "B");
          } else {
            expect_dims(op, v(1), {key.batch, key.k, key.n}, {key.stride_b, key.ldb, 1}, "B");
          }
        }
        expect_matrix(op, v(2), key.m, key.n, key.ldc, "C");
        check_read(op, v(0));
        check_read(op, v(1));
        if (!key.beta_zero) check_read(op, v(2));
        if (want == 4) {
          expect_matrix(op, v(3), 1, key.n, key.n, "bias");
          check_read(op, v(3));
          args.bias = v(3).data;
        }
        mark_write(op, v(2));
        args.a = v(0).data;
        args.b = v(1).data;
        args.c = v(2).data;
        break;
      }
    }
    invoke(KernelHandle{k}, args);
    invokes[static_cast<size_t>(key.kind)].fetch_add(1, std::memory_order_relaxed);
  }

  void relayout(const Op& op, Ctx& ctx) {
    View& src = view(ctx, op.operands[0]);
    View& dst = view(ctx, op.operands[1]);
    if (!src.contiguous() || !dst.contiguous()) {
      throw CompileError("executor: pack operands must be contiguous");
    }
    check_read(op, src);
    mark_write(op, dst);
    PackSpec spec = PackSpec::from_op(op);
    bool unpack = op.kind == OpKind::Unpack;
    const View& packed = unpack ? src : dst;
    const View& plain = unpack ? dst : src;
    std::vector<int64_t> pshape(packed.dims().begin(), packed.dims().end());
    std::vector<int64_t> plain_shape(plain.dims().begin(), plain.dims().end());
    auto plain_steps = spec.source_strides(plain_shape);
    auto packed_steps = row_major_strides(pshape);
    std::span<const int64_t> inner_shape(pshape.data() + 1, pshape.size() - 1);
    std::span<const int64_t> inner_plain(plain_steps.data() + 1, plain_steps.size() - 1);
    std::span<const int64_t> inner_packed(packed_steps.data() + 1, packed_steps.size() - 1);
    int64_t outer = pshape[0];
    int threads = outer > 1 ? worker_threads() : 1;
#pragma omp parallel for num_threads(threads) schedule(static) if (threads > 1)
    for (int64_t o = 0; o < outer; ++o) {
      float* p = packed.data + o * packed_steps[0];
      float* q = plain.data + o * plain_steps[0];
      if (unpack) {
        strided_copy(q, inner_plain, p, inner_packed, inner_shape);
      } else {
        strided_copy(p, inner_packed, q, inner_plain, inner_shape);
      }
    }
  }

  int worker_threads() const {
    if (options.check_init || omp_in_parallel()) return 1;
    return options.threads;
  }

  void run_for(const Op& op, Ctx& ctx) {
    const IntList& bounds = op.ints_attr("bounds");
    const Block& body = op.body();
    std::vector<int64_t> iv(bounds.size(), 0);
    int64_t total = product(bounds);
    for (int64_t flat = 0; flat < total; ++flat) {
      for (size_t d = 0; d < iv.size(); ++d) ctx.slots[static_cast<size_t>(body.args[d])] = iv[d];
      exec_block(body, ctx);
      for (size_t d = iv.size(); d-- > 0;) {
        if (++iv[d] < bounds[d]) break;
        iv[d] = 0;
      }
    }
  }

  void run_parallel(const Op& op, Ctx& ctx) {
    const IntList& bounds = op.ints_attr("bounds");
    const Block& body = op.body();
    int64_t total = product(bounds);
    int threads = worker_threads();
    std::exception_ptr error;
    std::mutex error_mu;
    std::atomic<bool> failed{false};
#pragma omp parallel num_threads(threads) if (threads > 1)
    {
      Ctx local;
      local.slots = ctx.slots;
#pragma omp for schedule(static)
      for (int64_t flat = 0; flat < total; ++flat) {
        if (failed.load(std::memory_order_relaxed)) continue;
        try {
          int64_t rem = flat;
          for (size_t d = bounds.size(); d-- > 0;) {
            local.slots[static_cast<size_t>(body.args[d])] = rem % bounds[d];
            rem /= bounds[d];
          }
          exec_block(body, local);
          if (!local.active.empty()) {
            throw CompileError("executor: tile config not released within its parallel iteration");
          }
          local.scratch.clear();
          par_iters.fetch_add(1, std::memory_order_relaxed);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    }
    if (error) std::rethrow_exception(error);
  }
};

Executable::Executable(Function fn, ExecOptions options)
    : impl_(std::make_unique<Impl>(std::move(fn), options)) {}
Executable::~Executable() = default;
Executable::Executable(Executable&&) noexcept = default;
Executable& Executable::operator=(Executable&&) noexcept = default;

std::vector<TensorData> Executable::run(std::span<const TensorData> inputs) {
  return impl_->run(inputs);
}
const ExecStats& Executable::stats() const { return impl_->stats; }
const Function& Executable::function() const { return impl_->fn; }
void Executable::set_threads(int threads) {
  if (threads < 1) throw CompileError("executor: threads must be positive");
  impl_->options.threads = threads;
}

std::vector<TensorData> execute(const Function& fn, std::span<const TensorData> inputs,
                                const ExecOptions& options, ExecStats* stats) {
  Executable exe(fn, options);
  auto out = exe.run(inputs);
  if (stats) *stats = exe.stats();
  return out;
}

}  // namespace tilec::xsmm
