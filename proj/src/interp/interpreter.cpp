// SPDX-License-Identifier: Apache-2.0
#include "tilec/interp/interpreter.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tilec/ir/bf16.hpp"
#include "tilec/ir/ops.hpp"

namespace tilec {

TensorData TensorData::zeros(Type type) {
  auto n = static_cast<size_t>(type.num_elements());
  return TensorData{std::move(type), std::vector<float>(n, 0.0f)};
}

TensorData TensorData::from(Type type, std::vector<float> values) {
  if (static_cast<int64_t>(values.size()) != type.num_elements()) {
    throw CompileError("tensor payload size does not match " + to_string(type));
  }
  for (float& v : values) v = round_to(type.elem, v);
  return TensorData{std::move(type), std::move(values)};
}

TensorData random_tensor(const Type& type, uint64_t seed, float lo, float hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  TensorData t = TensorData::zeros(type.as_tensor());
  for (float& v : t.values) v = round_to(type.elem, dist(rng));
  return t;
}

std::vector<TensorData> random_inputs(const Function& fn, uint64_t seed) {
  std::vector<TensorData> inputs;
  for (size_t i = 0; i < fn.args().size(); ++i) {
    inputs.push_back(random_tensor(fn.type(fn.args()[i]), seed * 1000003u + i));
  }
  return inputs;
}

ErrorLocation max_relative_error(std::span<const float> got, std::span<const float> ref) {
  ErrorLocation loc;
  if (got.size() != ref.size()) {
    loc.max_rel_error = INFINITY;
    return loc;
  }
  double ref_max = 0.0;
  for (float r : ref) ref_max = std::max(ref_max, std::fabs(static_cast<double>(r)));
  double denom = ref_max > 0.0 ? ref_max : 1.0;
  double worst = -1.0;
  for (size_t i = 0; i < got.size(); ++i) {
    double diff = std::fabs(static_cast<double>(got[i]) - static_cast<double>(ref[i]));
    if (std::isnan(diff)) diff = INFINITY;
    if (diff > worst) {
      worst = diff;
      loc.worst_index = i;
    }
  }
  if (!got.empty()) {
    loc.max_rel_error = worst / denom;
    loc.got = got[loc.worst_index];
    loc.expected = ref[loc.worst_index];
  }
  return loc;
}

namespace {

[[noreturn]] void fail(const Op& op, const std::string& message) {
  throw CompileError("interpreter: " + std::string(op_name(op.kind)) + ": " + message);
}

// Row-major strides of `shape`, as a lookup helper.
struct Layout {
  std::vector<int64_t> shape;
  std::vector<int64_t> strides;
  explicit Layout(const std::vector<int64_t>& s) : shape(s), strides(row_major_strides(s)) {}
};

void run_generic(const Op& op, const Function& fn, std::span<const TensorData* const> ins,
                 TensorData& out) {
  GenericInfo info = GenericInfo::from_op(op);
  auto loops = static_cast<size_t>(info.loops);
  std::vector<int64_t> extents(loops, 1);
  size_t num_operands = op.operands.size();
  // strides[o][d]: element stride of operand o along loop d.
  std::vector<std::vector<int64_t>> strides(num_operands, std::vector<int64_t>(loops, 0));
  for (size_t o = 0; o < num_operands; ++o) {
    const Type& t = fn.type(op.operands[o]);
    auto rm = row_major_strides(t.shape);
    for (size_t r = 0; r < info.maps[o].size(); ++r) {
      auto d = static_cast<size_t>(info.maps[o][r]);
      extents[d] = t.shape[r];
      strides[o][d] += rm[r];
    }
  }
  // F32 accumulator initialised from the out init; rounded once at the end.
  std::vector<float> acc = out.values;
  size_t out_slot = num_operands - 1;
  std::vector<int64_t> idx(loops, 0);
  std::vector<int64_t> offs(num_operands, 0);
  const float* in0 = ins.size() > 0 ? ins[0]->values.data() : nullptr;
  const float* in1 = ins.size() > 1 ? ins[1]->values.data() : nullptr;
  size_t inner = loops - 1;
  int64_t inner_extent = extents[inner];
  while (true) {
    int64_t o0 = ins.size() > 0 ? offs[0] : 0;
    int64_t o1 = ins.size() > 1 ? offs[1] : 0;
    int64_t oo = offs[out_slot];
    int64_t s0 = ins.size() > 0 ? strides[0][inner] : 0;
    int64_t s1 = ins.size() > 1 ? strides[1][inner] : 0;
    int64_t so = strides[out_slot][inner];
    for (int64_t i = 0; i < inner_extent; ++i) {
      float& a = acc[static_cast<size_t>(oo + i * so)];
      switch (info.body) {
        case GenericBody::MulAcc:
          a = a + in0[o0 + i * s0] * in1[o1 + i * s1];
          break;
        case GenericBody::Add:
          a = in0[o0 + i * s0] + in1[o1 + i * s1];
          break;
        case GenericBody::MaxZero:
          a = relu_scalar(a);
          break;
        case GenericBody::Copy:
          break;
      }
    }
    // Advance the odometer over the outer loops.
    if (inner == 0) break;
    size_t d = inner - 1;
    while (true) {
      ++idx[d];
      for (size_t o = 0; o < num_operands; ++o) offs[o] += strides[o][d];
      if (idx[d] < extents[d]) break;
      for (size_t o = 0; o < num_operands; ++o) offs[o] -= strides[o][d] * extents[d];
      idx[d] = 0;
      if (d == 0) goto done;
      --d;
    }
  }
done:
  for (size_t i = 0; i < acc.size(); ++i) out.values[i] = round_to(out.type.elem, acc[i]);
}

void run_matmul(const TensorData& a, const TensorData& b, TensorData& c) {
  int64_t m = a.type.shape[0], k = a.type.shape[1], n = b.type.shape[1];
  std::vector<float> acc(static_cast<size_t>(n));
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) acc[static_cast<size_t>(j)] = c.values[static_cast<size_t>(i * n + j)];
    for (int64_t p = 0; p < k; ++p) {
      float av = a.values[static_cast<size_t>(i * k + p)];
      const float* brow = &b.values[static_cast<size_t>(p * n)];
      for (int64_t j = 0; j < n; ++j) acc[static_cast<size_t>(j)] += av * brow[j];
    }
    for (int64_t j = 0; j < n; ++j) {
      c.values[static_cast<size_t>(i * n + j)] = round_to(c.type.elem, acc[static_cast<size_t>(j)]);
    }
  }
}

// B element (k, j) of one [K, N] block, in plain or VNNI ([K/2, N, 2]) order.
inline size_t b_offset(bool vnni, int64_t k, int64_t j, int64_t n) {
  return static_cast<size_t>(vnni ? ((k / 2) * n + j) * 2 + (k % 2) : k * n + j);
}

// C[mb][nb] += sum_b sum_k A[b][mb][k] * B[b][k][nb], batch outer, k inner.
void run_tile_matmul(const float* a, const float* b, float* c, int64_t batch, int64_t m,
                     int64_t n, int64_t k, bool vnni, ElemType elem) {
  std::vector<float> acc(static_cast<size_t>(n));
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) acc[static_cast<size_t>(j)] = c[i * n + j];
    for (int64_t bi = 0; bi < batch; ++bi) {
      const float* ab = a + bi * m * k;
      const float* bb = b + bi * k * n;
      for (int64_t p = 0; p < k; ++p) {
        float av = ab[i * k + p];
        for (int64_t j = 0; j < n; ++j) acc[static_cast<size_t>(j)] += av * bb[b_offset(vnni, p, j, n)];
      }
    }
    for (int64_t j = 0; j < n; ++j) c[i * n + j] = round_to(elem, acc[static_cast<size_t>(j)]);
  }
}

void run_packed_matmul(const TensorData& a, const TensorData& b, TensorData& c, bool vnni) {
  const auto& as = a.type.shape;  // MB KB mb kb
  const auto& cs = c.type.shape;  // MB NB mb nb
  int64_t mbs = as[0], kbs = as[1], mb = as[2], kb = as[3], nbs = cs[1], nb = cs[3];
  std::vector<float> ctile(static_cast<size_t>(mb * nb));
  for (int64_t i = 0; i < mbs; ++i) {
    for (int64_t j = 0; j < nbs; ++j) {
      float* cdst = &c.values[static_cast<size_t>((i * nbs + j) * mb * nb)];
      std::copy(cdst, cdst + mb * nb, ctile.begin());
      run_tile_matmul(&a.values[static_cast<size_t>(i * kbs * mb * kb)],
                      &b.values[static_cast<size_t>(j * kbs * kb * nb)], ctile.data(), kbs, mb, nb,
                      kb, vnni, c.type.elem);
      std::copy(ctile.begin(), ctile.end(), cdst);
    }
  }
}

void run_bias_add(const TensorData& x, const TensorData& bias, TensorData& out) {
  const auto& s = x.type.shape;
  out = x;
  if (s.size() == 2) {
    for (int64_t i = 0; i < s[0]; ++i) {
      for (int64_t j = 0; j < s[1]; ++j) {
        auto o = static_cast<size_t>(i * s[1] + j);
        out.values[o] = round_to(out.type.elem, x.values[o] + bias.values[static_cast<size_t>(j)]);
      }
    }
    return;
  }
  // [MB, NB, mb, nb] with bias [NB, nb].
  size_t o = 0;
  for (int64_t i = 0; i < s[0]; ++i)
    for (int64_t j = 0; j < s[1]; ++j)
      for (int64_t r = 0; r < s[2]; ++r)
        for (int64_t q = 0; q < s[3]; ++q, ++o)
          out.values[o] = round_to(out.type.elem,
                                   x.values[o] + bias.values[static_cast<size_t>(j * s[3] + q)]);
}

TensorData run_pack(const TensorData& src, const PackSpec& spec, const Type& result, bool unpack) {
  TensorData out = TensorData::zeros(result);
  const TensorData& plain = unpack ? out : src;
  const TensorData& packed = unpack ? src : out;
  Layout plain_l(plain.type.shape), packed_l(packed.type.shape);
  std::vector<int64_t> idx(plain_l.shape.size(), 0), pidx(packed_l.shape.size(), 0);
  auto total = static_cast<size_t>(plain.type.num_elements());
  for (size_t flat = 0; flat < total; ++flat) {
    spec.pack_index(idx, pidx);
    int64_t po = 0;
    for (size_t d = 0; d < pidx.size(); ++d) po += pidx[d] * packed_l.strides[d];
    if (unpack) {
      out.values[flat] = src.values[static_cast<size_t>(po)];
    } else {
      out.values[static_cast<size_t>(po)] = src.values[flat];
    }
    for (size_t d = idx.size(); d-- > 0;) {
      if (++idx[d] < plain_l.shape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

std::vector<int64_t> slice_offsets(const std::vector<int64_t>& shape, const IntList& dims,
                                   std::span<const int64_t> at, std::vector<int64_t>& tile_shape) {
  tile_shape.clear();
  std::vector<int64_t> offsets(shape.size(), 0);
  for (size_t d = 0; d < shape.size(); ++d) {
    auto it = std::find(dims.begin(), dims.end(), static_cast<int64_t>(d));
    if (it != dims.end()) {
      int64_t pos = at[static_cast<size_t>(it - dims.begin())];
      if (pos < 0 || pos >= shape[d]) throw CompileError("interpreter: slice offset out of bounds");
      offsets[d] = pos;
    } else {
      tile_shape.push_back(shape[d]);
    }
  }
  return offsets;
}

// Visits every element of a rank-reducing unit slice: fn(flat tile index,
// flat source index).
template <class F>
void for_each_slice_element(const std::vector<int64_t>& shape, const IntList& dims,
                            std::span<const int64_t> at, F&& fn) {
  std::vector<int64_t> tile_shape;
  auto offsets = slice_offsets(shape, dims, at, tile_shape);
  auto strides = row_major_strides(shape);
  int64_t base = 0;
  for (size_t d = 0; d < shape.size(); ++d) base += offsets[d] * strides[d];
  std::vector<int64_t> kept_strides;
  for (size_t d = 0; d < shape.size(); ++d) {
    if (std::find(dims.begin(), dims.end(), static_cast<int64_t>(d)) == dims.end()) {
      kept_strides.push_back(strides[d]);
    }
  }
  std::vector<int64_t> idx(tile_shape.size(), 0);
  auto total = static_cast<size_t>(product(tile_shape));
  for (size_t flat = 0; flat < total; ++flat) {
    int64_t src = base;
    for (size_t d = 0; d < idx.size(); ++d) src += idx[d] * kept_strides[d];
    fn(flat, static_cast<size_t>(src));
    for (size_t d = idx.size(); d-- > 0;) {
      if (++idx[d] < tile_shape[d]) break;
      idx[d] = 0;
    }
  }
}

class Evaluator {
 public:
  explicit Evaluator(const Function& fn)
      : fn_(fn), tensors_(fn.types.size()), indices_(fn.types.size(), 0) {}

  std::vector<TensorData> run(std::span<const TensorData> inputs) {
    if (inputs.size() != fn_.args().size()) {
      throw CompileError("interpreter: expected " + std::to_string(fn_.args().size()) +
                         " inputs, got " + std::to_string(inputs.size()));
    }
    for (size_t i = 0; i < inputs.size(); ++i) {
      const Type& want = fn_.type(fn_.args()[i]);
      if (!want.is_tensor()) throw CompileError("interpreter: function is not in tensor form");
      if (inputs[i].type.shape != want.shape || inputs[i].type.elem != want.elem) {
        throw CompileError("interpreter: input " + std::to_string(i) + " has type " +
                           to_string(inputs[i].type) + ", expected " + to_string(want));
      }
      tensors_[static_cast<size_t>(fn_.args()[i])] = inputs[i];
    }
    block(fn_.body);
    return std::move(outputs_);
  }

 private:
  TensorData& t(ValueId id) { return tensors_[static_cast<size_t>(id)]; }

  void set(const Op& op, TensorData value) { t(*op.result) = std::move(value); }

  void block(const Block& b) {
    for (const Op& op : b.ops) this->op(op);
  }

  void op(const Op& op) {
    if (op.result && fn_.type(*op.result).is_memref()) fail(op, "memref values are not interpretable");
    for (ValueId v : op.operands) {
      if (fn_.type(v).is_memref()) fail(op, "memref values are not interpretable");
    }
    const Type* rt = op.result ? &fn_.type(*op.result) : nullptr;
    switch (op.kind) {
      case OpKind::Constant: {
        const DenseData& d = op.dense_attr("value");
        set(op, TensorData{rt->as_tensor(), d.values});
        break;
      }
      case OpKind::Splat: {
        TensorData out = TensorData::zeros(*rt);
        std::fill(out.values.begin(), out.values.end(),
                  round_to(rt->elem, static_cast<float>(op.float_attr("value"))));
        set(op, std::move(out));
        break;
      }
      case OpKind::Empty:
        set(op, TensorData::zeros(*rt));
        break;
      case OpKind::Matmul: {
        TensorData c = t(op.operands[2]);
        run_matmul(t(op.operands[0]), t(op.operands[1]), c);
        set(op, std::move(c));
        break;
      }
      case OpKind::PackedMatmul: {
        TensorData c = t(op.operands[2]);
        run_packed_matmul(t(op.operands[0]), t(op.operands[1]), c, op.bool_attr("vnni"));
        set(op, std::move(c));
        break;
      }
      case OpKind::BiasAdd: {
        TensorData out;
        run_bias_add(t(op.operands[0]), t(op.operands[1]), out);
        set(op, std::move(out));
        break;
      }
      case OpKind::Relu:
      case OpKind::TileRelu: {
        TensorData out = t(op.operands[0]);
        for (float& v : out.values) v = relu_scalar(v);
        set(op, std::move(out));
        break;
      }
      case OpKind::Pack:
      case OpKind::Unpack:
        set(op, run_pack(t(op.operands[0]), PackSpec::from_op(op), *rt, op.kind == OpKind::Unpack));
        break;
      case OpKind::Generic: {
        std::vector<const TensorData*> ins;
        for (size_t i = 0; i + 1 < op.operands.size(); ++i) ins.push_back(&t(op.operands[i]));
        TensorData out = t(op.operands.back());
        run_generic(op, fn_, ins, out);
        set(op, std::move(out));
        break;
      }
      case OpKind::Forall:
        forall(op);
        break;
      case OpKind::ExtractSlice: {
        const TensorData& src = t(op.operands[0]);
        TensorData out = TensorData::zeros(*rt);
        for_each_slice_element(src.type.shape, op.ints_attr("dims"), index_operands(op, 1),
                               [&](size_t ti, size_t si) { out.values[ti] = src.values[si]; });
        set(op, std::move(out));
        break;
      }
      case OpKind::InsertSlice: {
        const TensorData& tile = t(op.operands[0]);
        TensorData& dest = t(op.operands[1]);
        for_each_slice_element(dest.type.shape, op.ints_attr("dims"), index_operands(op, 2),
                               [&](size_t ti, size_t di) { dest.values[di] = tile.values[ti]; });
        break;
      }
      case OpKind::TileZero:
        set(op, TensorData::zeros(*rt));
        break;
      case OpKind::TileMatmulAccum: {
        const TensorData& a = t(op.operands[0]);
        const TensorData& b = t(op.operands[1]);
        TensorData c = t(op.operands[2]);
        const auto& as = a.type.shape;  // KB mb kb
        run_tile_matmul(a.values.data(), b.values.data(), c.values.data(), as[0], as[1],
                        c.type.shape[1], as[2], op.bool_attr("vnni"), c.type.elem);
        set(op, std::move(c));
        break;
      }
      case OpKind::TileBiasAdd: {
        TensorData out;
        run_bias_add(t(op.operands[0]), t(op.operands[1]), out);
        set(op, std::move(out));
        break;
      }
      case OpKind::Return:
        for (ValueId v : op.operands) outputs_.push_back(t(v));
        break;
      default:
        fail(op, "not a tensor-level op");
    }
  }

  std::vector<int64_t> index_operands(const Op& op, size_t first) {
    std::vector<int64_t> at;
    for (size_t i = first; i < op.operands.size(); ++i) {
      at.push_back(indices_[static_cast<size_t>(op.operands[i])]);
    }
    return at;
  }

  void forall(const Op& op) {
    const Block& body = op.body();
    const IntList& bounds = op.ints_attr("bounds");
    ValueId shared = body.args.back();
    t(shared) = t(op.operands[0]);
    std::vector<int64_t> iv(bounds.size(), 0);
    auto total = product(bounds);
    for (int64_t flat = 0; flat < total; ++flat) {
      for (size_t d = 0; d < iv.size(); ++d) indices_[static_cast<size_t>(body.args[d])] = iv[d];
      block(body);
      for (size_t d = iv.size(); d-- > 0;) {
        if (++iv[d] < bounds[d]) break;
        iv[d] = 0;
      }
    }
    set(op, std::move(t(shared)));
  }

  const Function& fn_;
  std::vector<TensorData> tensors_;
  std::vector<int64_t> indices_;
  std::vector<TensorData> outputs_;
};

}  // namespace

std::vector<TensorData> evaluate(const Function& fn, std::span<const TensorData> inputs) {
  return Evaluator(fn).run(inputs);
}

Function promote_to_f32(const Function& fn) {
  Function out = fn;
  for (Type& t : out.types) t.elem = ElemType::F32;
  for (Type& t : out.result_types) t.elem = ElemType::F32;
  walk_mut(out.body, [](Op& op) {
    for (auto& [key, attr] : op.attrs) {
      if (auto* d = std::get_if<DenseData>(&attr)) d->elem = ElemType::F32;
    }
  });
  return out;
}

EquivalenceReport evaluate_packed_equivalence(const Function& reference,
                                              const Function& transformed,
                                              const EquivalenceOptions& options) {
  EquivalenceReport report;
  report.seed = options.seed;
  std::vector<TensorData> inputs = random_inputs(reference, options.seed);
  std::vector<TensorData> got = evaluate(transformed, inputs);
  std::vector<TensorData> ref;
  if (options.f32_oracle) {
    std::vector<TensorData> wide = inputs;
    for (TensorData& in : wide) in.type.elem = ElemType::F32;
    ref = evaluate(promote_to_f32(reference), wide);
  } else {
    ref = evaluate(reference, inputs);
  }
  if (got.size() != ref.size()) throw CompileError("equivalence: output arity differs");
  for (size_t i = 0; i < got.size(); ++i) {
    report.bitwise_equal &= got[i].values == ref[i].values;
    ErrorLocation loc = max_relative_error(got[i].values, ref[i].values);
    if (loc.max_rel_error > report.max_rel_error || i == 0) {
      report.max_rel_error = std::max(report.max_rel_error, loc.max_rel_error);
      report.worst_output = i;
      report.worst_index = loc.worst_index;
    }
  }
  return report;
}

}  // namespace tilec
