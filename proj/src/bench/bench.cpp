// SPDX-License-Identifier: Apache-2.0
#include "tilec/bench/bench.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "tilec/ir/analysis.hpp"
#include "tilec/ir/ops.hpp"
#include "tilec/ir/verifier.hpp"

namespace tilec {

void ModelSpec::validate() const {
  if (layers < 1) throw CompileError("model: layers must be >= 1");
  if (batch < 1) throw CompileError("model: batch must be >= 1");
  if (hidden.empty()) throw CompileError("model: hidden sizes missing");
  if (hidden.size() != 1 && hidden.size() != static_cast<size_t>(layers)) {
    throw CompileError("model: " + std::to_string(hidden.size()) + " hidden sizes given for " +
                       std::to_string(layers) + " layers");
  }
  for (int64_t h : hidden) {
    if (h < 1) throw CompileError("model: hidden sizes must be >= 1");
  }
  if (input_dim < 0) throw CompileError("model: input_dim must be >= 0");
}

int64_t ModelSpec::out_dim(int layer) const {
  return hidden.size() == 1 ? hidden[0] : hidden.at(static_cast<size_t>(layer));
}

int64_t ModelSpec::in_dim(int layer) const {
  if (layer > 0) return out_dim(layer - 1);
  return input_dim > 0 ? input_dim : out_dim(0);
}

std::string ModelSpec::name() const {
  std::ostringstream os;
  os << "mlp_l" << layers << "_b" << batch << "_h";
  for (size_t i = 0; i < hidden.size(); ++i) os << (i ? "-" : "") << hidden[i];
  if (input_dim > 0) os << "_k" << input_dim;
  os << "_" << to_string(dtype);
  if (pre_packed) os << "_prepacked";
  return os.str();
}

namespace {

uint64_t weight_seed(const ModelSpec& spec, int layer) { return spec.seed * 7919 + 2 * layer + 1; }
uint64_t bias_seed(const ModelSpec& spec, int layer) { return spec.seed * 7919 + 2 * layer + 2; }

void require_divisible(int64_t dim, int64_t tile, const char* what) {
  if (dim % tile != 0) {
    throw CompileError(std::string("model: pre-packed layout needs ") + what + " " +
                       std::to_string(dim) + " divisible by tile " + std::to_string(tile));
  }
}

ValueId constant(OpBuilder& b, const Type& type, std::vector<float> values) {
  DenseData data{type.elem, std::move(values)};
  return b.create(OpKind::Constant, {}, {{"value", std::move(data)}}, type);
}

}  // namespace

Module generate_model(const ModelSpec& spec, const PackingOptions& packing) {
  spec.validate();
  ElemType dt = spec.dtype;
  Function fn;
  fn.name = "mlp";
  OpBuilder b(fn, fn.body);

  const int64_t tm = packing.tile_m, tn = packing.tile_n, tk = packing.tile_k;
  bool vnni = spec.pre_packed && packing.use_vnni(dt);
  if (spec.pre_packed) {
    packing.validate();
    if (spec.layers > 1 && tn != tk) {
      throw CompileError("model: pre-packed layers chain only when tile n equals tile k");
    }
    require_divisible(spec.batch, tm, "batch");
    for (int l = 0; l < spec.layers; ++l) {
      require_divisible(spec.in_dim(l), tk, "input size");
      require_divisible(spec.out_dim(l), tn, "hidden size");
    }
    if (vnni) require_divisible(tk, packing.vnni_factor, "tile k");
  }

  Type x_type = Type::tensor({spec.batch, spec.in_dim(0)}, dt);
  if (spec.pre_packed) x_type = Type::tensor(lhs_pack_spec(packing).packed_shape(x_type.shape), dt);
  ValueId x = fn.new_value(x_type);
  fn.body.args.push_back(x);

  for (int l = 0; l < spec.layers; ++l) {
    int64_t k = spec.in_dim(l), n = spec.out_dim(l);
    Type w_type = Type::tensor({k, n}, dt);
    Type bias_type = Type::tensor({n}, dt);
    TensorData w = random_tensor(w_type, weight_seed(spec, l), -0.5f, 0.5f);
    TensorData bias = random_tensor(bias_type, bias_seed(spec, l), -0.5f, 0.5f);
    if (!spec.pre_packed) {
      ValueId wv = constant(b, w_type, std::move(w.values));
      ValueId bv = constant(b, bias_type, std::move(bias.values));
      Type out = Type::tensor({spec.batch, n}, dt);
      ValueId init = b.create(OpKind::Splat, {}, {{"value", 0.0}}, out);
      ValueId mm = b.create(OpKind::Matmul, {x, wv, init}, {}, out);
      ValueId ba = b.create(OpKind::BiasAdd, {mm, bv}, {}, out);
      x = b.create(OpKind::Relu, {ba}, {}, out);
      continue;
    }
    PackSpec rhs = rhs_pack_spec(packing);
    std::vector<int64_t> wshape = rhs.packed_shape(w_type.shape);
    std::vector<float> wvals = pack_values(rhs, w_type.shape, w.values);
    if (vnni) {
      PackSpec vs = vnni_pack_spec(packing);
      wvals = pack_values(vs, wshape, wvals);
      wshape = vs.packed_shape(wshape);
    }
    PackSpec bs = bias_pack_spec(tn);
    std::vector<int64_t> bshape = bs.packed_shape(bias_type.shape);
    ValueId wv = constant(b, Type::tensor(wshape, dt), std::move(wvals));
    ValueId bv = constant(b, Type::tensor(bshape, dt), pack_values(bs, bias_type.shape, bias.values));
    Type out = Type::tensor(out_pack_spec(packing).packed_shape(std::vector<int64_t>{spec.batch, n}), dt);
    ValueId init = b.create(OpKind::Splat, {}, {{"value", 0.0}}, out);
    AttrDict mm_attrs;
    if (vnni) mm_attrs["vnni"] = true;
    ValueId mm = b.create(OpKind::PackedMatmul, {x, wv, init}, std::move(mm_attrs), out);
    ValueId ba = b.create(OpKind::BiasAdd, {mm, bv}, {}, out);
    x = b.create(OpKind::Relu, {ba}, {}, out);
  }
  fn.result_types = {fn.type(x)};
  b.create_void(OpKind::Return, {x});

  Module m;
  m.functions.push_back(std::move(fn));
  verify_or_throw(m, "generate");
  return m;
}

std::vector<TensorData> model_inputs(const ModelSpec& spec, const PackingOptions& packing) {
  spec.validate();
  Type plain = Type::tensor({spec.batch, spec.in_dim(0)}, spec.dtype);
  TensorData x = random_tensor(plain, spec.seed);
  if (spec.pre_packed) {
    PackSpec lhs = lhs_pack_spec(packing);
    x = TensorData::from(Type::tensor(lhs.packed_shape(plain.shape), spec.dtype),
                         pack_values(lhs, plain.shape, x.values));
  }
  return {std::move(x)};
}

std::vector<float> plain_output(const ModelSpec& spec, const PackingOptions& packing,
                                const TensorData& output) {
  if (!spec.pre_packed) return output.values;
  return unpack_values(out_pack_spec(packing), output.type.shape, output.values);
}

BenchResult benchmark(const ModelSpec& spec, const PipelineConfig& config, int iterations,
                      int warmup) {
  if (iterations < 1) throw CompileError("benchmark: iterations must be >= 1");
  if (warmup < 0) throw CompileError("benchmark: warmup must be >= 0");
  Module model = generate_model(spec, config.packing);
  PipelineConfig full = config;
  full.stop_after = StopAfter::None;
  PipelineResult lowered = run_pipeline(model, full);
  auto inputs = model_inputs(spec, config.packing);

  xsmm::KernelCache cache;
  xsmm::ExecOptions options;
  options.threads = config.threads;
  options.cache = &cache;
  xsmm::Executable exe(lowered.module.functions.at(0), options);

  BenchResult r;
  r.name = spec.name() + (config.pack ? "_packed" : "_nopack") + (config.fuse ? "_fused" : "_nofuse");
  r.threads = config.threads;
  r.dtype = spec.dtype;
  r.flops = flop_count(model);
  r.iterations = iterations;
  for (int i = 0; i < warmup; ++i) exe.run(inputs);
  std::vector<double> ms;
  ms.reserve(static_cast<size_t>(iterations));
  for (int i = 0; i < iterations; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    r.outputs = exe.run(inputs);
    auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  double sum = 0;
  for (double v : ms) sum += v;
  r.mean_ms = sum / static_cast<double>(ms.size());
  double var = 0;
  for (double v : ms) var += (v - r.mean_ms) * (v - r.mean_ms);
  r.stddev_ms = ms.size() > 1 ? std::sqrt(var / static_cast<double>(ms.size() - 1)) : 0.0;
  r.gflops = r.flops / (r.mean_ms * 1e6);
  r.stats = exe.stats();
  r.kernels_compiled = cache.total_compiles();
  return r;
}

double tolerance_for(ElemType dtype) { return dtype == ElemType::BF16 ? 2e-2 : 1e-5; }

VerifyReport verify(const ModelSpec& spec, const PipelineConfig& config) {
  VerifyReport report;
  report.tolerance = tolerance_for(spec.dtype);
  try {
    Module model = generate_model(spec, config.packing);
    auto inputs = model_inputs(spec, config.packing);

    Function oracle = model.functions.at(0);
    std::vector<TensorData> oracle_inputs = inputs;
    if (spec.dtype == ElemType::BF16) {
      oracle = promote_to_f32(oracle);
      for (TensorData& t : oracle_inputs) t.type.elem = ElemType::F32;
    }
    auto expected = evaluate(oracle, oracle_inputs);

    PipelineConfig full = config;
    full.stop_after = StopAfter::None;
    PipelineResult lowered = run_pipeline(model, full);
    xsmm::ExecOptions options;
    options.threads = config.threads;
    auto got = xsmm::execute(lowered.module.functions.at(0), inputs, options);

    if (got.size() != expected.size()) {
      report.message = "output count mismatch";
      return report;
    }
    for (size_t i = 0; i < got.size(); ++i) {
      if (got[i].values.size() != expected[i].values.size()) {
        report.message = "output " + std::to_string(i) + " size mismatch";
        return report;
      }
      ErrorLocation e = max_relative_error(got[i].values, expected[i].values);
      if (i == 0 || e.max_rel_error > report.max_rel_error) {
        report.max_rel_error = e.max_rel_error;
        report.worst_output = i;
        report.worst_index = e.worst_index;
        report.got = e.got;
        report.expected = e.expected;
      }
    }
    report.pass = report.max_rel_error <= report.tolerance;
    std::ostringstream os;
    os << std::setprecision(6) << "max_rel_error=" << report.max_rel_error
       << " tolerance=" << report.tolerance;
    if (!report.pass) {
      os << " worst: output " << report.worst_output << " index " << report.worst_index
         << " got " << report.got << " expected " << report.expected;
    }
    report.message = os.str();
  } catch (const std::exception& e) {
    report.pass = false;
    report.message = e.what();
  }
  return report;
}

std::string csv_header() { return "name,threads,dtype,mean_ms,stddev_ms,gflops"; }

std::string csv_row(const BenchResult& r) {
  std::ostringstream os;
  os << r.name << ',' << r.threads << ',' << to_string(r.dtype) << ',' << std::fixed
     << std::setprecision(4) << r.mean_ms << ',' << r.stddev_ms << ',' << r.gflops;
  return os.str();
}

}  // namespace tilec
