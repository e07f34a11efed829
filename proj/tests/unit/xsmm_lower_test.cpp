// SPDX-License-Identifier: Apache-2.0
#include "test_util.hpp"
#include "tilec/transforms/bufferize.hpp"
#include "tilec/transforms/tile_fuse.hpp"
#include "tilec/xsmm/executor.hpp"
#include "tilec/xsmm/lower.hpp"

namespace tilec::xsmm {
namespace {

using test::module_text;
using test::parse_module;

std::vector<DispatchKey> dispatch_keys(const Function& fn) {
  std::vector<DispatchKey> keys;
  walk(fn.body, [&](const Op& op) {
    if (op.kind == OpKind::XsmmDispatch) keys.push_back(DispatchKey::from_op(op));
  });
  return keys;
}

std::vector<DispatchKey> keys_of(const Function& fn, CallKind kind) {
  std::vector<DispatchKey> out;
  for (const DispatchKey& k : dispatch_keys(fn)) {
    if (k.kind == kind) out.push_back(k);
  }
  return out;
}

// Buffer form of a model, before micro-kernel conversion.
Function buffers(const ModelSpec& spec, PipelineConfig cfg = {}) {
  cfg.stop_after = StopAfter::Bufferize;
  return run_pipeline(generate_model(spec, cfg.packing), cfg).module.functions.at(0);
}

Function lowered(const ModelSpec& spec, PipelineConfig cfg = {}) {
  cfg.stop_after = StopAfter::None;
  return run_pipeline(generate_model(spec, cfg.packing), cfg).module.functions.at(0);
}

ModelSpec spec_of(int layers, int64_t batch, int64_t hidden, int64_t input = 0,
                  ElemType dt = ElemType::F32) {
  ModelSpec s;
  s.layers = layers;
  s.batch = batch;
  s.hidden = {hidden};
  s.input_dim = input;
  s.dtype = dt;
  return s;
}

Function tensor_to_xsmm(const std::string& body, bool fuse) {
  Function fn = parse_module(module_text(body)).functions.at(0);
  Function t = bufferize(tile_and_fuse(fn, build_fusion_clusters(fn)));
  t = convert_to_xsmm(t);
  return fuse ? fuse_xsmm_calls(t) : t;
}

int count_calls(const Function& fn) {
  int n = 0;
  for (OpKind k : {OpKind::XsmmUnary, OpKind::XsmmBinary, OpKind::XsmmGemm, OpKind::XsmmBrgemm,
                   OpKind::XsmmFusedBrgemm}) {
    n += count_ops(fn, k);
  }
  return n;
}

const Op* find_op(const Block& block, OpKind kind) {
  for (const Op& op : block.ops) {
    if (op.kind == kind) return &op;
  }
  return nullptr;
}

TEST(ConvertToXsmm, TileOpsBecomeFiveKindCalls) {
  Function b = buffers(spec_of(1, 64, 64, 256));
  Function x = convert_to_xsmm(b);
  ASSERT_FALSE(verify(x).has_value()) << verify(x)->format();
  auto brgemm = keys_of(x, CallKind::Brgemm);
  ASSERT_EQ(brgemm.size(), 1u);
  EXPECT_EQ(brgemm[0].m, 32);
  EXPECT_EQ(brgemm[0].n, 32);
  EXPECT_EQ(brgemm[0].k, 32);
  EXPECT_EQ(brgemm[0].batch, 8);
  EXPECT_EQ(brgemm[0].lda, 32);
  EXPECT_EQ(brgemm[0].ldb, 32);
  EXPECT_EQ(brgemm[0].ldc, 32);
  EXPECT_EQ(brgemm[0].stride_a, 32 * 32);
  EXPECT_EQ(brgemm[0].stride_b, 32 * 32);
  EXPECT_FALSE(brgemm[0].beta_zero);
  auto binary = keys_of(x, CallKind::Binary);
  ASSERT_EQ(binary.size(), 1u);
  EXPECT_EQ(binary[0].binary, BinaryKind::Add);
  EXPECT_TRUE(binary[0].bcast_col_in0);
  auto unary = keys_of(x, CallKind::Unary);
  ASSERT_EQ(unary.size(), 2u);
  EXPECT_EQ(unary[0].unary, UnaryKind::Zero);
  EXPECT_EQ(unary[1].unary, UnaryKind::Relu);
  for (OpKind k : {OpKind::TileZero, OpKind::TileMatmulAccum, OpKind::TileBiasAdd, OpKind::TileRelu}) {
    EXPECT_EQ(count_ops(x, k), 0);
  }
}

TEST(ConvertToXsmm, VnniKeyCarriesPairLayout) {
  Function x = convert_to_xsmm(buffers(spec_of(1, 64, 64, 64, ElemType::BF16)));
  auto brgemm = keys_of(x, CallKind::Brgemm);
  ASSERT_EQ(brgemm.size(), 1u);
  EXPECT_TRUE(brgemm[0].vnni);
  EXPECT_EQ(brgemm[0].ldb, 64);
  EXPECT_EQ(brgemm[0].dtype, ElemType::BF16);
}

TEST(ConvertToXsmm, NaiveBaselineIsWholeGemm) {
  PipelineConfig cfg;
  cfg.pack = false;
  cfg.fuse = false;
  Function x = lowered(spec_of(1, 256, 1024), cfg);
  auto gemm = keys_of(x, CallKind::Gemm);
  ASSERT_EQ(gemm.size(), 1u);
  EXPECT_EQ(gemm[0].m, 256);
  EXPECT_EQ(gemm[0].n, 1024);
  EXPECT_EQ(gemm[0].k, 1024);
  EXPECT_EQ(count_ops(x, OpKind::Parallel), 0);
  EXPECT_EQ(count_ops(x, OpKind::XsmmBrgemm) + count_ops(x, OpKind::XsmmFusedBrgemm), 0);
}

TEST(ConvertToXsmm, GenericHasNoKernel) {
  Function fn = expand_named_ops(test::mlp(1, 4, 4));
  EXPECT_THROW(convert_to_xsmm(bufferize(fn)), CompileError);
}

TEST(FuseXsmmCalls, FullPatternCollapses) {
  Function f = fuse_xsmm_calls(convert_to_xsmm(buffers(spec_of(1, 64, 64))));
  ASSERT_FALSE(verify(f).has_value()) << verify(f)->format();
  auto fused = keys_of(f, CallKind::FusedBrgemm);
  ASSERT_EQ(fused.size(), 1u);
  EXPECT_TRUE(fused[0].beta_zero);
  EXPECT_EQ(fused[0].binary, BinaryKind::Add);
  EXPECT_TRUE(fused[0].bcast_col_in0);
  EXPECT_EQ(fused[0].unary, UnaryKind::Relu);
  EXPECT_EQ(count_calls(f), 1);
  EXPECT_EQ(dispatch_keys(f).size(), 1u);
}

TEST(FuseXsmmCalls, BrgemmPlusReluIsPartialFusion) {
  Function f = tensor_to_xsmm(
      "func @f(%0: tensor<2x3x4x4xf32>, %1: tensor<2x3x4x4xf32>, %2: tensor<2x2x4x4xf32>) -> "
      "(tensor<2x2x4x4xf32>) {\n"
      "  %3 = packed_matmul(%0, %1, %2) : tensor<2x2x4x4xf32>\n"
      "  %4 = relu(%3) : tensor<2x2x4x4xf32>\n  return(%4)\n}\n",
      true);
  auto fused = keys_of(f, CallKind::FusedBrgemm);
  ASSERT_EQ(fused.size(), 1u);
  EXPECT_FALSE(fused[0].beta_zero);
  EXPECT_EQ(fused[0].binary, BinaryKind::None);
  EXPECT_EQ(fused[0].unary, UnaryKind::Relu);
  // The other call copies the read-only init argument into the result.
  EXPECT_EQ(count_calls(f), 2);
  EXPECT_EQ(count_ops(f, OpKind::XsmmBrgemm), 0);
  EXPECT_EQ(keys_of(f, CallKind::Unary).at(0).unary, UnaryKind::Copy);
  Function ref = parse_module(module_text(
                                  "func @f(%0: tensor<2x3x4x4xf32>, %1: tensor<2x3x4x4xf32>, %2: tensor<2x2x4x4xf32>) -> "
                                  "(tensor<2x2x4x4xf32>) {\n"
                                  "  %3 = packed_matmul(%0, %1, %2) : tensor<2x2x4x4xf32>\n"
                                  "  %4 = relu(%3) : tensor<2x2x4x4xf32>\n  return(%4)\n}\n"))
                     .functions.at(0);
  auto in = random_inputs(ref, 8);
  EXPECT_TRUE(test::bitwise_equal(execute(f, in), evaluate(ref, in)));
}

TEST(FuseXsmmCalls, BrgemmAloneUnchanged) {
  std::string body =
      "func @f(%0: tensor<2x3x4x4xf32>, %1: tensor<2x3x4x4xf32>, %2: tensor<2x2x4x4xf32>) -> "
      "(tensor<2x2x4x4xf32>) {\n"
      "  %3 = packed_matmul(%0, %1, %2) : tensor<2x2x4x4xf32>\n  return(%3)\n}\n";
  Function unfused = tensor_to_xsmm(body, false);
  EXPECT_EQ(fuse_xsmm_calls(unfused), unfused);
  EXPECT_EQ(count_ops(unfused, OpKind::XsmmBrgemm), 1);
}

TEST(FuseXsmmCalls, ZeroAndBrgemmBecomeBetaZero) {
  Function f = tensor_to_xsmm(
      "func @f(%0: tensor<2x3x4x4xf32>, %1: tensor<2x3x4x4xf32>) -> (tensor<2x2x4x4xf32>) {\n"
      "  %2 = splat {0.0} : tensor<2x2x4x4xf32>\n"
      "  %3 = packed_matmul(%0, %1, %2) : tensor<2x2x4x4xf32>\n  return(%3)\n}\n",
      true);
  auto brgemm = keys_of(f, CallKind::Brgemm);
  ASSERT_EQ(brgemm.size(), 1u);
  EXPECT_TRUE(brgemm[0].beta_zero);
  EXPECT_EQ(count_calls(f), 1);
}

TEST(FuseXsmmCalls, InterleavedCallBlocksFusion) {
  Function x = convert_to_xsmm(buffers(spec_of(1, 64, 64)));
  // Put a second zero on C between the brgemm and the bias add.
  walk_mut(x.body, [](Op& op) {
    if (op.kind != OpKind::Parallel) return;
    auto& ops = op.body().ops;
    auto relu = std::find_if(ops.begin(), ops.end(), [](const Op& o) { return o.kind == OpKind::XsmmUnary; });
    auto bin = std::find_if(ops.begin(), ops.end(), [](const Op& o) { return o.kind == OpKind::XsmmBinary; });
    Op copy = *relu;
    ops.insert(bin, copy);
  });
  ASSERT_FALSE(verify(x).has_value()) << verify(x)->format();
  Function f = fuse_xsmm_calls(x);
  ASSERT_FALSE(verify(f).has_value());
  EXPECT_EQ(count_ops(f, OpKind::XsmmFusedBrgemm), 0);
  EXPECT_EQ(count_ops(f, OpKind::XsmmBrgemm), 1);
  EXPECT_EQ(keys_of(f, CallKind::Brgemm)[0].beta_zero, true);
  EXPECT_EQ(count_ops(f, OpKind::XsmmBinary), 1);
  EXPECT_EQ(count_ops(f, OpKind::XsmmUnary), 2);  // second zero, relu
  auto in = random_inputs(x, 3);
  EXPECT_TRUE(test::bitwise_equal(execute(f, in), execute(x, in)));
}

TEST(FuseXsmmCalls, PreservesResultsBitwise) {
  for (ElemType dt : {ElemType::F32, ElemType::BF16}) {
    Function x = convert_to_xsmm(buffers(spec_of(2, 64, 96, 32, dt)));
    Function f = fuse_xsmm_calls(x);
    auto in = random_inputs(x, 6);
    EXPECT_TRUE(test::bitwise_equal(execute(f, in), execute(x, in)));
  }
}

TEST(Parallelize2d, GridBlocksTheTileLoops) {
  PipelineConfig cfg;
  cfg.gm = 2;
  cfg.gn = 4;
  cfg.stop_after = StopAfter::None;
  Function p = lowered(spec_of(1, 256, 1024), cfg);
  const Op* par = find_op(p.body, OpKind::Parallel);
  ASSERT_NE(par, nullptr);
  EXPECT_EQ(par->ints_attr("bounds"), (IntList{4, 8}));  // 32 blocks
  const Op* seq = find_op(par->body(), OpKind::For);
  ASSERT_NE(seq, nullptr);
  EXPECT_EQ(seq->ints_attr("bounds"), (IntList{2, 4}));  // 8 tiles each
}

TEST(Parallelize2d, UnitGridUnchanged) {
  Function f = fuse_xsmm_calls(convert_to_xsmm(buffers(spec_of(1, 64, 64))));
  EXPECT_EQ(parallelize_2d(f, 1, 1), f);
}

TEST(Parallelize2d, NonDividingGridListsDivisors) {
  Function f = fuse_xsmm_calls(convert_to_xsmm(buffers(spec_of(1, 256, 1024))));
  try {
    parallelize_2d(f, 3, 4);
    FAIL() << "expected an error";
  } catch (const CompileError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("valid gm: 1, 2, 4, 8"), std::string::npos) << msg;
    EXPECT_NE(msg.find("valid gn: 1, 2, 4, 8, 16, 32"), std::string::npos) << msg;
  }
}

TEST(Parallelize2d, EveryTileVisitedOnce) {
  for (auto [gm, gn] : {std::pair{1, 1}, {2, 1}, {1, 2}, {2, 2}, {4, 2}}) {
    PipelineConfig cfg;
    cfg.packing = test::tiles(8);
    cfg.gm = gm;
    cfg.gn = gn;
    ModelSpec spec = spec_of(2, 32, 16);
    Function p = lowered(spec, cfg);
    auto in = model_inputs(spec);
    ExecStats stats;
    auto got = execute(p, in, {}, &stats);
    EXPECT_EQ(stats.invokes_of(CallKind::FusedBrgemm), 2 * 4 * 2);
    EXPECT_EQ(stats.parallel_iterations, 2 * (4 / gm) * (2 / gn));
    EXPECT_TRUE(test::bitwise_equal(got, evaluate(generate_model(spec).functions[0], in)));
  }
}

TEST(HoistTileConfig, CountsPerParallelBlock) {
  ModelSpec spec = spec_of(1, 256, 1024);
  PipelineConfig cfg;
  cfg.gm = 2;
  cfg.gn = 4;
  Function hoisted = lowered(spec, cfg);
  cfg.hoist = false;
  Function plain = lowered(spec, cfg);
  auto in = model_inputs(spec);
  ExecStats hs, ps;
  auto a = execute(hoisted, in, {}, &hs);
  auto b = execute(plain, in, {}, &ps);
  EXPECT_EQ(hs.tile_setups, 32);
  EXPECT_EQ(hs.tile_releases, 32);
  EXPECT_EQ(ps.tile_setups, 256);
  EXPECT_EQ(ps.tile_releases, 256);
  EXPECT_TRUE(test::bitwise_equal(a, b));
}

TEST(HoistTileConfig, WithoutSequentialLoopsOnePairPerIteration) {
  ModelSpec spec = spec_of(1, 64, 128);
  PipelineConfig cfg;
  Function f = lowered(spec, cfg);
  ExecStats s;
  execute(f, model_inputs(spec), {}, &s);
  EXPECT_EQ(s.parallel_iterations, 2 * 4);
  EXPECT_EQ(s.tile_setups, s.parallel_iterations);
}

TEST(HoistTileConfig, TwoHandlesBothHoisted) {
  PipelineConfig cfg;
  cfg.packing = test::tiles(8);
  cfg.gm = 2;
  cfg.gn = 2;
  cfg.stop_after = StopAfter::None;
  ModelSpec spec = spec_of(1, 32, 32);
  Module m = generate_model(spec, cfg.packing);
  PipelineResult r = run_pipeline(m, cfg);
  Function p = r.snapshot("parallelize-2d")->functions.at(0);
  // Add a second gemm-family kernel (beta_zero dropped) to the loop body.
  auto it = std::find_if(p.body.ops.begin(), p.body.ops.end(),
                         [](const Op& op) { return op.kind == OpKind::XsmmDispatch; });
  Op second = *it;
  ValueId old_handle = *second.result;
  DispatchKey key = DispatchKey::from_op(second);
  key.beta_zero = false;
  second.attrs = key.to_attrs();
  second.result = p.new_value(Type::handle());
  ValueId new_handle = *second.result;
  p.body.ops.insert(it + 1, second);
  walk_mut(p.body, [&](Op& op) {
    if (op.kind != OpKind::For) return;
    auto& ops = op.body().ops;
    Op call = ops.back();
    ASSERT_EQ(call.operands[0], old_handle);
    call.operands[0] = new_handle;
    ops.push_back(call);
  });
  ASSERT_FALSE(verify(p).has_value()) << verify(p)->format();
  Function h = hoist_tile_config(p, true);
  ASSERT_FALSE(verify(h).has_value()) << verify(h)->format();
  const Op* par = find_op(h.body, OpKind::Parallel);
  std::vector<OpKind> kinds;
  for (const Op& op : par->body().ops) {
    if (op.kind != OpKind::IndexAffine && op.kind != OpKind::Subview) kinds.push_back(op.kind);
  }
  EXPECT_EQ(kinds, (std::vector<OpKind>{OpKind::XsmmTileConfig, OpKind::XsmmTileConfig, OpKind::For,
                                        OpKind::XsmmTileRelease, OpKind::XsmmTileRelease}));
  EXPECT_EQ(find_op(find_op(par->body(), OpKind::For)->body(), OpKind::XsmmTileConfig), nullptr);
  ExecStats s;
  execute(h, model_inputs(spec), {}, &s);
  EXPECT_EQ(s.tile_setups, 2 * 4);
  EXPECT_EQ(s.tile_releases, 2 * 4);
}

TEST(HoistTileConfig, UnhoistedConfigNeverLeavesTheParallelBody) {
  PipelineConfig cfg;
  cfg.gm = 2;
  cfg.gn = 2;
  Function f = lowered(spec_of(1, 128, 128), cfg);
  for (const Op& op : f.body.ops) {
    EXPECT_NE(op.kind, OpKind::XsmmTileConfig);
    EXPECT_NE(op.kind, OpKind::XsmmTileRelease);
  }
}

TEST(Execute, ThreadCountInvariance) {
  for (ElemType dt : {ElemType::F32, ElemType::BF16}) {
    ModelSpec spec = spec_of(2, 128, 128, 64, dt);
    PipelineConfig cfg;
    cfg.gm = 2;
    Function f = lowered(spec, cfg);
    auto in = model_inputs(spec);
    Executable exe(f);
    auto one = exe.run(in);
    for (int t : {2, 3, 4, 8}) {
      exe.set_threads(t);
      EXPECT_TRUE(test::bitwise_equal(exe.run(in), one)) << t;
    }
  }
}

TEST(Execute, MatchesOracle) {
  ModelSpec spec = spec_of(1, 256, 1024);
  PipelineConfig cfg;
  VerifyReport r = verify(spec, cfg);
  EXPECT_TRUE(r.pass) << r.message;
  EXPECT_LE(r.max_rel_error, 1e-5);
}

TEST(Execute, EmptyFunctionIsNoOp) {
  Function f = parse_module(module_text("func @e() -> () {\n  return()\n}\n")).functions.at(0);
  ExecStats s;
  EXPECT_TRUE(execute(f, {}, {}, &s).empty());
  EXPECT_EQ(s.dispatch_lookups, 0);
}

TEST(Execute, RejectsMismatchedViews) {
  Function f = lowered(spec_of(1, 64, 64));
  // Swap the A and B operands of the fused call; B's view has the wrong stride
  // pattern for A only when tiles differ, so change the handle's m instead.
  walk_mut(f.body, [](Op& op) {
    if (op.kind == OpKind::XsmmDispatch) op.attrs["m"] = int64_t{16};
  });
  EXPECT_THROW(execute(f, model_inputs(spec_of(1, 64, 64))), CompileError);
}

TEST(Execute, RejectsWrongInputs) {
  Function f = lowered(spec_of(1, 64, 64));
  EXPECT_THROW(execute(f, {}), CompileError);
  std::vector<TensorData> bad = {random_tensor(Type::tensor({64, 32}, ElemType::F32), 1)};
  EXPECT_THROW(execute(f, bad), CompileError);
}

TEST(Execute, ErrorInsideParallelPropagates) {
  Function f = lowered(spec_of(1, 64, 64));
  walk_mut(f.body, [](Op& op) {
    if (op.kind == OpKind::Parallel) {
      auto& ops = op.body().ops;
      auto rel = std::find_if(ops.begin(), ops.end(), [](const Op& o) { return o.kind == OpKind::XsmmTileRelease; });
      ops.erase(rel);
    }
  });
  ExecOptions o;
  o.threads = 4;
  EXPECT_THROW(execute(f, model_inputs(spec_of(1, 64, 64)), o), CompileError);
}

TEST(Execute, DispatchCacheSharedAcrossEqualLayers) {
  ModelSpec spec = spec_of(3, 64, 64);
  KernelCache cache;
  ExecOptions o;
  o.cache = &cache;
  ExecStats s;
  execute(lowered(spec), model_inputs(spec), o, &s);
  EXPECT_EQ(cache.gemm_family_size(), 1u);
  ASSERT_EQ(cache.keys().size(), 1u);
  EXPECT_EQ(cache.dispatch_count(cache.keys()[0]), 1);
  EXPECT_EQ(s.dispatch_lookups, 3);
  EXPECT_EQ(cache.lookups(), 3);
}

TEST(Execute, ReusableAcrossRuns) {
  ModelSpec spec = spec_of(2, 64, 64);
  Executable exe(lowered(spec));
  auto a = exe.run(model_inputs(spec));
  spec.seed = 99;
  auto b = exe.run(model_inputs(spec));
  spec.seed = 1;
  auto c = exe.run(model_inputs(spec));
  EXPECT_FALSE(test::bitwise_equal(a, b));
  EXPECT_TRUE(test::bitwise_equal(a, c));
}

}  // namespace
}  // namespace tilec::xsmm
