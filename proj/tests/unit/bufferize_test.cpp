// SPDX-License-Identifier: Apache-2.0
#include "test_util.hpp"
#include "tilec/transforms/bufferize.hpp"
#include "tilec/transforms/tile_fuse.hpp"
#include "tilec/xsmm/executor.hpp"

namespace tilec {
namespace {

using test::module_text;
using test::parse_module;

int count_allocs(const Function& fn, bool result) {
  int n = 0;
  walk(fn.body, [&](const Op& op) {
    if (op.kind == OpKind::Alloc && op.bool_attr("result") == result) ++n;
  });
  return n;
}

Function parse_fn(const std::string& body) { return parse_module(module_text(body)).functions.at(0); }

std::vector<TensorData> run_buffers(const Function& buffers, const std::vector<TensorData>& in,
                                    bool check_init = true) {
  xsmm::ExecOptions o;
  o.check_init = check_init;
  return xsmm::execute(buffers, in, o);
}

TEST(Bufferize, InPlaceRelu) {
  Function fn = parse_fn(
      "func @f(%0: tensor<4x8xf32>, %1: tensor<8xf32>) -> (tensor<4x8xf32>) {\n"
      "  %2 = bias_add(%0, %1) : tensor<4x8xf32>\n"
      "  %3 = relu(%2) : tensor<4x8xf32>\n  return(%3)\n}\n");
  Function b = bufferize(fn);
  ASSERT_FALSE(verify(b).has_value()) << verify(b)->format();
  // The argument is read-only, so bias_add copies once; relu reuses that buffer.
  EXPECT_EQ(count_ops(b, OpKind::Alloc), 1);
  EXPECT_EQ(count_ops(b, OpKind::Copy), 1);
  auto in = random_inputs(fn, 2);
  EXPECT_TRUE(test::bitwise_equal(run_buffers(b, in), evaluate(fn, in)));
}

TEST(Bufferize, SecondUseForcesFreshBuffer) {
  Function fn = parse_fn(
      "func @f(%0: tensor<4x8xf32>, %1: tensor<8xf32>) -> (tensor<4x8xf32>, tensor<4x8xf32>) {\n"
      "  %2 = bias_add(%0, %1) : tensor<4x8xf32>\n"
      "  %3 = relu(%2) : tensor<4x8xf32>\n"
      "  %4 = bias_add(%2, %1) : tensor<4x8xf32>\n  return(%3, %4)\n}\n");
  Function b = bufferize(fn);
  ASSERT_FALSE(verify(b).has_value()) << verify(b)->format();
  EXPECT_EQ(count_ops(b, OpKind::Alloc), 2);
  auto in = random_inputs(fn, 4);
  EXPECT_TRUE(test::bitwise_equal(run_buffers(b, in), evaluate(fn, in)));
}

TEST(Bufferize, ThreeLayerPackedMlpAllocations) {
  ModelSpec spec;
  spec.batch = 64;
  spec.hidden = {64};
  PipelineConfig cfg;
  cfg.stop_after = StopAfter::Bufferize;
  Function b = run_pipeline(generate_model(spec), cfg).module.functions.at(0);
  // Packed input plus one buffer per layer output, then the unpacked result.
  EXPECT_EQ(count_allocs(b, false), 4);
  EXPECT_EQ(count_allocs(b, true), 1);
  EXPECT_EQ(count_ops(b, OpKind::Copy), 0);
  EXPECT_EQ(count_ops(b, OpKind::Parallel), 3);
  EXPECT_EQ(count_ops(b, OpKind::Forall), 0);
  EXPECT_EQ(count_ops(b, OpKind::ExtractSlice), 0);
}

TEST(Bufferize, StorageClasses) {
  ModelSpec spec;
  spec.layers = 1;
  spec.batch = 64;
  spec.hidden = {64};
  PipelineConfig cfg;
  cfg.stop_after = StopAfter::Bufferize;
  Function b = run_pipeline(generate_model(spec), cfg).module.functions.at(0);
  std::map<StorageClass, int> n;
  for (const BufferInfo& info : list_buffers(b)) {
    ++n[info.storage];
    EXPECT_TRUE(info.type.is_memref());
  }
  EXPECT_EQ(n[StorageClass::FuncArg], 1);
  EXPECT_EQ(n[StorageClass::ConstantRO], 2);
  EXPECT_EQ(n[StorageClass::Alloc], 2);
  EXPECT_EQ(n[StorageClass::Result], 1);
  EXPECT_EQ(to_string(StorageClass::ConstantRO), "constant_ro");
}

TEST(Bufferize, MatchesTensorFormBitwise) {
  for (ElemType dt : {ElemType::F32, ElemType::BF16}) {
    for (bool pack : {true, false}) {
      for (bool fuse : {true, false}) {
        ModelSpec spec;
        spec.layers = 2;
        spec.batch = 64;
        spec.hidden = {64, 32};
        spec.input_dim = 96;
        spec.dtype = dt;
        PipelineConfig cfg;
        cfg.pack = pack;
        cfg.fuse = fuse;
        cfg.packing = test::tiles(16);
        cfg.stop_after = StopAfter::Bufferize;
        Module m = generate_model(spec);
        PipelineResult r = run_pipeline(m, cfg);
        Function tiled = r.snapshot("tile-and-fuse")->functions.at(0);
        auto in = model_inputs(spec);
        // Shadow-memory run: no read of uninitialized memory anywhere.
        auto got = run_buffers(r.module.functions.at(0), in);
        EXPECT_TRUE(test::bitwise_equal(got, evaluate(tiled, in)));
        EXPECT_TRUE(test::bitwise_equal(got, evaluate(m.functions[0], in)));
      }
    }
  }
}

TEST(Bufferize, ShadowCheckCatchesUninitializedRead) {
  Function fn = parse_fn(
      "func @f(%0: memref<4xf32>) -> (memref<4xf32>) {\n"
      "  %1 = alloc : memref<4xf32>\n  %2 = alloc {result = true} : memref<4xf32>\n"
      "  copy(%1, %2)\n  return(%2)\n}\n");
  std::vector<TensorData> args = {random_tensor(Type::tensor({4}, ElemType::F32), 1)};
  EXPECT_THROW(run_buffers(fn, args), CompileError);
  EXPECT_NO_THROW(run_buffers(fn, args, false));
}

TEST(Bufferize, ShadowCheckCatchesWriteToArgument) {
  Function fn = parse_fn(
      "func @f(%0: memref<4xf32>) -> (memref<4xf32>) {\n"
      "  fill(%0) {value = 0.0}\n  return(%0)\n}\n");
  std::vector<TensorData> args = {random_tensor(Type::tensor({4}, ElemType::F32), 1)};
  EXPECT_THROW(run_buffers(fn, args), CompileError);
}

}  // namespace
}  // namespace tilec
