// SPDX-License-Identifier: Apache-2.0
#include <random>

#include "test_util.hpp"
#include "tilec/ir/bf16.hpp"

namespace tilec {
namespace {

using test::module_text;
using test::parse_module;

std::string matmul_text(const std::string& a, const std::string& b, const std::string& c) {
  return module_text("func @f(%0: tensor<" + a + "xf32>, %1: tensor<" + b + "xf32>) -> (tensor<" +
                     c + "xf32>) {\n  %2 = splat {0.0} : tensor<" + c +
                     "xf32>\n  %3 = matmul(%0, %1, %2) : tensor<" + c + "xf32>\n  return(%3)\n}\n");
}

TEST(Verifier, AcceptsWellShapedMatmul) {
  ParseResult r = parse(matmul_text("128x256", "256x512", "128x512"));
  ASSERT_TRUE(r.ok()) << r.error().format();
  EXPECT_FALSE(verify(r.module()).has_value());
}

TEST(Verifier, RejectsContractionMismatch) {
  ParseResult r = parse(matmul_text("2x3", "4x5", "2x5"));
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.error().message.find("contraction dim mismatch 3≠4"), std::string::npos)
      << r.error().message;
  EXPECT_GE(r.error().op_index, 0);
}

TEST(Verifier, RejectsIndivisiblePack) {
  ParseResult r = parse(module_text(
      "func @f(%0: tensor<5x5xf32>) -> (tensor<3x3x2x2xf32>) {\n"
      "  %1 = pack(%0) {dims = [0, 1], perm = [0, 1], tiles = [2, 2]} : tensor<3x3x2x2xf32>\n"
      "  return(%1)\n}\n"));
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.error().message.find("dim 5 not divisible by 2"), std::string::npos)
      << r.error().message;
}

TEST(Verifier, RejectsUndefinedValue) {
  ParseResult r = parse(module_text(
      "func @f(%0: tensor<4xf32>) -> (tensor<4xf32>) {\n  %1 = relu(%7) : tensor<4xf32>\n"
      "  return(%1)\n}\n"));
  ASSERT_FALSE(r.ok());
}

TEST(Verifier, RejectsNonProjectedPermutationMap) {
  ParseResult r = parse(module_text(
      "func @f(%0: tensor<4x4xf32>) -> (tensor<4x4xf32>) {\n"
      "  %1 = generic(%0) {body = max_zero, iterators = [parallel, parallel], loops = 2, "
      "maps = [[0, 0]]} : tensor<4x4xf32>\n  return(%1)\n}\n"));
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.error().message.find("projected permutation"), std::string::npos)
      << r.error().message;
}

TEST(Verifier, RejectsReturnTypeMismatch) {
  ParseResult r = parse(module_text(
      "func @f(%0: tensor<4xf32>) -> (tensor<8xf32>) {\n  return(%0)\n}\n"));
  EXPECT_FALSE(r.ok());
}

TEST(Printer, SplatLine) {
  Module m = parse_module(module_text(
      "func @f() -> (tensor<4x4xf32>) {\n  %0 = splat {0.0} : tensor<4x4xf32>\n  return(%0)\n}\n"));
  EXPECT_NE(print(m).find("%0 = splat {0.0} : tensor<4x4xf32>"), std::string::npos) << print(m);
}

TEST(Printer, PackAttributesVerbatim) {
  Module m = parse_module(module_text(
      "func @f(%0: tensor<4x6xf32>) -> (tensor<3x2x2x2xf32>) {\n"
      "  %1 = pack(%0) {dims = [0, 1], perm = [1, 0], tiles = [2, 2]} : tensor<3x2x2x2xf32>\n"
      "  return(%1)\n}\n"));
  EXPECT_NE(print(m).find("{dims = [0, 1], perm = [1, 0], tiles = [2, 2]}"), std::string::npos);
}

TEST(Parser, EmptyTextIsEmptyModule) {
  ParseResult r = parse("");
  ASSERT_TRUE(r.ok());
  EXPECT_TRUE(r.module().functions.empty());
}

TEST(Parser, MalformedTypeReportsPosition) {
  ParseResult r = parse(module_text(
      "func @f(%0: tensor<4x4xf3>) -> (tensor<4x4xf32>) {\n  return(%0)\n}\n"));
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.error().line, 2);
  EXPECT_GT(r.error().col, 0);
  EXPECT_NE(r.error().message.find("type"), std::string::npos);
}

TEST(Parser, SyntaxErrorHasLineAndColumn) {
  ParseResult r = parse("module {\n  func @f( -> {\n}\n");
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.error().line, 2);
}

// The single layer of a 128x256 input into 512 features.
TEST(RoundTrip, NarrowInputLayer) {
  Module m;
  m.functions.push_back(test::mlp(1, 128, 512, ElemType::F32, 256));
  EXPECT_EQ(m.functions[0].result_types[0], Type::tensor({128, 512}, ElemType::F32));
  std::string text = print(m);
  Module back = parse_module(text);
  EXPECT_EQ(back, m);
  EXPECT_EQ(print(back), text);
}

TEST(RoundTrip, EveryPipelineStageIsAFixedPoint) {
  for (ElemType dt : {ElemType::F32, ElemType::BF16}) {
    ModelSpec spec;
    spec.layers = 2;
    spec.batch = 8;
    spec.hidden = {8, 12};
    spec.input_dim = 4;
    spec.dtype = dt;
    PipelineConfig cfg;
    cfg.packing = test::tiles(2);
    cfg.packing.tile_n = 4;
    cfg.gm = 2;
    cfg.gn = 1;
    PipelineResult r = run_pipeline(generate_model(spec, cfg.packing), cfg);
    ASSERT_FALSE(r.snapshots.empty());
    for (const auto& [stage, m] : r.snapshots) {
      std::string text = print(m);
      ParseResult back = parse(text);
      ASSERT_TRUE(back.ok()) << stage << ": " << back.error().format() << "\n" << text;
      EXPECT_EQ(back.module(), m) << stage;
      EXPECT_EQ(print(back.module()), text) << stage;
    }
  }
}

TEST(FlopCount, SingleLayerFormula) {
  Module m;
  m.functions.push_back(test::mlp(1, 256, 1024));
  EXPECT_EQ(flop_count(m), 2.0 * 256 * 1024 * 1024 + 2.0 * 256 * 1024);
  EXPECT_EQ(flop_count(m), 537395200.0);
}

TEST(FlopCount, EmptyAndAdditive) {
  EXPECT_EQ(flop_count(Module{}), 0.0);
  Module one, three;
  one.functions.push_back(test::mlp(1, 64, 128));
  three.functions.push_back(test::mlp(3, 64, 128));
  EXPECT_EQ(flop_count(three), 3 * flop_count(one));
}

TEST(FlopCount, InvariantUnderPacking) {
  Module m;
  m.functions.push_back(test::mlp(2, 64, 64));
  EXPECT_EQ(flop_count(fold_constant_packs(propagate_packs(pack_matmuls(m, {})))), flop_count(m));
}

TEST(GenericExpansion, BitwiseEqualToNamedOps) {
  for (ElemType dt : {ElemType::F32, ElemType::BF16}) {
    Function fn = test::mlp(2, 8, 8, dt, 6);
    Function generic = expand_named_ops(fn);
    EXPECT_EQ(count_ops(generic, OpKind::Matmul), 0);
    EXPECT_EQ(count_ops(generic, OpKind::Generic), 6);
    EXPECT_FALSE(verify(generic).has_value());
    auto in = random_inputs(fn, 3);
    EXPECT_TRUE(test::bitwise_equal(evaluate(fn, in), evaluate(generic, in)));

    // Packed forms, with and without VNNI.
    for (bool vnni : {false, true}) {
      PackingOptions o = test::tiles(2);
      o.min_iters = 1;
      o.vnni = vnni;
      Function packed = fold_pack_unpack(propagate_packs(pack_matmuls(fn, o)));
      EXPECT_GT(count_ops(packed, OpKind::PackedMatmul), 0);
      Function pg = expand_named_ops(packed);
      EXPECT_EQ(count_ops(pg, OpKind::PackedMatmul), 0);
      EXPECT_FALSE(verify(pg).has_value()) << verify(pg)->format();
      EXPECT_TRUE(test::bitwise_equal(evaluate(packed, in), evaluate(pg, in)));
    }
  }
}

TEST(PackSpec, PackedShapeFormulaPreservesElements) {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 200; ++iter) {
    int rank = 1 + static_cast<int>(rng() % 4);
    std::vector<int64_t> shape(static_cast<size_t>(rank));
    PackSpec spec;
    for (int d = 0; d < rank; ++d) {
      int64_t tile = 1 + static_cast<int64_t>(rng() % 4);
      shape[static_cast<size_t>(d)] = tile * (1 + static_cast<int64_t>(rng() % 3));
      if (rng() % 2) {
        spec.inner_dims_pos.push_back(d);
        spec.inner_tiles.push_back(tile);
      }
    }
    spec.outer_perm.resize(static_cast<size_t>(rank));
    std::iota(spec.outer_perm.begin(), spec.outer_perm.end(), 0);
    std::shuffle(spec.outer_perm.begin(), spec.outer_perm.end(), rng);
    ASSERT_FALSE(spec.check(shape).has_value());
    auto packed = spec.packed_shape(shape);
    EXPECT_EQ(packed.size(), shape.size() + spec.inner_tiles.size());
    EXPECT_EQ(product(packed), product(shape));
    EXPECT_EQ(spec.unpacked_shape(packed), shape);
  }
}

TEST(Bf16, RoundsToNearestEven) {
  EXPECT_EQ(round_bf16(1.0f), 1.0f);
  EXPECT_EQ(round_bf16(1.0f + 0x1p-8f), 1.0f);                 // tie, down to even
  EXPECT_EQ(round_bf16(1.0f + 3 * 0x1p-8f), 1.0f + 0x1p-6f);   // tie, up to even
  EXPECT_EQ(round_bf16(1.0f + 0x1p-8f + 0x1p-20f), 1.0f + 0x1p-7f);
  EXPECT_EQ(round_bf16(-2.5f), -2.5f);
  EXPECT_TRUE(std::isnan(round_bf16(std::nanf(""))));
  EXPECT_EQ(bf16_to_f32(f32_to_bf16(3.0f)), 3.0f);
}

TEST(Types, ElementCountAndStrides) {
  Type t = Type::tensor({2, 3, 4}, ElemType::BF16);
  EXPECT_EQ(t.num_elements(), 24);
  EXPECT_EQ(row_major_strides(t.shape), (std::vector<int64_t>{12, 4, 1}));
  EXPECT_EQ(to_string(t), "tensor<2x3x4xbf16>");
}

}  // namespace
}  // namespace tilec
