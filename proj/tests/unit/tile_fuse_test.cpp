// SPDX-License-Identifier: Apache-2.0
#include <set>

#include "test_util.hpp"
#include "tilec/transforms/tile_fuse.hpp"

namespace tilec {
namespace {

using test::module_text;
using test::parse_module;

Function packed_mlp(int layers, int64_t batch, int64_t hidden, ElemType dt = ElemType::F32,
                    const PackingOptions& o = {}) {
  ModelSpec spec;
  spec.layers = layers;
  spec.batch = batch;
  spec.hidden = {hidden};
  spec.dtype = dt;
  PipelineConfig cfg;
  cfg.packing = o;
  cfg.stop_after = StopAfter::Pack;
  return run_pipeline(generate_model(spec, o), cfg).module.functions.at(0);
}

std::vector<const Op*> foralls(const Function& fn) {
  std::vector<const Op*> out;
  for (const Op& op : fn.body.ops) {
    if (op.kind == OpKind::Forall) out.push_back(&op);
  }
  return out;
}

std::vector<OpKind> body_kinds(const Op& forall) {
  std::vector<OpKind> k;
  for (const Op& op : forall.body().ops) k.push_back(op.kind);
  return k;
}

TEST(FusionClusters, ChainFormsOneCluster) {
  Function fn = packed_mlp(1, 64, 64);
  auto clusters = build_fusion_clusters(fn);
  ASSERT_EQ(clusters.size(), 1u);
  EXPECT_EQ(clusters[0].size(), 3u);
  EXPECT_EQ(fn.body.ops[clusters[0].anchor].kind, OpKind::PackedMatmul);
  std::multiset<OpKind> kinds;
  for (size_t m : clusters[0].members) kinds.insert(fn.body.ops[m].kind);
  EXPECT_EQ(kinds, (std::multiset<OpKind>{OpKind::BiasAdd, OpKind::Relu}));
}

TEST(FusionClusters, NoFuseGivesBareAnchors) {
  Function fn = packed_mlp(2, 64, 64);
  auto clusters = build_fusion_clusters(fn, false);
  ASSERT_EQ(clusters.size(), 2u);
  for (const auto& c : clusters) EXPECT_EQ(c.size(), 1u);
}

TEST(FusionClusters, NoContractionNoClusters) {
  Function fn = parse_module(module_text(
                                 "func @f(%0: tensor<2x2x2x2xf32>) -> (tensor<2x2x2x2xf32>) {\n"
                                 "  %1 = relu(%0) : tensor<2x2x2x2xf32>\n  return(%1)\n}\n"))
                    .functions.at(0);
  EXPECT_TRUE(build_fusion_clusters(fn).empty());
}

// %3 is both the consumer of the first contraction and the C-init of the
// second; it must join exactly one cluster.
const char* kDiamond =
    "func @f(%0: tensor<2x2x2x2xf32>, %1: tensor<2x2x2x2xf32>, %2: tensor<2x2xf32>) -> "
    "(tensor<2x2x2x2xf32>) {\n"
    "  %3 = splat {0.0} : tensor<2x2x2x2xf32>\n"
    "  %4 = packed_matmul(%0, %1, %3) : tensor<2x2x2x2xf32>\n"
    "  %5 = bias_add(%4, %2) : tensor<2x2x2x2xf32>\n"
    "  %6 = packed_matmul(%0, %1, %5) : tensor<2x2x2x2xf32>\n"
    "  return(%6)\n}\n";

TEST(FusionClusters, SharedOpJoinsFirstBottomUpCluster) {
  Function fn = parse_module(module_text(kDiamond)).functions.at(0);
  auto clusters = build_fusion_clusters(fn);
  ASSERT_EQ(clusters.size(), 2u);
  size_t bias_index = 2;
  ASSERT_EQ(fn.body.ops[bias_index].kind, OpKind::BiasAdd);
  int claims = 0;
  for (const auto& c : clusters) {
    for (size_t m : c.members) claims += m == bias_index;
  }
  EXPECT_EQ(claims, 1);
  // Bottom-up: the later contraction (op 3) claims it as its producer.
  for (const auto& c : clusters) {
    if (c.anchor == 3) {
      EXPECT_EQ(c.members, std::vector<size_t>{bias_index});
    }
  }
  Function tiled = tile_and_fuse(fn, clusters);
  ASSERT_FALSE(verify(tiled).has_value()) << verify(tiled)->format();
  EXPECT_EQ(count_ops(tiled, OpKind::TileBiasAdd), 1);
  EXPECT_TRUE(evaluate_packed_equivalence(fn, tiled).bitwise_equal);
}

TEST(TileAndFuse, ForallBoundsFromTileCounts) {
  Function fn = packed_mlp(1, 256, 1024);
  Function t = tile_and_fuse(fn, build_fusion_clusters(fn));
  auto nests = foralls(t);
  ASSERT_EQ(nests.size(), 1u);
  EXPECT_EQ(nests[0]->ints_attr("bounds"), (IntList{8, 32}));
  EXPECT_EQ(body_kinds(*nests[0]),
            (std::vector<OpKind>{OpKind::ExtractSlice, OpKind::ExtractSlice, OpKind::ExtractSlice,
                                 OpKind::ExtractSlice, OpKind::TileZero, OpKind::TileMatmulAccum,
                                 OpKind::TileBiasAdd, OpKind::TileRelu, OpKind::InsertSlice}));
}

TEST(TileAndFuse, BareClusterBody) {
  Function fn = parse_module(module_text(
                                 "func @f(%0: tensor<2x3x4x4xf32>, %1: tensor<2x3x4x4xf32>, "
                                 "%2: tensor<2x2x4x4xf32>) -> (tensor<2x2x4x4xf32>) {\n"
                                 "  %3 = packed_matmul(%0, %1, %2) : tensor<2x2x4x4xf32>\n"
                                 "  return(%3)\n}\n"))
                    .functions.at(0);
  Function t = tile_and_fuse(fn, build_fusion_clusters(fn));
  ASSERT_FALSE(verify(t).has_value());
  auto nests = foralls(t);
  ASSERT_EQ(nests.size(), 1u);
  EXPECT_EQ(body_kinds(*nests[0]),
            (std::vector<OpKind>{OpKind::ExtractSlice, OpKind::ExtractSlice, OpKind::ExtractSlice,
                                 OpKind::TileMatmulAccum, OpKind::InsertSlice}));
  EXPECT_TRUE(evaluate_packed_equivalence(fn, t).bitwise_equal);
}

TEST(TileAndFuse, ThreeLayersThreeNests) {
  Function fn = packed_mlp(3, 64, 64);
  Function t = tile_and_fuse(fn, build_fusion_clusters(fn));
  EXPECT_EQ(foralls(t).size(), 3u);
  EXPECT_EQ(count_ops(t, OpKind::PackedMatmul), 0);
  EXPECT_EQ(count_ops(t, OpKind::Relu), 0);
}

TEST(TileAndFuse, NoFuseKeepsElementwiseNestsSeparate) {
  Function fn = packed_mlp(2, 64, 64);
  Function t = tile_and_fuse(fn, build_fusion_clusters(fn, false));
  ASSERT_FALSE(verify(t).has_value());
  EXPECT_EQ(foralls(t).size(), 6u);
  EXPECT_TRUE(evaluate_packed_equivalence(fn, t).bitwise_equal);
}

TEST(TileAndFuse, OracleEquivalentBothDtypes) {
  for (ElemType dt : {ElemType::F32, ElemType::BF16}) {
    for (bool fuse : {true, false}) {
      PackingOptions o = test::tiles(16);
      Function fn = packed_mlp(2, 64, 48, dt, o);
      Function t = tile_and_fuse(fn, build_fusion_clusters(fn, fuse));
      ASSERT_FALSE(verify(t).has_value());
      EXPECT_TRUE(evaluate_packed_equivalence(fn, t).bitwise_equal);
    }
  }
}

TEST(TileAndFuse, InsertTargetsPartitionTheOutput) {
  Function fn = packed_mlp(2, 128, 64);
  Function t = tile_and_fuse(fn, build_fusion_clusters(fn));
  for (const Op* nest : foralls(t)) {
    const Type& out = t.type(*nest->result);
    const IntList& bounds = nest->ints_attr("bounds");
    const Block& body = nest->body();
    const Op& ins = body.ops.back();
    ASSERT_EQ(ins.kind, OpKind::InsertSlice);
    EXPECT_EQ(ins.operands[1], body.args[2]);  // writes the shared output
    ASSERT_EQ(ins.ints_attr("dims"), (IntList{0, 1}));
    // Offsets are the induction variables, so iteration (i, j) writes block
    // (i, j). Count coverage of every output element.
    std::vector<int> hits(static_cast<size_t>(out.num_elements()), 0);
    int64_t tile = out.shape[2] * out.shape[3];
    for (int64_t i = 0; i < bounds[0]; ++i) {
      for (int64_t j = 0; j < bounds[1]; ++j) {
        ASSERT_EQ(ins.operands[2], body.args[0]);
        ASSERT_EQ(ins.operands[3], body.args[1]);
        int64_t base = (i * out.shape[1] + j) * tile;
        for (int64_t e = 0; e < tile; ++e) ++hits[static_cast<size_t>(base + e)];
      }
    }
    for (int h : hits) ASSERT_EQ(h, 1);
  }
}

TEST(TileAndFuse, NoRecomputation) {
  Function fn = packed_mlp(3, 64, 64);
  Function t = tile_and_fuse(fn, build_fusion_clusters(fn));
  EXPECT_EQ(count_ops(t, OpKind::TileMatmulAccum), count_ops(fn, OpKind::PackedMatmul));
  EXPECT_EQ(count_ops(t, OpKind::TileBiasAdd), count_ops(fn, OpKind::BiasAdd));
  EXPECT_EQ(count_ops(t, OpKind::TileRelu), count_ops(fn, OpKind::Relu));
}

TEST(TileAndFuse, MismatchedDomainIsDiagnosed) {
  Function fn = parse_module(module_text(
                                 "func @f(%0: tensor<2x2x2x2xf32>, %1: tensor<2x2x2x2xf32>, "
                                 "%2: tensor<4x2x2x2xf32>) -> (tensor<2x2x2x2xf32>, tensor<4x2x2x2xf32>) {\n"
                                 "  %3 = splat {0.0} : tensor<2x2x2x2xf32>\n"
                                 "  %4 = packed_matmul(%0, %1, %3) : tensor<2x2x2x2xf32>\n"
                                 "  %5 = relu(%2) : tensor<4x2x2x2xf32>\n"
                                 "  return(%4, %5)\n}\n"))
                    .functions.at(0);
  FusionCluster bad;
  bad.anchor = 1;
  bad.members = {2};
  EXPECT_THROW(tile_and_fuse(fn, {bad}), CompileError);
}

}  // namespace
}  // namespace tilec
