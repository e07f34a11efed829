// SPDX-License-Identifier: Apache-2.0
#include <random>

#include "test_util.hpp"

namespace tilec {
namespace {

using test::module_text;
using test::parse_module;

Function matmul_fn(int64_t m, int64_t k, int64_t n) {
  std::string a = std::to_string(m) + "x" + std::to_string(k);
  std::string b = std::to_string(k) + "x" + std::to_string(n);
  std::string c = std::to_string(m) + "x" + std::to_string(n);
  return parse_module(module_text(
             "func @f(%0: tensor<" + a + "xf32>, %1: tensor<" + b + "xf32>, %2: tensor<" + c +
             "xf32>) -> (tensor<" + c + "xf32>) {\n  %3 = matmul(%0, %1, %2) : tensor<" + c +
             "xf32>\n  return(%3)\n}\n"))
      .functions.at(0);
}

TensorData f32(std::vector<int64_t> shape, std::vector<float> v) {
  return TensorData::from(Type::tensor(std::move(shape), ElemType::F32), std::move(v));
}

TEST(Evaluate, IdentityTimesIdentity) {
  Function fn = matmul_fn(2, 2, 2);
  std::vector<TensorData> in = {f32({2, 2}, {1, 0, 0, 1}), f32({2, 2}, {1, 0, 0, 1}),
                                f32({2, 2}, {0, 0, 0, 0})};
  EXPECT_EQ(evaluate(fn, in)[0].values, (std::vector<float>{1, 0, 0, 1}));
}

TEST(Evaluate, OnesProduct) {
  Function fn = matmul_fn(2, 3, 2);
  std::vector<TensorData> in = {f32({2, 3}, std::vector<float>(6, 1)),
                                f32({3, 2}, std::vector<float>(6, 1)), f32({2, 2}, {0, 0, 0, 0})};
  EXPECT_EQ(evaluate(fn, in)[0].values, std::vector<float>(4, 3.0f));
}

TEST(Evaluate, MatmulMatchesTripleLoop) {
  Function fn = matmul_fn(5, 7, 3);
  auto in = random_inputs(fn, 42);
  auto out = evaluate(fn, in)[0].values;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 3; ++j) {
      float acc = in[2].values[static_cast<size_t>(i * 3 + j)];
      for (int p = 0; p < 7; ++p) {
        acc += in[0].values[static_cast<size_t>(i * 7 + p)] * in[1].values[static_cast<size_t>(p * 3 + j)];
      }
      EXPECT_EQ(out[static_cast<size_t>(i * 3 + j)], acc);
    }
  }
}

TEST(Evaluate, BiasAddThenRelu) {
  Function fn = parse_module(module_text(
                                 "func @f(%0: tensor<1x2xf32>, %1: tensor<2xf32>) -> (tensor<1x2xf32>) {\n"
                                 "  %2 = bias_add(%0, %1) : tensor<1x2xf32>\n"
                                 "  %3 = relu(%2) : tensor<1x2xf32>\n  return(%3)\n}\n"))
                    .functions.at(0);
  auto out = evaluate(fn, std::vector<TensorData>{f32({1, 2}, {-1, 2}), f32({2}, {1, 1})});
  EXPECT_EQ(out[0].values, (std::vector<float>{0, 3}));
}

TEST(Evaluate, RejectsArityAndTypeMismatch) {
  Function fn = matmul_fn(2, 2, 2);
  EXPECT_THROW(evaluate(fn, std::vector<TensorData>{f32({2, 2}, {1, 0, 0, 1})}), CompileError);
  std::vector<TensorData> bad = {f32({2, 2}, {1, 0, 0, 1}), f32({2, 2}, {1, 0, 0, 1}),
                                 f32({4}, {0, 0, 0, 0})};
  EXPECT_THROW(evaluate(fn, bad), CompileError);
}

TEST(Evaluate, Deterministic) {
  Function fn = test::mlp(2, 16, 24, ElemType::BF16, 8);
  auto in = random_inputs(fn, 5);
  EXPECT_TRUE(test::bitwise_equal(evaluate(fn, in), evaluate(fn, in)));
}

TEST(Evaluate, Bf16StoresAreRounded) {
  Function fn = test::mlp(1, 4, 8, ElemType::BF16, 8);
  auto out = evaluate(fn, random_inputs(fn, 1))[0];
  for (float v : out.values) EXPECT_EQ(v, round_to(ElemType::BF16, v));
}

TEST(RandomInputs, SeededAndInRange) {
  Function fn = matmul_fn(8, 8, 8);
  auto a = random_inputs(fn, 9), b = random_inputs(fn, 9), c = random_inputs(fn, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_NE(a[0].values, a[1].values);
  for (const TensorData& t : a) {
    for (float v : t.values) {
      EXPECT_GE(v, -1.0f);
      EXPECT_LT(v, 1.0f);
    }
  }
}

TEST(PackUnpack, RoundTripIsBitwiseForRandomSpecs) {
  std::mt19937_64 rng(3);
  for (int iter = 0; iter < 50; ++iter) {
    int rank = 1 + static_cast<int>(rng() % 3);
    std::vector<int64_t> shape;
    PackSpec spec;
    for (int d = 0; d < rank; ++d) {
      int64_t tile = 1 + static_cast<int64_t>(rng() % 3);
      shape.push_back(tile * (1 + static_cast<int64_t>(rng() % 3)));
      if (rng() % 2) {
        spec.inner_dims_pos.push_back(d);
        spec.inner_tiles.push_back(tile);
      }
    }
    spec.outer_perm.resize(static_cast<size_t>(rank));
    std::iota(spec.outer_perm.begin(), spec.outer_perm.end(), 0);
    std::shuffle(spec.outer_perm.begin(), spec.outer_perm.end(), rng);
    ElemType dt = rng() % 2 ? ElemType::BF16 : ElemType::F32;

    Function fn;
    fn.name = "rt";
    OpBuilder b(fn, fn.body);
    ValueId x = fn.new_value(Type::tensor(shape, dt));
    fn.body.args.push_back(x);
    AttrDict attrs;
    spec.to_attrs(attrs);
    ValueId p = b.create(OpKind::Pack, {x}, attrs, Type::tensor(spec.packed_shape(shape), dt));
    ValueId u = b.create(OpKind::Unpack, {p}, attrs, Type::tensor(shape, dt));
    fn.result_types = {Type::tensor(shape, dt), fn.type(p)};
    b.create_void(OpKind::Return, {u, p});
    ASSERT_FALSE(verify(fn).has_value()) << verify(fn)->format();

    auto in = random_inputs(fn, static_cast<uint64_t>(iter));
    auto out = evaluate(fn, in);
    EXPECT_TRUE(test::bitwise_equal({out[0]}, in));
    // The interpreter's pack agrees with the runtime relayout helper.
    EXPECT_EQ(out[1].values, pack_values(spec, shape, in[0].values));
  }
}

TEST(Equivalence, IdenticalFunctionsHaveZeroError) {
  Function fn = test::mlp(2, 16, 16);
  EquivalenceReport r = evaluate_packed_equivalence(fn, fn);
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_TRUE(r.bitwise_equal);
  EXPECT_EQ(r.seed, EquivalenceOptions{}.seed);
}

TEST(Equivalence, PackPipelineF32) {
  Function fn = test::mlp(3, 64, 64);
  Function packed = fold_constant_packs(fold_pack_unpack(propagate_packs(pack_matmuls(fn, {}))));
  EXPECT_GT(count_ops(packed, OpKind::PackedMatmul), 0);
  EXPECT_LE(evaluate_packed_equivalence(fn, packed).max_rel_error, 1e-5);
}

TEST(Equivalence, PackPipelineBf16AgainstF32Oracle) {
  Function fn = test::mlp(3, 64, 64, ElemType::BF16);
  Function packed = fold_constant_packs(fold_pack_unpack(propagate_packs(pack_matmuls(fn, {}))));
  EquivalenceOptions o;
  o.f32_oracle = true;
  EquivalenceReport r = evaluate_packed_equivalence(fn, packed, o);
  EXPECT_LE(r.max_rel_error, 2e-2);
  EXPECT_GT(r.max_rel_error, 0.0);  // the oracle really is F32
}

TEST(MaxRelativeError, NormwiseAndLocated) {
  std::vector<float> ref = {1, -4, 2}, got = {1, -4, 2.5};
  ErrorLocation e = max_relative_error(got, ref);
  EXPECT_DOUBLE_EQ(e.max_rel_error, 0.5 / 4.0);
  EXPECT_EQ(e.worst_index, 2u);
  EXPECT_EQ(e.got, 2.5f);
  EXPECT_EQ(e.expected, 2.0f);
}

}  // namespace
}  // namespace tilec
