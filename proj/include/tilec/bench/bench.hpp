// SPDX-License-Identifier: Apache-2.0
//
// MLP model generator, timing harness and oracle check used by the CLI.
#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "tilec/interp/interpreter.hpp"
#include "tilec/pipeline/pipeline.hpp"
#include "tilec/xsmm/executor.hpp"

namespace tilec {

struct ModelSpec {
  int layers = 3;
  int64_t batch = 256;
  // One entry per layer, or a single value used for every layer.
  std::vector<int64_t> hidden = {1024};
  // Feature size of the input; 0 means hidden[0].
  int64_t input_dim = 0;
  ElemType dtype = ElemType::F32;
  bool pre_packed = false;
  uint64_t seed = 1;

  void validate() const;
  int64_t out_dim(int layer) const;
  int64_t in_dim(int layer) const;
  std::string name() const;
};

/// Per layer: matmul into a zero splat, bias_add, relu. Weights and biases
/// are seeded constants in [-0.5, 0.5). With `pre_packed`, the argument,
/// constants and result are emitted directly in the blocked layouts of
/// `packing` and the layers use packed_matmul.
Module generate_model(const ModelSpec& spec, const PackingOptions& packing = {});

/// Seeded input in [-1, 1), in the layout the generated model expects.
std::vector<TensorData> model_inputs(const ModelSpec& spec, const PackingOptions& packing = {});

/// Output values in plain row-major [batch, hidden.back()] order.
std::vector<float> plain_output(const ModelSpec& spec, const PackingOptions& packing,
                                const TensorData& output);

struct BenchResult {
  std::string name;
  int threads = 1;
  ElemType dtype = ElemType::F32;
  double mean_ms = 0;
  double stddev_ms = 0;
  double gflops = 0;
  double flops = 0;
  int iterations = 0;
  xsmm::ExecStats stats;
  int64_t kernels_compiled = 0;
  std::vector<TensorData> outputs;  // from the last timed run
};

BenchResult benchmark(const ModelSpec& spec, const PipelineConfig& config, int iterations = 10,
                      int warmup = 3);

struct VerifyReport {
  bool pass = false;
  double max_rel_error = 0;
  double tolerance = 0;
  size_t worst_output = 0;
  size_t worst_index = 0;
  float got = 0;
  float expected = 0;
  std::string message;
};

/// F32: 1e-5 against the interpreter. BF16: 2e-2 against the interpreter
/// run on the F32-widened model.
double tolerance_for(ElemType dtype);

VerifyReport verify(const ModelSpec& spec, const PipelineConfig& config);

std::string csv_header();
std::string csv_row(const BenchResult& result);

}  // namespace tilec
