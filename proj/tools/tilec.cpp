// SPDX-License-Identifier: Apache-2.0
// tilec: generate, compile, run and benchmark MLP models.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "tilec/bench/bench.hpp"
#include "tilec/ir/text.hpp"

using namespace tilec;

namespace {

struct Options {
  ModelSpec spec;
  PipelineConfig config;
  std::string dtype = "f32";
  std::vector<int64_t> tiles;
  std::vector<int64_t> grid;
  std::string vnni = "auto";
  bool no_pack = false;
  bool no_fuse = false;
  bool no_hoist = false;
  int iterations = 10;
  int warmup = 3;
  std::string print_ir_after;
  bool stats = false;
  std::string csv;
};

void add_model_flags(CLI::App* app, Options& o) {
  app->add_option("--layers", o.spec.layers, "Number of layers")->check(CLI::PositiveNumber);
  app->add_option("--batch", o.spec.batch, "Batch size")->check(CLI::PositiveNumber);
  app->add_option("--hidden", o.spec.hidden, "Hidden sizes, one per layer or one for all")
      ->delimiter(',');
  app->add_option("--input-dim", o.spec.input_dim, "Input feature size (default: first hidden)");
  app->add_option("--dtype", o.dtype, "Element type")->check(CLI::IsMember({"f32", "bf16"}));
  app->add_flag("--pre-packed", o.spec.pre_packed, "Emit the model in blocked layouts");
  app->add_option("--tile-size", o.tiles, "Tile sizes M,N,K")->delimiter(',')->expected(3);
  app->add_option("--seed", o.spec.seed, "Seed for weights and inputs");
}

void add_pipeline_flags(CLI::App* app, Options& o) {
  app->add_flag("--no-pack", o.no_pack, "Skip packing (naive baseline)");
  app->add_flag("--no-fuse", o.no_fuse, "Skip elementwise fusion");
  app->add_flag("--no-hoist", o.no_hoist, "Keep tile configs around every call");
  app->add_option("--vnni", o.vnni, "VNNI layout for BF16 weights")
      ->check(CLI::IsMember({"on", "off", "auto"}));
  app->add_option("--grid", o.grid, "Thread grid GM,GN")->delimiter(',')->expected(2);
  app->add_option("--threads", o.config.threads, "Execution threads")->check(CLI::PositiveNumber);
  app->add_option("--print-ir-after", o.print_ir_after,
                  "Dump IR after a stage (pass name, pack, tile-fuse, bufferize, xsmm or all)");
  app->add_flag("--stats", o.stats, "Print execution counters");
}

void finalize(Options& o) {
  o.spec.dtype = *parse_elem_type(o.dtype);
  if (o.tiles.size() == 3) {
    o.config.packing.tile_m = o.tiles[0];
    o.config.packing.tile_n = o.tiles[1];
    o.config.packing.tile_k = o.tiles[2];
  }
  if (o.vnni != "auto") o.config.packing.vnni = o.vnni == "on";
  if (o.grid.size() == 2) {
    o.config.gm = o.grid[0];
    o.config.gn = o.grid[1];
  }
  o.config.pack = !o.no_pack;
  o.config.fuse = !o.no_fuse;
  o.config.hoist = !o.no_hoist;
}

std::string resolve_stage(const std::string& name) {
  if (name == "pack") return "fold-constant-packs";
  if (name == "tile-fuse") return "tile-and-fuse";
  if (name == "xsmm") return "fuse-xsmm-calls";
  return name;
}

void print_snapshots(const PipelineResult& r, const std::string& which, std::ostream& os) {
  if (which.empty()) return;
  PrintOptions po;
  po.elide_constants_above = 64;
  if (which == "all") {
    for (const auto& [name, m] : r.snapshots) os << "// after " << name << "\n" << print(m, po);
    return;
  }
  std::string stage = resolve_stage(which);
  // Stages skipped by a toggle fall back to the last snapshot before them.
  const auto& names = pipeline_stage_names();
  auto it = std::find(names.begin(), names.end(), stage);
  if (it == names.end()) throw CLI::ValidationError("--print-ir-after", "unknown stage '" + which + "'");
  for (; ; --it) {
    if (const Module* m = r.snapshot(*it)) {
      os << "// after " << *it << "\n" << print(*m, po);
      return;
    }
    if (it == names.begin()) break;
  }
  os << "// no stage ran before " << stage << "\n";
}

int cmd_gen(const Options& o) {
  Module m = generate_model(o.spec, o.config.packing);
  if (o.print_ir_after.empty()) {
    std::cout << print(m);
    return 0;
  }
  print_snapshots(run_pipeline(m, o.config), o.print_ir_after, std::cout);
  return 0;
}

int cmd_run(const Options& o) {
  if (!o.print_ir_after.empty()) {
    print_snapshots(run_pipeline(generate_model(o.spec, o.config.packing), o.config),
                    o.print_ir_after, std::cout);
  }
  VerifyReport rep = verify(o.spec, o.config);
  std::cout << o.spec.name() << ": " << (rep.pass ? "PASS" : "FAIL") << " " << rep.message << "\n";
  if (o.stats) {
    BenchResult r = benchmark(o.spec, o.config, 1, 0);
    std::cout << r.stats.summary() << " kernels_compiled=" << r.kernels_compiled << "\n";
  }
  return rep.pass ? 0 : 1;
}

int cmd_bench(const Options& o) {
  if (!o.print_ir_after.empty()) {
    print_snapshots(run_pipeline(generate_model(o.spec, o.config.packing), o.config),
                    o.print_ir_after, std::cout);
  }
  BenchResult r = benchmark(o.spec, o.config, o.iterations, o.warmup);
  std::cout << csv_header() << "\n" << csv_row(r) << "\n";
  if (o.stats) std::cout << r.stats.summary() << " kernels_compiled=" << r.kernels_compiled << "\n";
  if (!o.csv.empty()) {
    bool fresh = !std::filesystem::exists(o.csv) || std::filesystem::file_size(o.csv) == 0;
    std::ofstream out(o.csv, std::ios::app);
    if (!out) throw std::runtime_error("cannot open " + o.csv);
    if (fresh) out << csv_header() << "\n";
    out << csv_row(r) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tilec: MLP tensor compiler driver"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen", "Print the textual IR of a generated model");
  add_model_flags(gen, o);
  add_pipeline_flags(gen, o);

  auto* run = app.add_subcommand("run", "Compile, execute and check against the interpreter");
  add_model_flags(run, o);
  add_pipeline_flags(run, o);

  auto* bench = app.add_subcommand("bench", "Time the compiled model");
  add_model_flags(bench, o);
  add_pipeline_flags(bench, o);
  bench->add_option("--iterations", o.iterations, "Timed iterations")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", o.warmup, "Warmup iterations")->check(CLI::NonNegativeNumber);
  bench->add_option("--csv", o.csv, "Append the result row to this CSV file");

  CLI11_PARSE(app, argc, argv);
  try {
    finalize(o);
    if (gen->parsed()) return cmd_gen(o);
    if (run->parsed()) return cmd_run(o);
    return cmd_bench(o);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
