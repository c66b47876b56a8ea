// streamsgd: run, sweep and analyze simulated streaming distributed SGD.

#include <CLI11.hpp>

#include <iostream>

#include "streamsgd/config.hpp"

int main(int argc, char** argv) {
  using namespace streamsgd;
  CLI::App app{"Simulator for synchronous distributed SGD over heterogeneous data streams"};
  app.require_subcommand(1);

  std::string config_path, out_dir, sweep_path, dump_dataset;
  std::uint64_t seed = 0;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config_path, "Experiment JSON file")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  auto* run_seed = run->add_option("--seed", seed, "Override the master seed");
  run->add_flag("--quiet", quiet, "Suppress progress output");
  run->add_option("--dump-dataset", dump_dataset, "Write the generated training set as a CSV table");

  auto* sweep = app.add_subcommand("sweep", "Run a parameter grid");
  sweep->add_option("--config", config_path, "Base experiment JSON file")->required();
  sweep->add_option("--grid", sweep_path, "Sweep spec JSON ({\"grid\": {...}} and/or {\"points\": [...]})")
      ->required();
  sweep->add_option("--out", out_dir, "Output directory")->required();
  auto* sweep_seed = sweep->add_option("--seed", seed, "Override the master seed of every run");
  sweep->add_flag("--quiet", quiet, "Suppress progress output");

  auto* analyze = app.add_subcommand("analyze", "Analytic tools");
  analyze->require_subcommand(1);
  auto* buffer = analyze->add_subcommand("buffer-model", "Buffer growth without retention");
  BufferModelArgs bm;
  std::string csv_out;
  buffer->add_option("--t", bm.t, "Iteration time in seconds")->required();
  buffer->add_option("--S", bm.S, "Streaming rate in samples/sec")->required();
  buffer->add_option("--b", bm.b, "Batch size")->capture_default_str();
  buffer->add_option("--T-max", bm.T_max, "Last timestep")->capture_default_str();
  buffer->add_option("--step", bm.step, "Timestep increment")->capture_default_str();
  buffer->add_option("--sample-bytes", bm.sample_bytes, "Bytes per sample")->capture_default_str();
  buffer->add_option("--out", csv_out, "Also write the table to this CSV file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfigError;
  }

  RunOptions opts;
  opts.quiet = quiet;
  opts.dump_dataset = dump_dataset;
  try {
    if (*run) {
      if (*run_seed) opts.seed_override = seed;
      return cmd_run(config_path, out_dir, opts, std::cerr);
    }
    if (*sweep) {
      if (*sweep_seed) opts.seed_override = seed;
      return cmd_sweep(config_path, sweep_path, out_dir, opts, std::cerr);
    }
    if (*buffer) return cmd_buffer_model(bm, std::cout, csv_out, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  return kExitConfigError;
}
