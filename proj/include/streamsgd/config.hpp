#pragma once

// Experiment files (JSON mirroring SimConfig), metrics CSV / summary JSON
// output, parameter sweeps and the command implementations behind the CLI.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "streamsgd/engine.hpp"

namespace streamsgd {

/// Strict parse: unknown keys and wrong types raise ConfigError naming the dotted key.
SimConfig parse_config(const nlohmann::json& doc);
SimConfig load_config(const std::string& path);
nlohmann::json render_config(const SimConfig& config);

/// Metrics CSV header for a run with `n_devices` devices.
std::vector<std::string> metrics_columns(std::size_t n_devices);

/// Writes one header line on construction and one line per row.
class MetricsCsvWriter {
 public:
  MetricsCsvWriter(std::ostream& out, std::size_t n_devices);
  void write(const IterationMetrics& row);

 private:
  std::ostream& out_;
  std::size_t n_devices_;
};

/// Shortest round-trip decimal with '.' separator regardless of locale.
std::string format_number(double v);

nlohmann::json summary_to_json(const RunSummary& s);

/// One grid point: dotted config keys and the values assigned to them.
struct SweepPoint {
  std::vector<std::pair<std::string, nlohmann::json>> assignments;
};

/// Sweep spec: {"grid": {"key": [v...], ...}} for a Cartesian product,
/// {"points": [{"key": v, ...}, ...]} for an explicit list, or both (product of the two).
std::vector<SweepPoint> expand_sweep(const nlohmann::json& spec);

/// Applies a grid point to a config document and re-parses it strictly.
SimConfig apply_sweep_point(const nlohmann::json& base, const SweepPoint& point);

/// Exit codes shared by the command entry points.
enum ExitCode : int { kExitOk = 0, kExitConfigError = 1, kExitDiverged = 2 };

struct RunOptions {
  std::optional<std::uint64_t> seed_override;
  bool quiet = false;
  std::string dump_dataset;  // optional path for the generated train set table
};

int cmd_run(const std::string& config_path, const std::string& out_dir, const RunOptions& opts, std::ostream& log);
int cmd_sweep(const std::string& config_path, const std::string& sweep_path, const std::string& out_dir,
              const RunOptions& opts, std::ostream& log);

struct BufferModelArgs {
  double t = 1.2;
  double S = 100.0;
  std::int64_t b = 64;
  std::int64_t T_max = 1000;
  std::int64_t step = 100;
  double sample_bytes = kDefaultSampleBytes;
};

/// Table of T, exact and approximate queue sizes, GiB (from the approximate form)
/// and log10 of the approximate size, printed to `table` and, when `csv_path`
/// is non-empty, written there as CSV.
int cmd_buffer_model(const BufferModelArgs& args, std::ostream& table, const std::string& csv_path,
                     std::ostream& log);

}  // namespace streamsgd
