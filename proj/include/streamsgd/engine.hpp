#pragma once

// Synchronous multi-device training on a simulated clock.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamsgd/comm.hpp"
#include "streamsgd/datagen.hpp"
#include "streamsgd/nn.hpp"
#include "streamsgd/streams.hpp"

namespace streamsgd {

enum class TrainingMode { kDdlFixedBatch, kScadles };

std::string to_string(TrainingMode mode);

struct CompressionConfig {
  bool enabled = false;
  double cr = 0.1;
  double delta = 0.3;
  double ewma_factor = 0.9;
  GateMode gate_mode = GateMode::kSmoothed;

  friend bool operator==(const CompressionConfig&, const CompressionConfig&) = default;
};

struct InjectionSettings {
  bool enabled = false;
  double alpha = 0.5;
  double beta = 0.5;

  friend bool operator==(const InjectionSettings&, const InjectionSettings&) = default;
};

struct ModelSpec {
  std::vector<int> hidden{32};

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct OptimizerSpec {
  double base_lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<Milestone> schedule;
  std::int64_t base_global_batch = 0;  // 0: n_devices * 64

  friend bool operator==(const OptimizerSpec&, const OptimizerSpec&) = default;
};

/// Per-device compute time c0 + c1 * batch, plus a link for gradient exchange.
struct CostModel {
  double c0 = 1.0;
  double c1 = 0.002;
  LinkModel link{0.01, 1.0e8};

  friend bool operator==(const CostModel&, const CostModel&) = default;
};

struct SimConfig {
  int n_devices = 4;
  RateDistribution rate_dist{RateKind::kUniform, 38.0, 24.0};
  std::vector<std::int64_t> rate_values;  // explicit per-device rates; overrides rate_dist
  bool rate_jitter = false;               // resample rates at every epoch boundary
  TrainingMode mode = TrainingMode::kScadles;
  std::int64_t fixed_batch = 64;
  std::int64_t b_min = 8;
  std::int64_t b_max = 1024;
  RetentionPolicy retention = RetentionPolicy::kPersistence;
  CompressionConfig compression;
  InjectionSettings injection;
  PartitionMode partition_mode = PartitionMode::kIid;
  int labels_per_device = 1;
  DatasetSpec dataset;
  double augment_noise = 0.05;  // feature noise std, redrawn per arrival
  ModelSpec model;
  OptimizerSpec optimizer;
  CostModel cost;
  int max_epochs = 10;
  std::int64_t max_iterations = 0;  // 0: unlimited
  std::optional<double> target_accuracy;
  std::int64_t eval_every = 0;  // 0: evaluate at epoch ends
  double sample_bytes = kDefaultSampleBytes;
  std::uint64_t seed = 1;

  friend bool operator==(const SimConfig&, const SimConfig&) = default;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IterationMetrics {
  std::int64_t iteration = 0;
  double sim_time_s = 0.0;
  int epoch = 0;
  std::int64_t global_batch = 0;
  double lr_used = 0.0;
  double train_loss = 0.0;
  std::optional<double> test_accuracy;
  std::vector<std::size_t> buffer_occupancy;
  std::uint64_t buffer_samples = 0;
  double buffer_bytes = 0.0;
  std::uint64_t floats_sent_cum = 0;
  std::uint64_t bytes_sent_cum = 0;
  double cnc_cum = 0.0;
  std::uint64_t injection_bytes = 0;
  std::uint64_t injection_bytes_cum = 0;
  double wait_time_s = 0.0;
  double compute_time_s = 0.0;
  double comm_time_s = 0.0;
};

struct RunSummary {
  std::int64_t iterations = 0;
  int epochs = 0;
  double final_accuracy = 0.0;
  double sim_time_s = 0.0;
  std::optional<double> time_to_target_s;
  std::uint64_t floats_sent = 0;
  std::uint64_t bytes_sent = 0;
  double buffer_bytes = 0.0;
  std::uint64_t buffer_samples = 0;
  double cnc = 0.0;
  std::uint64_t injection_bytes = 0;
};

/// b_i: fixed_b in DDL mode, clamp(S_i, b_min, b_max) otherwise.
std::int64_t compute_batch_size(TrainingMode mode, std::int64_t rate, std::int64_t b_min, std::int64_t b_max,
                                std::int64_t fixed_b);

/// One simulated cluster. Each call to step() is one synchronous global iteration.
class Simulator {
 public:
  explicit Simulator(SimConfig config);

  IterationMetrics step();
  bool finished() const { return finished_; }
  RunSummary summary() const;

  const SimConfig& config() const { return cfg_; }
  const Dataset& dataset() const { return data_; }
  const std::vector<Model<double>>& replicas() const { return replicas_; }
  const std::vector<StreamBuffer>& buffers() const { return buffers_; }
  const std::vector<std::int64_t>& rates() const { return rates_; }
  const std::vector<CompressionState>& gates() const { return gates_; }
  std::int64_t iterations_per_epoch() const { return iters_per_epoch_; }
  double now() const { return now_; }

  /// True when every replica holds bit-identical parameters.
  bool replicas_consistent() const;

 private:
  struct SampleRef {
    std::uint32_t device;
    SampleId arrival;
  };

  std::vector<std::int64_t> batch_sizes() const;
  void recompute_epoch_length();
  void assemble(const std::vector<SampleRef>& refs, Matrix<double>& X, std::vector<int>& y) const;

  SimConfig cfg_;
  Dataset data_;
  std::vector<std::vector<std::size_t>> pools_;
  std::vector<std::int64_t> rates_;
  std::vector<StreamBuffer> buffers_;
  std::vector<Model<double>> replicas_;
  std::vector<OptimizerState<double>> optimizers_;
  std::vector<CompressionState> gates_;
  std::mt19937_64 injection_rng_;
  std::uint64_t augment_seed_ = 0;
  std::uint64_t jitter_seed_ = 0;

  double now_ = 0.0;
  std::int64_t iteration_ = 0;
  int epoch_ = 0;
  std::int64_t iters_per_epoch_ = 1;
  std::int64_t iter_in_epoch_ = 0;
  VolumeStats volume_;
  std::uint64_t injection_bytes_cum_ = 0;
  std::optional<double> last_accuracy_;
  std::optional<double> time_to_target_;
  bool finished_ = false;
  double last_buffer_bytes_ = 0.0;
  std::uint64_t last_buffer_samples_ = 0;
};

using MetricsSink = std::function<void(const IterationMetrics&)>;

/// Runs to max_epochs / max_iterations / target_accuracy, streaming rows to `sink`.
/// Throws DivergenceError on a non-finite loss.
RunSummary run_experiment(const SimConfig& config, const MetricsSink& sink = {});

}  // namespace streamsgd
