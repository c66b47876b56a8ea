#include "streamsgd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "streamsgd/seeds.hpp"

namespace streamsgd {

std::string to_string(TrainingMode mode) {
  return mode == TrainingMode::kScadles ? "scadles" : "ddl_fixed_batch";
}

void SimConfig::validate() const {
  auto require = [](bool ok, const char* key, const char* what) {
    if (!ok) throw ConfigError(key, what);
  };
  require(n_devices >= 1, "n_devices", "must be >= 1");
  require(rate_dist.mean > 0.0, "rates.mean", "must be > 0");
  require(rate_dist.std >= 0.0, "rates.std", "must be >= 0");
  if (!rate_values.empty()) {
    require(rate_values.size() == static_cast<std::size_t>(n_devices), "rates.values", "needs one rate per device");
    for (auto r : rate_values) require(r >= 1, "rates.values", "rates must be >= 1");
    require(!rate_jitter, "rates.jitter", "cannot resample explicit rates");
  }
  require(fixed_batch >= 1, "batch.fixed", "must be >= 1");
  require(b_min >= 1, "batch.min", "must be >= 1");
  require(b_min <= b_max, "batch.max", "must be >= batch.min");
  require(compression.cr > 0.0 && compression.cr <= 1.0, "compression.cr", "must be in (0, 1]");
  require(compression.delta >= 0.0, "compression.delta", "must be >= 0");
  require(compression.ewma_factor > 0.0 && compression.ewma_factor < 1.0, "compression.ewma_factor",
          "must be in (0, 1)");
  require(injection.alpha >= 0.0 && injection.alpha <= 1.0, "injection.alpha", "must be in [0, 1]");
  require(injection.beta >= 0.0 && injection.beta <= 1.0, "injection.beta", "must be in [0, 1]");
  require(!injection.enabled || n_devices >= 2, "injection.enabled", "needs n_devices >= 2");
  require(dataset.n_classes >= 2, "dataset.n_classes", "must be >= 2");
  require(dataset.feature_dim >= 1, "dataset.feature_dim", "must be >= 1");
  require(dataset.samples_per_class >= 2, "dataset.samples_per_class", "must be >= 2");
  require(dataset.cluster_spread > 0.0, "dataset.cluster_spread", "must be > 0");
  require(augment_noise >= 0.0, "dataset.augment_noise", "must be >= 0");
  if (partition_mode == PartitionMode::kNonIid) {
    require(labels_per_device >= 1, "partition.labels_per_device", "must be >= 1");
    require(dataset.n_classes % labels_per_device == 0, "partition.labels_per_device",
            "must divide dataset.n_classes");
    require(static_cast<std::int64_t>(n_devices) * labels_per_device >= dataset.n_classes,
            "partition.labels_per_device", "n_devices * labels_per_device must be >= n_classes");
  }
  require(model.hidden.size() <= 2, "model.hidden", "at most 2 hidden layers");
  for (int h : model.hidden) require(h >= 1, "model.hidden", "widths must be >= 1");
  require(optimizer.base_lr > 0.0, "optimizer.lr", "must be > 0");
  require(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0, "optimizer.momentum", "must be in [0, 1)");
  require(optimizer.weight_decay >= 0.0, "optimizer.weight_decay", "must be >= 0");
  require(optimizer.base_global_batch >= 0, "optimizer.base_global_batch", "must be >= 0");
  for (const auto& m : optimizer.schedule) {
    require(m.epoch >= 0, "optimizer.schedule", "milestone epochs must be >= 0");
    require(m.factor > 0.0, "optimizer.schedule", "decay factors must be > 0");
  }
  require(cost.c0 > 0.0, "cost.c0", "must be > 0");
  require(cost.c1 >= 0.0, "cost.c1", "must be >= 0");
  require(cost.link.latency >= 0.0, "cost.latency", "must be >= 0");
  require(cost.link.bandwidth > 0.0, "cost.bandwidth", "must be > 0");
  require(max_epochs >= 0, "stop.max_epochs", "must be >= 0");
  require(max_iterations >= 0, "stop.max_iterations", "must be >= 0");
  require(max_epochs > 0 || max_iterations > 0, "stop.max_epochs", "need max_epochs or max_iterations > 0");
  require(!target_accuracy || (*target_accuracy > 0.0 && *target_accuracy <= 1.0), "stop.target_accuracy",
          "must be in (0, 1]");
  require(eval_every >= 0, "stop.eval_every", "must be >= 0");
  require(sample_bytes > 0.0, "sample_bytes", "must be > 0");
}

std::int64_t compute_batch_size(TrainingMode mode, std::int64_t rate, std::int64_t b_min, std::int64_t b_max,
                                std::int64_t fixed_b) {
  if (mode == TrainingMode::kDdlFixedBatch) return fixed_b;
  return std::clamp(rate, b_min, b_max);
}

Simulator::Simulator(SimConfig config) : cfg_(std::move(config)) {
  cfg_.validate();
  const auto n = static_cast<std::size_t>(cfg_.n_devices);

  DatasetSpec ds = cfg_.dataset;
  ds.seed = derive_seed(cfg_.seed, "dataset");
  data_ = generate_dataset(ds);

  PartitionPlan plan{cfg_.partition_mode, cfg_.n_devices, cfg_.labels_per_device};
  pools_ = partition(data_.train, data_.n_classes, plan, derive_seed(cfg_.seed, "partition"));
  for (std::size_t d = 0; d < n; ++d)
    if (pools_[d].empty())
      throw ConfigError("n_devices", "device " + std::to_string(d) + " received no training samples");

  rates_ = cfg_.rate_values.empty() ? sample_rates(cfg_.rate_dist, n, derive_seed(cfg_.seed, "rates"))
                                    : cfg_.rate_values;
  for (std::size_t d = 0; d < n; ++d) buffers_.emplace_back(rates_[d], cfg_.retention);

  Architecture arch{cfg_.dataset.feature_dim, cfg_.model.hidden, cfg_.dataset.n_classes};
  const auto init = Model<double>::xavier(arch, derive_seed(cfg_.seed, "init"));
  replicas_.assign(n, init);
  optimizers_.assign(n, OptimizerState<double>(arch.parameter_count(), cfg_.optimizer.momentum,
                                               cfg_.optimizer.weight_decay, cfg_.optimizer.base_lr,
                                               cfg_.optimizer.schedule));
  CompressionState gate;
  gate.cr = cfg_.compression.cr;
  gate.delta = cfg_.compression.delta;
  gate.ewma_factor = cfg_.compression.ewma_factor;
  gate.mode = cfg_.compression.gate_mode;
  gates_.assign(n, gate);

  injection_rng_.seed(derive_seed(cfg_.seed, "injection"));
  augment_seed_ = derive_seed(cfg_.seed, "augment");
  jitter_seed_ = derive_seed(cfg_.seed, "jitter");
  recompute_epoch_length();
}

std::vector<std::int64_t> Simulator::batch_sizes() const {
  std::vector<std::int64_t> b;
  b.reserve(rates_.size());
  for (auto s : rates_) b.push_back(compute_batch_size(cfg_.mode, s, cfg_.b_min, cfg_.b_max, cfg_.fixed_batch));
  return b;
}

void Simulator::recompute_epoch_length() {
  std::int64_t global = 0;
  for (auto b : batch_sizes()) global += b;
  const auto n_train = static_cast<std::int64_t>(data_.train.size());
  iters_per_epoch_ = std::max<std::int64_t>(1, (n_train + global - 1) / global);
}

void Simulator::assemble(const std::vector<SampleRef>& refs, Matrix<double>& X, std::vector<int>& y) const {
  const auto D = static_cast<Eigen::Index>(cfg_.dataset.feature_dim);
  X.resize(static_cast<Eigen::Index>(refs.size()), D);
  y.resize(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& pool = pools_[refs[i].device];
    const std::size_t row = pool[refs[i].arrival % pool.size()];
    const auto r = static_cast<Eigen::Index>(i);
    X.row(r) = data_.train.features.row(static_cast<Eigen::Index>(row));
    y[i] = data_.train.labels[row];
    if (cfg_.augment_noise > 0.0) {
      SplitMix64 gen(derive_seed(derive_seed(augment_seed_, refs[i].device), refs[i].arrival));
      std::normal_distribution<double> noise(0.0, 1.0);
      for (Eigen::Index d = 0; d < D; ++d) X(r, d) += cfg_.augment_noise * noise(gen);
    }
  }
}

IterationMetrics Simulator::step() {
  if (finished_) throw std::logic_error("Simulator::step called after the run finished");
  const std::size_t n = buffers_.size();
  const auto dim = static_cast<std::size_t>(replicas_.front().params().size());

  // Batch sizes and the synchronous batch-gathering barrier.
  const auto b = batch_sizes();
  double global_wait = 0.0;
  for (std::size_t d = 0; d < n; ++d)
    global_wait = std::max(global_wait, streaming_wait(buffers_[d].size(), static_cast<std::size_t>(b[d]), rates_[d]));
  if (global_wait > 0.0)
    for (auto& buf : buffers_) buf.enqueue_arrivals(global_wait);

  std::vector<std::vector<SampleRef>> batches(n);
  for (std::size_t d = 0; d < n; ++d) {
    auto drawn = buffers_[d].draw_batch(static_cast<std::size_t>(b[d]));
    if (auto* blocked = std::get_if<WouldBlock>(&drawn))
      throw std::logic_error("device " + std::to_string(d) + " short by " + std::to_string(blocked->shortfall) +
                             " samples after the wait barrier");
    for (SampleId id : std::get<std::vector<SampleId>>(drawn))
      batches[d].push_back({static_cast<std::uint32_t>(d), id});
  }

  std::uint64_t inj_bytes = 0;
  if (cfg_.injection.enabled) {
    InjectionConfig ic{cfg_.injection.alpha, cfg_.injection.beta, static_cast<std::int64_t>(cfg_.sample_bytes)};
    std::vector<std::size_t> sizes;
    for (const auto& batch : batches) sizes.push_back(batch.size());
    const auto plan = injection_plan(n, ic, sizes, injection_rng_);
    inj_bytes = inject(batches, std::span<const InjectionShare>(plan), ic.sample_bytes, injection_rng_);
  }
  injection_bytes_cum_ += inj_bytes;

  // Device-local forward/backward and gating.
  std::vector<GradientVector<double>> payloads;
  payloads.reserve(n);
  std::vector<double> losses(n);
  double max_compute = 0.0;
  std::uint64_t max_payload = 0;
  Matrix<double> X;
  std::vector<int> y;
  for (std::size_t d = 0; d < n; ++d) {
    assemble(batches[d], X, y);
    auto [loss, grad] = loss_and_gradient<double>(replicas_[d], X, y);
    if (!std::isfinite(loss))
      throw DivergenceError("non-finite loss on device " + std::to_string(d) + " at iteration " +
                            std::to_string(iteration_ + 1));
    losses[d] = loss;
    max_compute = std::max(max_compute, cfg_.cost.c0 + cfg_.cost.c1 * static_cast<double>(batches[d].size()));
    if (cfg_.compression.enabled) {
      auto sent = compression_gate<double>(grad, gates_[d]);
      const bool compressed = sent.is_sparse();
      account_volume(compressed, dim, cfg_.compression.cr, volume_);
      max_payload = std::max(max_payload, payload_bytes(compressed, dim, cfg_.compression.cr));
      payloads.push_back(std::move(sent));
    } else {
      account_volume(false, dim, 1.0, volume_);
      max_payload = std::max(max_payload, payload_bytes(false, dim, 1.0));
      payloads.emplace_back(std::move(grad));
    }
  }

  const AggregationWeights weights =
      cfg_.mode == TrainingMode::kScadles ? weights_from_rates(rates_) : uniform_weights(n);
  const Vector<double> aggregate = weighted_aggregate<double>(payloads, weights);

  std::int64_t global_batch = 0;
  for (auto bi : b) global_batch += bi;
  double lr = optimizers_.front().lr_at(epoch_);
  if (cfg_.mode == TrainingMode::kScadles) {
    const std::int64_t base = cfg_.optimizer.base_global_batch > 0 ? cfg_.optimizer.base_global_batch
                                                                   : static_cast<std::int64_t>(n) * 64;
    lr = scale_lr(lr, static_cast<double>(global_batch), static_cast<double>(base));
  }
  for (std::size_t d = 0; d < n; ++d) sgd_momentum_step(optimizers_[d], replicas_[d].params(), aggregate, lr);

  // Clock: wait + slowest device compute + exchange of the largest payload.
  const double comm = comm_time(static_cast<double>(max_payload), cfg_.cost.link, n);
  const double busy = max_compute + comm;
  now_ += global_wait + busy;
  ++iteration_;
  for (auto& buf : buffers_) {
    buf.enqueue_arrivals(busy);
    buf.apply_retention();
  }

  IterationMetrics m;
  m.iteration = iteration_;
  m.sim_time_s = now_;
  m.global_batch = global_batch;
  m.lr_used = lr;
  for (std::size_t d = 0; d < n; ++d) m.train_loss += weights.r[d] * losses[d];
  m.wait_time_s = global_wait;
  m.compute_time_s = max_compute;
  m.comm_time_s = comm;
  m.injection_bytes = inj_bytes;
  m.injection_bytes_cum = injection_bytes_cum_;

  ++iter_in_epoch_;
  bool evaluate_now = false;
  if (iter_in_epoch_ >= iters_per_epoch_) {
    ++epoch_;
    iter_in_epoch_ = 0;
    if (cfg_.eval_every == 0) evaluate_now = true;
    if (cfg_.rate_jitter) {
      rates_ = sample_rates(cfg_.rate_dist, n, derive_seed(jitter_seed_, static_cast<std::uint64_t>(epoch_)));
      for (std::size_t d = 0; d < n; ++d) buffers_[d].set_rate(rates_[d]);
      recompute_epoch_length();
    }
  }
  m.epoch = epoch_;
  if (cfg_.eval_every > 0 && iteration_ % cfg_.eval_every == 0) evaluate_now = true;

  const bool out_of_budget = (cfg_.max_epochs > 0 && epoch_ >= cfg_.max_epochs) ||
                             (cfg_.max_iterations > 0 && iteration_ >= cfg_.max_iterations);
  if (out_of_budget) evaluate_now = true;
  if (evaluate_now) {
    const double acc = evaluate<double>(replicas_.front(), data_.test.features, data_.test.labels);
    m.test_accuracy = acc;
    last_accuracy_ = acc;
    if (cfg_.target_accuracy && !time_to_target_ && acc >= *cfg_.target_accuracy) time_to_target_ = now_;
  }
  finished_ = out_of_budget || time_to_target_.has_value();

  for (const auto& buf : buffers_) {
    m.buffer_occupancy.push_back(buf.size());
    m.buffer_samples += buf.size();
  }
  m.buffer_bytes = static_cast<double>(m.buffer_samples) * cfg_.sample_bytes;
  last_buffer_samples_ = m.buffer_samples;
  last_buffer_bytes_ = m.buffer_bytes;
  m.floats_sent_cum = volume_.floats_sent;
  m.bytes_sent_cum = volume_.bytes_sent;
  if (cfg_.compression.enabled) {
    std::uint64_t c = 0, u = 0;
    for (const auto& g : gates_) {
      c += g.n_compressed;
      u += g.n_uncompressed;
    }
    m.cnc_cum = cnc_ratio(c, u);
  }
  return m;
}

bool Simulator::replicas_consistent() const {
  const auto& ref = replicas_.front().params();
  for (const auto& r : replicas_)
    if (r.params().size() != ref.size() ||
        std::memcmp(r.params().data(), ref.data(), static_cast<std::size_t>(ref.size()) * sizeof(double)) != 0)
      return false;
  return true;
}

RunSummary Simulator::summary() const {
  RunSummary s;
  s.iterations = iteration_;
  s.epochs = epoch_;
  s.final_accuracy = last_accuracy_.value_or(0.0);
  s.sim_time_s = now_;
  s.time_to_target_s = time_to_target_;
  s.floats_sent = volume_.floats_sent;
  s.bytes_sent = volume_.bytes_sent;
  s.buffer_bytes = last_buffer_bytes_;
  s.buffer_samples = last_buffer_samples_;
  if (cfg_.compression.enabled) {
    std::uint64_t c = 0, u = 0;
    for (const auto& g : gates_) {
      c += g.n_compressed;
      u += g.n_uncompressed;
    }
    if (c + u > 0) s.cnc = cnc_ratio(c, u);
  }
  s.injection_bytes = injection_bytes_cum_;
  return s;
}

RunSummary run_experiment(const SimConfig& config, const MetricsSink& sink) {
  Simulator sim(config);
  while (!sim.finished()) {
    auto row = sim.step();
    if (sink) sink(row);
  }
  return sim.summary();
}

}  // namespace streamsgd
