#pragma once

// Synthetic labeled data, IID / label-shard partitioning, and the (alpha, beta)
// data-injection exchange.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamsgd/nn.hpp"

namespace streamsgd {

struct DatasetSpec {
  int n_classes = 10;
  int feature_dim = 16;
  int samples_per_class = 200;
  double cluster_spread = 0.5;
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct LabeledData {
  Matrix<double> features;  // one sample per row
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct Dataset {
  LabeledData train;
  LabeledData test;
  int n_classes = 0;
};

/// Gaussian clusters around per-class means drawn from N(0, I), 80/20 split per class.
Dataset generate_dataset(const DatasetSpec& spec);

enum class PartitionMode { kIid, kNonIid };

struct PartitionPlan {
  PartitionMode mode = PartitionMode::kIid;
  int n_devices = 4;
  int labels_per_device = 1;  // non-IID only

  friend bool operator==(const PartitionPlan&, const PartitionPlan&) = default;
};

/// Splits train-set row indices into per-device pools.
///
/// IID: shuffled and dealt round-robin. Non-IID: shuffled labels are cut into
/// n_classes / labels_per_device disjoint groups (n_classes must divide evenly);
/// device d takes group d mod n_groups, and devices sharing a group split its
/// samples. Pools come out shuffled.
std::vector<std::vector<std::size_t>> partition(const LabeledData& train, int n_classes,
                                                const PartitionPlan& plan, std::uint64_t seed);

struct InjectionConfig {
  double alpha = 0.0;  // fraction of devices that share
  double beta = 0.0;   // fraction of their batch they share
  std::int64_t sample_bytes = 3 * 1024;

  friend bool operator==(const InjectionConfig&, const InjectionConfig&) = default;
};

struct InjectionShare {
  std::size_t sender = 0;
  std::size_t count = 0;
};

/// ceil(alpha * n) distinct random senders; sender i shares ceil(beta * b_i) samples.
template <typename Rng>
std::vector<InjectionShare> injection_plan(std::size_t n_devices, const InjectionConfig& cfg,
                                           std::span<const std::size_t> batch_sizes, Rng& rng);

/// Every sender's chosen samples are copied to every other device's batch.
/// Samples are chosen uniformly without replacement from the sender's own
/// batch as it was before any injection. Returns bytes moved.
template <typename T, typename Rng>
std::uint64_t inject(std::vector<std::vector<T>>& batches, std::span<const InjectionShare> plan,
                     std::int64_t sample_bytes, Rng& rng);

/// Delimited text table: feature_dim float columns then an integer label column.
void write_table(const std::string& path, const LabeledData& data);
LabeledData read_table(const std::string& path);

// ---------------------------------------------------------------------------

namespace detail {
inline std::size_t ceil_fraction(double frac, std::size_t n) {
  return static_cast<std::size_t>(std::max(0.0, std::ceil(frac * static_cast<double>(n) - 1e-9)));
}
}  // namespace detail

template <typename Rng>
std::vector<InjectionShare> injection_plan(std::size_t n_devices, const InjectionConfig& cfg,
                                           std::span<const std::size_t> batch_sizes, Rng& rng) {
  if (n_devices < 2) throw std::invalid_argument("injection_plan: need at least 2 devices");
  if (batch_sizes.size() != n_devices) throw std::invalid_argument("injection_plan: batch size count mismatch");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0 && cfg.beta >= 0.0 && cfg.beta <= 1.0))
    throw std::invalid_argument("injection_plan: alpha and beta must be in [0, 1]");
  const std::size_t n_senders = std::min(n_devices, detail::ceil_fraction(cfg.alpha, n_devices));
  std::vector<std::size_t> ids(n_devices);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  // Partial Fisher-Yates: the first n_senders entries are a uniform random subset.
  for (std::size_t i = 0; i < n_senders; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_devices - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(n_senders);
  std::sort(ids.begin(), ids.end());
  std::vector<InjectionShare> plan;
  plan.reserve(n_senders);
  for (auto s : ids)
    plan.push_back({s, std::min(batch_sizes[s], detail::ceil_fraction(cfg.beta, batch_sizes[s]))});
  return plan;
}

template <typename T, typename Rng>
std::uint64_t inject(std::vector<std::vector<T>>& batches, std::span<const InjectionShare> plan,
                     std::int64_t sample_bytes, Rng& rng) {
  const std::size_t n = batches.size();
  std::vector<std::vector<T>> shared;
  shared.reserve(plan.size());
  for (const auto& share : plan) {
    if (share.sender >= n) throw std::invalid_argument("inject: sender index out of range");
    const auto& own = batches[share.sender];
    if (share.count > own.size()) throw std::invalid_argument("inject: share exceeds sender batch");
    std::vector<std::size_t> pos(own.size());
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    for (std::size_t i = 0; i < share.count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pos.size() - 1);
      std::swap(pos[i], pos[pick(rng)]);
    }
    std::vector<T> picked;
    picked.reserve(share.count);
    for (std::size_t i = 0; i < share.count; ++i) picked.push_back(own[pos[i]]);
    shared.push_back(std::move(picked));
  }
  std::uint64_t bytes = 0;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    for (std::size_t d = 0; d < n; ++d) {
      if (d == plan[k].sender) continue;
      batches[d].insert(batches[d].end(), shared[k].begin(), shared[k].end());
    }
    bytes += static_cast<std::uint64_t>(plan[k].count) * (n - 1) * static_cast<std::uint64_t>(sample_bytes);
  }
  return bytes;
}

}  // namespace streamsgd
