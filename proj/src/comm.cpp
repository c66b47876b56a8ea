#include "streamsgd/comm.hpp"

namespace streamsgd {

AggregationWeights weights_from_rates(std::span<const std::int64_t> rates) {
  if (rates.empty()) throw std::invalid_argument("weights_from_rates: empty rate list");
  double total = 0.0;
  for (auto s : rates) {
    if (s < 1) throw std::invalid_argument("weights_from_rates: rates must be >= 1");
    total += static_cast<double>(s);
  }
  AggregationWeights w;
  w.r.reserve(rates.size());
  for (auto s : rates) w.r.push_back(static_cast<double>(s) / total);
  return w;
}

AggregationWeights uniform_weights(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_weights: n must be >= 1");
  return AggregationWeights{std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

std::size_t topk_count(std::size_t dim, double cr) {
  if (!(cr > 0.0 && cr <= 1.0)) throw std::invalid_argument("topk_count: cr must be in (0, 1]");
  // The small offset stops products like 0.7 * 10 = 7.000000000000001 rounding up.
  const double raw = std::ceil(cr * static_cast<double>(dim) - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::max(0.0, raw)));
}

std::uint64_t payload_bytes(bool compressed, std::size_t dim, double cr) {
  return compressed ? 8ULL * topk_count(dim, cr) : 4ULL * dim;
}

void account_volume(bool compressed, std::size_t dim, double cr, VolumeStats& stats) {
  stats.floats_sent += compressed ? topk_count(dim, cr) : dim;
  stats.bytes_sent += payload_bytes(compressed, dim, cr);
}

double cnc_ratio(std::uint64_t n_compressed, std::uint64_t n_uncompressed) {
  const auto total = n_compressed + n_uncompressed;
  if (total == 0) throw std::logic_error("cnc_ratio: no compression decisions recorded");
  return static_cast<double>(n_compressed) / static_cast<double>(total);
}

double cnc_ratio(const CompressionState& state) { return cnc_ratio(state.n_compressed, state.n_uncompressed); }

double comm_time(double bytes, const LinkModel& link, std::size_t n_devices) {
  if (!(bytes >= 0.0)) throw std::invalid_argument("comm_time: bytes must be >= 0");
  if (n_devices == 0) throw std::invalid_argument("comm_time: n_devices must be >= 1");
  const auto n = static_cast<double>(n_devices);
  return link.latency + (2.0 * (n - 1.0) / n) * bytes / link.bandwidth;
}

}  // namespace streamsgd
