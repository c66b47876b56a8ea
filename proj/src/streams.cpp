#include "streamsgd/streams.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace streamsgd {

std::string to_string(RateKind kind) {
  return kind == RateKind::kUniform ? "uniform" : "normal";
}

std::string to_string(RetentionPolicy policy) {
  return policy == RetentionPolicy::kPersistence ? "persistence" : "truncation";
}

std::vector<std::int64_t> sample_rates(const RateDistribution& dist, std::size_t n,
                                       std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample_rates: n must be >= 1");
  if (!(dist.mean > 0.0)) throw std::invalid_argument("sample_rates: mean must be > 0");
  if (!(dist.std >= 0.0)) throw std::invalid_argument("sample_rates: std must be >= 0");

  std::mt19937_64 rng(seed);
  std::vector<std::int64_t> rates;
  rates.reserve(n);
  auto clamp_round = [](double x) {
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(x)));
  };

  if (dist.std == 0.0) {
    rates.assign(n, clamp_round(dist.mean));
    return rates;
  }
  if (dist.kind == RateKind::kUniform) {
    const double half_width = dist.std * std::sqrt(3.0);
    std::uniform_real_distribution<double> u(dist.mean - half_width, dist.mean + half_width);
    for (std::size_t i = 0; i < n; ++i) rates.push_back(clamp_round(u(rng)));
  } else {
    std::normal_distribution<double> g(dist.mean, dist.std);
    for (std::size_t i = 0; i < n; ++i) rates.push_back(clamp_round(g(rng)));
  }
  return rates;
}

StreamBuffer::StreamBuffer(std::int64_t rate, RetentionPolicy policy)
    : rate_(rate), policy_(policy) {
  if (rate < 1) throw std::invalid_argument("StreamBuffer: rate must be >= 1");
}

void StreamBuffer::set_rate(std::int64_t rate) {
  if (rate < 1) throw std::invalid_argument("StreamBuffer: rate must be >= 1");
  rate_ = rate;
}

std::size_t StreamBuffer::enqueue_arrivals(double elapsed) {
  if (!(elapsed >= 0.0)) throw std::invalid_argument("enqueue_arrivals: elapsed must be >= 0");
  const double total = static_cast<double>(rate_) * elapsed + credit_;
  // Absorbs representation error in products like (64/27)*27.
  const double whole = std::floor(total + 1e-9);
  credit_ = std::clamp(total - whole, 0.0, std::nextafter(1.0, 0.0));
  const auto added = static_cast<std::size_t>(whole);
  for (std::size_t i = 0; i < added; ++i) pending_.push_back(next_id_++);
  return added;
}

std::variant<std::vector<SampleId>, WouldBlock> StreamBuffer::draw_batch(std::size_t batch) {
  if (pending_.size() < batch) return WouldBlock{batch - pending_.size()};
  std::vector<SampleId> out(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(batch));
  pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(batch));
  return out;
}

std::size_t StreamBuffer::apply_retention() {
  if (policy_ == RetentionPolicy::kPersistence) return 0;
  const auto cap = static_cast<std::size_t>(rate_);
  if (pending_.size() <= cap) return 0;
  const std::size_t drop = pending_.size() - cap;
  pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(drop));
  return drop;
}

double streaming_wait(std::size_t buffer_len, std::size_t batch, std::int64_t rate) {
  if (rate < 1) throw std::invalid_argument("streaming_wait: rate must be >= 1");
  if (buffer_len >= batch) return 0.0;
  return static_cast<double>(batch - buffer_len) / static_cast<double>(rate);
}

QueueEstimate analytic_queue_size(const QueueModelParams& p, QueueForm form) {
  if (!(p.S > 0.0)) throw std::invalid_argument("analytic_queue_size: S must be > 0");
  if (p.T < 0) throw std::invalid_argument("analytic_queue_size: T must be >= 0");
  const auto T = static_cast<double>(p.T);
  if (form == QueueForm::kApprox) {
    if (!(p.t >= 0.0)) throw std::invalid_argument("analytic_queue_size: t must be >= 0");
    return {T * p.t * p.S + p.S, true};
  }
  if (!(p.t > 0.0) || p.b < 1) throw std::invalid_argument("analytic_queue_size: need t > 0, b >= 1");
  const double per_step = p.t * p.S - static_cast<double>(p.b);
  if (per_step < 0.0) throw std::domain_error("analytic_queue_size: exact form requires t*S >= b");
  return {per_step * T + p.S, false};
}

double samples_to_gib(double samples, double sample_bytes) {
  return samples * sample_bytes / (1024.0 * 1024.0 * 1024.0);
}

}  // namespace streamsgd
