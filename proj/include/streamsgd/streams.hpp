#pragma once

// Per-device stream buffers, rate sampling and the analytic queue-growth model.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <string>
#include <variant>
#include <vector>

namespace streamsgd {

using SampleId = std::uint64_t;

enum class RateKind { kUniform, kNormal };

struct RateDistribution {
  RateKind kind = RateKind::kUniform;
  double mean = 38.0;  // samples/sec
  double std = 24.0;   // samples/sec

  friend bool operator==(const RateDistribution&, const RateDistribution&) = default;
};

enum class RetentionPolicy { kPersistence, kTruncation };

std::string to_string(RateKind kind);
std::string to_string(RetentionPolicy policy);

/// Draws `n` device streaming rates. Uniform draws come from
/// [mean - std*sqrt(3), mean + std*sqrt(3)], normal draws from N(mean, std);
/// both are rounded to the nearest integer and clamped to >= 1.
std::vector<std::int64_t> sample_rates(const RateDistribution& dist, std::size_t n,
                                       std::uint64_t seed);

/// Shortfall reported by StreamBuffer::draw_batch when not enough samples are pending.
struct WouldBlock {
  std::size_t shortfall = 0;
};

/// FIFO of pending sample ids for one device.
///
/// Arrivals are generated here: each arriving sample gets the next sequence
/// number, so ids are the device-local arrival order. Non-integer arrivals
/// (rate * elapsed not integral) are carried as fractional credit.
class StreamBuffer {
 public:
  StreamBuffer(std::int64_t rate, RetentionPolicy policy);

  /// Adds floor(rate * elapsed + credit) samples and returns how many were added.
  std::size_t enqueue_arrivals(double elapsed);

  /// Removes and returns the `batch` oldest samples, or the shortfall if fewer are pending.
  std::variant<std::vector<SampleId>, WouldBlock> draw_batch(std::size_t batch);

  /// Persistence keeps everything; truncation keeps only the newest `rate` samples.
  /// Returns the number of samples discarded.
  std::size_t apply_retention();

  std::size_t size() const { return pending_.size(); }
  std::int64_t rate() const { return rate_; }
  void set_rate(std::int64_t rate);
  RetentionPolicy policy() const { return policy_; }
  double fractional_credit() const { return credit_; }
  std::uint64_t total_arrived() const { return next_id_; }
  const std::deque<SampleId>& pending() const { return pending_; }

 private:
  std::deque<SampleId> pending_;
  std::int64_t rate_;
  RetentionPolicy policy_;
  double credit_ = 0.0;
  SampleId next_id_ = 0;
};

/// Seconds a device must wait for `batch` samples given `buffer_len` pending.
double streaming_wait(std::size_t buffer_len, std::size_t batch, std::int64_t rate);

struct QueueModelParams {
  double t = 1.0;        // iteration time, seconds
  double S = 1.0;        // streaming rate, samples/sec
  std::int64_t b = 1;    // batch size
  std::int64_t T = 0;    // timesteps
};

enum class QueueForm { kExact, kApprox };

struct QueueEstimate {
  double samples = 0.0;
  bool approx = false;
};

/// Buffer occupancy after T iterations with no retention.
/// Exact: (t*S - b)*T + S, defined only for t*S >= b (throws std::domain_error otherwise).
/// Approximate: T*t*S + S, valid for t*S >> b; t = 0 is accepted.
QueueEstimate analytic_queue_size(const QueueModelParams& p, QueueForm form);

/// Converts a sample count to GiB at `sample_bytes` per sample.
double samples_to_gib(double samples, double sample_bytes);

inline constexpr double kDefaultSampleBytes = 3.0 * 1024.0;

}  // namespace streamsgd
