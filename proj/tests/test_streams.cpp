#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "streamsgd/streams.hpp"

using namespace streamsgd;

namespace {

std::vector<SampleId> drain(StreamBuffer& buf, std::size_t n) {
  auto out = buf.draw_batch(n);
  REQUIRE(std::holds_alternative<std::vector<SampleId>>(out));
  return std::get<std::vector<SampleId>>(out);
}

// Occupancy of a persistence buffer after T steps of: draw b, then t seconds of arrivals.
// Starts with one second of arrivals, as in the closed form's T = 0 state.
std::size_t simulate_queue(std::int64_t t, std::int64_t S, std::int64_t b, std::int64_t T) {
  StreamBuffer buf(S, RetentionPolicy::kPersistence);
  buf.enqueue_arrivals(1.0);
  for (std::int64_t k = 0; k < T; ++k) {
    drain(buf, static_cast<std::size_t>(b));
    buf.enqueue_arrivals(static_cast<double>(t));
  }
  return buf.size();
}

}  // namespace

TEST_CASE("sample_rates: degenerate std returns the mean") {
  const auto r = sample_rates({RateKind::kNormal, 64.0, 0.0}, 3, 12345);
  CHECK(r == std::vector<std::int64_t>{64, 64, 64});
}

TEST_CASE("sample_rates: uniform moments match the requested mean and std") {
  const auto r = sample_rates({RateKind::kUniform, 38.0, 24.0}, 10000, 7);
  const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
  double var = 0.0;
  for (auto x : r) var += (static_cast<double>(x) - mean) * (static_cast<double>(x) - mean);
  const double sd = std::sqrt(var / static_cast<double>(r.size() - 1));
  CHECK(std::abs(mean - 38.0) <= 1.0);
  CHECK(std::abs(sd - 24.0) <= 1.0);
}

TEST_CASE("sample_rates: uniform support and clamping") {
  const auto r = sample_rates({RateKind::kUniform, 300.0, 112.0}, 10000, 3);
  const double lo = 300.0 - 112.0 * std::sqrt(3.0) - 0.5;
  const double hi = 300.0 + 112.0 * std::sqrt(3.0) + 0.5;
  for (auto x : r) {
    CHECK(x >= 1);
    CHECK(static_cast<double>(x) >= lo);
    CHECK(static_cast<double>(x) <= hi);
  }
  // Normal draws far below zero clamp to 1.
  for (auto x : sample_rates({RateKind::kNormal, 1.0, 50.0}, 1000, 1)) CHECK(x >= 1);
}

TEST_CASE("sample_rates: reproducible and validated") {
  const RateDistribution d{RateKind::kNormal, 256.0, 28.0};
  CHECK(sample_rates(d, 50, 99) == sample_rates(d, 50, 99));
  CHECK(sample_rates(d, 50, 99) != sample_rates(d, 50, 100));
  CHECK_THROWS_AS(sample_rates(d, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_rates({RateKind::kUniform, 0.0, 1.0}, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_rates({RateKind::kUniform, -4.0, 1.0}, 3, 1), std::invalid_argument);
}

TEST_CASE("enqueue_arrivals: integer and fractional products") {
  StreamBuffer buf(10, RetentionPolicy::kPersistence);
  CHECK(buf.enqueue_arrivals(0.0) == 0);
  CHECK(buf.enqueue_arrivals(1.0) == 10);

  StreamBuffer frac(10, RetentionPolicy::kPersistence);
  CHECK(frac.enqueue_arrivals(1.25) == 12);
  CHECK(frac.fractional_credit() == doctest::Approx(0.5));
  CHECK(frac.enqueue_arrivals(1.25) == 13);
  CHECK(frac.size() == 25);
  CHECK_THROWS_AS(frac.enqueue_arrivals(-0.1), std::invalid_argument);
}

TEST_CASE("enqueue_arrivals: mass conservation over random call sequences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dt(0.0, 3.0);
  std::uniform_int_distribution<std::int64_t> rate(1, 500);
  for (int trial = 0; trial < 200; ++trial) {
    StreamBuffer buf(rate(rng), RetentionPolicy::kPersistence);
    double elapsed = 0.0;
    std::size_t added = 0;
    for (int k = 0; k < 100; ++k) {
      const double e = dt(rng);
      elapsed += e;
      added += buf.enqueue_arrivals(e);
      CHECK(buf.fractional_credit() >= 0.0);
      CHECK(buf.fractional_credit() < 1.0);
    }
    // Oracle: the exact real arrival count.
    const double exact = std::floor(static_cast<double>(buf.rate()) * elapsed);
    CHECK(std::abs(static_cast<double>(added) - exact) <= 1.0);
  }
}

TEST_CASE("draw_batch: FIFO order and would-block") {
  StreamBuffer buf(3, RetentionPolicy::kPersistence);
  buf.enqueue_arrivals(1.0);
  CHECK(drain(buf, 3) == std::vector<SampleId>{0, 1, 2});
  CHECK(buf.size() == 0);

  StreamBuffer four(4, RetentionPolicy::kPersistence);
  four.enqueue_arrivals(1.0);
  CHECK(drain(four, 2) == std::vector<SampleId>{0, 1});
  CHECK(four.pending() == std::deque<SampleId>{2, 3});

  StreamBuffer one(1, RetentionPolicy::kPersistence);
  one.enqueue_arrivals(1.0);
  auto blocked = one.draw_batch(2);
  REQUIRE(std::holds_alternative<WouldBlock>(blocked));
  CHECK(std::get<WouldBlock>(blocked).shortfall == 1);
  CHECK(one.size() == 1);
}

TEST_CASE("apply_retention: persistence keeps all, truncation keeps the newest rate samples") {
  StreamBuffer keep(100, RetentionPolicy::kPersistence);
  keep.enqueue_arrivals(5.0);
  CHECK(keep.apply_retention() == 0);
  CHECK(keep.size() == 500);

  StreamBuffer trunc(100, RetentionPolicy::kTruncation);
  trunc.enqueue_arrivals(2.5);
  REQUIRE(trunc.size() == 250);
  CHECK(trunc.apply_retention() == 150);
  CHECK(trunc.size() == 100);
  CHECK(trunc.pending().front() == 150);
  CHECK(trunc.pending().back() == 249);

  StreamBuffer under(100, RetentionPolicy::kTruncation);
  under.enqueue_arrivals(0.8);
  CHECK(under.apply_retention() == 0);
  CHECK(under.size() == 80);
}

TEST_CASE("streaming_wait") {
  CHECK(streaming_wait(64, 64, 38) == 0.0);
  CHECK(streaming_wait(0, 64, 38) == doctest::Approx(64.0 / 38.0));
  CHECK(streaming_wait(0, 64, 38) == doctest::Approx(1.684).epsilon(1e-3));
  CHECK(streaming_wait(10, 64, 27) == doctest::Approx(2.0));
  CHECK(streaming_wait(100, 64, 27) == 0.0);
  CHECK_THROWS_AS(streaming_wait(0, 1, 0), std::invalid_argument);
}

TEST_CASE("analytic_queue_size: exact form against the step simulation") {
  CHECK(analytic_queue_size({1.0, 10.0, 5, 3}, QueueForm::kExact).samples == 25.0);
  CHECK(simulate_queue(1, 10, 5, 3) == 25);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::int64_t t = std::uniform_int_distribution<std::int64_t>(1, 3)(rng);
    const std::int64_t S = std::uniform_int_distribution<std::int64_t>(1, 200)(rng);
    const std::int64_t b = std::uniform_int_distribution<std::int64_t>(1, S)(rng);
    for (std::int64_t T : {1, 2, 17, 250}) {
      const auto est = analytic_queue_size({static_cast<double>(t), static_cast<double>(S), b, T}, QueueForm::kExact);
      CHECK_FALSE(est.approx);
      CHECK(est.samples == static_cast<double>(simulate_queue(t, S, b, T)));
    }
  }
}

TEST_CASE("analytic_queue_size: approximate form and storage arithmetic") {
  const auto resnet = analytic_queue_size({1.2, 100.0, 64, 1000}, QueueForm::kApprox);
  CHECK(resnet.approx);
  CHECK(resnet.samples == doctest::Approx(120100.0));
  CHECK(samples_to_gib(resnet.samples, kDefaultSampleBytes) == doctest::Approx(0.344).epsilon(0.005));

  const auto vgg = analytic_queue_size({1.6, 600.0, 64, 100000}, QueueForm::kApprox);
  CHECK(vgg.samples == doctest::Approx(96000600.0));
  CHECK(samples_to_gib(vgg.samples, kDefaultSampleBytes) == doctest::Approx(274.83).epsilon(0.01));

  // t -> 0: the buffer holds S samples regardless of T.
  CHECK(analytic_queue_size({0.0, 100.0, 64, 5000}, QueueForm::kApprox).samples == 100.0);
}

TEST_CASE("analytic_queue_size: exact form requires t*S >= b") {
  CHECK_THROWS_AS(analytic_queue_size({1.0, 10.0, 11, 5}, QueueForm::kExact), std::domain_error);
  CHECK_NOTHROW(analytic_queue_size({1.0, 10.0, 10, 5}, QueueForm::kExact));
  CHECK(analytic_queue_size({1.0, 10.0, 10, 5}, QueueForm::kExact).samples == 10.0);
}

TEST_CASE("retention properties under continuous inflow") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t S = std::uniform_int_distribution<std::int64_t>(2, 300)(rng);
    const std::int64_t b = std::uniform_int_distribution<std::int64_t>(1, S - 1)(rng);
    const double t = std::uniform_real_distribution<double>(1.0, 3.0)(rng);

    StreamBuffer trunc(S, RetentionPolicy::kTruncation);
    StreamBuffer keep(S, RetentionPolicy::kPersistence);
    trunc.enqueue_arrivals(1.0);
    keep.enqueue_arrivals(1.0);
    std::size_t prev = keep.size();
    for (int k = 0; k < 40; ++k) {
      drain(trunc, static_cast<std::size_t>(std::min<std::size_t>(trunc.size(), static_cast<std::size_t>(b))));
      trunc.enqueue_arrivals(t);
      trunc.apply_retention();
      CHECK(trunc.size() <= static_cast<std::size_t>(S));

      drain(keep, static_cast<std::size_t>(b));
      keep.enqueue_arrivals(t);
      keep.apply_retention();
      CHECK(keep.size() > prev);  // t*S > b
      prev = keep.size();
    }
  }
}
