#pragma once

#include <cstdint>
#include <string_view>

namespace streamsgd {

/// SplitMix64 finalizer. Used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

/// Expands one master seed into an independent per-subsystem seed.
/// The derivation is fixed: FNV-1a of the label, xor'd with the master seed,
/// then mixed. Labels in use: "rates", "partition", "injection", "init",
/// "dataset", "augment", "jitter".
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

/// Seed for an indexed stream under a derived seed (e.g. per device, per epoch).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace streamsgd

namespace streamsgd {

/// Small counter-based generator for per-sample noise, where seeding an
/// mt19937 per draw would dominate the cost.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

}  // namespace streamsgd
