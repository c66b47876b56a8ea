#pragma once

// Gradient exchange: rate-weighted aggregation, Top-k sparsification, the
// EWMA-gated adaptive compression rule, volume accounting and a ring-allreduce
// shaped synchronization cost.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "streamsgd/nn.hpp"

namespace streamsgd {

template <typename Scalar>
struct SparseGradient {
  Eigen::Index dim = 0;
  std::vector<Eigen::Index> indices;  // strictly increasing, all < dim
  Vector<Scalar> values;              // values[i] belongs to indices[i]
};

/// A gradient in flat parameter order, either dense or sparse.
template <typename Scalar>
class GradientVector {
 public:
  GradientVector(Vector<Scalar> dense) : repr_(std::move(dense)) {}  // NOLINT(implicit)
  GradientVector(SparseGradient<Scalar> sparse) : repr_(std::move(sparse)) {  // NOLINT(implicit)
    const auto& s = std::get<SparseGradient<Scalar>>(repr_);
    if (static_cast<Eigen::Index>(s.indices.size()) != s.values.size())
      throw std::invalid_argument("sparse gradient: index/value length mismatch");
    for (std::size_t i = 0; i < s.indices.size(); ++i) {
      if (s.indices[i] < 0 || s.indices[i] >= s.dim) throw std::invalid_argument("sparse gradient: index out of range");
      if (i > 0 && s.indices[i] <= s.indices[i - 1])
        throw std::invalid_argument("sparse gradient: indices must be strictly increasing");
    }
  }

  bool is_sparse() const { return std::holds_alternative<SparseGradient<Scalar>>(repr_); }
  Eigen::Index dim() const {
    return is_sparse() ? sparse().dim : dense().size();
  }
  /// Number of values carried by the payload.
  Eigen::Index payload_size() const { return is_sparse() ? sparse().values.size() : dense().size(); }

  const Vector<Scalar>& dense() const { return std::get<Vector<Scalar>>(repr_); }
  const SparseGradient<Scalar>& sparse() const { return std::get<SparseGradient<Scalar>>(repr_); }

  Vector<Scalar> densify() const {
    if (!is_sparse()) return dense();
    const auto& s = sparse();
    Vector<Scalar> out = Vector<Scalar>::Zero(s.dim);
    for (std::size_t i = 0; i < s.indices.size(); ++i) out[s.indices[i]] = s.values[static_cast<Eigen::Index>(i)];
    return out;
  }

  /// Squared L2 norm, summed in ascending index order.
  Scalar squared_norm() const {
    const Vector<Scalar>& v = is_sparse() ? sparse().values : dense();
    Scalar acc = 0;
    for (Eigen::Index i = 0; i < v.size(); ++i) acc += v[i] * v[i];
    return acc;
  }

 private:
  std::variant<Vector<Scalar>, SparseGradient<Scalar>> repr_;
};

struct AggregationWeights {
  std::vector<double> r;
};

/// r_j = S_j / sum(S).
AggregationWeights weights_from_rates(std::span<const std::int64_t> rates);
AggregationWeights uniform_weights(std::size_t n);

/// sum_j r_j * g_j, folded in ascending device order.
template <typename Scalar>
Vector<Scalar> weighted_aggregate(std::span<const GradientVector<Scalar>> grads, const AggregationWeights& w) {
  if (grads.empty()) throw std::invalid_argument("weighted_aggregate: no gradients");
  if (grads.size() != w.r.size()) throw std::invalid_argument("weighted_aggregate: weight count mismatch");
  const Eigen::Index dim = grads.front().dim();
  Vector<Scalar> acc = Vector<Scalar>::Zero(dim);
  for (std::size_t j = 0; j < grads.size(); ++j) {
    const auto& g = grads[j];
    if (g.dim() != dim) throw std::invalid_argument("weighted_aggregate: gradient dimension mismatch");
    const auto r = static_cast<Scalar>(w.r[j]);
    if (g.is_sparse()) {
      const auto& s = g.sparse();
      for (std::size_t i = 0; i < s.indices.size(); ++i) acc[s.indices[i]] += r * s.values[static_cast<Eigen::Index>(i)];
    } else {
      // Entry-wise loop; zeros contribute exactly nothing so a sparse payload and
      // its densified copy aggregate to the same bits.
      const auto& d = g.dense();
      for (Eigen::Index i = 0; i < dim; ++i) acc[i] += r * d[i];
    }
  }
  return acc;
}

/// Entries kept by Top-k at compression ratio cr: max(1, ceil(cr * dim)).
std::size_t topk_count(std::size_t dim, double cr);

/// Keeps the entries of largest magnitude; ties go to the lower index.
template <typename Scalar, typename Derived>
SparseGradient<Scalar> topk_sparsify(const Eigen::MatrixBase<Derived>& g, double cr) {
  if (!(cr > 0.0 && cr <= 1.0)) throw std::invalid_argument("topk_sparsify: cr must be in (0, 1]");
  const auto dim = static_cast<std::size_t>(g.size());
  SparseGradient<Scalar> out;
  out.dim = g.size();
  if (dim == 0) return out;
  const std::size_t m = std::min(dim, topk_count(dim, cr));

  std::vector<Eigen::Index> order(dim);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto before = [&g](Eigen::Index a, Eigen::Index b) {
    const auto ma = std::abs(g[a]);
    const auto mb = std::abs(g[b]);
    return ma > mb || (ma == mb && a < b);
  };
  if (m < dim) std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m - 1), order.end(), before);
  order.resize(m);
  std::sort(order.begin(), order.end());

  out.indices = std::move(order);
  out.values.resize(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) out.values[static_cast<Eigen::Index>(i)] = static_cast<Scalar>(g[out.indices[i]]);
  return out;
}

enum class GateMode { kSmoothed, kRaw };

struct CompressionState {
  double cr = 0.1;
  double delta = 0.3;
  double ewma_factor = 0.9;
  GateMode mode = GateMode::kSmoothed;
  double ewma_full = 0.0;
  double ewma_topk = 0.0;
  bool initialized = false;
  std::uint64_t n_compressed = 0;
  std::uint64_t n_uncompressed = 0;
  double last_ratio = 0.0;
};

/// Adaptive Top-k rule for one device. Sends Top-k(g) when the relative
/// squared-norm loss (|g|^2 - |Topk(g)|^2) / |g|^2 is within delta, else g.
/// In smoothed mode the ratio is taken over EWMAs of the two squared norms;
/// the first call seeds both EWMAs with the observed values.
/// A zero gradient has ratio 0 and is sent compressed.
template <typename Scalar, typename Derived>
GradientVector<Scalar> compression_gate(const Eigen::MatrixBase<Derived>& g, CompressionState& state) {
  auto sparse = topk_sparsify<Scalar>(g, state.cr);
  GradientVector<Scalar> compressed(std::move(sparse));
  double full = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i) full += static_cast<double>(g[i]) * static_cast<double>(g[i]);
  double kept = 0.0;
  {
    const auto& v = compressed.sparse().values;
    for (Eigen::Index i = 0; i < v.size(); ++i) kept += static_cast<double>(v[i]) * static_cast<double>(v[i]);
  }

  if (!state.initialized) {
    state.ewma_full = full;
    state.ewma_topk = kept;
    state.initialized = true;
  } else {
    const double f = state.ewma_factor;
    state.ewma_full = f * state.ewma_full + (1.0 - f) * full;
    state.ewma_topk = f * state.ewma_topk + (1.0 - f) * kept;
  }

  const double num_full = state.mode == GateMode::kSmoothed ? state.ewma_full : full;
  const double num_topk = state.mode == GateMode::kSmoothed ? state.ewma_topk : kept;
  const double ratio = num_full > 0.0 ? std::clamp(std::abs(num_full - num_topk) / num_full, 0.0, 1.0) : 0.0;
  state.last_ratio = ratio;

  if (ratio <= state.delta) {
    ++state.n_compressed;
    return compressed;
  }
  ++state.n_uncompressed;
  return GradientVector<Scalar>(Vector<Scalar>(g));
}

struct VolumeStats {
  std::uint64_t floats_sent = 0;
  std::uint64_t bytes_sent = 0;
};

/// Dense payloads count dim floats (4 bytes each). Sparse payloads count
/// m = topk_count(dim, cr) floats and 8 bytes per entry (value + index).
void account_volume(bool compressed, std::size_t dim, double cr, VolumeStats& stats);

/// Payload size in bytes of one device's message.
std::uint64_t payload_bytes(bool compressed, std::size_t dim, double cr);

/// n_compressed / (n_compressed + n_uncompressed); throws std::logic_error with no decisions.
double cnc_ratio(std::uint64_t n_compressed, std::uint64_t n_uncompressed);
double cnc_ratio(const CompressionState& state);

struct LinkModel {
  double latency = 0.0;      // seconds
  double bandwidth = 1.0e9;  // bytes/sec

  friend bool operator==(const LinkModel&, const LinkModel&) = default;
};

/// latency + 2(n-1)/n * bytes / bandwidth.
double comm_time(double bytes, const LinkModel& link, std::size_t n_devices);

}  // namespace streamsgd
