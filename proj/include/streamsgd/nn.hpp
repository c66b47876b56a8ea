#pragma once

// Small softmax classifiers (multinomial logistic regression and tanh MLPs)
// with exact gradients, momentum SGD, step-decay schedules and linear LR scaling.
//
// Parameters live in one flat vector. Layer l occupies a contiguous block:
// its weight matrix (out x in, row-major) followed by its bias vector.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace streamsgd {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Architecture {
  int input_dim = 1;
  std::vector<int> hidden;  // 0 entries: logistic regression; 1-2 entries: MLP
  int n_classes = 2;

  friend bool operator==(const Architecture&, const Architecture&) = default;

  /// Layer widths including input and output.
  std::vector<int> widths() const {
    std::vector<int> w{input_dim};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(n_classes);
    return w;
  }

  std::size_t n_layers() const { return hidden.size() + 1; }

  std::size_t parameter_count() const {
    const auto w = widths();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l)
      n += static_cast<std::size_t>(w[l + 1]) * static_cast<std::size_t>(w[l] + 1);
    return n;
  }

  /// Offset of layer l's weight block in the flat vector.
  std::size_t layer_offset(std::size_t layer) const {
    const auto w = widths();
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l)
      off += static_cast<std::size_t>(w[l + 1]) * static_cast<std::size_t>(w[l] + 1);
    return off;
  }

  void validate() const {
    if (input_dim < 1) throw std::invalid_argument("architecture: input_dim must be >= 1");
    if (n_classes < 2) throw std::invalid_argument("architecture: n_classes must be >= 2");
    if (hidden.size() > 2) throw std::invalid_argument("architecture: at most 2 hidden layers");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("architecture: hidden widths must be >= 1");
  }
};

/// Flat parameter vector with layer views.
template <typename Scalar>
class Model {
 public:
  using VectorType = Vector<Scalar>;
  using WeightMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstWeightMap = Eigen::Map<const RowMatrix<Scalar>>;
  using BiasMap = Eigen::Map<VectorType>;
  using ConstBiasMap = Eigen::Map<const VectorType>;

  explicit Model(Architecture arch)
      : arch_(std::move(arch)), params_(VectorType::Zero(static_cast<Eigen::Index>(arch_.parameter_count()))) {
    arch_.validate();
  }

  Model(Architecture arch, VectorType params) : arch_(std::move(arch)), params_(std::move(params)) {
    arch_.validate();
    if (static_cast<std::size_t>(params_.size()) != arch_.parameter_count())
      throw std::invalid_argument("Model: parameter vector length does not match architecture");
  }

  /// Xavier-uniform weights, zero biases.
  static Model xavier(Architecture arch, std::uint64_t seed) {
    Model m(std::move(arch));
    std::mt19937_64 rng(seed);
    const auto w = m.arch_.widths();
    for (std::size_t l = 0; l < m.arch_.n_layers(); ++l) {
      const double limit = std::sqrt(6.0 / static_cast<double>(w[l] + w[l + 1]));
      std::uniform_real_distribution<double> u(-limit, limit);
      auto W = m.weight(l);
      for (Eigen::Index r = 0; r < W.rows(); ++r)
        for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = static_cast<Scalar>(u(rng));
    }
    return m;
  }

  const Architecture& architecture() const { return arch_; }
  const VectorType& params() const { return params_; }
  VectorType& params() { return params_; }

  WeightMap weight(std::size_t l) {
    const auto w = arch_.widths();
    return WeightMap(params_.data() + arch_.layer_offset(l), w[l + 1], w[l]);
  }
  ConstWeightMap weight(std::size_t l) const {
    const auto w = arch_.widths();
    return ConstWeightMap(params_.data() + arch_.layer_offset(l), w[l + 1], w[l]);
  }
  BiasMap bias(std::size_t l) {
    const auto w = arch_.widths();
    return BiasMap(params_.data() + arch_.layer_offset(l) + static_cast<std::size_t>(w[l + 1]) * w[l], w[l + 1]);
  }
  ConstBiasMap bias(std::size_t l) const {
    const auto w = arch_.widths();
    return ConstBiasMap(params_.data() + arch_.layer_offset(l) + static_cast<std::size_t>(w[l + 1]) * w[l],
                        w[l + 1]);
  }

 private:
  Architecture arch_;
  VectorType params_;
};

namespace detail {

template <typename Scalar>
void check_batch(const Architecture& arch, const Eigen::Ref<const Matrix<Scalar>>& X,
                 std::span<const int> labels) {
  if (X.rows() == 0) throw std::invalid_argument("batch is empty");
  if (X.cols() != arch.input_dim)
    throw std::invalid_argument("batch feature dimension " + std::to_string(X.cols()) +
                                " does not match model input " + std::to_string(arch.input_dim));
  if (static_cast<std::size_t>(X.rows()) != labels.size())
    throw std::invalid_argument("batch feature/label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= arch.n_classes) throw std::invalid_argument("label out of range");
}

/// Activations per layer: acts[0] = X, acts[l] = tanh(...) for hidden layers,
/// acts.back() = logits.
template <typename Scalar>
std::vector<Matrix<Scalar>> forward_pass(const Model<Scalar>& model, const Eigen::Ref<const Matrix<Scalar>>& X) {
  std::vector<Matrix<Scalar>> acts;
  acts.reserve(model.architecture().n_layers() + 1);
  acts.emplace_back(X);
  const std::size_t L = model.architecture().n_layers();
  for (std::size_t l = 0; l < L; ++l) {
    Matrix<Scalar> z = acts.back() * model.weight(l).transpose();
    z.rowwise() += model.bias(l).transpose();
    if (l + 1 < L) z = z.array().tanh().matrix();
    acts.push_back(std::move(z));
  }
  return acts;
}

/// Row-wise log-softmax.
template <typename Scalar>
Matrix<Scalar> log_softmax(const Matrix<Scalar>& logits) {
  Vector<Scalar> row_max = logits.rowwise().maxCoeff();
  Matrix<Scalar> shifted = logits.colwise() - row_max;
  Vector<Scalar> lse = shifted.array().exp().rowwise().sum().log().matrix();
  return shifted.colwise() - lse;
}

}  // namespace detail

/// Mean cross-entropy of softmax outputs over the batch.
template <typename Scalar>
Scalar forward_loss(const Model<Scalar>& model, const Eigen::Ref<const Matrix<std::type_identity_t<Scalar>>>& X,
                    std::span<const int> labels) {
  detail::check_batch<Scalar>(model.architecture(), X, labels);
  const auto acts = detail::forward_pass(model, X);
  const Matrix<Scalar> logp = detail::log_softmax<Scalar>(acts.back());
  Scalar total = 0;
  for (Eigen::Index i = 0; i < logp.rows(); ++i) total -= logp(i, labels[static_cast<std::size_t>(i)]);
  return total / static_cast<Scalar>(logp.rows());
}

/// Mean loss and its exact gradient in flat parameter order.
template <typename Scalar>
std::pair<Scalar, Vector<Scalar>> loss_and_gradient(const Model<Scalar>& model,
                                                    const Eigen::Ref<const Matrix<std::type_identity_t<Scalar>>>& X,
                                                    std::span<const int> labels) {
  const Architecture& arch = model.architecture();
  detail::check_batch<Scalar>(arch, X, labels);
  const auto acts = detail::forward_pass(model, X);
  const Matrix<Scalar> logp = detail::log_softmax<Scalar>(acts.back());
  const auto m = static_cast<Scalar>(X.rows());

  Scalar loss = 0;
  Matrix<Scalar> delta = logp.array().exp().matrix();  // softmax
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    loss -= logp(i, y);
    delta(i, y) -= Scalar(1);
  }
  loss /= m;
  delta /= m;

  Model<Scalar> grad(arch);
  for (std::size_t l = arch.n_layers(); l-- > 0;) {
    grad.weight(l) = delta.transpose() * acts[l];
    grad.bias(l) = delta.colwise().sum().transpose();
    if (l > 0) {
      const Matrix<Scalar>& a = acts[l];
      Matrix<Scalar> upstream = delta * model.weight(l);
      delta = (upstream.array() * (Scalar(1) - a.array().square())).matrix();
    }
  }
  return {loss, std::move(grad.params())};
}

template <typename Scalar>
Vector<Scalar> backward(const Model<Scalar>& model, const Eigen::Ref<const Matrix<std::type_identity_t<Scalar>>>& X,
                        std::span<const int> labels) {
  return loss_and_gradient(model, X, labels).second;
}

/// Argmax class per row, ties to the lowest class index.
template <typename Scalar>
std::vector<int> predict(const Model<Scalar>& model, const Eigen::Ref<const Matrix<std::type_identity_t<Scalar>>>& X) {
  const auto acts = detail::forward_pass(model, X);
  const Matrix<Scalar>& logits = acts.back();
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.cols(); ++k)
      if (logits(i, k) > logits(i, best)) best = k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

/// Top-1 accuracy in [0, 1].
template <typename Scalar>
double evaluate(const Model<Scalar>& model, const Eigen::Ref<const Matrix<std::type_identity_t<Scalar>>>& X,
                std::span<const int> labels) {
  detail::check_batch<Scalar>(model.architecture(), X, labels);
  const auto pred = predict(model, X);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

struct Milestone {
  int epoch = 0;
  double factor = 1.0;
  friend bool operator==(const Milestone&, const Milestone&) = default;
};

template <typename Scalar>
struct OptimizerState {
  Vector<Scalar> momentum_buffer;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double base_lr = 0.1;
  std::vector<Milestone> schedule;

  OptimizerState() = default;
  OptimizerState(std::size_t n_params, double momentum_, double weight_decay_, double base_lr_,
                 std::vector<Milestone> schedule_ = {})
      : momentum_buffer(Vector<Scalar>::Zero(static_cast<Eigen::Index>(n_params))),
        momentum(momentum_),
        weight_decay(weight_decay_),
        base_lr(base_lr_),
        schedule(std::move(schedule_)) {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
    if (!(base_lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  }

  /// base_lr times the product of the factors of every milestone <= epoch.
  double lr_at(int epoch) const {
    double lr = base_lr;
    for (const auto& m : schedule)
      if (m.epoch <= epoch) lr *= m.factor;
    return lr;
  }
};

/// Coupled weight decay: buf <- momentum*buf + (grad + wd*params); params <- params - lr*buf.
template <typename Scalar, typename Derived>
void sgd_momentum_step(OptimizerState<Scalar>& state, Vector<Scalar>& params,
                       const Eigen::MatrixBase<Derived>& grad, double lr) {
  if (params.size() != grad.size() || params.size() != state.momentum_buffer.size())
    throw std::invalid_argument("sgd_momentum_step: shape mismatch");
  const auto mu = static_cast<Scalar>(state.momentum);
  const auto wd = static_cast<Scalar>(state.weight_decay);
  state.momentum_buffer = mu * state.momentum_buffer + (grad + wd * params);
  params -= static_cast<Scalar>(lr) * state.momentum_buffer;
}

/// Linear scaling rule: base_lr * (current global batch / base global batch).
inline double scale_lr(double base_lr, double sum_rates, double base_global_batch) {
  if (!(base_global_batch >= 1.0)) throw std::invalid_argument("scale_lr: base global batch must be >= 1");
  if (!(sum_rates >= 1.0)) throw std::invalid_argument("scale_lr: sum of rates must be >= 1");
  return base_lr * sum_rates / base_global_batch;
}

// Parameter checkpoints: a text header followed by raw little-endian float64 values.
//
//   streamsgd-params 1
//   arch <input_dim> <n_hidden> [h1] [h2] <n_classes>
//   count <n>
//   <n * 8 bytes>
void save_checkpoint(const std::string& path, const Model<double>& model);
Model<double> load_checkpoint(const std::string& path);

}  // namespace streamsgd
