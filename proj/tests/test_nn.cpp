#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "streamsgd/nn.hpp"

using namespace streamsgd;

namespace {

Matrix<double> random_batch(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix<double> X(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) X(i, j) = g(rng);
  return X;
}

std::vector<int> random_labels(std::size_t n, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, classes - 1);
  std::vector<int> y(n);
  for (auto& v : y) v = u(rng);
  return y;
}

// Plain-loop forward pass and mean cross-entropy, written without Eigen expressions.
double loop_loss(const Model<double>& m, const Matrix<double>& X, const std::vector<int>& y) {
  const auto w = m.architecture().widths();
  const std::size_t L = m.architecture().n_layers();
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    std::vector<double> a(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index j = 0; j < X.cols(); ++j) a[static_cast<std::size_t>(j)] = X(i, j);
    for (std::size_t l = 0; l < L; ++l) {
      const auto W = m.weight(l);
      const auto b = m.bias(l);
      std::vector<double> z(static_cast<std::size_t>(w[l + 1]));
      for (int o = 0; o < w[l + 1]; ++o) {
        double s = b[o];
        for (int k = 0; k < w[l]; ++k) s += W(o, k) * a[static_cast<std::size_t>(k)];
        z[static_cast<std::size_t>(o)] = l + 1 < L ? std::tanh(s) : s;
      }
      a = std::move(z);
    }
    double mx = a[0];
    for (double v : a) mx = std::max(mx, v);
    double se = 0.0;
    for (double v : a) se += std::exp(v - mx);
    total -= a[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])] - mx - std::log(se);
  }
  return total / static_cast<double>(X.rows());
}

}  // namespace

TEST_CASE("Architecture: parameter layout") {
  Architecture lr{4, {}, 3};
  CHECK(lr.parameter_count() == 3 * 5);
  Architecture mlp{4, {8, 6}, 3};
  CHECK(mlp.parameter_count() == 8 * 5 + 6 * 9 + 3 * 7);
  CHECK(mlp.layer_offset(1) == 40);
  CHECK(mlp.layer_offset(2) == 94);
  CHECK_THROWS_AS((Architecture{4, {1, 2, 3}, 3}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((Architecture{4, {}, 1}.validate()), std::invalid_argument);

  Model<double> m(mlp);
  m.bias(1)[2] = 5.0;
  CHECK(m.params()[40 + 6 * 8 + 2] == 5.0);
  m.weight(0)(1, 3) = 2.0;
  CHECK(m.params()[1 * 4 + 3] == 2.0);
}

TEST_CASE("forward_loss matches a scalar-loop oracle") {
  for (const auto& hidden : {std::vector<int>{}, std::vector<int>{7}, std::vector<int>{6, 5}}) {
    const auto m = Model<double>::xavier({5, hidden, 4}, 21);
    const auto X = random_batch(13, 5, 2);
    const auto y = random_labels(13, 4, 3);
    CHECK(forward_loss(m, X, y) == doctest::Approx(loop_loss(m, X, y)).epsilon(1e-12));
  }
}

TEST_CASE("loss_and_gradient agrees with central finite differences") {
  for (const auto& hidden : {std::vector<int>{}, std::vector<int>{7}, std::vector<int>{6, 5}}) {
    auto m = Model<double>::xavier({5, hidden, 4}, 9);
    const auto X = random_batch(11, 5, 4);
    const auto y = random_labels(11, 4, 5);
    const auto [loss, grad] = loss_and_gradient(m, X, y);
    CHECK(loss == doctest::Approx(loop_loss(m, X, y)).epsilon(1e-12));
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < m.params().size(); ++i) {
      const double saved = m.params()[i];
      m.params()[i] = saved + h;
      const double up = loop_loss(m, X, y);
      m.params()[i] = saved - h;
      const double down = loop_loss(m, X, y);
      m.params()[i] = saved;
      const double fd = (up - down) / (2 * h);
      CHECK(std::abs(grad[i] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("batch validation") {
  const auto m = Model<double>::xavier({3, {4}, 2}, 1);
  const Matrix<double> X = Matrix<double>::Zero(2, 3);
  CHECK_THROWS_AS(forward_loss(m, X, std::vector<int>{0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(forward_loss(m, X, std::vector<int>{0}), std::invalid_argument);
  CHECK_THROWS_AS(forward_loss(m, Matrix<double>(Matrix<double>::Zero(2, 4)), std::vector<int>{0, 1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(forward_loss(m, Matrix<double>(0, 3), std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("predict breaks ties toward the lowest class and evaluate counts matches") {
  Model<double> m({2, {}, 3});  // all-zero logits
  const Matrix<double> X = Matrix<double>::Ones(4, 2);
  CHECK(predict(m, X) == std::vector<int>{0, 0, 0, 0});
  CHECK(evaluate(m, X, std::vector<int>{0, 1, 0, 2}) == doctest::Approx(0.5));
}

TEST_CASE("sgd_momentum_step: two-step unroll") {
  OptimizerState<double> st(2, 0.9, 0.01, 0.1);
  Vector<double> w(2);
  w << 1.0, -2.0;
  Vector<double> g1(2), g2(2);
  g1 << 0.5, 0.25;
  g2 << -1.0, 2.0;
  const double lr = 0.1;

  // Hand-unrolled oracle.
  const double mu = 0.9, wd = 0.01;
  double v[2] = {0, 0}, p[2] = {1.0, -2.0};
  const double G1[2] = {0.5, 0.25}, G2[2] = {-1.0, 2.0};
  for (int k = 0; k < 2; ++k) {
    v[k] = mu * v[k] + G1[k] + wd * p[k];
    p[k] -= lr * v[k];
  }
  for (int k = 0; k < 2; ++k) {
    v[k] = mu * v[k] + G2[k] + wd * p[k];
    p[k] -= lr * v[k];
  }
  sgd_momentum_step(st, w, g1, lr);
  sgd_momentum_step(st, w, g2, lr);
  CHECK(w[0] == doctest::Approx(p[0]).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(p[1]).epsilon(1e-14));

  Vector<double> bad(3);
  CHECK_THROWS_AS(sgd_momentum_step(st, w, bad, lr), std::invalid_argument);
  CHECK_THROWS_AS(OptimizerState<double>(2, 1.0, 0.0, 0.1), std::invalid_argument);
}

TEST_CASE("learning-rate schedule and linear scaling") {
  OptimizerState<double> st(1, 0.9, 0.0, 0.1, {{10, 0.1}, {20, 0.1}});
  CHECK(st.lr_at(0) == doctest::Approx(0.1));
  CHECK(st.lr_at(9) == doctest::Approx(0.1));
  CHECK(st.lr_at(10) == doctest::Approx(0.01));
  CHECK(st.lr_at(25) == doctest::Approx(0.001));

  CHECK(scale_lr(0.1, 512, 256) == doctest::Approx(0.2));
  CHECK(scale_lr(0.1, 128, 256) == doctest::Approx(0.05));
  CHECK_THROWS_AS(scale_lr(0.1, 0, 256), std::invalid_argument);
  CHECK_THROWS_AS(scale_lr(0.1, 10, 0), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto m = Model<double>::xavier({6, {5, 4}, 3}, 77);
  const auto path = (std::filesystem::temp_directory_path() / "streamsgd_ckpt_test.params").string();
  save_checkpoint(path, m);
  const auto back = load_checkpoint(path);
  CHECK(back.architecture() == m.architecture());
  CHECK(back.params() == m.params());
  std::filesystem::remove(path);
  CHECK_THROWS(load_checkpoint(path));
}

TEST_CASE("float instantiation trains a separable problem") {
  Model<float> m = Model<float>::xavier({2, {8}, 2}, 3);
  Matrix<float> X(40, 2);
  std::vector<int> y(40);
  std::mt19937 rng(1);
  std::normal_distribution<float> g(0.0f, 0.3f);
  for (int i = 0; i < 40; ++i) {
    y[static_cast<std::size_t>(i)] = i % 2;
    X(i, 0) = (i % 2 ? 2.0f : -2.0f) + g(rng);
    X(i, 1) = g(rng);
  }
  OptimizerState<float> st(m.params().size(), 0.9, 0.0, 0.1);
  const float first = forward_loss(m, X, y);
  for (int k = 0; k < 50; ++k) sgd_momentum_step(st, m.params(), backward(m, X, y), 0.1);
  CHECK(forward_loss(m, X, y) < first);
  CHECK(evaluate(m, X, y) == doctest::Approx(1.0));
}
