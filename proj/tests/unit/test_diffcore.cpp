// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "finite_difference.hpp"
#include "s2pg/common/random.hpp"
#include "s2pg/diffcore/jacobian.hpp"
#include "s2pg/diffcore/parameter_store.hpp"

using namespace s2pg;
using namespace s2pg::ad;
using s2pg::testing::central_difference;
using s2pg::testing::max_relative_error;

namespace {

// Evaluates `build` on a fresh tape at x and returns (value, gradient).
template <class Fn>
std::pair<double, std::vector<double>> value_and_grad(Fn build, const std::vector<double>& x) {
  Tape tape;
  Tensor v = tape.watch(Tensor::vector(x));
  Tensor loss = build(v);
  const double value = loss.item();
  backward(loss);
  return {value, v.grad()};
}

template <class Fn>
double value_only(Fn build, const std::vector<double>& x) {
  return build(Tensor::vector(x)).item();
}

template <class Fn>
double fd_error(Fn build, const std::vector<double>& x) {
  const auto analytic = value_and_grad(build, x).second;
  const auto numeric = central_difference([&](const std::vector<double>& y) { return value_only(build, y); }, x);
  return max_relative_error(analytic, numeric);
}

// log N(x; m, diag(c)) via explicit determinant and inverse of the dense matrix.
double dense_gaussian_logpdf(const std::vector<double>& x, const std::vector<double>& m,
                             const std::vector<double>& c) {
  const std::size_t d = x.size();
  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0)), inv = cov;
  for (std::size_t i = 0; i < d; ++i) cov[i][i] = c[i];
  double det = 1.0;
  for (std::size_t i = 0; i < d; ++i) det *= cov[i][i];
  for (std::size_t i = 0; i < d; ++i) inv[i][i] = 1.0 / cov[i][i];
  double quad = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) quad += (x[i] - m[i]) * inv[i][j] * (x[j] - m[j]);
  return -0.5 * (quad + std::log(std::pow(2.0 * std::numbers::pi, static_cast<double>(d)) * det));
}

}  // namespace

TEST_CASE("forward ops: trivial values") {
  const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor v = Tensor::vector({1, 2});
  CHECK(matmul(eye, v).to_vector() == std::vector<double>{1, 2});
  CHECK(ad::tanh(Tensor::zeros({3})).to_vector() == std::vector<double>{0, 0, 0});
  CHECK(softplus(Tensor::scalar(0.0)).item() == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(sum(square(v)).item() == 5.0);
  CHECK(mean(v).item() == 1.5);
  CHECK(concat({v, v}, 0).size() == 4);
  CHECK(slice(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}), 1, 1, 3).to_vector() ==
        std::vector<double>{2, 3, 5, 6});
}

TEST_CASE("shape errors and numeric errors") {
  CHECK_THROWS_AS(add(Tensor::vector({1, 2}), Tensor::vector({1, 2, 3})), DimensionError);
  CHECK_THROWS_AS(matmul(Tensor::matrix(2, 3, std::vector<double>(6, 1.0)), Tensor::vector({1, 2})),
                  DimensionError);
  CHECK_THROWS_AS(ad::log(Tensor::vector({-1.0})), NumericError);
  CHECK_THROWS_AS(div(Tensor::scalar(1.0), Tensor::scalar(0.0)), NumericError);
  CHECK_THROWS_AS(Tensor::constant({2, 2}, {1, 2, 3}), DimensionError);
}

TEST_CASE("gaussian_logpdf") {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  CHECK(gaussian_logpdf(Tensor::vector({0.3}), Tensor::vector({0.3}), Tensor::vector({1.0})).item() ==
        doctest::Approx(-half_log_2pi).epsilon(1e-12));
  CHECK(gaussian_logpdf(Tensor::vector({1.3}), Tensor::vector({0.3}), Tensor::vector({1.0})).item() ==
        doctest::Approx(-0.5 - half_log_2pi).epsilon(1e-12));

  const std::vector<double> x{0.4, -1.2, 2.0}, m{0.1, 0.5, 1.0}, c{0.7, 2.5, 0.05};
  CHECK(gaussian_logpdf(Tensor::vector(x), Tensor::vector(m), Tensor::vector(c)).item() ==
        doctest::Approx(dense_gaussian_logpdf(x, m, c)).epsilon(1e-12));

  CHECK_THROWS_AS(gaussian_logpdf(Tensor::vector({0.0}), Tensor::vector({0.0}), Tensor::vector({0.0})),
                  DomainError);
  CHECK_THROWS_AS(gaussian_logpdf(Tensor::vector({0.0, 1.0}), Tensor::vector({0.0}), Tensor::vector({1.0})),
                  DimensionError);

  // Riemann sum over +-3 sigma plus the known tail mass.
  const double sigma = 0.7, step = 1e-4;
  double mass = 0.0;
  for (double u = -3.0 * sigma; u < 3.0 * sigma; u += step) {
    mass += std::exp(gaussian_logpdf(Tensor::vector({u + step / 2}), Tensor::vector({0.0}),
                                     Tensor::vector({sigma * sigma}))
                         .item()) *
            step;
  }
  CHECK(std::abs(mass + std::erfc(3.0 / std::sqrt(2.0)) - 1.0) < 1e-3);
}

TEST_CASE("backward: quadratic and consumed tape") {
  auto [value, grad] = value_and_grad([](const Tensor& t) { return sum(square(t)); }, {1.0, -2.0});
  CHECK(value == 5.0);
  CHECK(grad == std::vector<double>{2.0, -4.0});

  Tape tape;
  Tensor t = tape.watch(Tensor::vector({1.0, 2.0}));
  CHECK_THROWS_AS(backward(t), DimensionError);
  Tensor loss = sum(t);
  backward(loss);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(backward(loss), TapeError);
  CHECK_THROWS_AS(backward(Tensor::scalar(1.0)), TapeError);
}

TEST_CASE("backward: gaussian log-density of an affine mean") {
  // x = [W (2x3) | b (2) | input (3)], loss = log N(y; W u + b, diag(0.3, 1.7))
  Rng rng(3);
  const auto x = rng.normal_vector(11);
  auto build = [](const Tensor& v) {
    const Tensor W = reshape(slice(v, 0, 0, 6), {2, 3});
    const Tensor b = slice(v, 0, 6, 8);
    const Tensor u = slice(v, 0, 8, 11);
    const Tensor m = add(matmul(W, u), b);
    return gaussian_logpdf(Tensor::vector({0.2, -0.4}), m, Tensor::vector({0.3, 1.7}));
  };
  CHECK(fd_error(build, x) < 1e-5);
}

TEST_CASE("backward: unrolled tanh recurrence") {
  // z_{t+1} = tanh(A z_t + B s_t), loss = ||z_3||^2, parameters A (2x2), B (2x1)
  Rng rng(7);
  const auto x = rng.normal_vector(6);
  const std::vector<double> inputs{0.5, -1.0, 0.25};
  auto build = [&](const Tensor& v) {
    const Tensor A = reshape(slice(v, 0, 0, 4), {2, 2});
    const Tensor B = reshape(slice(v, 0, 4, 6), {2, 1});
    Tensor z = Tensor::vector({0.1, -0.2});
    for (double s : inputs) z = ad::tanh(add(matmul(A, z), matmul(B, Tensor::vector({s}))));
    return sum(square(z));
  };
  CHECK(fd_error(build, x) < 1e-4);
}

TEST_CASE("backward: every op against finite differences") {
  Rng rng(11);
  auto x = rng.normal_vector(6);
  for (auto& v : x) v = 0.5 + std::abs(v);  // keep log/div away from poles
  auto matrix = [](const Tensor& v) { return reshape(v, {2, 3}); };
  std::vector<std::function<Tensor(const Tensor&)>> cases = {
      [](const Tensor& v) { return sum(mul(v, ad::sigmoid(v))); },
      [](const Tensor& v) { return sum(softplus(scale(v, -1.3))); },
      [](const Tensor& v) { return sum(ad::exp(scale(v, 0.3))); },
      [](const Tensor& v) { return sum(ad::log(v)); },
      [](const Tensor& v) { return sum(div(Tensor::scalar(1.0), v)); },
      [](const Tensor& v) { return mean(ad::relu(add_scalar(v, -1.0))); },
      [&](const Tensor& v) { return sum(square(sum_cols(matrix(v)))); },
      [&](const Tensor& v) { return sum(mul_row(matrix(v), Tensor::vector({1.0, -2.0, 0.5}))); },
      [&](const Tensor& v) { return sum(ad::tanh(matmul(matrix(v), reshape(v, {3, 2})))); },
      [](const Tensor& v) { return sum(minimum(v, scale(v, 0.9))); },
      [](const Tensor& v) { return sum(square(concat({slice(v, 0, 3, 6), neg(slice(v, 0, 0, 3))}, 0))); },
      [](const Tensor& v) { return sum(square(clamp(v, 0.2, 1.0))); },
      [](const Tensor& v) { return sub(sum(v), mean(square(v))); },
      [](const Tensor& v) {
        return sum(gaussian_logpdf_rows(Tensor::matrix(2, 3, {0.1, 0.2, 0.3, -0.1, 0.4, 0.0}),
                                        reshape(v, {2, 3}), scale(slice(v, 0, 0, 3), 0.1)));
      },
  };
  for (std::size_t i = 0; i < cases.size(); ++i) {
    CAPTURE(i);
    CHECK(fd_error(cases[i], x) < 1e-4);
  }
}

TEST_CASE("backward: linearity and determinism") {
  Rng rng(5);
  const auto x = rng.normal_vector(4);
  auto l1 = [](const Tensor& v) { return sum(ad::tanh(square(v))); };
  auto l2 = [](const Tensor& v) { return sum(ad::sigmoid(scale(v, 2.0))); };
  const auto g1 = value_and_grad(l1, x).second;
  const auto g2 = value_and_grad(l2, x).second;
  const auto g = value_and_grad([&](const Tensor& v) { return add(scale(l1(v), 0.7), scale(l2(v), -1.5)); }, x).second;
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(g[i] == doctest::Approx(0.7 * g1[i] - 1.5 * g2[i]).epsilon(1e-12));
  CHECK(value_and_grad(l1, x).second == g1);
}

TEST_CASE("jacobian_frobenius") {
  const Tensor A = Tensor::matrix(2, 2, {1, 0, 0, 2});
  CHECK(jacobian_frobenius([&](const Tensor& x) { return matmul(A, x); }, Tensor::vector({0.3, 0.1})) ==
        doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));
  CHECK(jacobian_frobenius([](const Tensor& x) { return ad::tanh(x); }, Tensor::zeros({3})) ==
        doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));

  Rng rng(9);
  const auto w1 = rng.normal_vector(12), w2 = rng.normal_vector(8);
  auto net = [&](const Tensor& x) {
    const Tensor h = ad::tanh(matmul(Tensor::matrix(4, 3, w1), x));
    return matmul(Tensor::matrix(2, 4, w2), h);
  };
  const std::vector<double> at{0.2, -0.5, 0.9};
  double fro2 = 0.0;
  for (std::size_t o = 0; o < 2; ++o) {
    const auto col = central_difference([&](const std::vector<double>& y) { return net(Tensor::vector(y))[o]; }, at);
    for (double c : col) fro2 += c * c;
  }
  CHECK(std::abs(jacobian_frobenius(net, Tensor::vector(at)) / std::sqrt(fro2) - 1.0) < 1e-4);
}

TEST_CASE("ParameterStore flatten/unflatten and checkpoints") {
  ParameterStore store;
  store.add("w", {2, 2}, {1, 2, 3, 4});
  store.add("b", {3}, {5, 6, 7}, false);
  CHECK(store.flat_size() == 7);
  Rng rng(1);
  const auto v = rng.normal_vector(7);
  store.unflatten(v);
  CHECK(store.flatten() == v);
  CHECK_THROWS_AS(store.unflatten(std::vector<double>(6)), DimensionError);
  CHECK_THROWS_AS(store.add("w", {1}, {0.0}), InputError);

  Tape tape;
  auto view = store.bind(tape);
  backward(add(sum(square(view[0])), sum(view[1])));
  const auto g = view.gradient();
  for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(2 * v[i]));
  for (std::size_t i = 4; i < 7; ++i) CHECK(g[i] == 0.0);

  const auto path = std::filesystem::temp_directory_path() / "s2pg_ckpt_test.bin";
  save_checkpoint(path, store);
  const auto loaded = load_checkpoint(path);
  CHECK(loaded.same_layout(store));
  CHECK(loaded.flatten() == store.flatten());
  CHECK_FALSE(loaded.trainable(1));
  std::filesystem::remove(path);
}
