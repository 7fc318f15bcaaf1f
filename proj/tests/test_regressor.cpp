#include <doctest.h>

#include <cmath>

#include "lcz/autodiff.hpp"
#include "lcz/error.hpp"
#include "lcz/regressor.hpp"
#include "lcz/rng.hpp"

using namespace lcz;
using namespace lcz::reg;

namespace {

RegressorShape shape(std::size_t n, Activation a = Activation::Relu) {
  RegressorShape s;
  s.latent_dim = n;
  s.hidden1 = 12;
  s.hidden2 = 6;
  s.activation = a;
  return s;
}

std::vector<double> random_code(Rng& rng, std::size_t n) {
  std::vector<double> c(n);
  for (auto& v : c) v = rng.normal();
  return c;
}

void randomize(RegressorModel& m, Rng& rng) {
  for (auto& p : m.parameters())
    for (auto& v : p.value.data) v = rng.uniform(-0.5, 0.5);
}

// Effective weight row of a linear network: W1·W2·W3 scaled to kelvin.
std::vector<double> linear_row(const RegressorModel& m) {
  const auto& ps = m.parameters();
  ad::Graph g;
  auto w = g.matmul(g.matmul(g.constant(ps[0].value), g.constant(ps[2].value)), g.constant(ps[4].value));
  std::vector<double> out = g.value(w).data;
  for (auto& v : out) v *= m.target_std();
  return out;
}

}  // namespace

TEST_CASE("activation names") {
  CHECK(parse_activation("relu") == Activation::Relu);
  CHECK(parse_activation("tanh") == Activation::Tanh);
  CHECK(parse_activation(to_string(Activation::Linear)) == Activation::Linear);
  CHECK_THROWS_AS(parse_activation("gelu"), UsageError);
}

TEST_CASE("zero weights and biases predict zero") {
  RegressorModel m(shape(5), 1);
  for (auto& p : m.parameters()) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
  Rng rng(2);
  CHECK(m.predict(random_code(rng, 5)) == 0.0);
}

TEST_CASE("predict is deterministic and checks the code length") {
  RegressorModel m(shape(5), 1);
  Rng rng(3);
  const auto c = random_code(rng, 5);
  CHECK(m.predict(c) == m.predict(c));
  CHECK_THROWS_AS(m.predict(std::vector<double>(4, 0.0)), UsageError);
  CHECK_THROWS_AS(m.grad_wrt_code(std::vector<double>(6, 0.0)), UsageError);
}

TEST_CASE("linear network: gradient is the weight row everywhere") {
  Rng rng(4);
  RegressorModel m(shape(6, Activation::Linear), 7);
  randomize(m, rng);
  m.set_target_standardization(290.0, 2.5);
  const auto w = linear_row(m);
  for (int k = 0; k < 20; ++k) {
    const auto g = m.grad_wrt_code(random_code(rng, 6));
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(g[i] == doctest::Approx(w[i]).epsilon(1e-12));
  }
}

TEST_CASE("gradient matches finite differences") {
  for (auto act : {Activation::Relu, Activation::Tanh, Activation::Linear}) {
    Rng rng(5);
    RegressorModel m(shape(6, act), 8);
    randomize(m, rng);
    m.set_target_standardization(290.0, 3.0);
    for (int k = 0; k < 10; ++k) {
      const auto c = random_code(rng, 6);
      const auto g = m.grad_wrt_code(c);
      double err = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) {
        auto hi = c, lo = c;
        hi[i] += 1e-6;
        lo[i] -= 1e-6;
        const double fd = (m.predict(hi) - m.predict(lo)) / 2e-6;
        err = std::max(err, std::fabs(g[i] - fd) / std::max(1.0, std::fabs(g[i])));
      }
      CHECK(err <= 1e-5);
    }
  }
}

TEST_CASE("relu gradient is constant while the activation pattern is fixed") {
  Rng rng(6);
  RegressorModel m(shape(6), 9);
  randomize(m, rng);
  for (int k = 0; k < 20; ++k) {
    const auto c = random_code(rng, 6);
    auto c2 = c;
    for (auto& v : c2) v += 1e-9 * rng.normal();
    CHECK(m.grad_wrt_code(c) == m.grad_wrt_code(c2));
  }
}

TEST_CASE("grad_wrt_code leaves the weights bit-identical") {
  Rng rng(7);
  RegressorModel m(shape(6), 10);
  std::vector<ad::Tensor> before, grads;
  for (const auto& p : m.parameters()) before.push_back(p.value), grads.push_back(p.grad);
  for (int k = 0; k < 5; ++k) m.predict_with_gradient(random_code(rng, 6));
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(m.parameters()[i].value == before[i]);
    CHECK(m.parameters()[i].grad == grads[i]);
  }
}

TEST_CASE("predict_with_gradient agrees with the separate calls") {
  Rng rng(8);
  RegressorModel m(shape(4, Activation::Tanh), 11);
  const auto c = random_code(rng, 4);
  const auto [t, g] = m.predict_with_gradient(c);
  CHECK(t == m.predict(c));
  CHECK(g == m.grad_wrt_code(c));
}

TEST_CASE("evaluate reports signed extremes and exact mean absolute error") {
  RegressorModel m(shape(2, Activation::Linear), 1);
  for (auto& p : m.parameters()) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
  m.set_target_standardization(290.0, 1.0);
  const std::vector<std::vector<double>> codes(4, std::vector<double>{0.0, 0.0});
  const std::vector<double> temps{289.0, 290.5, 293.0, 290.0};
  const auto r = evaluate(m, codes, temps);
  CHECK(r.count == 4);
  CHECK(r.mae == doctest::Approx((1.0 + 0.5 + 3.0 + 0.0) / 4.0));
  CHECK(r.min_signed == doctest::Approx(-3.0));
  CHECK(r.max_signed == doctest::Approx(1.0));
}

TEST_CASE("constant targets converge to a constant predictor") {
  Rng rng(9);
  std::vector<std::vector<double>> codes;
  for (int k = 0; k < 100; ++k) codes.push_back(random_code(rng, 8));
  const std::vector<double> temps(100, 290.0);
  TrainConfig tc;
  const auto r = train_regressor(codes, temps, shape(8), tc);
  CHECK(r.loss_history.size() == 200);
  CHECK(r.report.mae < 1e-3);
}

TEST_CASE("learns a planted relation below twice the noise level") {
  Rng rng(10);
  const double sigma = 0.5;
  std::vector<std::vector<double>> codes;
  std::vector<double> temps;
  for (int k = 0; k < 400; ++k) {
    auto c = random_code(rng, 8);
    temps.push_back(295.0 - 2.0 * c[0] + 1.0 * c[3] + sigma * rng.normal());
    codes.push_back(std::move(c));
  }
  const auto r = train_regressor(codes, temps, shape(8), TrainConfig{});
  CHECK(r.report.count == 80);
  CHECK(r.report.mae < 2.0 * sigma);
}

TEST_CASE("training is seed-deterministic and round trips") {
  Rng rng(11);
  std::vector<std::vector<double>> codes;
  std::vector<double> temps;
  for (int k = 0; k < 50; ++k) {
    codes.push_back(random_code(rng, 4));
    temps.push_back(290.0 + codes.back()[1]);
  }
  TrainConfig tc;
  tc.epochs = 20;
  const auto a = train_regressor(codes, temps, shape(4), tc), b = train_regressor(codes, temps, shape(4), tc);
  CHECK(a.loss_history == b.loss_history);
  CHECK(a.report.mae == b.report.mae);
  const auto back = RegressorModel::from_tensors(a.model.to_tensors());
  CHECK(back.shape() == a.model.shape());
  CHECK(back.predict(codes[0]) == doctest::Approx(a.model.predict(codes[0])).epsilon(1e-5));
}

TEST_CASE("training input errors") {
  const std::vector<std::vector<double>> codes(3, std::vector<double>(4, 0.0));
  CHECK_THROWS_AS(train_regressor(codes, std::vector<double>{1.0, 2.0}, shape(4), TrainConfig{}), UsageError);
  CHECK_THROWS_AS(train_regressor(std::span(codes).first(1), std::vector<double>{1.0}, shape(4), TrainConfig{}),
                  UsageError);
}
