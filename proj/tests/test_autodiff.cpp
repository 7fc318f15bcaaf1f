#include <doctest.h>

#include <cmath>

#include "lcz/autodiff.hpp"
#include "lcz/error.hpp"
#include "lcz/rng.hpp"

using namespace lcz;
using namespace lcz::ad;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("forward values of elementwise ops") {
  Graph g;
  auto a = g.input(Tensor(1, 3, {-1.0, 0.5, 2.0}));
  auto b = g.input(Tensor(1, 3, {3.0, 4.0, -1.0}));
  CHECK(g.value(g.add(a, b)) == Tensor(1, 3, {2.0, 4.5, 1.0}));
  CHECK(g.value(g.sub(a, b)) == Tensor(1, 3, {-4.0, -3.5, 3.0}));
  CHECK(g.value(g.mul(a, b)) == Tensor(1, 3, {-3.0, 2.0, -2.0}));
  CHECK(g.value(g.relu(a)) == Tensor(1, 3, {0.0, 0.5, 2.0}));
  CHECK(g.value(g.abs(a)) == Tensor(1, 3, {1.0, 0.5, 2.0}));
  CHECK(g.value(g.square(a)) == Tensor(1, 3, {1.0, 0.25, 4.0}));
  CHECK(g.value(g.scale(a, 2.0)) == Tensor(1, 3, {-2.0, 1.0, 4.0}));
  CHECK(g.value(g.add_scalar(a, 1.0)) == Tensor(1, 3, {0.0, 1.5, 3.0}));
  CHECK(g.value(g.sum(a)).item() == 1.5);
  CHECK(g.value(g.mean(a)).item() == 0.5);
}

TEST_CASE("matmul, affine and sum_rows") {
  Graph g;
  auto x = g.input(Tensor(2, 2, {1, 2, 3, 4}));
  auto w = g.input(Tensor(2, 3, {1, 0, 1, 0, 1, 1}));
  auto b = g.input(Tensor(1, 3, {10, 20, 30}));
  CHECK(g.value(g.matmul(x, w)) == Tensor(2, 3, {1, 2, 3, 3, 4, 7}));
  CHECK(g.value(g.affine(x, w, b)) == Tensor(2, 3, {11, 22, 33, 13, 24, 37}));
  CHECK(g.value(g.sum_rows(x)) == Tensor(2, 1, {3, 7}));
}

TEST_CASE("shape errors name the operation") {
  Graph g;
  auto a = g.input(Tensor(2, 3));
  auto b = g.input(Tensor(3, 2));
  CHECK_THROWS_AS(g.add(a, b), ShapeError);
  CHECK_THROWS_AS(g.matmul(a, a), ShapeError);
  CHECK_THROWS_AS(g.affine(a, b, g.input(Tensor(1, 3))), ShapeError);
  try {
    g.mul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("mul") != std::string::npos);
  }
  CHECK_THROWS_AS(Tensor(2, 2, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("backward requires a scalar root") {
  Graph g;
  auto a = g.input(Tensor(2, 2, 1.0));
  CHECK_THROWS_AS(g.backward(a), UsageError);
}

TEST_CASE("gradient of a simple expression") {
  // f = sum(x*x + 3x) -> df/dx = 2x + 3
  Graph g;
  auto x = g.input(Tensor(1, 3, {1.0, -2.0, 0.5}));
  auto f = g.sum(g.add(g.square(x), g.scale(x, 3.0)));
  g.backward(f);
  CHECK(g.adjoint(x) == Tensor(1, 3, {5.0, -1.0, 4.0}));
}

TEST_CASE("adjoints accumulate over fan-out") {
  Graph g;
  auto x = g.input(Tensor::scalar(3.0));
  auto f = g.add(g.mul(x, x), x);
  g.backward(f);
  CHECK(g.adjoint(x).item() == 7.0);
}

TEST_CASE("stop_gradient blocks the adjoint, constants get none") {
  Graph g;
  auto x = g.input(Tensor::scalar(2.0));
  auto c = g.constant(Tensor::scalar(5.0));
  auto f = g.add(g.mul(g.stop_gradient(x), x), c);
  g.backward(f);
  CHECK(g.adjoint(x).item() == 2.0);
  CHECK_FALSE(g.has_adjoint(c));
  CHECK(g.adjoint(c).size() == 0);
}

TEST_CASE("forward re-evaluates after rebinding") {
  Graph g;
  auto x = g.input(Tensor::scalar(1.0));
  auto f = g.exp(x);
  g.bind(x, Tensor::scalar(0.0));
  g.forward();
  CHECK(g.value(f).item() == 1.0);
  g.bind(x, Tensor(2, 1));
  CHECK_NOTHROW(g.forward());
}

TEST_CASE("finite-difference agreement on random compositions") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x0 = random_tensor(rng, 3, 4);
    const auto w0 = random_tensor(rng, 4, 2);
    const auto b0 = random_tensor(rng, 1, 2);
    const double err = check_gradient(
        [](Graph& g, std::span<const Var> v) {
          auto h = g.tanh(g.affine(v[0], v[1], v[2]));
          auto y = g.add(g.exp(g.scale(h, 0.5)), g.log(g.add_scalar(g.square(h), 1.0)));
          return g.mean(g.mul(y, y));
        },
        {x0, w0, b0});
    CHECK(err <= 1e-6);
  }
}

TEST_CASE("gather reshapes and scatter-adds") {
  Graph g;
  auto x = g.input(Tensor(1, 3, {1.0, 2.0, 3.0}));
  auto idx = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{2, 0, 0, 1});
  auto y = g.gather(x, idx, 2, 2);
  CHECK(g.value(y) == Tensor(2, 2, {3.0, 1.0, 1.0, 2.0}));
  g.backward(g.sum(y));
  CHECK(g.adjoint(x) == Tensor(1, 3, {2.0, 1.0, 1.0}));
}

TEST_CASE("check_gradient rejects non-finite functions") {
  CHECK_THROWS_AS(check_gradient([](Graph& g, Var x) { return g.sum(g.log(x)); }, Tensor(1, 2, {-1.0, 1.0})),
                  NumericError);
}

TEST_CASE("parameter gradients accumulate until zeroed") {
  Parameter p("w", Tensor(1, 2, {1.0, 2.0}));
  for (int k = 0; k < 2; ++k) {
    Graph g;
    auto w = g.parameter(p);
    g.backward(g.sum(g.square(w)));
    g.accumulate_parameter_grads();
  }
  CHECK(p.grad == Tensor(1, 2, {4.0, 8.0}));
  p.zero_grad();
  CHECK(p.grad == Tensor(1, 2, {0.0, 0.0}));
}

TEST_CASE("frozen parameters receive no gradient") {
  Parameter p("w", Tensor::scalar(3.0));
  Graph g;
  auto x = g.input(Tensor::scalar(2.0));
  auto f = g.mul(g.frozen(p), x);
  g.backward(f);
  g.accumulate_parameter_grads();
  CHECK(p.grad.item() == 0.0);
  CHECK(g.adjoint(x).item() == 3.0);
}

TEST_CASE("sgd step is value - lr * grad") {
  Parameter p("w", Tensor(1, 2, {1.0, -1.0}));
  p.grad = Tensor(1, 2, {0.5, 2.0});
  Parameter* ps[] = {&p};
  Sgd(0.1).step(ps);
  CHECK(p.value(0, 0) == doctest::Approx(0.95));
  CHECK(p.value(0, 1) == doctest::Approx(-1.2));
}

TEST_CASE("adam first step moves each coordinate by about lr") {
  Parameter p("w", Tensor(1, 3, {0.0, 0.0, 0.0}));
  p.grad = Tensor(1, 3, {1e-3, -5.0, 0.0});
  Parameter* ps[] = {&p};
  Adam opt(0.01);
  opt.step(ps);
  CHECK(p.value(0, 0) == doctest::Approx(-0.01).epsilon(1e-4));
  CHECK(p.value(0, 1) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(p.value(0, 2) == 0.0);
}

TEST_CASE("adam minimizes a quadratic") {
  Parameter p("w", Tensor(1, 2, {5.0, -3.0}));
  Parameter* ps[] = {&p};
  Adam opt(0.05);
  for (int k = 0; k < 2000; ++k) {
    p.zero_grad();
    Graph g;
    auto w = g.parameter(p);
    auto target = g.constant(Tensor(1, 2, {1.0, 2.0}));
    g.backward(g.sum(g.square(g.sub(w, target))));
    g.accumulate_parameter_grads();
    opt.step(ps);
  }
  CHECK(p.value(0, 0) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(p.value(0, 1) == doctest::Approx(2.0).epsilon(1e-3));
}
