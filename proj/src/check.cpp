#include "lcz/check.hpp"

#include <cmath>
#include <memory>
#include <numeric>

#include "lcz/autodiff.hpp"
#include "lcz/perturb.hpp"
#include "lcz/regressor.hpp"
#include "lcz/rng.hpp"
#include "lcz/vae.hpp"

namespace lcz::check {

using ad::Graph;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from 0, for ops with a kink there.
Tensor off_kink(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t(r, c);
  for (auto& v : t.data) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return t;
}

// Contracting with a fixed random tensor gives every output element a
// distinct adjoint.
Var contract(Graph& g, Var v, const Tensor& w) { return g.sum(g.mul(v, g.constant(w))); }

struct Case {
  std::string name;
  std::function<double(Rng&, double)> run;  // one random point, returns error
};

std::vector<Case> primitive_cases() {
  std::vector<Case> cs;
  auto unary = [&](std::string name, Var (Graph::*op)(Var), bool kink, double lo, double hi) {
    cs.push_back({name, [op, kink, lo, hi](Rng& rng, double h) {
                    const Tensor x = kink ? off_kink(rng, 3, 4) : random_tensor(rng, 3, 4, lo, hi);
                    const Tensor w = random_tensor(rng, 3, 4);
                    return ad::check_gradient([&](Graph& g, Var a) { return contract(g, (g.*op)(a), w); }, x, h);
                  }});
  };
  auto binary = [&](std::string name, Var (Graph::*op)(Var, Var)) {
    cs.push_back({name, [op](Rng& rng, double h) {
                    const Tensor w = random_tensor(rng, 3, 4);
                    return ad::check_gradient(
                        [&](Graph& g, std::span<const Var> v) { return contract(g, (g.*op)(v[0], v[1]), w); },
                        {random_tensor(rng, 3, 4), random_tensor(rng, 3, 4)}, h);
                  }});
  };
  binary("add", &Graph::add);
  binary("sub", &Graph::sub);
  binary("mul", &Graph::mul);
  unary("relu", &Graph::relu, true, 0, 0);
  unary("tanh", &Graph::tanh, false, -2.0, 2.0);
  unary("exp", &Graph::exp, false, -2.0, 2.0);
  unary("log", &Graph::log, false, 0.2, 3.0);
  unary("square", &Graph::square, false, -2.0, 2.0);
  unary("abs", &Graph::abs, true, 0, 0);
  cs.push_back({"scale", [](Rng& rng, double h) {
                  const double k = rng.uniform(-3.0, 3.0);
                  const Tensor w = random_tensor(rng, 3, 4);
                  return ad::check_gradient([&](Graph& g, Var a) { return contract(g, g.scale(a, k), w); },
                                            random_tensor(rng, 3, 4), h);
                }});
  cs.push_back({"add_scalar", [](Rng& rng, double h) {
                  const double k = rng.uniform(-3.0, 3.0);
                  const Tensor w = random_tensor(rng, 3, 4);
                  return ad::check_gradient(
                      [&](Graph& g, Var a) { return contract(g, g.square(g.add_scalar(a, k)), w); },
                      random_tensor(rng, 3, 4), h);
                }});
  cs.push_back({"matmul", [](Rng& rng, double h) {
                  const Tensor w = random_tensor(rng, 3, 5);
                  return ad::check_gradient(
                      [&](Graph& g, std::span<const Var> v) { return contract(g, g.matmul(v[0], v[1]), w); },
                      {random_tensor(rng, 3, 4), random_tensor(rng, 4, 5)}, h);
                }});
  cs.push_back({"affine", [](Rng& rng, double h) {
                  const Tensor w = random_tensor(rng, 3, 5);
                  return ad::check_gradient(
                      [&](Graph& g, std::span<const Var> v) { return contract(g, g.affine(v[0], v[1], v[2]), w); },
                      {random_tensor(rng, 3, 4), random_tensor(rng, 4, 5), random_tensor(rng, 1, 5)}, h);
                }});
  cs.push_back({"sum", [](Rng& rng, double h) {
                  return ad::check_gradient([](Graph& g, Var a) { return g.square(g.sum(a)); },
                                            random_tensor(rng, 3, 4), h);
                }});
  cs.push_back({"mean", [](Rng& rng, double h) {
                  return ad::check_gradient([](Graph& g, Var a) { return g.square(g.mean(a)); },
                                            random_tensor(rng, 3, 4), h);
                }});
  cs.push_back({"sum_rows", [](Rng& rng, double h) {
                  const Tensor w = random_tensor(rng, 3, 1);
                  return ad::check_gradient([&](Graph& g, Var a) { return contract(g, g.sum_rows(a), w); },
                                            random_tensor(rng, 3, 4), h);
                }});
  cs.push_back({"gather", [](Rng& rng, double h) {
                  // Repeated indices exercise the scatter-add.
                  auto idx = std::make_shared<std::vector<std::size_t>>(10);
                  for (auto& i : *idx) i = rng.index(12);
                  const Tensor w = random_tensor(rng, 2, 5);
                  return ad::check_gradient([&](Graph& g, Var a) { return contract(g, g.gather(a, idx, 2, 5), w); },
                                            random_tensor(rng, 3, 4), h);
                }});
  cs.push_back({"stop_gradient", [](Rng& rng, double) {
                  // d/dx sum(x ⊙ sg(x)) must be sg(x) alone: the blocked branch adds nothing.
                  const Tensor x = random_tensor(rng, 3, 4);
                  Graph g;
                  const Var a = g.input(x);
                  g.backward(g.sum(g.mul(a, g.stop_gradient(a))));
                  double err = 0.0;
                  for (std::size_t i = 0; i < x.size(); ++i)
                    err = std::max(err, std::fabs(g.adjoint(a).data[i] - x.data[i]));
                  return err;
                }});
  return cs;
}

Case vae_case(vae::Architecture arch) {
  const std::string name = std::string("vae_elbo_") + vae::to_string(arch);
  return {name, [arch](Rng& rng, double h) {
            vae::VaeShape shape;
            shape.channels = 2;
            shape.height = 4;
            shape.width = 4;
            shape.latent_dim = 3;
            shape.arch = arch;
            shape.patch_channels1 = 3;
            shape.patch_channels2 = 4;
            shape.hidden = 6;
            const vae::VaeModel model(shape, rng.index(1u << 30) + 1);
            // Random weights and biases: with the zero initial biases a dead
            // layer puts the next pre-activation exactly on the relu kink.
            std::vector<Tensor> point;
            for (const auto& p : model.parameters()) point.push_back(random_tensor(rng, p.value.rows, p.value.cols, -0.5, 0.5));
            const std::size_t batch = 2;
            const Tensor x = random_tensor(rng, batch, shape.input_size());
            Tensor eps(batch, shape.latent_dim);
            for (auto& e : eps.data) e = rng.normal();
            const double lambda = rng.uniform(0.1, 1.0);
            return ad::check_gradient(
                [&](Graph& g, std::span<const Var> p) {
                  const Var xv = g.constant(x);
                  const auto enc = model.encode(g, p, xv);
                  // c = μ + exp(logvar / 2) ⊙ ε
                  const Var c = g.add(enc.mu, g.mul(g.exp(g.scale(enc.logvar, 0.5)), g.constant(eps)));
                  return vae::elbo_loss(g, xv, model.decode(g, p, c), enc.mu, enc.logvar, lambda);
                },
                point, h);
          }};
}

Case regressor_case(reg::Activation act) {
  return {std::string("regressor_l1_") + reg::to_string(act), [act](Rng& rng, double h) {
            const reg::RegressorShape shape{4, 6, 5, act};
            const reg::RegressorModel model(shape, rng.index(1u << 30) + 1);
            // Random weights and biases: with the zero initial biases a dead
            // layer puts the next pre-activation exactly on the relu kink.
            std::vector<Tensor> point;
            for (const auto& p : model.parameters()) point.push_back(random_tensor(rng, p.value.rows, p.value.cols, -0.5, 0.5));
            const Tensor c = random_tensor(rng, 3, 4);
            // Targets far from any prediction keep |·| off its kink.
            Tensor y(3, 1);
            for (auto& v : y.data) v = rng.uniform(5.0, 10.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            return ad::check_gradient(
                [&](Graph& g, std::span<const Var> p) {
                  return g.mean(g.abs(g.sub(model.forward(g, p, g.constant(c)), g.constant(y))));
                },
                point, h);
          }};
}

Case code_gradient_case() {
  return {"regressor_grad_wrt_code", [](Rng& rng, double h) {
            const reg::RegressorShape shape{5, 7, 4, reg::Activation::Tanh};
            reg::RegressorModel model(shape, rng.index(1u << 30) + 1);
            model.set_target_standardization(290.0, rng.uniform(0.5, 3.0));
            std::vector<double> c(5);
            for (auto& v : c) v = rng.uniform(-1.0, 1.0);
            const auto g = model.grad_wrt_code(c);
            double err = 0.0;
            for (std::size_t i = 0; i < c.size(); ++i) {
              auto up = c, down = c;
              up[i] += h;
              down[i] -= h;
              const double numeric = (model.predict(up) - model.predict(down)) / (2.0 * h);
              err = std::max(err, std::fabs(g[i] - numeric) / std::max(1.0, std::fabs(g[i])));
            }
            return err;
          }};
}

}  // namespace

GradientSuite gradient_suite(std::uint64_t seed, std::size_t points, double h) {
  auto cases = primitive_cases();
  cases.push_back(vae_case(vae::Architecture::Patch));
  cases.push_back(vae_case(vae::Architecture::Mlp));
  cases.push_back(regressor_case(reg::Activation::Relu));
  cases.push_back(regressor_case(reg::Activation::Tanh));
  cases.push_back(code_gradient_case());

  GradientSuite out;
  for (const auto& c : cases) {
    Rng rng(derive_seed(seed, "check/" + c.name));
    CaseResult r{c.name, 0.0};
    for (std::size_t k = 0; k < points; ++k) r.max_error = std::max(r.max_error, c.run(rng, h));
    out.max_error = std::max(out.max_error, r.max_error);
    out.cases.push_back(r);
  }
  return out;
}

StepSuite step_suite(std::uint64_t seed, std::size_t cases, std::size_t norm_cases, std::size_t alternatives) {
  StepSuite out;
  Rng rng(derive_seed(seed, "check/step"));
  auto draw = [&](std::vector<double>& g, double& dt, std::size_t min_n) {
    const std::size_t n = min_n + rng.index(65 - min_n);
    const double scale = std::pow(10.0, rng.uniform(-3.0, 3.0));
    g.assign(n, 0.0);
    double norm = 0.0;
    do {
      for (auto& v : g) v = scale * rng.normal();
      norm = std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0));
    } while (norm < 1e-8);
    do dt = rng.uniform(-10.0, 10.0);
    while (dt == 0.0);
  };

  std::vector<double> g;
  double dt = 0.0;
  for (std::size_t k = 0; k < cases; ++k) {
    draw(g, dt, 1);
    const auto d = perturb::delta_c(g, dt);
    const double dot = std::inner_product(d.begin(), d.end(), g.begin(), 0.0);
    const double nd = std::sqrt(std::inner_product(d.begin(), d.end(), d.begin(), 0.0));
    const double ng = std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0));
    const double cos = dot / (nd * ng);
    out.max_constraint_error = std::max(out.max_constraint_error, std::fabs(dot - dt) / std::fabs(dt));
    out.max_alignment_error = std::max(out.max_alignment_error, std::fabs(1.0 - std::fabs(cos)));
    if ((cos > 0.0) != (dt > 0.0)) ++out.sign_mismatches;
    ++out.cases;
  }

  // At least two dimensions, so constraint-satisfying alternatives exist.
  for (std::size_t k = 0; k < norm_cases; ++k) {
    draw(g, dt, 2);
    const auto d = perturb::delta_c(g, dt);
    const double nd2 = std::inner_product(d.begin(), d.end(), d.begin(), 0.0);
    const double gg = std::inner_product(g.begin(), g.end(), g.begin(), 0.0);
    for (std::size_t a = 0; a < alternatives; ++a) {
      // Any step with alt·g = Δt is Δc plus a component orthogonal to g.
      std::vector<double> p(g.size());
      for (auto& v : p) v = rng.normal() * std::sqrt(nd2);
      const double pg = std::inner_product(p.begin(), p.end(), g.begin(), 0.0);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= pg / gg * g[i];
      double alt2 = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) alt2 += (d[i] + p[i]) * (d[i] + p[i]);
      const double pp = std::inner_product(p.begin(), p.end(), p.begin(), 0.0);
      if (pp <= 1e-24 * nd2) continue;
      if (!(alt2 > nd2)) ++out.norm_violations;
    }
    ++out.norm_cases;
  }
  return out;
}

}  // namespace lcz::check
