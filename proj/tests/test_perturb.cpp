#include <doctest.h>

#include <cmath>
#include <numeric>

#include "lcz/check.hpp"
#include "lcz/error.hpp"
#include "lcz/perturb.hpp"
#include "lcz/rng.hpp"

using namespace lcz;
using namespace lcz::perturb;

namespace {

constexpr std::size_t kLatent = 4;
const raster::GridSpec kGrid{0, 0, 1, 8, 8};

vae::VaeModel small_vae(std::uint64_t seed = 3) {
  vae::VaeShape s;
  s.height = 8;
  s.width = 8;
  s.latent_dim = kLatent;
  s.patch_channels1 = 4;
  s.patch_channels2 = 4;
  return vae::VaeModel(s, seed);
}

reg::RegressorModel small_reg(reg::Activation a, std::uint64_t seed = 4) {
  reg::RegressorShape s;
  s.latent_dim = kLatent;
  s.hidden1 = 8;
  s.hidden2 = 4;
  s.activation = a;
  reg::RegressorModel m(s, seed);
  Rng rng(seed);
  for (auto& p : m.parameters())
    for (auto& v : p.value.data) v = rng.uniform(-0.6, 0.6);
  m.set_target_standardization(292.0, 2.0);
  return m;
}

raster::RasterStack random_stack(Rng& rng) {
  raster::RasterStack s(kGrid);
  for (double& v : s.values) v = rng.normal();
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

TEST_CASE("closed-form step examples") {
  CHECK(delta_c(std::vector<double>{2.0, 0.0}, 4.0) == std::vector<double>{2.0, 0.0});
  CHECK(delta_c(std::vector<double>{0.3, -1.0, 2.0}, 0.0) == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("degenerate gradient is an error, not a huge step") {
  CHECK_THROWS_AS(delta_c(std::vector<double>{0.0, 0.0}, 1.0), DegenerateGradient);
  CHECK_THROWS_AS(delta_c(std::vector<double>{1e-9, 0.0}, 1.0), DegenerateGradient);
  CHECK_NOTHROW(delta_c(std::vector<double>{1e-9, 0.0}, 1.0, 1e-10));
}

TEST_CASE("step identity and parallelism on random gradients") {
  Rng rng(1);
  for (int k = 0; k < 500; ++k) {
    std::vector<double> g(64);
    for (auto& v : g) v = rng.normal() * std::exp(rng.uniform(-3, 3));
    const double dt = rng.uniform(-20, 20);
    const auto dc = delta_c(g, dt);
    CHECK(std::fabs(dot(dc, g) - dt) <= 1e-9 * std::fabs(dt));
    const double lambda = dt / dot(g, g);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(dc[i] == doctest::Approx(lambda * g[i]).epsilon(1e-12));
  }
}

TEST_CASE("step property suite") {
  const auto s = check::step_suite(5, 300, 30, 100);
  CHECK(s.cases == 300);
  CHECK(s.max_constraint_error <= 1e-9);
  CHECK(s.max_alignment_error <= 1e-9);
  CHECK(s.sign_mismatches == 0);
  CHECK(s.norm_cases == 30);
  CHECK(s.norm_violations == 0);
}

TEST_CASE("mode names and validation") {
  CHECK(parse_mode("closed_form") == Mode::ClosedForm);
  CHECK(parse_mode(to_string(Mode::Iterative)) == Mode::Iterative);
  CHECK_THROWS_AS(parse_mode("newton"), UsageError);
  Perturbation p;
  p.g_floor = 0.0;
  CHECK_THROWS_AS(p.validate(), UsageError);
}

TEST_CASE("zero change reproduces the reconstruction exactly") {
  const auto vae = small_vae();
  const auto r = small_reg(reg::Activation::Tanh);
  Rng rng(2);
  const auto s = random_stack(rng);
  const auto cf = perturb_scene(vae, r, s, Perturbation{});
  CHECK(cf.counterfactual == cf.reconstruction);
  CHECK(cf.achieved_dt == 0.0);
  for (double v : cf.delta_c) CHECK(v == 0.0);
  CHECK(cf.code == vae.encode_mean(s));
  CHECK(cf.original == s);
}

TEST_CASE("linear regressor realizes the requested change exactly") {
  const auto vae = small_vae();
  const auto r = small_reg(reg::Activation::Linear);
  Rng rng(3);
  const auto s = random_stack(rng);
  for (double dt : {1.0, -1.0, 3.0, -3.0, 5.0, -5.0, 10.0, -10.0}) {
    Perturbation p;
    p.delta_t = dt;
    const auto cf = perturb_scene(vae, r, s, p);
    CHECK(std::fabs(cf.achieved_dt - dt) <= 1e-6);
  }
}

TEST_CASE("small steps are first-order accurate on a smooth regressor") {
  const auto vae = small_vae();
  const auto r = small_reg(reg::Activation::Tanh);
  Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    const auto s = random_stack(rng);
    const auto g = r.grad_wrt_code(vae.encode_mean(s));
    Perturbation p;
    p.delta_t = 0.01 * std::sqrt(dot(g, g));
    const auto cf = perturb_scene(vae, r, s, p);
    CHECK(std::fabs(cf.achieved_dt - p.delta_t) / p.delta_t <= 0.1);
  }
}

TEST_CASE("iterative mode moves in the sign of the change and reaches it") {
  const auto vae = small_vae();
  const auto r = small_reg(reg::Activation::Tanh);
  Rng rng(5);
  const auto s = random_stack(rng);
  for (double dt : {0.5, -0.5}) {
    Perturbation p;
    p.delta_t = dt;
    p.mode = Mode::Iterative;
    p.steps = 1000;
    const auto cf = perturb_scene(vae, r, s, p);
    CHECK(cf.steps_taken > 0);
    CHECK(cf.steps_taken < 1000);
    CHECK(cf.achieved_dt * dt > 0.0);
    CHECK(std::fabs(cf.achieved_dt) >= std::fabs(dt));
  }
}

TEST_CASE("model weights are only read") {
  const auto vae = small_vae();
  const auto r = small_reg(reg::Activation::Relu);
  const auto vae_before = vae.parameters();
  const auto reg_before = r.parameters();
  Rng rng(6);
  const auto s = random_stack(rng);
  Perturbation p;
  p.delta_t = 2.0;
  perturb_scene(vae, r, s, p);
  p.mode = Mode::Iterative;
  perturb_scene(vae, r, s, p);
  for (std::size_t i = 0; i < vae_before.size(); ++i) CHECK(vae.parameters()[i].value == vae_before[i].value);
  for (std::size_t i = 0; i < reg_before.size(); ++i) CHECK(r.parameters()[i].value == reg_before[i].value);
}

TEST_CASE("batch cardinality, order independence and thread independence") {
  const auto vae = small_vae();
  const auto r = small_reg(reg::Activation::Tanh);
  Rng rng(7);
  std::vector<raster::RasterStack> scenes{random_stack(rng), random_stack(rng), random_stack(rng)};
  const std::vector<double> dts{1, -1, 3, -3, 5, -5, 10, -10};
  const auto two = batch_perturb(vae, r, std::span(scenes).first(2), dts, Perturbation{});
  CHECK(two.counterfactuals.size() == 16);
  CHECK(batch_perturb(vae, r, scenes, std::vector<double>{}, Perturbation{}).counterfactuals.empty());

  const auto a = batch_perturb(vae, r, scenes, dts, Perturbation{}, 1);
  const auto b = batch_perturb(vae, r, scenes, dts, Perturbation{}, 3);
  REQUIRE(a.counterfactuals.size() == b.counterfactuals.size());
  for (std::size_t i = 0; i < a.counterfactuals.size(); ++i)
    CHECK(a.counterfactuals[i].counterfactual == b.counterfactuals[i].counterfactual);

  std::vector<raster::RasterStack> reversed(scenes.rbegin(), scenes.rend());
  const auto c = batch_perturb(vae, r, reversed, dts, Perturbation{});
  for (std::size_t k = 0; k < dts.size(); ++k)
    CHECK(c.counterfactuals[k].counterfactual == a.counterfactuals[2 * dts.size() + k].counterfactual);
  CHECK_THROWS_AS(batch_perturb(vae, r, std::span<const raster::RasterStack>{}, dts, Perturbation{}), UsageError);
}

TEST_CASE("flat regressor: per-scene failures, then a batch error") {
  const auto vae = small_vae();
  auto r = small_reg(reg::Activation::Relu);
  for (auto& p : r.parameters()) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
  Rng rng(8);
  std::vector<raster::RasterStack> scenes{random_stack(rng), random_stack(rng)};
  CHECK_THROWS_AS(batch_perturb(vae, r, scenes, std::vector<double>{1.0}, Perturbation{}), NumericError);
  Perturbation p;
  p.delta_t = 1.0;
  CHECK_THROWS_AS(perturb_scene(vae, r, scenes[0], p), DegenerateGradient);
}
