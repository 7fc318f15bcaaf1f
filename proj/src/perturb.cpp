#include "lcz/perturb.hpp"

#include <cmath>
#include <tuple>

#include "lcz/error.hpp"
#include "lcz/io.hpp"
#include "lcz/parallel.hpp"

namespace lcz::perturb {

std::string to_string(Mode m) { return m == Mode::ClosedForm ? "closed_form" : "iterative"; }

Mode parse_mode(const std::string& s) {
  if (s == "closed_form") return Mode::ClosedForm;
  if (s == "iterative") return Mode::Iterative;
  throw UsageError("unknown perturbation mode '" + s + "' (expected closed_form or iterative)");
}

void Perturbation::validate() const {
  if (!std::isfinite(delta_t)) throw UsageError("perturbation: delta_t must be finite");
  if (!(g_floor > 0.0)) throw UsageError("perturbation: g_floor must be positive");
  if (mode == Mode::Iterative && steps < 1) throw UsageError("perturbation: iterative mode needs steps >= 1");
  if (!std::isfinite(zeta)) throw UsageError("perturbation: zeta must be finite");
}

namespace {

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

void require_gradient(std::span<const double> g, double g_floor) {
  const double norm = std::sqrt(squared_norm(g));
  if (!(norm >= g_floor))
    throw DegenerateGradient("degenerate gradient: |dR/dc| = " + io::format_real(norm) + " below floor " +
                             io::format_real(g_floor));
}

struct Prepared {
  std::vector<double> code;
  raster::RasterStack reconstruction;
  double t0 = 0.0;
  std::vector<double> g0;
};

Prepared prepare(const vae::VaeModel& vae, const reg::RegressorModel& regressor, const raster::RasterStack& s,
                 double g_floor) {
  Prepared p;
  p.code = vae.encode_mean(s);
  p.reconstruction = vae.decode(p.code, s.spec);
  std::tie(p.t0, p.g0) = regressor.predict_with_gradient(p.code);
  require_gradient(p.g0, g_floor);
  return p;
}

CounterfactualScene apply(const vae::VaeModel& vae, const reg::RegressorModel& regressor,
                          const raster::RasterStack& s, const Prepared& prep, const Perturbation& pert) {
  CounterfactualScene out;
  out.original = s;
  out.reconstruction = prep.reconstruction;
  out.code = prep.code;
  out.delta_t = pert.delta_t;

  std::vector<double> c = prep.code;
  if (pert.mode == Mode::ClosedForm) {
    out.delta_c = delta_c(prep.g0, pert.delta_t, pert.g_floor);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += out.delta_c[i];
    out.steps_taken = 1;
    out.achieved_dt = regressor.predict(c) - prep.t0;
  } else {
    double zeta = pert.zeta;
    if (zeta == 0.0) zeta = 0.1 * pert.delta_t / squared_norm(prep.g0);
    zeta = std::copysign(std::fabs(zeta), pert.delta_t);
    double t = prep.t0;
    std::vector<double> g = prep.g0;
    while (out.steps_taken < pert.steps && std::fabs(t - prep.t0) < std::fabs(pert.delta_t)) {
      for (std::size_t i = 0; i < c.size(); ++i) c[i] += zeta * g[i];
      ++out.steps_taken;
      std::tie(t, g) = regressor.predict_with_gradient(c);
      if (!std::isfinite(t)) throw NumericError("iterative perturbation: non-finite prediction");
      require_gradient(g, pert.g_floor);
    }
    out.delta_c.resize(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) out.delta_c[i] = c[i] - prep.code[i];
    out.achieved_dt = t - prep.t0;
  }
  out.counterfactual = vae.decode(c, s.spec);
  return out;
}

}  // namespace

std::vector<double> delta_c(std::span<const double> g, double delta_t, double g_floor) {
  if (!std::isfinite(delta_t)) throw UsageError("delta_c: delta_t must be finite");
  require_gradient(g, g_floor);
  const double scale = delta_t / squared_norm(g);
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = scale * g[i];
  return out;
}

CounterfactualScene perturb_scene(const vae::VaeModel& vae, const reg::RegressorModel& regressor,
                                  const raster::RasterStack& s, const Perturbation& perturbation) {
  perturbation.validate();
  return apply(vae, regressor, s, prepare(vae, regressor, s, perturbation.g_floor), perturbation);
}

BatchResult batch_perturb(const vae::VaeModel& vae, const reg::RegressorModel& regressor,
                          std::span<const raster::RasterStack> scenes, std::span<const double> delta_ts,
                          const Perturbation& base, unsigned threads) {
  if (scenes.empty()) throw UsageError("batch_perturb: empty scene list");
  base.validate();
  BatchResult result;
  if (delta_ts.empty()) return result;

  struct Slot {
    std::vector<CounterfactualScene> items;
    std::string failure;
    bool failed = false;
  };
  std::vector<Slot> slots(scenes.size());
  parallel_for(
      scenes.size(),
      [&](std::size_t k) {
        try {
          const auto prep = prepare(vae, regressor, scenes[k], base.g_floor);
          for (double dt : delta_ts) {
            Perturbation p = base;
            p.delta_t = dt;
            p.validate();
            slots[k].items.push_back(apply(vae, regressor, scenes[k], prep, p));
          }
        } catch (const DegenerateGradient& e) {
          slots[k].items.clear();
          slots[k].failed = true;
          slots[k].failure = e.what();
        }
      },
      threads);

  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (slots[k].failed) {
      result.failures.push_back({k, slots[k].failure});
      continue;
    }
    for (auto& item : slots[k].items) {
      result.counterfactuals.push_back(std::move(item));
      result.scene_of.push_back(k);
    }
  }
  if (result.failures.size() == scenes.size())
    throw NumericError("batch_perturb: every scene failed (" + result.failures.front().message + ")");
  return result;
}

}  // namespace lcz::perturb
