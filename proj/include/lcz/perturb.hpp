#pragma once

#include <span>
#include <string>
#include <vector>

#include "lcz/error.hpp"
#include "lcz/rasterizer.hpp"
#include "lcz/regressor.hpp"
#include "lcz/vae.hpp"

namespace lcz::perturb {

enum class Mode { ClosedForm, Iterative };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

struct Perturbation {
  double delta_t = 0.0;  // kelvin
  Mode mode = Mode::ClosedForm;
  /// Iterative step scale; 0 selects 0.1·Δt/‖g₀‖², i.e. about a tenth of Δt per step.
  double zeta = 0.0;
  std::size_t steps = 100;
  double g_floor = 1e-8;

  void validate() const;
};

/// Thrown when ‖∂R/∂c‖ is below the floor: the regressor is locally flat
/// and no finite latent step realizes the requested change.
class DegenerateGradient : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Minimum-norm latent step with first-order temperature change Δt:
/// Δc = Δt · g / ‖g‖². Throws DegenerateGradient when ‖g‖ < g_floor.
std::vector<double> delta_c(std::span<const double> g, double delta_t, double g_floor = 1e-8);

struct CounterfactualScene {
  raster::RasterStack original;        // s (normalized)
  raster::RasterStack reconstruction;  // D(E(s))
  raster::RasterStack counterfactual;  // D(c + Δc)
  std::vector<double> code;            // c = μ(s)
  std::vector<double> delta_c;
  double delta_t = 0.0;
  double achieved_dt = 0.0;  // R(c + Δc) − R(c)
  std::size_t steps_taken = 0;
};

/// Closed form: one gradient, one step. Iterative: c ← c + ζ·∂R/∂c with the
/// gradient recomputed each step, stopping once |R(c) − R(c₀)| ≥ |Δt|.
/// Model weights are only read.
CounterfactualScene perturb_scene(const vae::VaeModel& vae, const reg::RegressorModel& regressor,
                                  const raster::RasterStack& s, const Perturbation& perturbation);

struct SceneFailure {
  std::size_t scene_index = 0;
  std::string message;
};

struct BatchResult {
  /// Scene-major: for each successful scene, one entry per Δt in list order.
  std::vector<CounterfactualScene> counterfactuals;
  std::vector<std::size_t> scene_of;  // scene index of each counterfactual
  std::vector<SceneFailure> failures;
};

/// Per-scene degenerate gradients are recorded in `failures`; when every
/// scene fails a NumericError is thrown. Results do not depend on `threads`.
BatchResult batch_perturb(const vae::VaeModel& vae, const reg::RegressorModel& regressor,
                          std::span<const raster::RasterStack> scenes, std::span<const double> delta_ts,
                          const Perturbation& base, unsigned threads = 1);

}  // namespace lcz::perturb
