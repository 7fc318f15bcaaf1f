#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "lcz/autogeolabel.hpp"
#include "lcz/perturb.hpp"
#include "lcz/regressor.hpp"
#include "lcz/synthcity.hpp"
#include "lcz/vae.hpp"

namespace lcz {

/// Every tunable of a run. Text form is one "key = value" per line with
/// '#' comments; every key has a default and unknown keys are rejected.
/// A stage seed of 0 means "derive from run.seed".
struct RunConfig {
  std::uint64_t seed = 1;  // run.seed
  double alpha = 0.05;     // run.alpha
  std::string out = "run";  // paths.out

  raster::GridSpec grid{0.0, 0.0, 2.0, 16, 16};

  std::size_t synth_scenes = 500;
  synth::SceneParams scene;
  synth::TemperatureLaw law;
  std::uint64_t synth_seed = 0;

  vae::VaeShape vae_shape;
  vae::TrainConfig vae_train{100, 1e-3, 16, {}, 0};

  reg::RegressorShape reg_shape;
  reg::TrainConfig reg_train{200, 1e-3, 32, 0, 0.2};

  perturb::Perturbation perturbation;
  std::vector<double> dt_sweep{0.0, 1.0, -1.0, 3.0, -3.0, 5.0, -5.0, 10.0, -10.0};
  std::size_t perturb_scenes = 30;

  /// Calibrated against the synthetic generator's truth masks
  /// (tools/calibrate_labels); see README.
  label::LabelRules labels{0.5, 0.7, 3.0, 0.4};

  /// Sets one key from its text value. Throws UsageError naming the key
  /// when it is unknown or the value does not parse.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  /// Replaces zero stage seeds by derive_seed(seed, stage), copies the grid
  /// into the scene and model shapes, and validates everything.
  RunConfig resolved() const;
  void validate() const;
};

RunConfig parse_config(std::istream& in);
RunConfig read_config_file(const std::filesystem::path& path);
void write_config(std::ostream& out, const RunConfig& config);
void write_config_file(const std::filesystem::path& path, const RunConfig& config);

std::vector<double> parse_real_list(std::string_view text);
std::string format_real_list(const std::vector<double>& values);

}  // namespace lcz
