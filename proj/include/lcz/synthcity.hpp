#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lcz/autogeolabel.hpp"
#include "lcz/io.hpp"
#include "lcz/rasterizer.hpp"

namespace lcz::synth {

struct Range {
  double min = 0.0;
  double max = 0.0;
};

/// Scene geometry. The scene covers the extent of `grid`; densities are
/// expected counts per m². In a corpus they are upper bounds and each
/// scene draws its own density uniformly below them.
struct SceneParams {
  raster::GridSpec grid{0.0, 0.0, 2.0, 16, 16};
  double tree_density = 0.03;
  double building_density = 0.002;
  Range crown_radius{1.5, 3.5};
  Range tree_height{6.0, 15.0};
  Range building_size{6.0, 14.0};
  Range building_height{4.0, 20.0};
  double points_per_m2 = 4.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TemperatureLaw {
  double t_base = 295.0;  // K
  double k_veg = 8.0;     // K per unit vegetation fraction
  double noise_sigma = 0.5;
  std::uint64_t seed = 1;
};

struct Tree {
  double x, y, radius, height;
};

struct Building {
  double x0, y0, x1, y1, height;
};

struct GeneratedScene {
  io::PointCloud cloud;
  /// Per-cell truth on params.grid: a cell is vegetation when its centre
  /// lies under a crown, building when it lies on a roof.
  label::SegmentationMap truth;
  double true_veg_fraction = 0.0;
  std::vector<Tree> trees;
  std::vector<Building> buildings;
};

/// Ground plane + Poisson-disc cone trees (2 or 3 returns per pulse, last on
/// the ground) + box buildings (single-return roofs). Fully determined by
/// (params, scene_seed).
GeneratedScene generate_scene(const SceneParams& params, std::uint64_t scene_seed);

/// t = t_base − k_veg · fraction + N(0, noise_sigma²), noise seeded by
/// (law.seed, scene_seed).
double scene_temperature(const TemperatureLaw& law, double true_veg_fraction, std::uint64_t scene_seed);

struct SyntheticScene {
  std::string id;
  std::uint64_t scene_seed = 0;
  bool train = true;
  double tree_density = 0.0;
  double building_density = 0.0;
  double true_veg_fraction = 0.0;
  double temperature = 0.0;
  GeneratedScene scene;
};

struct Corpus {
  std::vector<SyntheticScene> scenes;  // generation order
};

/// n scenes with densities drawn below the params maxima, temperatures from
/// the law, and a seeded 80/20 train/test split.
Corpus generate_corpus(std::size_t n_scenes, const SceneParams& params, const TemperatureLaw& law, std::uint64_t seed,
                       unsigned threads = 1);

/// Writes clouds/<id>.xyz, manifest.csv (raster paths point at
/// rasters/<id>.lczm, filled by the rasterize stage) and truth.csv.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

}  // namespace lcz::synth
