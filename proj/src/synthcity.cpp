#include "lcz/synthcity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "lcz/error.hpp"
#include "lcz/parallel.hpp"
#include "lcz/rng.hpp"

namespace lcz::synth {

namespace {

void check_range(const Range& r, const char* name) {
  if (!(r.min <= r.max) || r.min < 0.0) throw UsageError(std::string("scene params: bad range for ") + name);
}

// LiDAR-like quantization: millimetres for coordinates, integer intensity.
double mm(double v) { return std::round(v * 1000.0) / 1000.0; }
double dn(double v) { return std::clamp(std::round(v), 0.0, 65535.0); }

constexpr double kCrownBase = 0.35;  // crown starts at this share of tree height

struct Layout {
  double ground = 0.0;
  double slope_x = 0.0;
  double slope_y = 0.0;
  double ground_at(double x, double y) const { return ground + slope_x * x + slope_y * y; }
};

bool in_building(const Building& b, double x, double y) { return x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1; }

// Canopy surface height above ground at (x, y), or < 0 when outside every crown.
double canopy_height(const std::vector<Tree>& trees, double x, double y) {
  double best = -1.0;
  for (const auto& t : trees) {
    const double d = std::hypot(x - t.x, y - t.y);
    if (d >= t.radius) continue;
    const double base = kCrownBase * t.height;
    best = std::max(best, base + (t.height - base) * (1.0 - d / t.radius));
  }
  return best;
}

}  // namespace

void SceneParams::validate() const {
  grid.validate();
  if (tree_density < 0.0 || building_density < 0.0) throw UsageError("scene params: densities must be >= 0");
  if (!(points_per_m2 > 0.0)) throw UsageError("scene params: points_per_m2 must be positive");
  check_range(crown_radius, "crown_radius");
  check_range(tree_height, "tree_height");
  check_range(building_size, "building_size");
  check_range(building_height, "building_height");
  if (crown_radius.min <= 0.0 || building_size.min <= 0.0) throw UsageError("scene params: sizes must be positive");
}

GeneratedScene generate_scene(const SceneParams& params, std::uint64_t scene_seed) {
  params.validate();
  Rng rng(derive_seed(params.seed ^ mix64(scene_seed), "synth/scene"));
  const auto& g = params.grid;
  const double w = static_cast<double>(g.width) * g.cell_size;
  const double h = static_cast<double>(g.height) * g.cell_size;
  const double area = w * h;

  Layout layout{rng.uniform(5.0, 30.0), rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01)};
  GeneratedScene out;

  const int n_buildings = rng.poisson(params.building_density * area);
  for (int k = 0; k < n_buildings; ++k) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      const double sx = rng.uniform(params.building_size.min, params.building_size.max);
      const double sy = rng.uniform(params.building_size.min, params.building_size.max);
      const double x0 = g.origin_x + rng.uniform(-0.25 * sx, w - 0.75 * sx);
      const double y0 = g.origin_y + rng.uniform(-0.25 * sy, h - 0.75 * sy);
      const Building b{x0, y0, x0 + sx, y0 + sy, rng.uniform(params.building_height.min, params.building_height.max)};
      const bool overlaps = std::any_of(out.buildings.begin(), out.buildings.end(), [&](const Building& o) {
        return b.x0 < o.x1 + 2.0 && o.x0 < b.x1 + 2.0 && b.y0 < o.y1 + 2.0 && o.y0 < b.y1 + 2.0;
      });
      if (!overlaps) {
        out.buildings.push_back(b);
        break;
      }
    }
  }

  // Dart throwing: crowns may touch but not substantially overlap, and
  // trees keep clear of roofs.
  const int n_trees = rng.poisson(params.tree_density * area);
  for (int k = 0; k < n_trees; ++k) {
    for (int attempt = 0; attempt < 30; ++attempt) {
      const Tree t{g.origin_x + rng.uniform(0.0, w), g.origin_y + rng.uniform(0.0, h),
                   rng.uniform(params.crown_radius.min, params.crown_radius.max),
                   rng.uniform(params.tree_height.min, params.tree_height.max)};
      const bool crowded = std::any_of(out.trees.begin(), out.trees.end(), [&](const Tree& o) {
        return std::hypot(t.x - o.x, t.y - o.y) < 0.8 * (t.radius + o.radius);
      });
      const bool on_roof = std::any_of(out.buildings.begin(), out.buildings.end(), [&](const Building& b) {
        return t.x > b.x0 - t.radius && t.x < b.x1 + t.radius && t.y > b.y0 - t.radius && t.y < b.y1 + t.radius;
      });
      if (!crowded && !on_roof) {
        out.trees.push_back(t);
        break;
      }
    }
  }

  const auto pulses = static_cast<std::size_t>(std::llround(params.points_per_m2 * area));
  out.cloud.reserve(pulses * 2);
  for (std::size_t k = 0; k < pulses; ++k) {
    const double x = g.origin_x + rng.uniform(0.0, w);
    const double y = g.origin_y + rng.uniform(0.0, h);
    const double ground = layout.ground_at(x, y);
    const auto roof = std::find_if(out.buildings.begin(), out.buildings.end(),
                                   [&](const Building& b) { return in_building(b, x, y); });
    if (roof != out.buildings.end()) {
      out.cloud.push_back({mm(x), mm(y), mm(ground + roof->height + rng.normal(0.0, 0.03)), dn(rng.normal(500.0, 40.0)), 1, 1});
      continue;
    }
    const double canopy = canopy_height(out.trees, x, y);
    if (canopy < 0.0) {
      out.cloud.push_back({mm(x), mm(y), mm(ground + rng.normal(0.0, 0.05)), dn(rng.normal(300.0, 40.0)), 1, 1});
      continue;
    }
    const int n = rng.uniform() < 0.5 ? 2 : 3;
    const double first = std::max(0.5, canopy - std::fabs(rng.normal(0.0, 0.3)));
    out.cloud.push_back({mm(x), mm(y), mm(ground + first), dn(rng.normal(90.0, 25.0)), 1, n});
    if (n == 3) {
      const double mid = rng.uniform(0.5 * first, first);
      out.cloud.push_back({mm(x), mm(y), mm(ground + mid), dn(rng.normal(110.0, 25.0)), 2, n});
    }
    out.cloud.push_back({mm(x), mm(y), mm(ground + rng.normal(0.0, 0.05)), dn(rng.normal(250.0, 40.0)), n, n});
  }

  out.truth = label::SegmentationMap{g.width, g.height, std::vector<label::Label>(g.cells(), label::Label::Background)};
  std::size_t veg = 0;
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) {
      const double cx = g.origin_x + (static_cast<double>(c) + 0.5) * g.cell_size;
      const double cy = g.origin_y + (static_cast<double>(g.height - 1 - r) + 0.5) * g.cell_size;
      auto& cell = out.truth.labels[r * g.width + c];
      if (std::any_of(out.buildings.begin(), out.buildings.end(), [&](const Building& b) { return in_building(b, cx, cy); })) {
        cell = label::Label::Building;
      } else if (canopy_height(out.trees, cx, cy) >= 0.0) {
        cell = label::Label::Vegetation;
        ++veg;
      }
    }
  }
  out.true_veg_fraction = static_cast<double>(veg) / static_cast<double>(g.cells());
  return out;
}

double scene_temperature(const TemperatureLaw& law, double true_veg_fraction, std::uint64_t scene_seed) {
  if (!(true_veg_fraction >= 0.0 && true_veg_fraction <= 1.0))
    throw UsageError("scene_temperature: fraction must lie in [0, 1]");
  Rng rng(derive_seed(law.seed ^ mix64(scene_seed), "synth/temperature"));
  const double noise = law.noise_sigma > 0.0 ? rng.normal(0.0, law.noise_sigma) : 0.0;
  return law.t_base - law.k_veg * true_veg_fraction + noise;
}

Corpus generate_corpus(std::size_t n_scenes, const SceneParams& params, const TemperatureLaw& law, std::uint64_t seed,
                       unsigned threads) {
  if (n_scenes < 1) throw UsageError("generate_corpus: need at least one scene");
  params.validate();
  Corpus corpus;
  corpus.scenes.resize(n_scenes);
  Rng rng(derive_seed(seed, "synth/corpus"));
  for (std::size_t i = 0; i < n_scenes; ++i) {
    auto& s = corpus.scenes[i];
    char id[32];
    std::snprintf(id, sizeof id, "scene%05zu", i);
    s.id = id;
    s.scene_seed = derive_seed(seed, s.id);
    s.tree_density = rng.uniform(0.0, params.tree_density);
    s.building_density = rng.uniform(0.0, params.building_density);
  }
  std::vector<std::size_t> order(n_scenes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n_scenes)));
  for (std::size_t k = n_train; k < n_scenes; ++k) corpus.scenes[order[k]].train = false;

  parallel_for(
      n_scenes,
      [&](std::size_t i) {
        auto& s = corpus.scenes[i];
        SceneParams p = params;
        p.tree_density = s.tree_density;
        p.building_density = s.building_density;
        s.scene = generate_scene(p, s.scene_seed);
        s.true_veg_fraction = s.scene.true_veg_fraction;
        s.temperature = scene_temperature(law, s.true_veg_fraction, s.scene_seed);
      },
      threads);
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  io::SceneManifest manifest;
  io::CsvTable truth{{"scene_id", "split", "true_veg_fraction", "tree_density", "building_density"}, {}};
  for (const auto& s : corpus.scenes) {
    io::write_point_cloud_file(dir / "clouds" / (s.id + ".xyz"), s.scene.cloud);
    manifest.entries.push_back({s.id, "rasters/" + s.id + ".lczm", s.temperature});
    truth.rows.push_back({s.id, s.train ? "train" : "test", io::format_real(s.true_veg_fraction),
                          io::format_real(s.tree_density), io::format_real(s.building_density)});
  }
  io::write_manifest_file(dir / "manifest.csv", manifest);
  io::write_csv_file(dir / "truth.csv", truth);
}

}  // namespace lcz::synth
