#include <doctest.h>

#include <cmath>
#include <set>

#include "lcz/analysis.hpp"
#include "lcz/autogeolabel.hpp"
#include "lcz/config.hpp"
#include "lcz/error.hpp"
#include "lcz/rasterizer.hpp"
#include "lcz/synthcity.hpp"

using namespace lcz;
using namespace lcz::synth;

TEST_CASE("empty layout is ground only") {
  SceneParams p;
  p.tree_density = 0.0;
  p.building_density = 0.0;
  const auto s = generate_scene(p, 5);
  CHECK(s.true_veg_fraction == 0.0);
  CHECK(s.trees.empty());
  CHECK(s.buildings.empty());
  CHECK_FALSE(s.cloud.empty());
  for (const auto& pt : s.cloud) CHECK(pt.num_returns == 1);
  const auto r = raster::rasterize(s.cloud, p.grid);
  for (double v : r.stack.channel(raster::kZStd)) CHECK(v < 0.3);
  CHECK(s.truth.counts()[0] == p.grid.cells());
}

TEST_CASE("parameter validation") {
  SceneParams p;
  p.tree_height = {10.0, 5.0};
  CHECK_THROWS_AS(p.validate(), UsageError);
  p = SceneParams{};
  p.tree_density = -1.0;
  CHECK_THROWS_AS(p.validate(), UsageError);
}

TEST_CASE("scenes are determined by params and seed") {
  const SceneParams p;
  const auto a = generate_scene(p, 42), b = generate_scene(p, 42), c = generate_scene(p, 43);
  CHECK(a.cloud == b.cloud);
  CHECK(a.truth.labels == b.truth.labels);
  CHECK(a.cloud != c.cloud);
}

TEST_CASE("temperature law examples") {
  TemperatureLaw law;
  law.noise_sigma = 0.0;
  CHECK(scene_temperature(law, 0.0, 3) == 295.0);
  CHECK(scene_temperature(law, 1.0, 3) == 287.0);
  law.noise_sigma = 0.5;
  double sum = 0.0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) sum += scene_temperature(law, 0.5, seed);
  CHECK(std::fabs(sum / 10000 - 291.0) <= 3 * 0.5 / 100);
  CHECK_THROWS_AS(scene_temperature(law, 1.5, 0), UsageError);
}

TEST_CASE("corpus split and ordering") {
  const auto a = generate_corpus(10, SceneParams{}, TemperatureLaw{}, 9);
  REQUIRE(a.scenes.size() == 10);
  std::size_t train = 0;
  std::set<std::string> ids;
  for (const auto& s : a.scenes) train += s.train, ids.insert(s.id);
  CHECK(train == 8);
  CHECK(ids.size() == 10);
  const auto b = generate_corpus(10, SceneParams{}, TemperatureLaw{}, 9, 3);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(a.scenes[i].id == b.scenes[i].id);
    CHECK(a.scenes[i].train == b.scenes[i].train);
    CHECK(a.scenes[i].temperature == b.scenes[i].temperature);
    CHECK(a.scenes[i].scene.cloud == b.scenes[i].scene.cloud);
  }
  CHECK_THROWS_AS(generate_corpus(0, SceneParams{}, TemperatureLaw{}, 9), UsageError);
}

TEST_CASE("the planted law is visible in the corpus") {
  const auto c = generate_corpus(300, SceneParams{}, TemperatureLaw{}, 21, 2);
  std::vector<double> v, t;
  for (const auto& s : c.scenes) v.push_back(s.true_veg_fraction), t.push_back(s.temperature);
  const double vmax = *std::max_element(v.begin(), v.end());
  CHECK(*std::min_element(v.begin(), v.end()) < 0.05);
  CHECK(vmax > 0.5);
  const auto fit = stats::ols_fit(v, t);
  CHECK(fit.a < 0.0);
  CHECK(fit.r_squared > 0.64);  // |correlation| > 0.8
  CHECK(std::fabs(fit.a + 8.0) <= 0.15 * 8.0);
}

TEST_CASE("canopy scatters more returns than rooftops") {
  const SceneParams p;
  double veg = 0.0, roof = 0.0;
  std::size_t nv = 0, nr = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = generate_scene(p, seed);
    const auto r = raster::rasterize(s.cloud, p.grid);
    for (std::size_t row = 0; row < p.grid.height; ++row)
      for (std::size_t col = 0; col < p.grid.width; ++col) {
        const double m = r.stack.at(raster::kMultiReturnFraction, row, col);
        if (s.truth.at(row, col) == label::Label::Vegetation) veg += m, ++nv;
        if (s.truth.at(row, col) == label::Label::Building) roof += m, ++nr;
      }
  }
  REQUIRE(nv > 0);
  REQUIRE(nr > 0);
  CHECK(veg / nv > roof / nr);
}

TEST_CASE("calibrated rules recover the planted vegetation fraction") {
  const auto rules = RunConfig{}.labels;
  const SceneParams p;
  const auto c = generate_corpus(100, p, TemperatureLaw{}, 77, 2);
  std::size_t within = 0;
  for (const auto& s : c.scenes) {
    const auto r = raster::rasterize(s.scene.cloud, p.grid);
    const double v = label::vegetation_fraction(label::segment(r.stack, rules));
    within += std::fabs(v - s.true_veg_fraction) <= 0.1;
  }
  CHECK(within >= 90);
}
