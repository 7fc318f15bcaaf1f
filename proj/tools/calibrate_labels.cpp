// calibrate_labels: sweep the vegetation thresholds against the synthetic
// generator's truth masks and print agreement per threshold pair.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>

#include "lcz/autogeolabel.hpp"
#include "lcz/config.hpp"
#include "lcz/error.hpp"
#include "lcz/io.hpp"
#include "lcz/rasterizer.hpp"
#include "lcz/synthcity.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Calibrate the labeling thresholds on synthetic scenes"};
  std::string config_path;
  std::size_t scenes = 200;
  std::uint64_t seed = 42;
  std::string zstd_list = "0.45,0.5,0.6,0.7,0.8";
  std::string multiret_list = "0.3,0.4,0.5,0.6,0.7,0.8";
  double tolerance = 0.1;
  app.add_option("--config", config_path, "run config supplying the scene parameters")->check(CLI::ExistingFile);
  app.add_option("--scenes", scenes, "number of synthetic scenes")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "corpus seed");
  app.add_option("--zstd", zstd_list, "candidate labels.veg_zstd_min values");
  app.add_option("--multiret", multiret_list, "candidate labels.veg_multiret_min values");
  app.add_option("--tolerance", tolerance, "allowed |v_estimated - v_true|");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = (config_path.empty() ? lcz::RunConfig{} : lcz::read_config_file(config_path)).resolved();
    const auto zstd = lcz::parse_real_list(zstd_list);
    const auto multiret = lcz::parse_real_list(multiret_list);
    const auto corpus = lcz::synth::generate_corpus(scenes, config.scene, config.law, seed, 4);

    std::vector<lcz::raster::RasterStack> stacks;
    for (const auto& s : corpus.scenes) stacks.push_back(lcz::raster::rasterize(s.scene.cloud, config.grid).stack);

    std::printf("veg_zstd_min,veg_multiret_min,within,share,bias,worst\n");
    double best_share = -1.0, best_bias = 0.0, best_z = 0.0, best_m = 0.0;
    for (double z : zstd)
      for (double m : multiret) {
        auto rules = config.labels;
        rules.veg_zstd_min = z;
        rules.veg_multiret_min = m;
        rules.validate();
        std::size_t within = 0;
        double bias = 0.0, worst = 0.0;
        for (std::size_t i = 0; i < stacks.size(); ++i) {
          const double e = lcz::label::vegetation_fraction(lcz::label::segment(stacks[i], rules)) -
                           corpus.scenes[i].true_veg_fraction;
          within += std::fabs(e) <= tolerance;
          bias += e;
          worst = std::max(worst, std::fabs(e));
        }
        bias /= static_cast<double>(stacks.size());
        const double share = static_cast<double>(within) / static_cast<double>(stacks.size());
        std::printf("%s,%s,%zu,%.3f,%+.4f,%.3f\n", lcz::io::format_real(z).c_str(), lcz::io::format_real(m).c_str(),
                    within, share, bias, worst);
        if (share > best_share || (share == best_share && std::fabs(bias) < std::fabs(best_bias)))
          best_share = share, best_bias = bias, best_z = z, best_m = m;
      }
    std::printf("# best: labels.veg_zstd_min = %s, labels.veg_multiret_min = %s (%.1f%% within, bias %+.4f)\n",
                lcz::io::format_real(best_z).c_str(), lcz::io::format_real(best_m).c_str(), 100.0 * best_share,
                best_bias);
  } catch (const lcz::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
