// lcz: command-line driver for the counterfactual LiDAR / temperature pipeline.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>

#include "lcz/check.hpp"
#include "lcz/config.hpp"
#include "lcz/error.hpp"
#include "lcz/io.hpp"
#include "lcz/pipeline.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> dt_sweep;
  std::map<std::string, std::string> keys;
};

void add_run_options(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "master seed (run.seed)");
  sub->add_option("--out", o.out, "run directory (paths.out)");
  sub->add_option("--dt-sweep", o.dt_sweep, "comma-separated temperature changes in K (perturb.dt_sweep)");
  for (const auto& key : lcz::RunConfig::keys()) {
    sub->add_option_function<std::string>(
           "--" + key, [&o, key](const std::string& v) { o.keys[key] = v; }, "override " + key)
        ->group("Config keys");
  }
}

lcz::RunConfig build_config(const Overrides& o) {
  lcz::RunConfig c = o.config_path.empty() ? lcz::RunConfig{} : lcz::read_config_file(o.config_path);
  for (const auto& [k, v] : o.keys) c.set(k, v);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.dt_sweep) c.set("perturb.dt_sweep", *o.dt_sweep);
  return c.resolved();
}

int run_check(const lcz::RunConfig& c) {
  const auto grad = lcz::check::gradient_suite(c.seed);
  for (const auto& r : grad.cases) std::printf("gradient %-24s max rel error %.3e\n", r.name.c_str(), r.max_error);
  std::printf("max gradient error: %.3e\n", grad.max_error);
  const auto step = lcz::check::step_suite(c.seed);
  std::printf("step exactness: %zu cases, max |dc.g - dt|/|dt| %.3e, max 1-|cos| %.3e, sign mismatches %zu\n",
              step.cases, step.max_constraint_error, step.max_alignment_error, step.sign_mismatches);
  std::printf("step minimality: %zu cases, %zu shorter alternatives\n", step.norm_cases, step.norm_violations);
  const bool ok = grad.max_error <= 1e-5 && step.max_constraint_error <= 1e-9 && step.max_alignment_error <= 1e-9 &&
                  step.sign_mismatches == 0 && step.norm_violations == 0;
  std::printf("check: %s\n", ok ? "pass" : "FAIL");
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual LiDAR statistics under surface temperature change"};
  app.require_subcommand(1);

  Overrides o;
  struct Stage {
    const char* name;
    const char* help;
  };
  const Stage stages[] = {
      {"synth", "generate a synthetic corpus"},
      {"rasterize", "rasterize point clouds and compute normalization statistics"},
      {"train-vae", "train the autoencoder"},
      {"train-reg", "train the temperature regressor on latent codes"},
      {"perturb", "generate counterfactual scenes over the temperature sweep"},
      {"label", "label counterfactual scenes and compute vegetation fractions"},
      {"analyze", "fit and test the vegetation/temperature relation"},
      {"pipeline", "run every stage in order"},
      {"check", "run the gradient and latent-step property suites"},
  };
  for (const auto& s : stages) add_run_options(app.add_subcommand(s.name, s.help), o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const auto config = build_config(o);
    if (cmd == "check") return run_check(config);

    lcz::pipeline::RunLayout layout{config.out};
    lcz::write_config_file(layout.config(), config);
    auto& log = std::cout;
    if (cmd == "synth") lcz::pipeline::stage_synth(config, log);
    else if (cmd == "rasterize") lcz::pipeline::stage_rasterize(config, log);
    else if (cmd == "train-vae") lcz::pipeline::stage_train_vae(config, log);
    else if (cmd == "train-reg") lcz::pipeline::stage_train_reg(config, log);
    else if (cmd == "perturb") lcz::pipeline::stage_perturb(config, log);
    else if (cmd == "label") lcz::pipeline::stage_label(config, log);
    else if (cmd == "analyze") lcz::pipeline::stage_analyze(config, log);
    else if (cmd == "pipeline") lcz::pipeline::run_pipeline(config, log);
    return 0;
  } catch (const lcz::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
