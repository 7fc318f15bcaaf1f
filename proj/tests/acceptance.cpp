// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "lcz/analysis.hpp"
#include "lcz/autogeolabel.hpp"
#include "lcz/check.hpp"
#include "lcz/config.hpp"
#include "lcz/io.hpp"
#include "lcz/perturb.hpp"
#include "lcz/pipeline.hpp"
#include "lcz/rasterizer.hpp"
#include "lcz/report.hpp"
#include "lcz/rng.hpp"
#include "lcz/synthcity.hpp"
#include "lcz/vae.hpp"

namespace fs = std::filesystem;
using namespace lcz;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void verdict(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] %2d %-28s %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

RunConfig desk_config(const fs::path& out) {
  auto c = read_config_file(fs::path(LCZ_SOURCE_DIR) / "configs" / "desk.cfg");
  c.out = out.string();
  return c.resolved();
}

void step_exactness() {
  const auto t0 = Clock::now();
  const auto s = check::step_suite(101, 1000, 0, 0);
  const double dt = seconds_since(t0);
  verdict(1, "step exactness", s.cases == 1000 && s.max_constraint_error <= 1e-9 && s.max_alignment_error <= 1e-9 &&
                                  s.sign_mismatches == 0 && dt < 1.0,
          fmt("1000 cases, max rel |dc.g - dt| %.2e, max |1 - |cos|| %.2e, sign mismatches %zu, %.3f s",
              s.max_constraint_error, s.max_alignment_error, s.sign_mismatches, dt));
}

void step_minimality() {
  const auto t0 = Clock::now();
  const auto s = check::step_suite(102, 0, 100, 100);
  const double dt = seconds_since(t0);
  verdict(2, "minimal norm", s.norm_cases == 100 && s.norm_violations == 0 && dt < 5.0,
          fmt("100 cases x 100 alternatives, %zu not longer than dc, %.3f s", s.norm_violations, dt));
}

void gradients() {
  const auto t0 = Clock::now();
  const auto g = check::gradient_suite(103, 10, 1e-5);
  const double dt = seconds_since(t0);
  verdict(3, "gradient correctness", g.max_error <= 1e-5 && dt < 30.0,
          fmt("%zu checks at 10 points, max rel error %.2e, %.2f s", g.cases.size(), g.max_error, dt));
}

void linear_exactness() {
  vae::VaeShape vs;
  vs.latent_dim = 32;
  const vae::VaeModel vae(vs, 5);
  reg::RegressorShape rs;
  rs.latent_dim = 32;
  rs.activation = reg::Activation::Linear;
  reg::RegressorModel r(rs, 6);
  r.set_target_standardization(291.0, 2.0);
  Rng rng(7);
  double worst = 0.0;
  for (int scene = 0; scene < 5; ++scene) {
    raster::RasterStack s(raster::GridSpec{0, 0, 2, 16, 16});
    for (double& v : s.values) v = rng.normal();
    for (double dt : {1.0, -1.0, 3.0, -3.0, 5.0, -5.0, 10.0, -10.0}) {
      perturb::Perturbation p;
      p.delta_t = dt;
      worst = std::max(worst, std::fabs(perturb::perturb_scene(vae, r, s, p).achieved_dt - dt));
    }
  }
  verdict(4, "linear regressor exactness", worst <= 1e-6,
          fmt("5 scenes x 8 changes, max |achieved - requested| %.2e K", worst));
}

void ols_oracle() {
  Rng rng(8);
  double coef = 0.0, se = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 3 + rng.index(15);
    std::vector<double> x(n), y(n);
    const double a = rng.uniform(-2, 2), b = rng.uniform(-3, 3);
    for (std::size_t i = 0; i < n; ++i) x[i] = rng.uniform(-10, 10), y[i] = a * x[i] + b + rng.normal();
    const auto f = stats::ols_fit(x, y);
    const double nn = static_cast<double>(n);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) sx += x[i], sy += y[i], sxx += x[i] * x[i], sxy += x[i] * y[i];
    const double det = nn * sxx - sx * sx;
    const double oa = (nn * sxy - sx * sy) / det, ob = (sxx * sy - sx * sxy) / det;
    double ssr = 0;
    for (std::size_t i = 0; i < n; ++i) ssr += std::pow(y[i] - oa * x[i] - ob, 2);
    const double s2 = ssr / (nn - 2);
    const double osa = std::sqrt(s2 * nn / det), osb = std::sqrt(s2 * sxx / det);
    auto rel = [](double got, double want) { return std::fabs(got - want) / std::max(1.0, std::fabs(want)); };
    coef = std::max({coef, rel(f.a, oa), rel(f.b, ob)});
    se = std::max({se, rel(f.se_a, osa), rel(f.se_b, osb)});
  }
  struct Row {
    double p, dof, t;
  };
  const Row table[] = {{0.975, 1, 12.706}, {0.975, 2, 4.303}, {0.975, 5, 2.571}, {0.975, 7, 2.3646},
                       {0.975, 10, 2.228}, {0.975, 30, 2.042}, {0.95, 3, 2.353},  {0.95, 20, 1.725},
                       {0.995, 4, 4.604},  {0.99, 15, 2.602}};
  double table_err = 0.0;
  for (const auto& row : table) table_err = std::max(table_err, std::fabs(stats::student_t_cdf(row.t, row.dof) - row.p));
  const auto exact = stats::ols_fit(std::vector<double>{-2, -1, 0, 1, 2}, std::vector<double>{-3, -1, 1, 3, 5});
  double resid = 0.0;
  for (double r : exact.residuals) resid = std::max(resid, std::fabs(r));
  verdict(5, "OLS oracle", coef <= 1e-10 && se <= 1e-10 && table_err <= 1e-3 && exact.r_squared == 1.0 && resid == 0.0,
          fmt("coef %.1e, SE %.1e, t table %.1e, exact-linear R^2 %.17g, max |residual| %.1e", coef, se, table_err,
              exact.r_squared, resid));
}

void label_calibration(const RunConfig& cfg) {
  const auto corpus = synth::generate_corpus(100, cfg.scene, cfg.law, derive_seed(cfg.seed, "acceptance/labels"), 4);
  std::size_t within = 0;
  double worst = 0.0;
  for (const auto& s : corpus.scenes) {
    const auto r = raster::rasterize(s.scene.cloud, cfg.grid);
    const double err = std::fabs(label::vegetation_fraction(label::segment(r.stack, cfg.labels)) - s.true_veg_fraction);
    within += err <= 0.1;
    worst = std::max(worst, err);
  }
  verdict(6, "label calibration", within >= 90, fmt("%zu/100 scenes within 0.1, worst %.3f", within, worst));
}

void kld_schedule() {
  const vae::KldSchedule d;
  const double l0 = vae::kld_weight(d, 0), l25 = vae::kld_weight(d, 25), l50 = vae::kld_weight(d, 50),
               l100 = vae::kld_weight(d, 100);
  verdict(10, "KLD schedule", l0 == 0.0 && l25 == 5e-6 && l50 == 1e-5 && l100 == 1e-5,
          fmt("lambda(0) %g, lambda(25) %g, lambda(50) %g, lambda(100) %g", l0, l25, l50, l100));
}

void end_to_end(const fs::path& work) {
  const auto a = work / "run_a", b = work / "run_b";
  fs::remove_all(a);
  fs::remove_all(b);
  std::ostringstream log_a, log_b;

  const auto cfg = desk_config(a);
  const auto t0 = Clock::now();
  const auto report = pipeline::run_pipeline(cfg, log_a);
  const double dt = seconds_since(t0);
  const auto& f = report.fit;
  verdict(7, "end-to-end slope", f.a < 0.0 && f.p_a < 0.05 && dt <= 600.0,
          fmt("%zu scenes, latent %zu, %zu points, a = %.3e per K, p = %.2e, R^2 = %.3f, %zu records excluded, %.0f s",
              cfg.synth_scenes, cfg.vae_shape.latent_dim, report.aggregated.size(), f.a, f.p_a, f.r_squared,
              report.records_excluded, dt));

  const auto rep = io::read_csv_file(pipeline::RunLayout{a}.reg_report());
  const double mae = io::parse_real(rep.rows.at(0).at(rep.column("mae")));
  const double range = io::parse_real(rep.rows.at(0).at(rep.column("temperature_range")));
  verdict(8, "regression accuracy", mae <= 0.1 * range,
          fmt("held-out MAE %.3f K, corpus range %.3f K, ratio %.3f", mae, range, mae / range));

  const auto cfg_b = desk_config(b);
  pipeline::run_pipeline(cfg_b, log_b);
  const auto fa = slurp(pipeline::RunLayout{a}.figure()), fb = slurp(pipeline::RunLayout{b}.figure());
  const auto ra = slurp(pipeline::RunLayout{a}.records()), rb = slurp(pipeline::RunLayout{b}.records());
  verdict(9, "determinism", !fa.empty() && fa == fb && ra == rb,
          fmt("figure.csv %zu bytes %s, records.csv %s", fa.size(), fa == fb ? "identical" : "DIFFERENT",
              ra == rb ? "identical" : "DIFFERENT"));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "lcz_acceptance";
  fs::create_directories(work);
  try {
    step_exactness();
    step_minimality();
    gradients();
    linear_exactness();
    ols_oracle();
    label_calibration(desk_config(work));
    end_to_end(work);
    kld_schedule();
  } catch (const std::exception& e) {
    std::printf("[FAIL] aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d of 10 criteria failed\n", failures);
  return failures ? 1 : 0;
}
