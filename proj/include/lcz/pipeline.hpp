#pragma once

#include <filesystem>
#include <iosfwd>

#include "lcz/config.hpp"
#include "lcz/report.hpp"

namespace lcz::pipeline {

/// Fixed layout of a run directory.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.resolved.cfg"; }
  std::filesystem::path corpus() const { return root / "corpus"; }
  std::filesystem::path manifest() const { return corpus() / "manifest.csv"; }
  std::filesystem::path truth() const { return corpus() / "truth.csv"; }
  std::filesystem::path norm_stats() const { return corpus() / "norm_stats.lczm"; }
  std::filesystem::path models() const { return root / "models"; }
  std::filesystem::path vae_model() const { return models() / "vae.lczm"; }
  std::filesystem::path reg_model() const { return models() / "reg.lczm"; }
  std::filesystem::path reg_report() const { return models() / "reg_report.csv"; }
  std::filesystem::path perturb() const { return root / "perturb"; }
  std::filesystem::path perturb_index() const { return perturb() / "index.csv"; }
  std::filesystem::path labels() const { return root / "labels"; }
  std::filesystem::path records() const { return labels() / "records.csv"; }
  std::filesystem::path report() const { return root / "report"; }
  std::filesystem::path figure() const { return report() / "figure.csv"; }
  std::filesystem::path report_text() const { return report() / "report.txt"; }
};

// Each stage reads what earlier stages wrote under config.out and logs a
// short progress line per step. `config` must be resolved.
void stage_synth(const RunConfig& config, std::ostream& log);
void stage_rasterize(const RunConfig& config, std::ostream& log);
void stage_train_vae(const RunConfig& config, std::ostream& log);
void stage_train_reg(const RunConfig& config, std::ostream& log);
void stage_perturb(const RunConfig& config, std::ostream& log);
void stage_label(const RunConfig& config, std::ostream& log);
report::ReportBundle stage_analyze(const RunConfig& config, std::ostream& log);

/// synth → rasterize → train-vae → train-reg → perturb → label → analyze.
report::ReportBundle run_pipeline(const RunConfig& config, std::ostream& log);

}  // namespace lcz::pipeline
