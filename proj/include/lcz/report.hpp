#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lcz/analysis.hpp"

namespace lcz::report {

/// One counterfactual: scene, requested and realized temperature change and
/// the vegetation fractions of s′ and of the Δt = 0 baseline.
struct ExperimentRecord {
  std::string scene_id;
  double delta_t = 0.0;
  double achieved_dt = 0.0;
  double v_prime = 0.0;
  double v_baseline = 0.0;
  /// Set when the scene's regressor gradient was degenerate; such records
  /// carry no fractions and are excluded from the fit.
  bool degenerate = false;
};

struct ReportBundle {
  std::vector<std::pair<double, double>> aggregated;  // (Δt, mean v′), ascending Δt
  stats::OlsFit fit;
  stats::HypothesisDecision decision;
  std::size_t records_used = 0;
  std::size_t records_excluded = 0;
  std::string figure_csv;
  std::string summary;
};

/// Pure function of (records, alpha). Throws UsageError when no usable
/// record has Δt = 0, InsufficientData with fewer than 3 distinct Δt.
ReportBundle build_report(const std::vector<ExperimentRecord>& records, double alpha);

/// records.csv: scene_id,delta_t,achieved_dt,v_prime,v_baseline,status
void write_records_file(const std::filesystem::path& path, const std::vector<ExperimentRecord>& records);
std::vector<ExperimentRecord> read_records_file(const std::filesystem::path& path);

}  // namespace lcz::report
