#include "lcz/report.hpp"

#include <cmath>
#include <sstream>

#include "lcz/autogeolabel.hpp"
#include "lcz/error.hpp"
#include "lcz/io.hpp"

namespace lcz::report {

namespace {

void check_fraction(double v, const std::string& what, const std::string& scene) {
  if (!(v >= 0.0 && v <= 1.0)) throw NumericError("record " + scene + ": " + what + " outside [0, 1]");
}

}  // namespace

ReportBundle build_report(const std::vector<ExperimentRecord>& records, double alpha) {
  ReportBundle out;
  std::vector<std::pair<double, double>> tuples;
  bool has_baseline = false;
  for (const auto& r : records) {
    if (r.degenerate) {
      ++out.records_excluded;
      continue;
    }
    if (!std::isfinite(r.delta_t)) throw NumericError("record " + r.scene_id + ": non-finite delta_t");
    check_fraction(r.v_prime, "v_prime", r.scene_id);
    check_fraction(r.v_baseline, "v_baseline", r.scene_id);
    if (r.delta_t == 0.0) has_baseline = true;
    tuples.emplace_back(r.delta_t, r.v_prime);
  }
  out.records_used = tuples.size();
  if (!has_baseline) throw UsageError("build_report: no delta_t = 0 baseline among the usable records");

  out.aggregated = label::aggregate_fractions(tuples);
  if (out.aggregated.size() < 3)
    throw stats::InsufficientData("build_report: need at least 3 distinct delta_t values, got " +
                                  std::to_string(out.aggregated.size()));
  std::vector<double> xs, ys;
  for (const auto& [dt, v] : out.aggregated) {
    xs.push_back(dt);
    ys.push_back(v);
  }
  out.fit = stats::ols_fit(xs, ys);
  out.decision = stats::hypothesis_report(out.fit, alpha);

  std::ostringstream csv;
  stats::report_figure_data(csv, out.aggregated, out.fit);
  out.figure_csv = csv.str();

  const auto& f = out.fit;
  std::ostringstream s;
  s << "records used: " << out.records_used << ", excluded (degenerate gradient): " << out.records_excluded << '\n'
    << "aggregated points: " << out.aggregated.size() << '\n'
    << "fit: mean_v = a * delta_t + b\n"
    << "a = " << io::format_real(f.a) << " per K, 95% CI [" << io::format_real(f.ci_a.lo) << ", "
    << io::format_real(f.ci_a.hi) << "], SE " << io::format_real(f.se_a) << '\n'
    << "b = " << io::format_real(f.b) << ", 95% CI [" << io::format_real(f.ci_b.lo) << ", " << io::format_real(f.ci_b.hi)
    << "], SE " << io::format_real(f.se_b) << '\n'
    << "R^2 = " << io::format_real(f.r_squared) << (f.degenerate_variance ? " (degenerate: mean_v is constant)" : "")
    << '\n'
    << "t = " << io::format_real(f.t_a) << ", p (two-sided) = " << io::format_real(f.p_a) << '\n'
    << out.decision.summary;
  out.summary = s.str();
  return out;
}

void write_records_file(const std::filesystem::path& path, const std::vector<ExperimentRecord>& records) {
  io::CsvTable t{{"scene_id", "delta_t", "achieved_dt", "v_prime", "v_baseline", "status"}, {}};
  for (const auto& r : records) {
    if (r.degenerate) {
      t.rows.push_back({r.scene_id, io::format_real(r.delta_t), "", "", "", "degenerate"});
    } else {
      t.rows.push_back({r.scene_id, io::format_real(r.delta_t), io::format_real(r.achieved_dt), io::format_real(r.v_prime),
                        io::format_real(r.v_baseline), "ok"});
    }
  }
  io::write_csv_file(path, t);
}

std::vector<ExperimentRecord> read_records_file(const std::filesystem::path& path) {
  const auto t = io::read_csv_file(path);
  const auto scene = t.column("scene_id");
  const auto dt = t.column("delta_t");
  const auto achieved = t.column("achieved_dt");
  const auto vp = t.column("v_prime");
  const auto vb = t.column("v_baseline");
  const auto status = t.column("status");
  std::vector<ExperimentRecord> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::size_t line = i + 2;
    ExperimentRecord r;
    r.scene_id = row[scene];
    r.delta_t = io::parse_real(row[dt], line);
    if (row[status] == "degenerate") {
      r.degenerate = true;
    } else if (row[status] == "ok") {
      r.achieved_dt = io::parse_real(row[achieved], line);
      r.v_prime = io::parse_real(row[vp], line);
      r.v_baseline = io::parse_real(row[vb], line);
    } else {
      throw ParseError("unknown record status '" + row[status] + "'", line);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace lcz::report
