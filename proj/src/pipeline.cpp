#include "lcz/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include "lcz/autogeolabel.hpp"
#include "lcz/error.hpp"
#include "lcz/io.hpp"
#include "lcz/parallel.hpp"
#include "lcz/perturb.hpp"
#include "lcz/rasterizer.hpp"
#include "lcz/regressor.hpp"
#include "lcz/rng.hpp"
#include "lcz/synthcity.hpp"
#include "lcz/vae.hpp"

namespace lcz::pipeline {

namespace fs = std::filesystem;

namespace {

RunLayout layout(const RunConfig& c) { return {fs::path(c.out)}; }

struct Scenes {
  io::SceneManifest manifest;
  std::vector<bool> train;
};

// The split comes from truth.csv when the corpus is synthetic; otherwise a
// seeded 80/20 shuffle over the manifest.
Scenes load_scenes(const RunConfig& c) {
  const auto L = layout(c);
  Scenes s{io::read_manifest_file(L.manifest()), {}};
  const auto n = s.manifest.entries.size();
  if (n == 0) throw UsageError("manifest lists no scenes");
  s.train.assign(n, true);
  if (fs::exists(L.truth())) {
    const auto truth = io::read_csv_file(L.truth());
    const auto id_col = truth.column("scene_id");
    const auto split_col = truth.column("split");
    std::map<std::string, bool> split;
    for (const auto& row : truth.rows) split[row[id_col]] = row[split_col] == "train";
    for (std::size_t i = 0; i < n; ++i) {
      const auto it = split.find(s.manifest.entries[i].scene_id);
      if (it == split.end()) throw FormatError("truth.csv has no row for " + s.manifest.entries[i].scene_id);
      s.train[i] = it->second;
    }
  } else {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(c.seed, "split"));
    rng.shuffle(order.begin(), order.end());
    const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
    for (std::size_t k = n_train; k < n; ++k) s.train[order[k]] = false;
  }
  return s;
}

raster::RasterStack load_stack(const RunConfig& c, const io::ManifestEntry& e) {
  return raster::from_tensors(io::load_model(layout(c).corpus() / e.raster_path));
}

raster::NormStats load_norm_stats(const RunConfig& c) {
  return raster::norm_stats_from_tensors(io::load_model(layout(c).norm_stats()));
}

// Normalized stacks of every scene, manifest order.
std::vector<raster::RasterStack> load_normalized(const RunConfig& c, const Scenes& s) {
  const auto stats = load_norm_stats(c);
  std::vector<raster::RasterStack> out(s.manifest.entries.size());
  parallel_for(out.size(), [&](std::size_t i) { out[i] = raster::normalize(load_stack(c, s.manifest.entries[i]), stats); });
  return out;
}

std::string counterfactual_name(const std::string& scene_id, std::size_t dt_index) {
  return scene_id + "_dt" + std::to_string(dt_index) + ".lczm";
}

void write_text_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace

void stage_synth(const RunConfig& c, std::ostream& log) {
  const auto L = layout(c);
  const auto corpus = synth::generate_corpus(c.synth_scenes, c.scene, c.law, c.synth_seed, worker_count());
  synth::write_corpus(corpus, L.corpus());
  const auto n_train = std::count_if(corpus.scenes.begin(), corpus.scenes.end(), [](const auto& s) { return s.train; });
  log << "synth: " << corpus.scenes.size() << " scenes (" << n_train << " train) -> " << L.corpus().string() << '\n';
}

void stage_rasterize(const RunConfig& c, std::ostream& log) {
  const auto L = layout(c);
  const auto scenes = load_scenes(c);
  const auto& entries = scenes.manifest.entries;
  std::vector<raster::RasterStack> stacks(entries.size());
  std::vector<std::size_t> outside(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    const auto cloud = io::read_point_cloud_file(L.corpus() / "clouds" / (entries[i].scene_id + ".xyz"));
    auto r = raster::rasterize(cloud, c.grid);
    outside[i] = r.points_outside;
    stacks[i] = std::move(r.stack);
    io::save_model(raster::to_tensors(stacks[i]), L.corpus() / entries[i].raster_path);
  });
  // Statistics come from the stored (f32) values so later stages see the
  // same numbers.
  std::vector<raster::RasterStack> train;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (scenes.train[i]) train.push_back(raster::from_tensors(raster::to_tensors(stacks[i])));
  if (train.empty()) throw UsageError("rasterize: no training scenes");
  io::save_model(raster::to_tensors(raster::compute_norm_stats(train)), L.norm_stats());
  std::size_t total_outside = 0;
  for (auto o : outside) total_outside += o;
  log << "rasterize: " << entries.size() << " stacks " << c.grid.width << "x" << c.grid.height << ", " << total_outside
      << " points outside the grid\n";
}

void stage_train_vae(const RunConfig& c, std::ostream& log) {
  const auto L = layout(c);
  const auto scenes = load_scenes(c);
  const auto all = load_normalized(c, scenes);
  std::vector<raster::RasterStack> train;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (scenes.train[i]) train.push_back(all[i]);
  const auto result = vae::train_vae(train, c.vae_shape, c.vae_train);
  io::save_model(result.model.to_tensors(), L.vae_model());
  write_config_file(L.models() / "vae.cfg", c);
  io::CsvTable hist{{"epoch", "loss", "reconstruction", "kld", "lambda"}, {}};
  for (std::size_t e = 0; e < result.history.size(); ++e) {
    const auto& h = result.history[e];
    hist.rows.push_back({std::to_string(e), io::format_real(h.loss), io::format_real(h.reconstruction),
                         io::format_real(h.kld), io::format_real(h.lambda)});
  }
  io::write_csv_file(L.models() / "vae_history.csv", hist);
  const auto& last = result.history.back();
  log << "train-vae: " << train.size() << " scenes, " << result.history.size()
      << " epochs, final reconstruction " << io::format_real(last.reconstruction) << ", kld "
      << io::format_real(last.kld) << '\n';
}

void stage_train_reg(const RunConfig& c, std::ostream& log) {
  const auto L = layout(c);
  const auto scenes = load_scenes(c);
  const auto all = load_normalized(c, scenes);
  const auto model = vae::VaeModel::from_tensors(io::load_model(L.vae_model()));
  std::vector<std::vector<double>> codes(all.size());
  parallel_for(all.size(), [&](std::size_t i) { codes[i] = model.encode_mean(all[i]); });

  std::vector<std::vector<double>> train_codes, test_codes;
  std::vector<double> train_t, test_t;
  double t_lo = INFINITY, t_hi = -INFINITY;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const double t = scenes.manifest.entries[i].temperature_kelvin;
    t_lo = std::min(t_lo, t);
    t_hi = std::max(t_hi, t);
    (scenes.train[i] ? train_codes : test_codes).push_back(codes[i]);
    (scenes.train[i] ? train_t : test_t).push_back(t);
  }
  const auto result = reg::train_regressor(train_codes, train_t, c.reg_shape, c.reg_train, test_codes, test_t);
  io::save_model(result.model.to_tensors(), L.reg_model());
  const double range = t_hi - t_lo;
  const auto& r = result.report;
  io::CsvTable rep{{"count", "min_signed", "max_signed", "mae", "temperature_range", "mae_fraction"},
                   {{std::to_string(r.count), io::format_real(r.min_signed), io::format_real(r.max_signed),
                     io::format_real(r.mae), io::format_real(range),
                     io::format_real(range > 0.0 ? r.mae / range : 0.0)}}};
  io::write_csv_file(L.reg_report(), rep);
  log << "train-reg: held-out MAE " << io::format_real(r.mae) << " K over " << r.count << " scenes, signed error ["
      << io::format_real(r.min_signed) << ", " << io::format_real(r.max_signed) << "] K, corpus range "
      << io::format_real(range) << " K\n";
}

void stage_perturb(const RunConfig& c, std::ostream& log) {
  const auto L = layout(c);
  const auto scenes = load_scenes(c);
  const auto stats = load_norm_stats(c);
  const auto vae_model = vae::VaeModel::from_tensors(io::load_model(L.vae_model()));
  const auto reg_model = reg::RegressorModel::from_tensors(io::load_model(L.reg_model()));

  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < scenes.train.size() && chosen.size() < c.perturb_scenes; ++i)
    if (!scenes.train[i]) chosen.push_back(i);
  if (chosen.empty()) throw UsageError("perturb: no held-out scenes");
  std::vector<raster::RasterStack> stacks;
  for (auto i : chosen) stacks.push_back(raster::normalize(load_stack(c, scenes.manifest.entries[i]), stats));

  // The Δt = 0 baseline is always part of the sweep.
  std::vector<double> dts = c.dt_sweep;
  if (std::find(dts.begin(), dts.end(), 0.0) == dts.end()) dts.insert(dts.begin(), 0.0);

  const auto batch = perturb::batch_perturb(vae_model, reg_model, stacks, dts, c.perturbation, worker_count());
  fs::create_directories(L.perturb());
  io::CsvTable index{{"scene_id", "delta_t", "achieved_dt", "steps", "status", "file"}, {}};
  for (std::size_t k = 0; k < batch.counterfactuals.size(); ++k) {
    const auto& cf = batch.counterfactuals[k];
    const auto& id = scenes.manifest.entries[chosen[batch.scene_of[k]]].scene_id;
    const auto dt_index = k % dts.size();
    const auto name = counterfactual_name(id, dt_index);
    io::save_model(raster::to_tensors(raster::denormalize(cf.counterfactual, stats)), L.perturb() / name);
    index.rows.push_back(
        {id, io::format_real(cf.delta_t), io::format_real(cf.achieved_dt), std::to_string(cf.steps_taken), "ok", name});
  }
  for (const auto& f : batch.failures) {
    const auto& id = scenes.manifest.entries[chosen[f.scene_index]].scene_id;
    for (double dt : dts) index.rows.push_back({id, io::format_real(dt), "", "", "degenerate", ""});
    log << "perturb: " << id << " skipped: " << f.message << '\n';
  }
  io::write_csv_file(L.perturb_index(), index);
  log << "perturb: " << chosen.size() - batch.failures.size() << " of " << chosen.size() << " scenes x "
      << dts.size() << " delta_t values (" << perturb::to_string(c.perturbation.mode) << ")\n";
}

void stage_label(const RunConfig& c, std::ostream& log) {
  const auto L = layout(c);
  const auto index = io::read_csv_file(L.perturb_index());
  const auto id_col = index.column("scene_id");
  const auto dt_col = index.column("delta_t");
  const auto ach_col = index.column("achieved_dt");
  const auto status_col = index.column("status");
  const auto file_col = index.column("file");

  const auto n = index.rows.size();
  std::vector<double> v(n, 0.0);
  fs::create_directories(L.labels() / "maps");
  parallel_for(n, [&](std::size_t i) {
    const auto& row = index.rows[i];
    if (row[status_col] != "ok") return;
    const auto stack = raster::from_tensors(io::load_model(L.perturb() / row[file_col]));
    const auto map = label::segment(stack, c.labels);
    v[i] = label::vegetation_fraction(map);
    auto pgm = row[file_col];
    pgm.replace(pgm.size() - 5, 5, ".pgm");
    std::ofstream f(L.labels() / "maps" / pgm, std::ios::binary);
    if (!f) throw IoError("cannot write label map " + pgm);
    label::write_pgm(f, map);
  });

  std::map<std::string, double> baseline;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = index.rows[i];
    if (row[status_col] == "ok" && io::parse_real(row[dt_col], i + 2) == 0.0) baseline[row[id_col]] = v[i];
  }
  std::vector<report::ExperimentRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = index.rows[i];
    report::ExperimentRecord r;
    r.scene_id = row[id_col];
    r.delta_t = io::parse_real(row[dt_col], i + 2);
    if (row[status_col] != "ok") {
      r.degenerate = true;
    } else {
      const auto b = baseline.find(r.scene_id);
      if (b == baseline.end()) throw FormatError("perturb index has no delta_t = 0 row for " + r.scene_id);
      r.achieved_dt = io::parse_real(row[ach_col], i + 2);
      r.v_prime = v[i];
      r.v_baseline = b->second;
    }
    records.push_back(std::move(r));
  }
  report::write_records_file(L.records(), records);
  log << "label: " << records.size() << " records -> " << L.records().string() << '\n';
}

report::ReportBundle stage_analyze(const RunConfig& c, std::ostream& log) {
  const auto L = layout(c);
  auto bundle = report::build_report(report::read_records_file(L.records()), c.alpha);
  write_text_file(L.figure(), bundle.figure_csv);
  write_text_file(L.report_text(), bundle.summary);
  log << bundle.summary;
  return bundle;
}

report::ReportBundle run_pipeline(const RunConfig& c, std::ostream& log) {
  stage_synth(c, log);
  stage_rasterize(c, log);
  stage_train_vae(c, log);
  stage_train_reg(c, log);
  stage_perturb(c, log);
  stage_label(c, log);
  return stage_analyze(c, log);
}

}  // namespace lcz::pipeline
