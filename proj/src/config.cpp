#include "lcz/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "lcz/error.hpp"
#include "lcz/io.hpp"
#include "lcz/rng.hpp"

namespace lcz {

namespace {

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t to_u64(std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw UsageError("'" + std::string(v) + "' is not an unsigned integer");
  return out;
}

double to_real(std::string_view v) {
  try {
    return io::parse_real(v);
  } catch (const ParseError&) {
    throw UsageError("'" + std::string(v) + "' is not a number");
  }
}

Key real(std::string name, std::function<double&(RunConfig&)> ref) {
  return {name, [ref](const RunConfig& c) { return io::format_real(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, std::string_view v) { ref(c) = to_real(v); }};
}

Key size(std::string name, std::function<std::size_t&(RunConfig&)> ref) {
  return {name, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, std::string_view v) { ref(c) = static_cast<std::size_t>(to_u64(v)); }};
}

Key seed(std::string name, std::function<std::uint64_t&(RunConfig&)> ref) {
  return {name, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, std::string_view v) { ref(c) = to_u64(v); }};
}

const std::vector<Key>& key_table() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back(seed("run.seed", [](RunConfig& c) -> auto& { return c.seed; }));
    k.push_back(real("run.alpha", [](RunConfig& c) -> auto& { return c.alpha; }));
    k.push_back({"paths.out", [](const RunConfig& c) { return c.out; },
                 [](RunConfig& c, std::string_view v) { c.out = std::string(v); }});

    k.push_back(size("grid.width", [](RunConfig& c) -> auto& { return c.grid.width; }));
    k.push_back(size("grid.height", [](RunConfig& c) -> auto& { return c.grid.height; }));
    k.push_back(real("grid.cell_size", [](RunConfig& c) -> auto& { return c.grid.cell_size; }));
    k.push_back(real("grid.origin_x", [](RunConfig& c) -> auto& { return c.grid.origin_x; }));
    k.push_back(real("grid.origin_y", [](RunConfig& c) -> auto& { return c.grid.origin_y; }));

    k.push_back(size("synth.n_scenes", [](RunConfig& c) -> auto& { return c.synth_scenes; }));
    k.push_back(real("synth.tree_density", [](RunConfig& c) -> auto& { return c.scene.tree_density; }));
    k.push_back(real("synth.building_density", [](RunConfig& c) -> auto& { return c.scene.building_density; }));
    k.push_back(real("synth.crown_radius_min", [](RunConfig& c) -> auto& { return c.scene.crown_radius.min; }));
    k.push_back(real("synth.crown_radius_max", [](RunConfig& c) -> auto& { return c.scene.crown_radius.max; }));
    k.push_back(real("synth.tree_height_min", [](RunConfig& c) -> auto& { return c.scene.tree_height.min; }));
    k.push_back(real("synth.tree_height_max", [](RunConfig& c) -> auto& { return c.scene.tree_height.max; }));
    k.push_back(real("synth.building_size_min", [](RunConfig& c) -> auto& { return c.scene.building_size.min; }));
    k.push_back(real("synth.building_size_max", [](RunConfig& c) -> auto& { return c.scene.building_size.max; }));
    k.push_back(real("synth.building_height_min", [](RunConfig& c) -> auto& { return c.scene.building_height.min; }));
    k.push_back(real("synth.building_height_max", [](RunConfig& c) -> auto& { return c.scene.building_height.max; }));
    k.push_back(real("synth.points_per_m2", [](RunConfig& c) -> auto& { return c.scene.points_per_m2; }));
    k.push_back(real("synth.t_base", [](RunConfig& c) -> auto& { return c.law.t_base; }));
    k.push_back(real("synth.k_veg", [](RunConfig& c) -> auto& { return c.law.k_veg; }));
    k.push_back(real("synth.noise_sigma", [](RunConfig& c) -> auto& { return c.law.noise_sigma; }));
    k.push_back(seed("synth.seed", [](RunConfig& c) -> auto& { return c.synth_seed; }));

    k.push_back(size("vae.latent_dim", [](RunConfig& c) -> auto& { return c.vae_shape.latent_dim; }));
    k.push_back({"vae.arch", [](const RunConfig& c) { return vae::to_string(c.vae_shape.arch); },
                 [](RunConfig& c, std::string_view v) { c.vae_shape.arch = vae::parse_architecture(std::string(v)); }});
    k.push_back(size("vae.patch_channels1", [](RunConfig& c) -> auto& { return c.vae_shape.patch_channels1; }));
    k.push_back(size("vae.patch_channels2", [](RunConfig& c) -> auto& { return c.vae_shape.patch_channels2; }));
    k.push_back(size("vae.hidden", [](RunConfig& c) -> auto& { return c.vae_shape.hidden; }));
    k.push_back(size("vae.epochs", [](RunConfig& c) -> auto& { return c.vae_train.epochs; }));
    k.push_back(real("vae.lr", [](RunConfig& c) -> auto& { return c.vae_train.lr; }));
    k.push_back(size("vae.batch_size", [](RunConfig& c) -> auto& { return c.vae_train.batch_size; }));
    k.push_back(real("vae.ramp_epochs", [](RunConfig& c) -> auto& { return c.vae_train.kld.ramp_epochs; }));
    k.push_back(real("vae.lambda_max", [](RunConfig& c) -> auto& { return c.vae_train.kld.lambda_max; }));
    k.push_back(seed("vae.seed", [](RunConfig& c) -> auto& { return c.vae_train.seed; }));

    k.push_back(size("reg.hidden1", [](RunConfig& c) -> auto& { return c.reg_shape.hidden1; }));
    k.push_back(size("reg.hidden2", [](RunConfig& c) -> auto& { return c.reg_shape.hidden2; }));
    k.push_back({"reg.activation", [](const RunConfig& c) { return reg::to_string(c.reg_shape.activation); },
                 [](RunConfig& c, std::string_view v) { c.reg_shape.activation = reg::parse_activation(std::string(v)); }});
    k.push_back(size("reg.epochs", [](RunConfig& c) -> auto& { return c.reg_train.epochs; }));
    k.push_back(real("reg.lr", [](RunConfig& c) -> auto& { return c.reg_train.lr; }));
    k.push_back(size("reg.batch_size", [](RunConfig& c) -> auto& { return c.reg_train.batch_size; }));
    k.push_back(seed("reg.seed", [](RunConfig& c) -> auto& { return c.reg_train.seed; }));

    k.push_back({"perturb.mode", [](const RunConfig& c) { return perturb::to_string(c.perturbation.mode); },
                 [](RunConfig& c, std::string_view v) { c.perturbation.mode = perturb::parse_mode(std::string(v)); }});
    k.push_back({"perturb.dt_sweep", [](const RunConfig& c) { return format_real_list(c.dt_sweep); },
                 [](RunConfig& c, std::string_view v) { c.dt_sweep = parse_real_list(v); }});
    k.push_back(real("perturb.g_floor", [](RunConfig& c) -> auto& { return c.perturbation.g_floor; }));
    k.push_back(real("perturb.zeta", [](RunConfig& c) -> auto& { return c.perturbation.zeta; }));
    k.push_back(size("perturb.steps", [](RunConfig& c) -> auto& { return c.perturbation.steps; }));
    k.push_back(size("perturb.n_scenes", [](RunConfig& c) -> auto& { return c.perturb_scenes; }));

    k.push_back(real("labels.veg_zstd_min", [](RunConfig& c) -> auto& { return c.labels.veg_zstd_min; }));
    k.push_back(real("labels.veg_multiret_min", [](RunConfig& c) -> auto& { return c.labels.veg_multiret_min; }));
    k.push_back(real("labels.bld_height_min", [](RunConfig& c) -> auto& { return c.labels.bld_height_min; }));
    k.push_back(real("labels.bld_zstd_max", [](RunConfig& c) -> auto& { return c.labels.bld_zstd_max; }));
    return k;
  }();
  return table;
}

const Key& find_key(std::string_view name) {
  for (const auto& k : key_table())
    if (k.name == name) return k;
  throw UsageError("unknown config key '" + std::string(name) + "'");
}

}  // namespace

std::vector<double> parse_real_list(std::string_view text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto token = trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (token.empty()) throw UsageError("empty entry in list '" + std::string(text) + "'");
    out.push_back(to_real(token));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_real_list(const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + io::format_real(values[i]);
  return s;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto& k = find_key(key);
  try {
    k.set(*this, trim(value));
  } catch (const UsageError& e) {
    throw UsageError(std::string(key) + ": " + e.what());
  }
}

std::string RunConfig::get(std::string_view key) const { return find_key(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& k : key_table()) n.push_back(k.name);
    return n;
  }();
  return names;
}

void RunConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("run.alpha must lie in (0, 1)");
  if (out.empty()) throw UsageError("paths.out must not be empty");
  grid.validate();
  if (synth_scenes < 1) throw UsageError("synth.n_scenes must be >= 1");
  scene.validate();
  if (!(law.k_veg > 0.0)) throw UsageError("synth.k_veg must be positive");
  if (law.noise_sigma < 0.0) throw UsageError("synth.noise_sigma must be >= 0");
  vae_shape.validate();
  if (vae_train.epochs < 1 || vae_train.batch_size < 1) throw UsageError("vae.epochs and vae.batch_size must be >= 1");
  if (!(vae_train.lr > 0.0)) throw UsageError("vae.lr must be positive");
  if (vae_train.kld.ramp_epochs < 0.0 || vae_train.kld.lambda_max < 0.0)
    throw UsageError("vae.ramp_epochs and vae.lambda_max must be >= 0");
  reg_shape.validate();
  if (reg_train.epochs < 1 || reg_train.batch_size < 1) throw UsageError("reg.epochs and reg.batch_size must be >= 1");
  if (!(reg_train.lr > 0.0)) throw UsageError("reg.lr must be positive");
  perturbation.validate();
  if (dt_sweep.empty()) throw UsageError("perturb.dt_sweep must not be empty");
  for (double dt : dt_sweep)
    if (!std::isfinite(dt)) throw UsageError("perturb.dt_sweep entries must be finite");
  if (perturb_scenes < 1) throw UsageError("perturb.n_scenes must be >= 1");
  labels.validate();
}

RunConfig RunConfig::resolved() const {
  RunConfig r = *this;
  if (r.synth_seed == 0) r.synth_seed = derive_seed(seed, "synth");
  if (r.vae_train.seed == 0) r.vae_train.seed = derive_seed(seed, "train-vae");
  if (r.reg_train.seed == 0) r.reg_train.seed = derive_seed(seed, "train-reg");
  r.scene.grid = r.grid;
  r.scene.seed = r.synth_seed;
  r.law.seed = derive_seed(r.synth_seed, "temperature");
  r.vae_shape.height = r.grid.height;
  r.vae_shape.width = r.grid.width;
  r.reg_shape.latent_dim = r.vae_shape.latent_dim;
  r.validate();
  return r;
}

RunConfig parse_config(std::istream& in) {
  RunConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const auto body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    const auto key = trim(std::string_view(body).substr(0, eq));
    try {
      c.set(key, std::string_view(body).substr(eq + 1));
    } catch (const UsageError& e) {
      throw UsageError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

RunConfig read_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  return parse_config(f);
}

void write_config(std::ostream& out, const RunConfig& config) {
  for (const auto& k : key_table()) out << k.name << " = " << k.get(config) << '\n';
}

void write_config_file(const std::filesystem::path& path, const RunConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  write_config(f, config);
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace lcz
