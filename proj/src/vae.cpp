#include "lcz/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lcz/error.hpp"
#include "lcz/rng.hpp"

namespace lcz::vae {

using ad::Graph;
using ad::Parameter;
using ad::Tensor;
using ad::Var;

double kld_weight(const KldSchedule& schedule, double epoch) {
  if (!(epoch >= 0.0)) throw UsageError("kld_weight: epoch must be >= 0");
  if (schedule.ramp_epochs <= 0.0) return schedule.lambda_max;
  return schedule.lambda_max * std::min(1.0, epoch / schedule.ramp_epochs);
}

std::string to_string(Architecture a) { return a == Architecture::Patch ? "patch" : "mlp"; }

Architecture parse_architecture(const std::string& s) {
  if (s == "patch") return Architecture::Patch;
  if (s == "mlp") return Architecture::Mlp;
  throw UsageError("unknown VAE architecture '" + s + "' (expected patch or mlp)");
}

void VaeShape::validate() const {
  if (channels == 0 || height == 0 || width == 0) throw UsageError("vae: empty input shape");
  if (latent_dim == 0) throw UsageError("vae: latent_dim must be >= 1");
  if (arch == Architecture::Patch) {
    if (height % 4 != 0 || width % 4 != 0) throw UsageError("vae: patch architecture needs height and width divisible by 4");
    if (patch_channels1 == 0 || patch_channels2 == 0) throw UsageError("vae: patch channel widths must be >= 1");
  } else if (hidden == 0) {
    throw UsageError("vae: hidden width must be >= 1");
  }
}

namespace {

using Index = std::shared_ptr<const std::vector<std::size_t>>;

// Per-sample channel-major (C, H, W) → rows of 2×2 patches: row (b, py, px),
// column (c, dy, dx).
Index patchify_channel_major(std::size_t batch, std::size_t c_count, std::size_t h, std::size_t w) {
  const std::size_t ph = h / 2, pw = w / 2;
  auto idx = std::make_shared<std::vector<std::size_t>>(batch * ph * pw * c_count * 4);
  std::size_t k = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t py = 0; py < ph; ++py)
      for (std::size_t px = 0; px < pw; ++px)
        for (std::size_t c = 0; c < c_count; ++c)
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx)
              (*idx)[k++] = b * c_count * h * w + c * h * w + (2 * py + dy) * w + (2 * px + dx);
  return idx;
}

// Pixel rows (b, y, x) × K channels → rows of 2×2 patches, columns (k, dy, dx).
Index patchify_pixel_rows(std::size_t batch, std::size_t k_count, std::size_t h, std::size_t w) {
  const std::size_t ph = h / 2, pw = w / 2;
  auto idx = std::make_shared<std::vector<std::size_t>>(batch * ph * pw * k_count * 4);
  std::size_t k = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t qy = 0; qy < ph; ++qy)
      for (std::size_t qx = 0; qx < pw; ++qx)
        for (std::size_t ch = 0; ch < k_count; ++ch)
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx)
              (*idx)[k++] = (b * h * w + (2 * qy + dy) * w + (2 * qx + dx)) * k_count + ch;
  return idx;
}

// Inverse layout of patchify_pixel_rows: patch rows with columns (k, dy, dx)
// → pixel rows (b, y, x) × K at the finer h × w resolution.
Index unpatchify_pixel_rows(std::size_t batch, std::size_t k_count, std::size_t h, std::size_t w) {
  const std::size_t pw = w / 2, patches = (h / 2) * pw;
  auto idx = std::make_shared<std::vector<std::size_t>>(batch * h * w * k_count);
  std::size_t k = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < k_count; ++ch)
          (*idx)[k++] = (b * patches + (y / 2) * pw + x / 2) * (k_count * 4) + ch * 4 + (y % 2) * 2 + (x % 2);
  return idx;
}

// Inverse of patchify_channel_major.
Index unpatchify_channel_major(std::size_t batch, std::size_t c_count, std::size_t h, std::size_t w) {
  const std::size_t pw = w / 2, patches = (h / 2) * pw;
  auto idx = std::make_shared<std::vector<std::size_t>>(batch * c_count * h * w);
  std::size_t k = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < c_count; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          (*idx)[k++] = (b * patches + (y / 2) * pw + x / 2) * (c_count * 4) + c * 4 + (y % 2) * 2 + (x % 2);
  return idx;
}

Index identity(std::size_t n) {
  auto idx = std::make_shared<std::vector<std::size_t>>(n);
  std::iota(idx->begin(), idx->end(), std::size_t{0});
  return idx;
}

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sigma) {
  Tensor t(rows, cols);
  for (double& v : t.data) v = sigma * rng.normal();
  return t;
}

void add_layer(std::vector<Parameter>& params, Rng& rng, const std::string& name, std::size_t in, std::size_t out,
               double gain) {
  params.emplace_back(name + "/w", random_matrix(rng, in, out, gain * std::sqrt(1.0 / static_cast<double>(in))));
  params.emplace_back(name + "/b", Tensor(1, out));
}

}  // namespace

VaeModel::VaeModel(const VaeShape& shape) : shape_(shape) { shape_.validate(); }

VaeModel::VaeModel(const VaeShape& shape, std::uint64_t seed) : VaeModel(shape) {
  Rng rng(derive_seed(seed, "vae/init"));
  const double relu_gain = std::sqrt(2.0);
  const auto& s = shape_;
  const std::size_t n = s.latent_dim;
  params_.reserve(14);
  if (s.arch == Architecture::Patch) {
    const std::size_t flat = (s.height / 4) * (s.width / 4) * s.patch_channels2;
    add_layer(params_, rng, "vae/enc/patch1", s.channels * 4, s.patch_channels1, relu_gain);
    add_layer(params_, rng, "vae/enc/patch2", s.patch_channels1 * 4, s.patch_channels2, relu_gain);
    add_layer(params_, rng, "vae/enc/mu", flat, n, 1.0);
    add_layer(params_, rng, "vae/enc/logvar", flat, n, 0.1);
    add_layer(params_, rng, "vae/dec/dense", n, flat, relu_gain);
    add_layer(params_, rng, "vae/dec/patch2", s.patch_channels2, s.patch_channels1 * 4, relu_gain);
    add_layer(params_, rng, "vae/dec/patch1", s.patch_channels1, s.channels * 4, 1.0);
  } else {
    add_layer(params_, rng, "vae/enc/hidden", s.input_size(), s.hidden, relu_gain);
    add_layer(params_, rng, "vae/enc/mu", s.hidden, n, 1.0);
    add_layer(params_, rng, "vae/enc/logvar", s.hidden, n, 0.1);
    add_layer(params_, rng, "vae/dec/hidden", n, s.hidden, relu_gain);
    add_layer(params_, rng, "vae/dec/out", s.hidden, s.input_size(), 1.0);
  }
}

std::vector<Var> VaeModel::bind(Graph& g) {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(g.parameter(p));
  return out;
}

std::vector<Var> VaeModel::bind_frozen(Graph& g) const {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(g.frozen(p));
  return out;
}

Encoding VaeModel::encode(Graph& g, std::span<const Var> p, Var x) const {
  const auto& s = shape_;
  const std::size_t batch = g.value(x).rows;
  if (g.value(x).cols != s.input_size()) throw ShapeError("vae encode: input has wrong size");
  if (s.arch == Architecture::Patch) {
    const std::size_t h1 = s.height / 2, w1 = s.width / 2;
    const std::size_t p2 = (s.height / 4) * (s.width / 4);
    Var t = g.gather(x, patchify_channel_major(batch, s.channels, s.height, s.width), batch * h1 * w1, s.channels * 4);
    t = g.relu(g.affine(t, p[0], p[1]));
    t = g.gather(t, patchify_pixel_rows(batch, s.patch_channels1, h1, w1), batch * p2, s.patch_channels1 * 4);
    t = g.relu(g.affine(t, p[2], p[3]));
    t = g.gather(t, identity(batch * p2 * s.patch_channels2), batch, p2 * s.patch_channels2);
    return {g.affine(t, p[4], p[5]), g.affine(t, p[6], p[7])};
  }
  Var h = g.relu(g.affine(x, p[0], p[1]));
  return {g.affine(h, p[2], p[3]), g.affine(h, p[4], p[5])};
}

Var VaeModel::decode(Graph& g, std::span<const Var> p, Var c) const {
  const auto& s = shape_;
  const std::size_t batch = g.value(c).rows;
  if (g.value(c).cols != s.latent_dim) throw ShapeError("vae decode: code has wrong length");
  if (s.arch == Architecture::Patch) {
    const std::size_t h1 = s.height / 2, w1 = s.width / 2;
    const std::size_t p2 = (s.height / 4) * (s.width / 4);
    Var t = g.relu(g.affine(c, p[8], p[9]));
    t = g.gather(t, identity(batch * p2 * s.patch_channels2), batch * p2, s.patch_channels2);
    t = g.relu(g.affine(t, p[10], p[11]));
    t = g.gather(t, unpatchify_pixel_rows(batch, s.patch_channels1, h1, w1), batch * h1 * w1, s.patch_channels1);
    t = g.affine(t, p[12], p[13]);
    return g.gather(t, unpatchify_channel_major(batch, s.channels, s.height, s.width), batch, s.input_size());
  }
  Var h = g.relu(g.affine(c, p[6], p[7]));
  return g.affine(h, p[8], p[9]);
}

void VaeModel::check_stack(const raster::RasterStack& st) const {
  if (st.spec.height != shape_.height || st.spec.width != shape_.width ||
      st.values.size() != shape_.input_size())
    throw ShapeError("vae: stack is " + std::to_string(st.spec.height) + "x" + std::to_string(st.spec.width) +
                     ", model expects " + std::to_string(shape_.height) + "x" + std::to_string(shape_.width));
}

std::pair<std::vector<double>, std::vector<double>> VaeModel::encode(const raster::RasterStack& st) const {
  check_stack(st);
  Graph g;
  const auto p = bind_frozen(g);
  const Var x = g.constant(Tensor(1, shape_.input_size(), st.values));
  const auto e = encode(g, p, x);
  return {g.value(e.mu).data, g.value(e.logvar).data};
}

raster::RasterStack VaeModel::decode(std::span<const double> c, const raster::GridSpec& like) const {
  if (c.size() != shape_.latent_dim)
    throw ShapeError("vae decode: code length " + std::to_string(c.size()) + ", expected " +
                     std::to_string(shape_.latent_dim));
  if (like.height != shape_.height || like.width != shape_.width) throw ShapeError("vae decode: grid does not match model");
  Graph g;
  const auto p = bind_frozen(g);
  const Var code = g.constant(Tensor(1, c.size(), std::vector<double>(c.begin(), c.end())));
  const Var out = decode(g, p, code);
  raster::RasterStack st(like);
  st.values = g.value(out).data;
  for (double v : st.values)
    if (!std::isfinite(v)) throw NumericError("vae decode: non-finite output");
  return st;
}

std::vector<io::NamedTensor> VaeModel::to_tensors() const {
  const auto& s = shape_;
  std::vector<io::NamedTensor> out;
  out.push_back({"vae/shape",
                 {8},
                 {static_cast<float>(s.channels), static_cast<float>(s.height), static_cast<float>(s.width),
                  static_cast<float>(s.latent_dim), s.arch == Architecture::Patch ? 0.0f : 1.0f,
                  static_cast<float>(s.patch_channels1), static_cast<float>(s.patch_channels2),
                  static_cast<float>(s.hidden)}});
  for (const auto& p : params_) {
    io::NamedTensor t{p.name, {static_cast<std::uint32_t>(p.value.rows), static_cast<std::uint32_t>(p.value.cols)}, {}};
    t.values.reserve(p.value.size());
    for (double v : p.value.data) t.values.push_back(static_cast<float>(v));
    out.push_back(std::move(t));
  }
  return out;
}

VaeModel VaeModel::from_tensors(const std::vector<io::NamedTensor>& tensors) {
  const auto& meta = io::find_tensor(tensors, "vae/shape");
  if (meta.values.size() != 8) throw FormatError("vae/shape: expected 8 values");
  auto dim = [&](int i) { return static_cast<std::size_t>(meta.values[static_cast<std::size_t>(i)]); };
  VaeShape s{dim(0), dim(1), dim(2), dim(3), meta.values[4] == 0.0f ? Architecture::Patch : Architecture::Mlp,
             dim(5), dim(6), dim(7)};
  // Build a throwaway initialization for names and shapes, then overwrite.
  VaeModel m(s, 0);
  for (auto& p : m.params_) {
    const auto& t = io::find_tensor(tensors, p.name);
    if (t.dims.size() != 2 || t.dims[0] != p.value.rows || t.dims[1] != p.value.cols)
      throw FormatError("tensor '" + p.name + "' has unexpected dims");
    for (std::size_t i = 0; i < t.values.size(); ++i) p.value.data[i] = t.values[i];
  }
  return m;
}

std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> logvar,
                                   std::span<const double> epsilon) {
  if (mu.size() != logvar.size() || mu.size() != epsilon.size()) throw ShapeError("reparameterize: length mismatch");
  std::vector<double> c(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) c[i] = mu[i] + std::exp(0.5 * logvar[i]) * epsilon[i];
  return c;
}

Var kld(Graph& g, Var mu, Var logvar) {
  const double rows = static_cast<double>(g.value(mu).rows);
  // −½ Σ (1 + logvar − μ² − exp(logvar)), per row, averaged over rows.
  Var inner = g.sub(g.add_scalar(logvar, 1.0), g.add(g.square(mu), g.exp(logvar)));
  return g.scale(g.sum(inner), -0.5 / rows);
}

Var elbo_loss(Graph& g, Var s, Var s_hat, Var mu, Var logvar, double lambda) {
  if (lambda < 0.0) throw UsageError("elbo_loss: lambda must be >= 0");
  Var recon = g.mean(g.square(g.sub(s_hat, s)));
  if (lambda == 0.0) return recon;
  return g.add(recon, g.scale(kld(g, mu, logvar), lambda));
}

double elbo_loss(std::span<const double> s, std::span<const double> s_hat, std::span<const double> mu,
                 std::span<const double> logvar, double lambda) {
  if (s.size() != s_hat.size() || mu.size() != logvar.size()) throw ShapeError("elbo_loss: length mismatch");
  Graph g;
  auto leaf = [&](std::span<const double> v) { return g.constant(Tensor::row({v.begin(), v.end()})); };
  return g.value(elbo_loss(g, leaf(s), leaf(s_hat), leaf(mu), leaf(logvar), lambda)).item();
}

Tensor stack_batch(std::span<const raster::RasterStack* const> stacks) {
  if (stacks.empty()) return {};
  const std::size_t n = stacks.front()->values.size();
  Tensor t(stacks.size(), n);
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    if (stacks[i]->values.size() != n) throw ShapeError("stack_batch: stacks differ in size");
    std::copy(stacks[i]->values.begin(), stacks[i]->values.end(), t.data.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return t;
}

TrainResult train_vae(std::span<const raster::RasterStack> corpus, const VaeShape& shape, const TrainConfig& config) {
  if (corpus.empty()) throw UsageError("train_vae: empty corpus");
  if (config.batch_size == 0) throw UsageError("train_vae: batch_size must be >= 1");
  TrainResult result{VaeModel(shape, config.seed), {}};
  auto& model = result.model;
  for (const auto& st : corpus) {
    if (st.spec.height != shape.height || st.spec.width != shape.width || st.values.size() != shape.input_size())
      throw ShapeError("train_vae: corpus stack does not match model shape");
  }

  std::vector<Parameter*> params;
  for (auto& p : model.parameters()) params.push_back(&p);
  ad::Adam opt(config.lr);
  Rng rng(derive_seed(config.seed, "vae/train"));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lambda = kld_weight(config.kld, static_cast<double>(epoch));
    rng.shuffle(order.begin(), order.end());
    EpochStats stats{0.0, 0.0, 0.0, lambda};
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<const raster::RasterStack*> members;
      for (std::size_t i = start; i < stop; ++i) members.push_back(&corpus[order[i]]);
      const std::size_t rows = members.size();

      Graph g;
      const auto p = model.bind(g);
      const Var x = g.constant(stack_batch(members));
      const auto enc = model.encode(g, p, x);
      Tensor eps(rows, shape.latent_dim);
      for (double& e : eps.data) e = rng.normal();
      const Var c = g.add(enc.mu, g.mul(g.exp(g.scale(enc.logvar, 0.5)), g.constant(std::move(eps))));
      const Var s_hat = model.decode(g, p, c);
      const Var recon = g.mean(g.square(g.sub(s_hat, x)));
      const Var kl = kld(g, enc.mu, enc.logvar);
      const Var loss = g.add(recon, g.scale(kl, lambda));

      const double value = g.value(loss).item();
      if (!std::isfinite(value)) throw NumericError("train_vae: non-finite loss in epoch " + std::to_string(epoch + 1));
      const double w = static_cast<double>(rows) / static_cast<double>(order.size());
      stats.loss += w * value;
      stats.reconstruction += w * g.value(recon).item();
      stats.kld += w * g.value(kl).item();

      for (auto* q : params) q->zero_grad();
      g.backward(loss);
      g.accumulate_parameter_grads();
      opt.step(params);
    }
    result.history.push_back(stats);
  }
  return result;
}

}  // namespace lcz::vae
