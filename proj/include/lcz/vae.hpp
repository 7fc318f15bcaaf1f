#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lcz/autodiff.hpp"
#include "lcz/io.hpp"
#include "lcz/rasterizer.hpp"

namespace lcz::vae {

struct KldSchedule {
  double ramp_epochs = 50;
  double lambda_max = 1e-5;
};

/// λ(e) = lambda_max · min(1, e / ramp_epochs). A zero-length ramp means
/// the full weight from epoch 0.
double kld_weight(const KldSchedule& schedule, double epoch);

enum class Architecture {
  /// Two non-overlapping 2×2 patch layers (stride-2 convolutions) then a
  /// dense head. Needs height and width divisible by 4.
  Patch,
  /// Single hidden dense layer.
  Mlp,
};

std::string to_string(Architecture a);
Architecture parse_architecture(const std::string& s);

struct VaeShape {
  std::size_t channels = raster::kChannelCount;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t latent_dim = 64;
  Architecture arch = Architecture::Patch;
  std::size_t patch_channels1 = 16;
  std::size_t patch_channels2 = 32;
  std::size_t hidden = 256;  // Mlp only

  std::size_t input_size() const { return channels * height * width; }
  void validate() const;
  friend bool operator==(const VaeShape&, const VaeShape&) = default;
};

struct Encoding {
  ad::Var mu;
  ad::Var logvar;
};

class VaeModel {
 public:
  VaeModel(const VaeShape& shape, std::uint64_t seed);

  const VaeShape& shape() const { return shape_; }
  std::vector<ad::Parameter>& parameters() { return params_; }
  const std::vector<ad::Parameter>& parameters() const { return params_; }

  /// Differentiable leaves for every parameter, in parameters() order.
  std::vector<ad::Var> bind(ad::Graph& g);
  /// Frozen (constant) leaves; no adjoint ever reaches the weights.
  std::vector<ad::Var> bind_frozen(ad::Graph& g) const;

  /// x is batch × input_size (channel-major per sample).
  Encoding encode(ad::Graph& g, std::span<const ad::Var> p, ad::Var x) const;
  /// c is batch × latent_dim; result is batch × input_size.
  ad::Var decode(ad::Graph& g, std::span<const ad::Var> p, ad::Var c) const;

  /// Mean and log-variance for one normalized stack.
  std::pair<std::vector<double>, std::vector<double>> encode(const raster::RasterStack& s) const;
  /// c = μ, the deterministic code used at inference.
  std::vector<double> encode_mean(const raster::RasterStack& s) const { return encode(s).first; }
  /// Decoded stack takes its GridSpec from `like`.
  raster::RasterStack decode(std::span<const double> c, const raster::GridSpec& like) const;

  std::vector<io::NamedTensor> to_tensors() const;
  static VaeModel from_tensors(const std::vector<io::NamedTensor>& tensors);

 private:
  explicit VaeModel(const VaeShape& shape);
  void check_stack(const raster::RasterStack& s) const;

  VaeShape shape_;
  std::vector<ad::Parameter> params_;
};

/// c = μ + exp(logvar / 2) ⊙ ε
std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> logvar,
                                   std::span<const double> epsilon);

/// KLD(N(μ, σ²) ‖ N(0, 1)) summed over latent dims and averaged over rows.
ad::Var kld(ad::Graph& g, ad::Var mu, ad::Var logvar);
/// mean((s − ŝ)²) + λ · kld(μ, logvar), batched over rows.
ad::Var elbo_loss(ad::Graph& g, ad::Var s, ad::Var s_hat, ad::Var mu, ad::Var logvar, double lambda);
double elbo_loss(std::span<const double> s, std::span<const double> s_hat, std::span<const double> mu,
                 std::span<const double> logvar, double lambda);

struct TrainConfig {
  std::size_t epochs = 100;
  double lr = 1e-3;
  std::size_t batch_size = 16;
  KldSchedule kld;
  std::uint64_t seed = 1;
};

struct EpochStats {
  double loss = 0.0;
  double reconstruction = 0.0;
  double kld = 0.0;
  double lambda = 0.0;
};

struct TrainResult {
  VaeModel model;
  std::vector<EpochStats> history;
};

/// Adam on the ELBO with a reparameterized sample per scene per step.
/// Stacks must be normalized and share the model geometry.
TrainResult train_vae(std::span<const raster::RasterStack> corpus, const VaeShape& shape, const TrainConfig& config);

ad::Tensor stack_batch(std::span<const raster::RasterStack* const> stacks);

}  // namespace lcz::vae
