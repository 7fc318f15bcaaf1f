#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lcz/autodiff.hpp"
#include "lcz/io.hpp"

namespace lcz::reg {

enum class Activation { Relu, Tanh, Linear };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

struct RegressorShape {
  std::size_t latent_dim = 64;
  std::size_t hidden1 = 128;
  std::size_t hidden2 = 32;
  Activation activation = Activation::Relu;

  void validate() const;
  friend bool operator==(const RegressorShape&, const RegressorShape&) = default;
};

/// Three affine maps n → h₁ → h₂ → 1 with the activation between them.
/// The network predicts standardized temperature; predict() and
/// grad_wrt_code() work in kelvin.
class RegressorModel {
 public:
  RegressorModel(const RegressorShape& shape, std::uint64_t seed);

  const RegressorShape& shape() const { return shape_; }
  std::vector<ad::Parameter>& parameters() { return params_; }
  const std::vector<ad::Parameter>& parameters() const { return params_; }
  double target_mean() const { return target_mean_; }
  double target_std() const { return target_std_; }
  void set_target_standardization(double mean, double std);

  std::vector<ad::Var> bind(ad::Graph& g);
  std::vector<ad::Var> bind_frozen(ad::Graph& g) const;
  /// c is batch × latent_dim; result is batch × 1, standardized units.
  ad::Var forward(ad::Graph& g, std::span<const ad::Var> p, ad::Var c) const;

  double predict(std::span<const double> c) const;
  /// ∂R/∂c in kelvin per latent unit, weights held frozen.
  std::vector<double> grad_wrt_code(std::span<const double> c) const;
  /// Both at once, one forward and one backward pass.
  std::pair<double, std::vector<double>> predict_with_gradient(std::span<const double> c) const;

  std::vector<io::NamedTensor> to_tensors() const;
  static RegressorModel from_tensors(const std::vector<io::NamedTensor>& tensors);

 private:
  void check_code(std::span<const double> c) const;

  RegressorShape shape_;
  std::vector<ad::Parameter> params_;
  double target_mean_ = 0.0;
  double target_std_ = 1.0;
};

struct TrainConfig {
  std::size_t epochs = 200;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  /// Share of the data held out for the error report when no explicit
  /// evaluation set is passed.
  double holdout_fraction = 0.2;
};

struct ErrorReport {
  std::size_t count = 0;
  double min_signed = 0.0;  // min of prediction − target
  double max_signed = 0.0;
  double mae = 0.0;
};

ErrorReport evaluate(const RegressorModel& model, std::span<const std::vector<double>> codes,
                     std::span<const double> temps);

struct TrainResult {
  RegressorModel model;
  ErrorReport report;
  std::vector<double> loss_history;  // mean L1 on standardized targets per epoch
};

/// Trains on L1 loss. With `eval_codes` empty, a seeded holdout_fraction of
/// the data is held back for the report (and not trained on).
TrainResult train_regressor(std::span<const std::vector<double>> codes, std::span<const double> temps,
                            const RegressorShape& shape, const TrainConfig& config,
                            std::span<const std::vector<double>> eval_codes = {},
                            std::span<const double> eval_temps = {});

}  // namespace lcz::reg
