#include "lcz/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lcz/error.hpp"
#include "lcz/rng.hpp"

namespace lcz::reg {

using ad::Graph;
using ad::Parameter;
using ad::Tensor;
using ad::Var;

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
  }
  return "relu";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "linear") return Activation::Linear;
  throw UsageError("unknown activation '" + s + "' (expected relu, tanh or linear)");
}

void RegressorShape::validate() const {
  if (latent_dim == 0 || hidden1 == 0 || hidden2 == 0) throw UsageError("regressor: layer widths must be >= 1");
}

RegressorModel::RegressorModel(const RegressorShape& shape, std::uint64_t seed) : shape_(shape) {
  shape_.validate();
  Rng rng(derive_seed(seed, "reg/init"));
  const double gain = shape_.activation == Activation::Relu ? std::sqrt(2.0) : 1.0;
  auto layer = [&](const std::string& name, std::size_t in, std::size_t out, double g) {
    Tensor w(in, out);
    const double sigma = g / std::sqrt(static_cast<double>(in));
    for (double& v : w.data) v = sigma * rng.normal();
    params_.emplace_back(name + "/w", std::move(w));
    params_.emplace_back(name + "/b", Tensor(1, out));
  };
  params_.reserve(6);
  layer("reg/l1", shape_.latent_dim, shape_.hidden1, gain);
  layer("reg/l2", shape_.hidden1, shape_.hidden2, gain);
  layer("reg/l3", shape_.hidden2, 1, 1.0);
}

void RegressorModel::set_target_standardization(double mean, double std) {
  if (!std::isfinite(mean) || !(std > 0.0) || !std::isfinite(std))
    throw UsageError("regressor: target standardization needs finite mean and positive std");
  target_mean_ = mean;
  target_std_ = std;
}

std::vector<Var> RegressorModel::bind(Graph& g) {
  std::vector<Var> out;
  for (auto& p : params_) out.push_back(g.parameter(p));
  return out;
}

std::vector<Var> RegressorModel::bind_frozen(Graph& g) const {
  std::vector<Var> out;
  for (const auto& p : params_) out.push_back(g.frozen(p));
  return out;
}

Var RegressorModel::forward(Graph& g, std::span<const Var> p, Var c) const {
  if (g.value(c).cols != shape_.latent_dim) throw ShapeError("regressor: code has wrong length");
  auto act = [&](Var v) {
    switch (shape_.activation) {
      case Activation::Relu: return g.relu(v);
      case Activation::Tanh: return g.tanh(v);
      case Activation::Linear: return v;
    }
    return v;
  };
  Var h = act(g.affine(c, p[0], p[1]));
  h = act(g.affine(h, p[2], p[3]));
  return g.affine(h, p[4], p[5]);
}

void RegressorModel::check_code(std::span<const double> c) const {
  if (c.size() != shape_.latent_dim)
    throw ShapeError("regressor: code length " + std::to_string(c.size()) + ", expected " +
                     std::to_string(shape_.latent_dim));
}

double RegressorModel::predict(std::span<const double> c) const {
  check_code(c);
  Graph g;
  const auto p = bind_frozen(g);
  const Var code = g.constant(Tensor::row({c.begin(), c.end()}));
  const double y = g.value(forward(g, p, code)).item();
  return target_mean_ + target_std_ * y;
}

std::pair<double, std::vector<double>> RegressorModel::predict_with_gradient(std::span<const double> c) const {
  check_code(c);
  Graph g;
  const auto p = bind_frozen(g);
  const Var code = g.input(Tensor::row({c.begin(), c.end()}));
  const Var y = forward(g, p, code);
  g.backward(y);
  std::vector<double> grad = g.adjoint(code).data;
  for (double& v : grad) v *= target_std_;
  return {target_mean_ + target_std_ * g.value(y).item(), std::move(grad)};
}

std::vector<double> RegressorModel::grad_wrt_code(std::span<const double> c) const {
  return predict_with_gradient(c).second;
}

std::vector<io::NamedTensor> RegressorModel::to_tensors() const {
  std::vector<io::NamedTensor> out;
  out.push_back({"reg/shape",
                 {4},
                 {static_cast<float>(shape_.latent_dim), static_cast<float>(shape_.hidden1),
                  static_cast<float>(shape_.hidden2), static_cast<float>(static_cast<int>(shape_.activation))}});
  out.push_back({"reg/target_standardization", {2}, {static_cast<float>(target_mean_), static_cast<float>(target_std_)}});
  for (const auto& p : params_) {
    io::NamedTensor t{p.name, {static_cast<std::uint32_t>(p.value.rows), static_cast<std::uint32_t>(p.value.cols)}, {}};
    for (double v : p.value.data) t.values.push_back(static_cast<float>(v));
    out.push_back(std::move(t));
  }
  return out;
}

RegressorModel RegressorModel::from_tensors(const std::vector<io::NamedTensor>& tensors) {
  const auto& meta = io::find_tensor(tensors, "reg/shape");
  const auto& stdz = io::find_tensor(tensors, "reg/target_standardization");
  if (meta.values.size() != 4 || stdz.values.size() != 2) throw FormatError("regressor: malformed metadata tensors");
  const int act = static_cast<int>(meta.values[3]);
  if (act < 0 || act > 2) throw FormatError("regressor: unknown activation code");
  RegressorShape shape{static_cast<std::size_t>(meta.values[0]), static_cast<std::size_t>(meta.values[1]),
                       static_cast<std::size_t>(meta.values[2]), static_cast<Activation>(act)};
  RegressorModel m(shape, 0);
  m.set_target_standardization(stdz.values[0], stdz.values[1]);
  for (auto& p : m.params_) {
    const auto& t = io::find_tensor(tensors, p.name);
    if (t.dims.size() != 2 || t.dims[0] != p.value.rows || t.dims[1] != p.value.cols)
      throw FormatError("tensor '" + p.name + "' has unexpected dims");
    for (std::size_t i = 0; i < t.values.size(); ++i) p.value.data[i] = t.values[i];
  }
  return m;
}

ErrorReport evaluate(const RegressorModel& model, std::span<const std::vector<double>> codes,
                     std::span<const double> temps) {
  if (codes.size() != temps.size()) throw UsageError("evaluate: codes and temperatures differ in length");
  ErrorReport r;
  r.count = codes.size();
  if (codes.empty()) return r;
  r.min_signed = std::numeric_limits<double>::infinity();
  r.max_signed = -std::numeric_limits<double>::infinity();
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const double e = model.predict(codes[i]) - temps[i];
    r.min_signed = std::min(r.min_signed, e);
    r.max_signed = std::max(r.max_signed, e);
    abs_sum += std::fabs(e);
  }
  r.mae = abs_sum / static_cast<double>(codes.size());
  return r;
}

TrainResult train_regressor(std::span<const std::vector<double>> codes, std::span<const double> temps,
                            const RegressorShape& shape, const TrainConfig& config,
                            std::span<const std::vector<double>> eval_codes, std::span<const double> eval_temps) {
  if (codes.size() != temps.size()) throw UsageError("train_regressor: codes and temperatures differ in length");
  if (codes.size() < 2) throw UsageError("train_regressor: need at least 2 samples");
  if (eval_codes.size() != eval_temps.size()) throw UsageError("train_regressor: evaluation set lengths differ");
  if (config.batch_size == 0) throw UsageError("train_regressor: batch_size must be >= 1");
  for (const auto& c : codes)
    if (c.size() != shape.latent_dim) throw ShapeError("train_regressor: code has wrong length");

  Rng rng(derive_seed(config.seed, "reg/train"));
  std::vector<std::size_t> train_idx(codes.size());
  std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
  std::vector<std::size_t> held_idx;
  if (eval_codes.empty() && config.holdout_fraction > 0.0 && codes.size() >= 5) {
    rng.shuffle(train_idx.begin(), train_idx.end());
    const auto held = static_cast<std::size_t>(std::round(config.holdout_fraction * static_cast<double>(codes.size())));
    held_idx.assign(train_idx.end() - static_cast<std::ptrdiff_t>(held), train_idx.end());
    train_idx.resize(train_idx.size() - held);
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(held_idx.begin(), held_idx.end());
  }

  double mean = 0.0;
  for (auto i : train_idx) mean += temps[i];
  mean /= static_cast<double>(train_idx.size());
  double var = 0.0;
  for (auto i : train_idx) var += (temps[i] - mean) * (temps[i] - mean);
  const double std = std::max(1e-6, std::sqrt(var / static_cast<double>(train_idx.size())));

  TrainResult result{RegressorModel(shape, config.seed), {}, {}};
  auto& model = result.model;
  model.set_target_standardization(mean, std);
  std::vector<Parameter*> params;
  for (auto& p : model.parameters()) params.push_back(&p);
  ad::Adam opt(config.lr);

  auto order = train_idx;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::size_t rows = stop - start;
      Tensor x(rows, shape.latent_dim), y(rows, 1);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto i = order[start + r];
        std::copy(codes[i].begin(), codes[i].end(), x.data.begin() + static_cast<std::ptrdiff_t>(r * shape.latent_dim));
        y.data[r] = (temps[i] - mean) / std;
      }
      Graph g;
      const auto p = model.bind(g);
      const Var pred = model.forward(g, p, g.constant(std::move(x)));
      const Var loss = g.mean(g.abs(g.sub(pred, g.constant(std::move(y)))));
      const double value = g.value(loss).item();
      if (!std::isfinite(value))
        throw NumericError("train_regressor: non-finite loss in epoch " + std::to_string(epoch + 1));
      epoch_loss += value * static_cast<double>(rows);
      for (auto* q : params) q->zero_grad();
      g.backward(loss);
      g.accumulate_parameter_grads();
      opt.step(params);
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
  }

  if (!eval_codes.empty()) {
    result.report = evaluate(model, eval_codes, eval_temps);
  } else {
    const auto& report_idx = held_idx.empty() ? train_idx : held_idx;
    std::vector<std::vector<double>> rc;
    std::vector<double> rt;
    for (auto i : report_idx) {
      rc.push_back(codes[i]);
      rt.push_back(temps[i]);
    }
    result.report = evaluate(model, rc, rt);
  }
  return result;
}

}  // namespace lcz::reg
