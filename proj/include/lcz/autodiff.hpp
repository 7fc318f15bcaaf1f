#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Graph is a tape: every operation appends a node and evaluates it
// immediately. Leaves created with input() can later be rebound and the
// whole tape re-evaluated with forward(), which is what the finite
// difference checker uses. Values and adjoints are 64-bit.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lcz::ad {

struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Tensor(std::size_t r, std::size_t c, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor row(std::vector<double> values) {
    const auto n = values.size();
    return Tensor(1, n, std::move(values));
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double item() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// A trainable tensor owned by a model. `grad` accumulates across
/// Graph::accumulate_parameter_grads calls until zero_grad().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

enum class Op {
  Input,
  Constant,
  Parameter,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  MatMul,
  Affine,
  Relu,
  Tanh,
  Exp,
  Log,
  Square,
  Abs,
  Sum,
  Mean,
  SumRows,
  StopGradient,
  Gather,
};

const char* op_name(Op op);

class Graph {
 public:
  // Leaves.
  Var input(Tensor value, bool differentiable = true);
  Var constant(Tensor value);
  /// Marked differentiable leaf holding a copy of `p.value`.
  Var parameter(Parameter& p);
  /// The parameter's current value as a non-differentiable leaf (frozen weights).
  Var frozen(const Parameter& p) { return constant(p.value); }

  // Elementwise, shapes must agree.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double k);
  Var add_scalar(Var a, double k);
  Var relu(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var abs(Var a);

  Var matmul(Var a, Var b);
  /// x·W + b with b (1×n) added to every row of the product.
  Var affine(Var x, Var w, Var b);

  Var sum(Var a);
  Var mean(Var a);
  /// Column vector of per-row sums.
  Var sum_rows(Var a);

  /// Passes the value through and blocks every adjoint behind it.
  Var stop_gradient(Var a);

  /// out.data[i] = a.data[index[i]], reshaped to rows×cols. Used for
  /// reshapes and patch extraction; the adjoint scatter-adds.
  Var gather(Var a, std::shared_ptr<const std::vector<std::size_t>> index, std::size_t rows, std::size_t cols);

  const Tensor& value(Var v) const;
  /// Empty tensor when the node received no adjoint (not differentiable, or
  /// backward not yet run).
  const Tensor& adjoint(Var v) const;
  bool has_adjoint(Var v) const;
  bool requires_grad(Var v) const;
  Op op(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Replace the value of an input leaf. Call forward() afterwards.
  void bind(Var leaf, Tensor value);
  /// Re-evaluate every node in tape order. Throws ShapeError naming the op
  /// when a rebinding breaks shape consistency.
  void forward();
  /// Fill adjoints of every differentiable node reachable from `root`.
  /// Throws UsageError when root is not 1×1.
  void backward(Var root);
  /// Add parameter-leaf adjoints into their Parameter::grad.
  void accumulate_parameter_grads() const;

 private:
  struct Node {
    Op op;
    Tensor value;
    Tensor adjoint;
    std::vector<std::size_t> parents;
    bool requires_grad = false;
    double scalar = 0.0;
    std::shared_ptr<const std::vector<std::size_t>> index;
    Parameter* param = nullptr;
  };

  Var push(Node node);
  void evaluate(Node& node) const;
  void propagate(const Node& node);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

/// Builds a scalar from the given leaves on a fresh graph.
using ScalarFunction = std::function<Var(Graph&, std::span<const Var>)>;

/// max over coordinates of |analytic − central difference| / max(1, |analytic|).
/// Throws NumericError when the function is non-finite at any probe.
double check_gradient(const ScalarFunction& f, const std::vector<Tensor>& point, double h = 1e-5);
double check_gradient(const std::function<Var(Graph&, Var)>& f, const Tensor& point, double h = 1e-5);

// Optimizers operate on Parameter::grad and never touch anything else.

class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(std::span<Parameter* const> params) const;

 private:
  double lr_;
};

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::span<Parameter* const> params);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace lcz::ad
