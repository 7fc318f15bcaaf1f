#include "lcz/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "lcz/error.hpp"

namespace lcz::ad {

Tensor::Tensor(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) throw ShapeError("tensor: value count does not match shape");
}

double Tensor::item() const {
  if (rows != 1 || cols != 1) throw ShapeError("tensor: item() on non-scalar");
  return data[0];
}

const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Constant: return "constant";
    case Op::Parameter: return "parameter";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::MatMul: return "matmul";
    case Op::Affine: return "affine";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::Abs: return "abs";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::SumRows: return "sum_rows";
    case Op::StopGradient: return "stop_gradient";
    case Op::Gather: return "gather";
  }
  return "unknown";
}

namespace {

[[noreturn]] void shape_fail(Op op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + std::to_string(a.rows) + "x" +
                   std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
}

template <class F>
void unary(const Tensor& a, Tensor& out, F f) {
  out.rows = a.rows;
  out.cols = a.cols;
  out.data.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = f(a.data[i]);
}

template <class F>
void binary(Op op, const Tensor& a, const Tensor& b, Tensor& out, F f) {
  if (!a.same_shape(b)) shape_fail(op, a, b);
  out.rows = a.rows;
  out.cols = a.cols;
  out.data.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
}

// out = a·b, i-k-j order so the inner loop streams rows of b and out.
void matmul_into(const Tensor& a, const Tensor& b, Tensor& out) {
  out.rows = a.rows;
  out.cols = b.cols;
  out.data.assign(a.rows * b.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* orow = &out.data[i * out.cols];
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.data[i * a.cols + k];
      if (aik == 0.0) continue;
      const double* brow = &b.data[k * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
}

// da += dout·bᵀ
void accumulate_dout_bt(const Tensor& dout, const Tensor& b, Tensor& da) {
  for (std::size_t i = 0; i < dout.rows; ++i) {
    const double* drow = &dout.data[i * dout.cols];
    for (std::size_t k = 0; k < b.rows; ++k) {
      const double* brow = &b.data[k * b.cols];
      double acc = 0.0;
      for (std::size_t j = 0; j < b.cols; ++j) acc += drow[j] * brow[j];
      da.data[i * da.cols + k] += acc;
    }
  }
}

// db += aᵀ·dout
void accumulate_at_dout(const Tensor& a, const Tensor& dout, Tensor& db) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* drow = &dout.data[i * dout.cols];
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.data[i * a.cols + k];
      if (aik == 0.0) continue;
      double* dbrow = &db.data[k * db.cols];
      for (std::size_t j = 0; j < dout.cols; ++j) dbrow[j] += aik * drow[j];
    }
  }
}

}  // namespace

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw UsageError("graph: variable does not belong to this graph");
  return nodes_[v.id];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }
const Tensor& Graph::adjoint(Var v) const { return node(v).adjoint; }
bool Graph::has_adjoint(Var v) const { return node(v).adjoint.size() > 0; }
bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }
Op Graph::op(Var v) const { return node(v).op; }

Var Graph::push(Node n) {
  for (auto p : n.parents) {
    if (p >= nodes_.size()) throw UsageError(std::string(op_name(n.op)) + ": operand does not belong to this graph");
    n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  if (n.op == Op::StopGradient) n.requires_grad = false;
  evaluate(n);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::input(Tensor value, bool differentiable) {
  Node n{Op::Input, std::move(value), {}, {}, differentiable};
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  Node n{Op::Constant, std::move(value), {}, {}, false};
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(Parameter& p) {
  Node n{Op::Parameter, p.value, {}, {}, true};
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::add(Var a, Var b) { return push(Node{Op::Add, {}, {}, {a.id, b.id}}); }
Var Graph::sub(Var a, Var b) { return push(Node{Op::Sub, {}, {}, {a.id, b.id}}); }
Var Graph::mul(Var a, Var b) { return push(Node{Op::Mul, {}, {}, {a.id, b.id}}); }
Var Graph::matmul(Var a, Var b) { return push(Node{Op::MatMul, {}, {}, {a.id, b.id}}); }
Var Graph::affine(Var x, Var w, Var b) { return push(Node{Op::Affine, {}, {}, {x.id, w.id, b.id}}); }
Var Graph::relu(Var a) { return push(Node{Op::Relu, {}, {}, {a.id}}); }
Var Graph::tanh(Var a) { return push(Node{Op::Tanh, {}, {}, {a.id}}); }
Var Graph::exp(Var a) { return push(Node{Op::Exp, {}, {}, {a.id}}); }
Var Graph::log(Var a) { return push(Node{Op::Log, {}, {}, {a.id}}); }
Var Graph::square(Var a) { return push(Node{Op::Square, {}, {}, {a.id}}); }
Var Graph::abs(Var a) { return push(Node{Op::Abs, {}, {}, {a.id}}); }
Var Graph::sum(Var a) { return push(Node{Op::Sum, {}, {}, {a.id}}); }
Var Graph::mean(Var a) { return push(Node{Op::Mean, {}, {}, {a.id}}); }
Var Graph::sum_rows(Var a) { return push(Node{Op::SumRows, {}, {}, {a.id}}); }
Var Graph::stop_gradient(Var a) { return push(Node{Op::StopGradient, {}, {}, {a.id}}); }

Var Graph::scale(Var a, double k) {
  Node n{Op::Scale, {}, {}, {a.id}};
  n.scalar = k;
  return push(std::move(n));
}

Var Graph::add_scalar(Var a, double k) {
  Node n{Op::AddScalar, {}, {}, {a.id}};
  n.scalar = k;
  return push(std::move(n));
}

Var Graph::gather(Var a, std::shared_ptr<const std::vector<std::size_t>> index, std::size_t rows, std::size_t cols) {
  if (!index || index->size() != rows * cols) throw ShapeError("gather: index length does not match output shape");
  Node n{Op::Gather, {}, {}, {a.id}};
  n.index = std::move(index);
  n.value.rows = rows;
  n.value.cols = cols;
  return push(std::move(n));
}

void Graph::evaluate(Node& n) const {
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.parents[k]].value; };
  switch (n.op) {
    case Op::Input:
    case Op::Constant:
    case Op::Parameter:
      return;
    case Op::Add:
      binary(n.op, in(0), in(1), n.value, [](double x, double y) { return x + y; });
      return;
    case Op::Sub:
      binary(n.op, in(0), in(1), n.value, [](double x, double y) { return x - y; });
      return;
    case Op::Mul:
      binary(n.op, in(0), in(1), n.value, [](double x, double y) { return x * y; });
      return;
    case Op::Scale: {
      const double k = n.scalar;
      unary(in(0), n.value, [k](double x) { return k * x; });
      return;
    }
    case Op::AddScalar: {
      const double k = n.scalar;
      unary(in(0), n.value, [k](double x) { return x + k; });
      return;
    }
    case Op::MatMul:
      if (in(0).cols != in(1).rows) shape_fail(n.op, in(0), in(1));
      matmul_into(in(0), in(1), n.value);
      return;
    case Op::Affine: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Tensor& b = in(2);
      if (x.cols != w.rows) shape_fail(n.op, x, w);
      if (b.rows != 1 || b.cols != w.cols) shape_fail(n.op, w, b);
      matmul_into(x, w, n.value);
      for (std::size_t i = 0; i < n.value.rows; ++i)
        for (std::size_t j = 0; j < n.value.cols; ++j) n.value.data[i * n.value.cols + j] += b.data[j];
      return;
    }
    case Op::Relu:
      unary(in(0), n.value, [](double x) { return x > 0.0 ? x : 0.0; });
      return;
    case Op::Tanh:
      unary(in(0), n.value, [](double x) { return std::tanh(x); });
      return;
    case Op::Exp:
      unary(in(0), n.value, [](double x) { return std::exp(x); });
      return;
    case Op::Log:
      unary(in(0), n.value, [](double x) { return std::log(x); });
      return;
    case Op::Square:
      unary(in(0), n.value, [](double x) { return x * x; });
      return;
    case Op::Abs:
      unary(in(0), n.value, [](double x) { return std::fabs(x); });
      return;
    case Op::Sum:
    case Op::Mean: {
      const Tensor& a = in(0);
      double acc = 0.0;
      for (double x : a.data) acc += x;
      if (n.op == Op::Mean) {
        if (a.size() == 0) throw ShapeError("mean: empty tensor");
        acc /= static_cast<double>(a.size());
      }
      n.value = Tensor::scalar(acc);
      return;
    }
    case Op::SumRows: {
      const Tensor& a = in(0);
      n.value = Tensor(a.rows, 1);
      for (std::size_t i = 0; i < a.rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) acc += a.data[i * a.cols + j];
        n.value.data[i] = acc;
      }
      return;
    }
    case Op::StopGradient:
      n.value = in(0);
      return;
    case Op::Gather: {
      const Tensor& a = in(0);
      const auto& idx = *n.index;
      n.value.data.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= a.size()) throw ShapeError("gather: index out of range");
        n.value.data[i] = a.data[idx[i]];
      }
      return;
    }
  }
}

void Graph::bind(Var leaf, Tensor value) {
  if (leaf.id >= nodes_.size() || nodes_[leaf.id].op != Op::Input) throw UsageError("bind: target is not an input leaf");
  nodes_[leaf.id].value = std::move(value);
}

void Graph::forward() {
  for (auto& n : nodes_) {
    n.adjoint = Tensor();
    evaluate(n);
  }
}

void Graph::propagate(const Node& n) {
  const Tensor& dout = n.adjoint;
  auto grad_of = [&](std::size_t k) -> Tensor* {
    Node& p = nodes_[n.parents[k]];
    return p.requires_grad ? &p.adjoint : nullptr;
  };
  auto val = [&](std::size_t k) -> const Tensor& { return nodes_[n.parents[k]].value; };

  switch (n.op) {
    case Op::Input:
    case Op::Constant:
    case Op::Parameter:
    case Op::StopGradient:
      return;
    case Op::Add:
    case Op::Sub: {
      const double sign = n.op == Op::Add ? 1.0 : -1.0;
      if (auto* g = grad_of(0))
        for (std::size_t i = 0; i < dout.size(); ++i) g->data[i] += dout.data[i];
      if (auto* g = grad_of(1))
        for (std::size_t i = 0; i < dout.size(); ++i) g->data[i] += sign * dout.data[i];
      return;
    }
    case Op::Mul: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      if (auto* g = grad_of(0))
        for (std::size_t i = 0; i < dout.size(); ++i) g->data[i] += dout.data[i] * b.data[i];
      if (auto* g = grad_of(1))
        for (std::size_t i = 0; i < dout.size(); ++i) g->data[i] += dout.data[i] * a.data[i];
      return;
    }
    case Op::Scale:
      if (auto* g = grad_of(0))
        for (std::size_t i = 0; i < dout.size(); ++i) g->data[i] += n.scalar * dout.data[i];
      return;
    case Op::AddScalar:
      if (auto* g = grad_of(0))
        for (std::size_t i = 0; i < dout.size(); ++i) g->data[i] += dout.data[i];
      return;
    case Op::MatMul:
    case Op::Affine: {
      if (auto* g = grad_of(0)) accumulate_dout_bt(dout, val(1), *g);
      if (auto* g = grad_of(1)) accumulate_at_dout(val(0), dout, *g);
      if (n.op == Op::Affine) {
        if (auto* g = grad_of(2))
          for (std::size_t i = 0; i < dout.rows; ++i)
            for (std::size_t j = 0; j < dout.cols; ++j) g->data[j] += dout.data[i * dout.cols + j];
      }
      return;
    }
    case Op::Relu:
      if (auto* g = grad_of(0)) {
        const Tensor& a = val(0);
        for (std::size_t i = 0; i < dout.size(); ++i)
          if (a.data[i] > 0.0) g->data[i] += dout.data[i];
      }
      return;
    case Op::Tanh:
      if (auto* g = grad_of(0))
        for (std::size_t i = 0; i < dout.size(); ++i) {
          const double y = n.value.data[i];
          g->data[i] += dout.data[i] * (1.0 - y * y);
        }
      return;
    case Op::Exp:
      if (auto* g = grad_of(0))
        for (std::size_t i = 0; i < dout.size(); ++i) g->data[i] += dout.data[i] * n.value.data[i];
      return;
    case Op::Log:
      if (auto* g = grad_of(0)) {
        const Tensor& a = val(0);
        for (std::size_t i = 0; i < dout.size(); ++i) g->data[i] += dout.data[i] / a.data[i];
      }
      return;
    case Op::Square:
      if (auto* g = grad_of(0)) {
        const Tensor& a = val(0);
        for (std::size_t i = 0; i < dout.size(); ++i) g->data[i] += 2.0 * a.data[i] * dout.data[i];
      }
      return;
    case Op::Abs:
      // Subgradient 0 at the kink.
      if (auto* g = grad_of(0)) {
        const Tensor& a = val(0);
        for (std::size_t i = 0; i < dout.size(); ++i) {
          const double s = a.data[i] > 0.0 ? 1.0 : (a.data[i] < 0.0 ? -1.0 : 0.0);
          g->data[i] += s * dout.data[i];
        }
      }
      return;
    case Op::Sum:
    case Op::Mean:
      if (auto* g = grad_of(0)) {
        const double d = n.op == Op::Sum ? dout.data[0] : dout.data[0] / static_cast<double>(g->size());
        for (double& x : g->data) x += d;
      }
      return;
    case Op::SumRows:
      if (auto* g = grad_of(0))
        for (std::size_t i = 0; i < g->rows; ++i)
          for (std::size_t j = 0; j < g->cols; ++j) g->data[i * g->cols + j] += dout.data[i];
      return;
    case Op::Gather:
      if (auto* g = grad_of(0)) {
        const auto& idx = *n.index;
        for (std::size_t i = 0; i < idx.size(); ++i) g->data[idx[i]] += dout.data[i];
      }
      return;
  }
}

void Graph::backward(Var root) {
  const Node& r = node(root);
  if (r.value.rows != 1 || r.value.cols != 1)
    throw UsageError("backward: root must be scalar, got " + std::to_string(r.value.rows) + "x" +
                     std::to_string(r.value.cols));
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (i <= root.id && n.requires_grad)
      n.adjoint = Tensor(n.value.rows, n.value.cols);
    else
      n.adjoint = Tensor();
  }
  if (!r.requires_grad) return;
  nodes_[root.id].adjoint.data[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (nodes_[i].requires_grad) propagate(nodes_[i]);
  }
}

void Graph::accumulate_parameter_grads() const {
  for (const auto& n : nodes_) {
    if (n.op != Op::Parameter || n.adjoint.size() == 0) continue;
    auto& g = n.param->grad;
    if (!g.same_shape(n.adjoint)) g = Tensor(n.adjoint.rows, n.adjoint.cols);
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += n.adjoint.data[i];
  }
}

double check_gradient(const ScalarFunction& f, const std::vector<Tensor>& point, double h) {
  Graph g;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const auto& t : point) leaves.push_back(g.input(t));
  const Var root = f(g, leaves);
  if (!std::isfinite(g.value(root).item())) throw NumericError("check_gradient: non-finite value at point");
  g.backward(root);
  std::vector<Tensor> analytic;
  for (auto v : leaves) analytic.push_back(g.adjoint(v));

  auto eval = [&](std::size_t leaf, std::size_t k, double x) {
    Tensor t = point[leaf];
    t.data[k] = x;
    g.bind(leaves[leaf], std::move(t));
    g.forward();
    const double y = g.value(root).item();
    if (!std::isfinite(y)) throw NumericError("check_gradient: non-finite value at probe");
    return y;
  };

  double worst = 0.0;
  for (std::size_t l = 0; l < point.size(); ++l) {
    for (std::size_t k = 0; k < point[l].size(); ++k) {
      const double x0 = point[l].data[k];
      const double numeric = (eval(l, k, x0 + h) - eval(l, k, x0 - h)) / (2.0 * h);
      const double a = analytic[l].data[k];
      worst = std::max(worst, std::fabs(a - numeric) / std::max(1.0, std::fabs(a)));
    }
    g.bind(leaves[l], point[l]);
  }
  g.forward();
  return worst;
}

double check_gradient(const std::function<Var(Graph&, Var)>& f, const Tensor& point, double h) {
  return check_gradient([&](Graph& g, std::span<const Var> v) { return f(g, v[0]); }, std::vector<Tensor>{point}, h);
}

void Sgd::step(std::span<Parameter* const> params) const {
  for (auto* p : params)
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value.data[i] -= lr_ * p->grad.data[i];
}

void Adam::step(std::span<Parameter* const> params) {
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->value.rows, p->value.cols);
      v_.emplace_back(p->value.rows, p->value.cols);
    }
  }
  if (m_.size() != params.size()) throw UsageError("adam: parameter set changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = m_[k].data;
    auto& v = v_[k].data;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double gi = p.grad.data[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      p.value.data[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace lcz::ad
