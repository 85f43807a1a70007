#pragma once

// Tape-based reverse-mode autodiff over dense f64 tensors.
//
// A Graph records one forward computation; backward() walks the tape in
// reverse and accumulates gradients by sum over all paths. Graphs are cheap,
// short-lived objects: trainers build one per step (or per sequence) and
// drop it. Leaf tensors (parameters, large constants) are borrowed by
// reference, so binding a model into a graph copies nothing.
//
// Matmul/transpose run on Eigen maps; everything else is hand-rolled.
// Softmax and log-softmax use max-subtraction / log-sum-exp. Every op
// validates its output for NaN/Inf, which inductively covers all inputs.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "relsum/common.hpp"
#include "relsum/tensor.hpp"

namespace relsum {

enum class OpKind : uint8_t {
  constant,
  parameter,
  matmul,
  transpose,
  add,
  sub,
  mul,
  embed_lookup,
  softmax,
  log_softmax,
  layer_norm,
  relu,
  sigmoid,
  exp_op,
  log_op,
  softplus,
  concat,
  slice,
  gather,
  mean,
  sum,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::embed_lookup: return "embed_lookup";
    case OpKind::softmax: return "softmax";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::exp_op: return "exp";
    case OpKind::log_op: return "log";
    case OpKind::softplus: return "softplus";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::gather: return "gather";
    case OpKind::mean: return "mean";
    case OpKind::sum: return "sum";
  }
  return "?";
}

struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Graph {
  using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapM = Eigen::Map<EMat>;
  using MapC = Eigen::Map<const EMat>;

  struct Node {
    OpKind kind;
    std::array<int, 3> in{-1, -1, -1};
    Tensor val;                    // owned output (unused for borrowed leaves)
    const Tensor* ext = nullptr;   // borrowed leaf storage
    Tensor grad;                   // allocated lazily during backward
    bool needs_grad = false;
    std::string pname;             // parameter nodes only
    std::vector<int> iaux;         // embed ids, gather cols, slice [axis,start,len]
    double daux = 0.0;             // layer_norm eps
  };

 public:
  const Tensor& out(Value v) const {
    const Node& n = node(v);
    return n.ext ? *n.ext : n.val;
  }

  size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    param_ids_.clear();
  }

  // ---- leaves ----

  Value constant(Tensor t) {
    check_finite(t, "constant input");
    Node n;
    n.kind = OpKind::constant;
    n.val = std::move(t);
    return push(std::move(n));
  }

  // Borrow a tensor whose lifetime outlives the graph.
  Value constant_ref(const Tensor& t) {
    check_finite(t, "constant input");
    Node n;
    n.kind = OpKind::constant;
    n.ext = &t;
    return push(std::move(n));
  }

  // Trainable leaf. Binding the same name twice yields the same node so
  // gradient contributions accumulate.
  Value param(const std::string& name, const Tensor& t) {
    auto it = param_ids_.find(name);
    if (it != param_ids_.end()) return Value{it->second};
    Node n;
    n.kind = OpKind::parameter;
    n.ext = &t;
    n.needs_grad = true;
    n.pname = name;
    Value v = push(std::move(n));
    param_ids_[name] = v.id;
    return v;
  }

  // ---- ops ----

  Value matmul(Value a, Value b) {
    const Tensor& A = out(a);
    const Tensor& B = out(b);
    if (A.ndim() != 2 || B.ndim() != 2 || A.shape[1] != B.shape[0])
      fail(Errc::shape_mismatch, std::string("matmul: ") + shape_str(A.shape) + " x " + shape_str(B.shape));
    Tensor C({A.shape[0], B.shape[1]});
    MapM(C.data.data(), C.rows(), C.cols()).noalias() =
        MapC(A.data.data(), A.rows(), A.cols()) * MapC(B.data.data(), B.rows(), B.cols());
    return emit(OpKind::matmul, {a, b}, std::move(C));
  }

  Value transpose(Value a) {
    const Tensor& A = out(a);
    if (A.ndim() != 2) fail(Errc::shape_mismatch, "transpose: need 2-d tensor, got " + shape_str(A.shape));
    Tensor C({A.shape[1], A.shape[0]});
    MapM(C.data.data(), C.rows(), C.cols()).noalias() =
        MapC(A.data.data(), A.rows(), A.cols()).transpose();
    return emit(OpKind::transpose, {a}, std::move(C));
  }

  Value add(Value a, Value b) { return add_like(OpKind::add, a, b); }
  Value sub(Value a, Value b) { return add_like(OpKind::sub, a, b); }

  Value mul(Value a, Value b) {
    const Tensor& A = out(a);
    const Tensor& B = out(b);
    Tensor C;
    if (A.same_shape(B)) {
      C = Tensor(A.shape);
      for (int64_t i = 0; i < A.numel(); ++i) C.data[i] = A.data[i] * B.data[i];
    } else if (B.numel() == 1) {
      C = Tensor(A.shape);
      const double s = B.data[0];
      for (int64_t i = 0; i < A.numel(); ++i) C.data[i] = A.data[i] * s;
    } else if (A.numel() == 1) {
      C = Tensor(B.shape);
      const double s = A.data[0];
      for (int64_t i = 0; i < B.numel(); ++i) C.data[i] = s * B.data[i];
    } else {
      fail(Errc::shape_mismatch, std::string("mul: ") + shape_str(A.shape) + " vs " + shape_str(B.shape));
    }
    return emit(OpKind::mul, {a, b}, std::move(C));
  }

  Value scale(Value a, double c) { return mul(a, constant(Tensor::scalar(c))); }

  Value embed(Value table, std::vector<int> ids) {
    const Tensor& T = out(table);
    if (T.ndim() != 2) fail(Errc::shape_mismatch, "embed_lookup: table must be 2-d, got " + shape_str(T.shape));
    const int V = T.shape[0], d = T.shape[1];
    Tensor C({static_cast<int>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
      const int id = ids[i];
      if (id < 0 || id >= V)
        fail(Errc::bad_argument, "embed_lookup: id " + std::to_string(id) + " outside vocabulary of " + std::to_string(V));
      std::copy_n(T.data.begin() + static_cast<size_t>(id) * d, d, C.data.begin() + i * d);
    }
    Node n;
    n.kind = OpKind::embed_lookup;
    n.in = {table.id, -1, -1};
    n.val = std::move(C);
    n.iaux = std::move(ids);
    n.needs_grad = node(table).needs_grad;
    return finish(std::move(n));
  }

  Value softmax(Value a) { return softmax_like(OpKind::softmax, a); }
  Value log_softmax(Value a) { return softmax_like(OpKind::log_softmax, a); }

  Value layer_norm(Value x, Value gain, Value bias, double eps = 1e-5) {
    const Tensor& X = out(x);
    const Tensor& G = out(gain);
    const Tensor& B = out(bias);
    const int n = last_dim(X);
    if (G.ndim() != 1 || B.ndim() != 1 || G.shape[0] != n || B.shape[0] != n)
      fail(Errc::shape_mismatch, std::string("layer_norm: x ") + shape_str(X.shape) + " gain " +
                                     shape_str(G.shape) + " bias " + shape_str(B.shape));
    const int64_t rows = X.numel() / n;
    Tensor C(X.shape);
    for (int64_t r = 0; r < rows; ++r) {
      const double* xr = X.data.data() + r * n;
      double* cr = C.data.data() + r * n;
      double mu = 0.0;
      for (int j = 0; j < n; ++j) mu += xr[j];
      mu /= n;
      double var = 0.0;
      for (int j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
      var /= n;
      const double inv = 1.0 / std::sqrt(var + eps);
      for (int j = 0; j < n; ++j) cr[j] = (xr[j] - mu) * inv * G.data[j] + B.data[j];
    }
    Node nd;
    nd.kind = OpKind::layer_norm;
    nd.in = {x.id, gain.id, bias.id};
    nd.val = std::move(C);
    nd.daux = eps;
    nd.needs_grad = node(x).needs_grad || node(gain).needs_grad || node(bias).needs_grad;
    return finish(std::move(nd));
  }

  Value relu(Value a) {
    return unary(OpKind::relu, a, [](double v) { return v > 0.0 ? v : 0.0; });
  }
  Value sigmoid(Value a) {
    return unary(OpKind::sigmoid, a, [](double v) { return stable_sigmoid(v); });
  }
  Value exp(Value a) {
    return unary(OpKind::exp_op, a, [](double v) { return std::exp(v); });
  }
  Value log(Value a) {
    return unary(OpKind::log_op, a, [](double v) { return std::log(v); });
  }
  Value softplus(Value a) {
    return unary(OpKind::softplus, a, [](double v) { return stable_softplus(v); });
  }

  Value concat(Value a, Value b) {
    const Tensor& A = out(a);
    const Tensor& B = out(b);
    Tensor C;
    if (A.ndim() == 1 && B.ndim() == 1) {
      C = Tensor({A.shape[0] + B.shape[0]});
      std::copy(A.data.begin(), A.data.end(), C.data.begin());
      std::copy(B.data.begin(), B.data.end(), C.data.begin() + A.numel());
    } else if (A.ndim() == 2 && B.ndim() == 2 && A.shape[0] == B.shape[0]) {
      const int m = A.shape[0], n1 = A.shape[1], n2 = B.shape[1];
      C = Tensor({m, n1 + n2});
      for (int i = 0; i < m; ++i) {
        std::copy_n(A.data.begin() + static_cast<size_t>(i) * n1, n1, C.data.begin() + static_cast<size_t>(i) * (n1 + n2));
        std::copy_n(B.data.begin() + static_cast<size_t>(i) * n2, n2,
                    C.data.begin() + static_cast<size_t>(i) * (n1 + n2) + n1);
      }
    } else {
      fail(Errc::shape_mismatch, std::string("concat: ") + shape_str(A.shape) + " vs " + shape_str(B.shape));
    }
    return emit(OpKind::concat, {a, b}, std::move(C));
  }

  // slice along axis 0 (rows) or the last axis (columns for 2-d)
  Value slice(Value a, int axis, int start, int len) {
    const Tensor& A = out(a);
    if (A.ndim() == 0 || A.ndim() > 2) fail(Errc::shape_mismatch, "slice: need 1-d or 2-d tensor");
    if (A.ndim() == 1) axis = 0;
    const int dim = (axis == 0) ? A.shape[0] : A.shape[A.ndim() - 1];
    if (axis < 0 || axis >= A.ndim() || start < 0 || len < 0 || start + len > dim)
      fail(Errc::bad_argument, std::string("slice: range [") + std::to_string(start) + "," +
                                   std::to_string(start + len) + ") axis " + std::to_string(axis) +
                                   " of " + shape_str(A.shape));
    Tensor C;
    if (A.ndim() == 1) {
      C = Tensor({len});
      std::copy_n(A.data.begin() + start, len, C.data.begin());
    } else if (axis == 0) {
      C = Tensor({len, A.shape[1]});
      std::copy_n(A.data.begin() + static_cast<size_t>(start) * A.shape[1], static_cast<size_t>(len) * A.shape[1],
                  C.data.begin());
    } else {
      C = Tensor({A.shape[0], len});
      for (int i = 0; i < A.shape[0]; ++i)
        std::copy_n(A.data.begin() + static_cast<size_t>(i) * A.shape[1] + start, len,
                    C.data.begin() + static_cast<size_t>(i) * len);
    }
    Node n;
    n.kind = OpKind::slice;
    n.in = {a.id, -1, -1};
    n.val = std::move(C);
    n.iaux = {axis, start, len};
    n.needs_grad = node(a).needs_grad;
    return finish(std::move(n));
  }

  // per-row element pick: gather(x[m,n], cols)[i] = x[i, cols[i]]
  Value gather(Value a, std::vector<int> cols) {
    const Tensor& A = out(a);
    if (A.ndim() != 2 || static_cast<int>(cols.size()) != A.shape[0])
      fail(Errc::shape_mismatch, "gather: need 2-d tensor with one column index per row");
    Tensor C({A.shape[0]});
    for (int i = 0; i < A.shape[0]; ++i) {
      if (cols[i] < 0 || cols[i] >= A.shape[1]) fail(Errc::bad_argument, "gather: column index out of range");
      C.data[i] = A.at(i, cols[i]);
    }
    Node n;
    n.kind = OpKind::gather;
    n.in = {a.id, -1, -1};
    n.val = std::move(C);
    n.iaux = std::move(cols);
    n.needs_grad = node(a).needs_grad;
    return finish(std::move(n));
  }

  Value sum(Value a) {
    const Tensor& A = out(a);
    double s = 0.0;
    for (double v : A.data) s += v;
    return emit(OpKind::sum, {a}, Tensor::scalar(s));
  }

  Value mean(Value a) {
    const Tensor& A = out(a);
    if (A.numel() == 0) fail(Errc::bad_argument, "mean of empty tensor");
    double s = 0.0;
    for (double v : A.data) s += v;
    return emit(OpKind::mean, {a}, Tensor::scalar(s / static_cast<double>(A.numel())));
  }

  // ---- backward ----

  // Gradients of `loss` w.r.t. every parameter in `params`; parameters that
  // do not influence the loss get zero tensors.
  GradMap backward(Value loss, const ParameterStore& params) {
    const Node& L = node(loss);
    const Tensor& lt = L.ext ? *L.ext : L.val;
    if (!lt.is_scalar() && lt.numel() != 1)
      fail(Errc::shape_mismatch, "backward: loss must be scalar, got " + shape_str(lt.shape));

    for (auto& n : nodes_) n.grad = Tensor();
    nodes_[loss.id].grad = Tensor::full(lt.shape, 1.0);

    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad.data.empty() || !n.needs_grad) continue;
      propagate(n);
    }

    GradMap grads;
    grads.reserve(params.size());
    for (const auto& [name, t] : params) {
      auto it = param_ids_.find(name);
      if (it != param_ids_.end() && !nodes_[it->second].grad.data.empty()) {
        grads.emplace_back(name, nodes_[it->second].grad);
      } else {
        grads.emplace_back(name, Tensor::zeros(t.shape));
      }
    }
    return grads;
  }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> param_ids_;

  const Node& node(Value v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) fail(Errc::bad_argument, "invalid graph value");
    return nodes_[v.id];
  }

  Value push(Node n) {
    nodes_.push_back(std::move(n));
    return Value{static_cast<int>(nodes_.size()) - 1};
  }

  Value finish(Node n) {
    if (!n.val.all_finite())
      fail(Errc::non_finite, std::string(op_name(n.kind)) + " produced NaN/Inf output");
    return push(std::move(n));
  }

  Value emit(OpKind kind, std::initializer_list<Value> ins, Tensor result) {
    Node n;
    n.kind = kind;
    int i = 0;
    for (Value v : ins) {
      n.in[i++] = v.id;
      n.needs_grad = n.needs_grad || node(v).needs_grad;
    }
    n.val = std::move(result);
    return finish(std::move(n));
  }

  static double stable_sigmoid(double v) {
    if (v >= 0.0) {
      const double e = std::exp(-v);
      return 1.0 / (1.0 + e);
    }
    const double e = std::exp(v);
    return e / (1.0 + e);
  }

  static double stable_softplus(double v) {
    // log(1 + e^v) without overflow
    if (v > 0.0) return v + std::log1p(std::exp(-v));
    return std::log1p(std::exp(v));
  }

  static int last_dim(const Tensor& t) {
    if (t.ndim() == 0) fail(Errc::shape_mismatch, "op needs at least 1-d input");
    return t.shape[t.ndim() - 1];
  }

  Value add_like(OpKind kind, Value a, Value b) {
    const Tensor& A = out(a);
    const Tensor& B = out(b);
    const double sign = (kind == OpKind::sub) ? -1.0 : 1.0;
    Tensor C;
    if (A.same_shape(B)) {
      C = Tensor(A.shape);
      for (int64_t i = 0; i < A.numel(); ++i) C.data[i] = A.data[i] + sign * B.data[i];
    } else if (B.numel() == 1) {
      C = Tensor(A.shape);
      const double s = sign * B.data[0];
      for (int64_t i = 0; i < A.numel(); ++i) C.data[i] = A.data[i] + s;
    } else if (A.ndim() == 2 && B.ndim() == 1 && B.shape[0] == A.shape[1]) {
      // row-broadcast bias
      C = Tensor(A.shape);
      for (int i = 0; i < A.shape[0]; ++i)
        for (int j = 0; j < A.shape[1]; ++j) C.at(i, j) = A.at(i, j) + sign * B.data[j];
    } else {
      fail(Errc::shape_mismatch,
           std::string(op_name(kind)) + ": " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    }
    return emit(kind, {a, b}, std::move(C));
  }

  Value softmax_like(OpKind kind, Value a) {
    const Tensor& A = out(a);
    const int n = last_dim(A);
    const int64_t rows = A.numel() / n;
    Tensor C(A.shape);
    for (int64_t r = 0; r < rows; ++r) {
      const double* x = A.data.data() + r * n;
      double* y = C.data.data() + r * n;
      double m = x[0];
      for (int j = 1; j < n; ++j) m = std::max(m, x[j]);
      double s = 0.0;
      for (int j = 0; j < n; ++j) {
        y[j] = std::exp(x[j] - m);
        s += y[j];
      }
      if (kind == OpKind::softmax) {
        for (int j = 0; j < n; ++j) y[j] /= s;
      } else {
        const double lse = m + std::log(s);
        for (int j = 0; j < n; ++j) y[j] = x[j] - lse;
      }
    }
    return emit(kind, {a}, std::move(C));
  }

  template <typename F>
  Value unary(OpKind kind, Value a, F f) {
    const Tensor& A = out(a);
    Tensor C(A.shape);
    for (int64_t i = 0; i < A.numel(); ++i) C.data[i] = f(A.data[i]);
    return emit(kind, {a}, std::move(C));
  }

  Tensor& grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.ext ? n.ext->shape : n.val.shape);
    return n.grad;
  }

  const Tensor& out_of(int id) const {
    const Node& n = nodes_[id];
    return n.ext ? *n.ext : n.val;
  }

  void propagate(Node& n) {
    const Tensor& g = n.grad;
    switch (n.kind) {
      case OpKind::constant:
      case OpKind::parameter:
        break;

      case OpKind::matmul: {
        const Tensor& A = out_of(n.in[0]);
        const Tensor& B = out_of(n.in[1]);
        MapC G(g.data.data(), g.rows(), g.cols());
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& da = grad_buf(n.in[0]);
          MapM(da.data.data(), da.rows(), da.cols()).noalias() +=
              G * MapC(B.data.data(), B.rows(), B.cols()).transpose();
        }
        if (nodes_[n.in[1]].needs_grad) {
          Tensor& db = grad_buf(n.in[1]);
          MapM(db.data.data(), db.rows(), db.cols()).noalias() +=
              MapC(A.data.data(), A.rows(), A.cols()).transpose() * G;
        }
        break;
      }

      case OpKind::transpose: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& da = grad_buf(n.in[0]);
        MapM(da.data.data(), da.rows(), da.cols()).noalias() +=
            MapC(g.data.data(), g.rows(), g.cols()).transpose();
        break;
      }

      case OpKind::add:
      case OpKind::sub: {
        const double sign = (n.kind == OpKind::sub) ? -1.0 : 1.0;
        const Tensor& A = out_of(n.in[0]);
        const Tensor& B = out_of(n.in[1]);
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& da = grad_buf(n.in[0]);
          if (A.same_shape(g)) {
            for (int64_t i = 0; i < g.numel(); ++i) da.data[i] += g.data[i];
          } else {  // A scalar never broadcasts in add_like unless numel==1 == g? A always matches g here
            for (int64_t i = 0; i < g.numel(); ++i) da.data[0] += g.data[i];
          }
        }
        if (nodes_[n.in[1]].needs_grad) {
          Tensor& db = grad_buf(n.in[1]);
          if (B.same_shape(g)) {
            for (int64_t i = 0; i < g.numel(); ++i) db.data[i] += sign * g.data[i];
          } else if (B.numel() == 1) {
            double s = 0.0;
            for (double v : g.data) s += v;
            db.data[0] += sign * s;
          } else {  // row-broadcast bias
            const int m = g.rows(), c = g.cols();
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < c; ++j) db.data[j] += sign * g.data[static_cast<size_t>(i) * c + j];
          }
        }
        break;
      }

      case OpKind::mul: {
        const Tensor& A = out_of(n.in[0]);
        const Tensor& B = out_of(n.in[1]);
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& da = grad_buf(n.in[0]);
          if (A.same_shape(B)) {
            for (int64_t i = 0; i < g.numel(); ++i) da.data[i] += g.data[i] * B.data[i];
          } else if (B.numel() == 1) {
            for (int64_t i = 0; i < g.numel(); ++i) da.data[i] += g.data[i] * B.data[0];
          } else {  // A scalar
            double s = 0.0;
            for (int64_t i = 0; i < g.numel(); ++i) s += g.data[i] * B.data[i];
            da.data[0] += s;
          }
        }
        if (nodes_[n.in[1]].needs_grad) {
          Tensor& db = grad_buf(n.in[1]);
          if (A.same_shape(B)) {
            for (int64_t i = 0; i < g.numel(); ++i) db.data[i] += g.data[i] * A.data[i];
          } else if (A.numel() == 1) {
            for (int64_t i = 0; i < g.numel(); ++i) db.data[i] += g.data[i] * A.data[0];
          } else {  // B scalar
            double s = 0.0;
            for (int64_t i = 0; i < g.numel(); ++i) s += g.data[i] * A.data[i];
            db.data[0] += s;
          }
        }
        break;
      }

      case OpKind::embed_lookup: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& dt = grad_buf(n.in[0]);
        const int d = dt.shape[1];
        for (size_t i = 0; i < n.iaux.size(); ++i) {
          double* row = dt.data.data() + static_cast<size_t>(n.iaux[i]) * d;
          const double* gr = g.data.data() + i * d;
          for (int j = 0; j < d; ++j) row[j] += gr[j];
        }
        break;
      }

      case OpKind::softmax: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& dx = grad_buf(n.in[0]);
        const Tensor& Y = n.val;
        const int c = Y.shape[Y.ndim() - 1];
        const int64_t rows = Y.numel() / c;
        for (int64_t r = 0; r < rows; ++r) {
          const double* y = Y.data.data() + r * c;
          const double* gy = g.data.data() + r * c;
          double dot = 0.0;
          for (int j = 0; j < c; ++j) dot += gy[j] * y[j];
          double* d = dx.data.data() + r * c;
          for (int j = 0; j < c; ++j) d[j] += y[j] * (gy[j] - dot);
        }
        break;
      }

      case OpKind::log_softmax: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& dx = grad_buf(n.in[0]);
        const Tensor& Y = n.val;
        const int c = Y.shape[Y.ndim() - 1];
        const int64_t rows = Y.numel() / c;
        for (int64_t r = 0; r < rows; ++r) {
          const double* y = Y.data.data() + r * c;
          const double* gy = g.data.data() + r * c;
          double s = 0.0;
          for (int j = 0; j < c; ++j) s += gy[j];
          double* d = dx.data.data() + r * c;
          for (int j = 0; j < c; ++j) d[j] += gy[j] - std::exp(y[j]) * s;
        }
        break;
      }

      case OpKind::layer_norm: {
        const Tensor& X = out_of(n.in[0]);
        const Tensor& G = out_of(n.in[1]);
        const int c = X.shape[X.ndim() - 1];
        const int64_t rows = X.numel() / c;
        const double eps = n.daux;
        std::vector<double> xhat(c);
        for (int64_t r = 0; r < rows; ++r) {
          const double* xr = X.data.data() + r * c;
          const double* gy = g.data.data() + r * c;
          double mu = 0.0;
          for (int j = 0; j < c; ++j) mu += xr[j];
          mu /= c;
          double var = 0.0;
          for (int j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
          var /= c;
          const double inv = 1.0 / std::sqrt(var + eps);
          for (int j = 0; j < c; ++j) xhat[j] = (xr[j] - mu) * inv;
          if (nodes_[n.in[1]].needs_grad) {
            Tensor& dg = grad_buf(n.in[1]);
            for (int j = 0; j < c; ++j) dg.data[j] += gy[j] * xhat[j];
          }
          if (nodes_[n.in[2]].needs_grad) {
            Tensor& db = grad_buf(n.in[2]);
            for (int j = 0; j < c; ++j) db.data[j] += gy[j];
          }
          if (nodes_[n.in[0]].needs_grad) {
            Tensor& dx = grad_buf(n.in[0]);
            double m1 = 0.0, m2 = 0.0;
            for (int j = 0; j < c; ++j) {
              const double dxh = gy[j] * G.data[j];
              m1 += dxh;
              m2 += dxh * xhat[j];
            }
            m1 /= c;
            m2 /= c;
            double* d = dx.data.data() + r * c;
            for (int j = 0; j < c; ++j) {
              const double dxh = gy[j] * G.data[j];
              d[j] += inv * (dxh - m1 - xhat[j] * m2);
            }
          }
        }
        break;
      }

      case OpKind::relu: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& dx = grad_buf(n.in[0]);
        const Tensor& X = out_of(n.in[0]);
        for (int64_t i = 0; i < g.numel(); ++i)
          if (X.data[i] > 0.0) dx.data[i] += g.data[i];
        break;
      }

      case OpKind::sigmoid: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& dx = grad_buf(n.in[0]);
        const Tensor& Y = n.val;
        for (int64_t i = 0; i < g.numel(); ++i) dx.data[i] += g.data[i] * Y.data[i] * (1.0 - Y.data[i]);
        break;
      }

      case OpKind::exp_op: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& dx = grad_buf(n.in[0]);
        const Tensor& Y = n.val;
        for (int64_t i = 0; i < g.numel(); ++i) dx.data[i] += g.data[i] * Y.data[i];
        break;
      }

      case OpKind::log_op: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& dx = grad_buf(n.in[0]);
        const Tensor& X = out_of(n.in[0]);
        for (int64_t i = 0; i < g.numel(); ++i) dx.data[i] += g.data[i] / X.data[i];
        break;
      }

      case OpKind::softplus: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& dx = grad_buf(n.in[0]);
        const Tensor& X = out_of(n.in[0]);
        for (int64_t i = 0; i < g.numel(); ++i) dx.data[i] += g.data[i] * stable_sigmoid(X.data[i]);
        break;
      }

      case OpKind::concat: {
        const Tensor& A = out_of(n.in[0]);
        const Tensor& B = out_of(n.in[1]);
        if (A.ndim() == 1) {
          if (nodes_[n.in[0]].needs_grad) {
            Tensor& da = grad_buf(n.in[0]);
            for (int i = 0; i < A.shape[0]; ++i) da.data[i] += g.data[i];
          }
          if (nodes_[n.in[1]].needs_grad) {
            Tensor& db = grad_buf(n.in[1]);
            for (int i = 0; i < B.shape[0]; ++i) db.data[i] += g.data[A.shape[0] + i];
          }
        } else {
          const int m = A.shape[0], n1 = A.shape[1], n2 = B.shape[1];
          if (nodes_[n.in[0]].needs_grad) {
            Tensor& da = grad_buf(n.in[0]);
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < n1; ++j)
                da.at(i, j) += g.data[static_cast<size_t>(i) * (n1 + n2) + j];
          }
          if (nodes_[n.in[1]].needs_grad) {
            Tensor& db = grad_buf(n.in[1]);
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < n2; ++j)
                db.at(i, j) += g.data[static_cast<size_t>(i) * (n1 + n2) + n1 + j];
          }
        }
        break;
      }

      case OpKind::slice: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& dx = grad_buf(n.in[0]);
        const int axis = n.iaux[0], start = n.iaux[1], len = n.iaux[2];
        if (dx.ndim() == 1) {
          for (int i = 0; i < len; ++i) dx.data[start + i] += g.data[i];
        } else if (axis == 0) {
          const int c = dx.shape[1];
          for (int i = 0; i < len; ++i)
            for (int j = 0; j < c; ++j) dx.at(start + i, j) += g.data[static_cast<size_t>(i) * c + j];
        } else {
          for (int i = 0; i < dx.shape[0]; ++i)
            for (int j = 0; j < len; ++j) dx.at(i, start + j) += g.data[static_cast<size_t>(i) * len + j];
        }
        break;
      }

      case OpKind::gather: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& dx = grad_buf(n.in[0]);
        for (size_t i = 0; i < n.iaux.size(); ++i) dx.at(static_cast<int>(i), n.iaux[i]) += g.data[i];
        break;
      }

      case OpKind::sum: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& dx = grad_buf(n.in[0]);
        for (auto& v : dx.data) v += g.data[0];
        break;
      }

      case OpKind::mean: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& dx = grad_buf(n.in[0]);
        const double s = g.data[0] / static_cast<double>(dx.numel());
        for (auto& v : dx.data) v += s;
        break;
      }
    }
  }
};

}  // namespace relsum
