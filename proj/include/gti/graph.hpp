#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gti/errors.hpp"
#include "gti/tensor.hpp"

namespace gti {

// Reverse-mode autodiff over a tape. Nodes created on a Graph hold the
// activations of one forward pass; parameters live outside the tape
// (see ParamStore) and only accumulate gradients. Creation order is a
// topological order, so backward() is a single reverse sweep that
// visits each node exactly once.

struct Node {
  Tensor value;
  Tensor grad;  // same shape as value whenever requires_grad is set
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<Node*> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.data.size() != value.data.size()) {
      grad = Tensor(value.rows, value.cols);
    }
  }
  void zero_grad() { grad.fill(0.0); }
};

struct Value {
  Node* node = nullptr;

  const Tensor& val() const { return node->value; }
  std::size_t size() const { return node->value.size(); }
  double scalar() const { return node->value.data[0]; }
  bool defined() const { return node != nullptr; }
};

namespace testing {
// Negative-control hook: scales the output gradient of every node whose
// op matches, so gradient checks must catch the corruption.
struct CorruptBackward {
  std::string op;
  double factor = 1.0;
  bool active = false;
};
inline CorruptBackward corrupt_backward;
}  // namespace testing

inline double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

class Graph {
 public:
  Value constant(Tensor t) { return wrap(make(std::move(t), false, "const", {}, nullptr)); }

  Value constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  Value constant_vec(const std::vector<double>& v) { return constant(Tensor::from(v)); }

  Value zeros(std::size_t n) { return constant(Tensor::vec(n)); }

  // Wraps a parameter (or any externally owned node) without putting it
  // on the tape; it stays a leaf and just collects gradient.
  Value param(Node& n) {
    if (n.requires_grad) n.ensure_grad();
    return Value{&n};
  }

  Value matvec(Value W, Value x) {
    const Tensor& w = W.val();
    const Tensor& xv = x.val();
    if (!xv.is_vector() || w.cols != xv.rows)
      throw DimensionError("matvec: matrix " + w.shape_str() + " with vector " +
                           xv.shape_str());
    Tensor out(w.rows, 1);
    for (std::size_t i = 0; i < w.rows; ++i) {
      double acc = 0.0;
      const double* row = &w.data[i * w.cols];
      for (std::size_t j = 0; j < w.cols; ++j) acc += row[j] * xv.data[j];
      out.data[i] = acc;
    }
    Node* n = make(std::move(out), needs(W, x), "matvec", {W.node, x.node},
                   [](Node& self) {
                     Node* Wn = self.parents[0];
                     Node* xn = self.parents[1];
                     const Tensor& w = Wn->value;
                     const Tensor& xv = xn->value;
                     const double* g = self.grad.data.data();
                     if (Wn->requires_grad) {
                       for (std::size_t i = 0; i < w.rows; ++i)
                         for (std::size_t j = 0; j < w.cols; ++j)
                           Wn->grad.data[i * w.cols + j] += g[i] * xv.data[j];
                     }
                     if (xn->requires_grad) {
                       for (std::size_t i = 0; i < w.rows; ++i)
                         for (std::size_t j = 0; j < w.cols; ++j)
                           xn->grad.data[j] += w.data[i * w.cols + j] * g[i];
                     }
                   });
    return wrap(n);
  }

  Value add(Value a, Value b) {
    require_same_shape(a.val(), b.val(), "add");
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.val().data[i];
    return wrap(make(std::move(out), needs(a, b), "add", {a.node, b.node},
                     [](Node& self) {
                       for (Node* p : self.parents)
                         if (p->requires_grad)
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             p->grad.data[i] += self.grad.data[i];
                     }));
  }

  Value sub(Value a, Value b) {
    require_same_shape(a.val(), b.val(), "sub");
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.val().data[i];
    return wrap(make(std::move(out), needs(a, b), "sub", {a.node, b.node},
                     [](Node& self) {
                       Node* a = self.parents[0];
                       Node* b = self.parents[1];
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         if (a->requires_grad) a->grad.data[i] += self.grad.data[i];
                         if (b->requires_grad) b->grad.data[i] -= self.grad.data[i];
                       }
                     }));
  }

  Value mul(Value a, Value b) {
    require_same_shape(a.val(), b.val(), "mul");
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.val().data[i];
    return wrap(make(std::move(out), needs(a, b), "mul", {a.node, b.node},
                     [](Node& self) {
                       Node* a = self.parents[0];
                       Node* b = self.parents[1];
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         double g = self.grad.data[i];
                         if (a->requires_grad) a->grad.data[i] += g * b->value.data[i];
                         if (b->requires_grad) b->grad.data[i] += g * a->value.data[i];
                       }
                     }));
  }

  Value scale(Value a, double c) {
    Tensor out = a.val();
    for (double& v : out.data) v *= c;
    return wrap(make(std::move(out), needs(a), "scale", {a.node},
                     [c](Node& self) {
                       Node* a = self.parents[0];
                       if (!a->requires_grad) return;
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         a->grad.data[i] += c * self.grad.data[i];
                     }));
  }

  Value sigmoid(Value x) {
    Tensor out = x.val();
    for (double& v : out.data) v = stable_sigmoid(v);
    return wrap(make(std::move(out), needs(x), "sigmoid", {x.node},
                     [](Node& self) {
                       Node* x = self.parents[0];
                       if (!x->requires_grad) return;
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         double y = self.value.data[i];
                         x->grad.data[i] += self.grad.data[i] * y * (1.0 - y);
                       }
                     }));
  }

  Value tanh_(Value x) {
    Tensor out = x.val();
    for (double& v : out.data) v = std::tanh(v);
    return wrap(make(std::move(out), needs(x), "tanh", {x.node},
                     [](Node& self) {
                       Node* x = self.parents[0];
                       if (!x->requires_grad) return;
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         double y = self.value.data[i];
                         x->grad.data[i] += self.grad.data[i] * (1.0 - y * y);
                       }
                     }));
  }

  // Vector -> scalar, max-shifted. Gradient is the softmax of the input.
  Value logsumexp(Value x) {
    const Tensor& xv = x.val();
    if (!xv.is_vector() || xv.size() == 0)
      throw ArgumentError("logsumexp: needs a non-empty vector, got " + xv.shape_str());
    double m = *std::max_element(xv.data.begin(), xv.data.end());
    double s = 0.0;
    for (double v : xv.data) s += std::exp(v - m);
    Tensor out = Tensor::scalar(m + std::log(s));
    return wrap(make(std::move(out), needs(x), "logsumexp", {x.node},
                     [m, s](Node& self) {
                       Node* x = self.parents[0];
                       if (!x->requires_grad) return;
                       double g = self.grad.data[0];
                       for (std::size_t i = 0; i < x->value.size(); ++i)
                         x->grad.data[i] += g * std::exp(x->value.data[i] - m) / s;
                     }));
  }

  Value sum(Value x) {
    double s = 0.0;
    for (double v : x.val().data) s += v;
    return wrap(make(Tensor::scalar(s), needs(x), "sum", {x.node},
                     [](Node& self) {
                       Node* x = self.parents[0];
                       if (!x->requires_grad) return;
                       for (double& g : x->grad.data) g += self.grad.data[0];
                     }));
  }

  Value concat(const std::vector<Value>& parts) {
    if (parts.empty()) throw ArgumentError("concat: no inputs");
    std::size_t total = 0;
    bool rg = false;
    std::vector<Node*> ps;
    ps.reserve(parts.size());
    for (const Value& p : parts) {
      if (!p.val().is_vector())
        throw DimensionError("concat: non-vector input " + p.val().shape_str());
      total += p.size();
      rg = rg || p.node->requires_grad;
      ps.push_back(p.node);
    }
    Tensor out(total, 1);
    std::size_t off = 0;
    for (const Value& p : parts) {
      std::copy(p.val().data.begin(), p.val().data.end(), out.data.begin() + off);
      off += p.size();
    }
    return wrap(make(std::move(out), rg, "concat", std::move(ps),
                     [](Node& self) {
                       std::size_t off = 0;
                       for (Node* p : self.parents) {
                         if (p->requires_grad)
                           for (std::size_t i = 0; i < p->value.size(); ++i)
                             p->grad.data[i] += self.grad.data[off + i];
                         off += p->value.size();
                       }
                     }));
  }

  Value pick(Value x, std::size_t i) {
    const Tensor& xv = x.val();
    if (i >= xv.size())
      throw LookupError("pick: index " + std::to_string(i) + " out of range for " +
                        xv.shape_str());
    return wrap(make(Tensor::scalar(xv.data[i]), needs(x), "pick", {x.node},
                     [i](Node& self) {
                       Node* x = self.parents[0];
                       if (x->requires_grad) x->grad.data[i] += self.grad.data[0];
                     }));
  }

  // First `len` entries of row r as a vector.
  Value subrow(Value M, std::size_t r, std::size_t len) {
    const Tensor& m = M.val();
    if (r >= m.rows || len > m.cols)
      throw LookupError("subrow: row " + std::to_string(r) + " len " +
                        std::to_string(len) + " out of range for " + m.shape_str());
    Tensor out(len, 1);
    for (std::size_t j = 0; j < len; ++j) out.data[j] = m.at(r, j);
    return wrap(make(std::move(out), needs(M), "subrow", {M.node},
                     [r, len](Node& self) {
                       Node* M = self.parents[0];
                       if (!M->requires_grad) return;
                       for (std::size_t j = 0; j < len; ++j)
                         M->grad.data[r * M->value.cols + j] += self.grad.data[j];
                     }));
  }

  // First `len` entries of column c as a vector.
  Value subcol(Value M, std::size_t c, std::size_t len) {
    const Tensor& m = M.val();
    if (c >= m.cols || len > m.rows)
      throw LookupError("subcol: col " + std::to_string(c) + " len " +
                        std::to_string(len) + " out of range for " + m.shape_str());
    Tensor out(len, 1);
    for (std::size_t i = 0; i < len; ++i) out.data[i] = m.at(i, c);
    return wrap(make(std::move(out), needs(M), "subcol", {M.node},
                     [c, len](Node& self) {
                       Node* M = self.parents[0];
                       if (!M->requires_grad) return;
                       for (std::size_t i = 0; i < len; ++i)
                         M->grad.data[i * M->value.cols + c] += self.grad.data[i];
                     }));
  }

  Value stack(const std::vector<Value>& scalars) {
    if (scalars.empty()) throw ArgumentError("stack: no inputs");
    Tensor out(scalars.size(), 1);
    bool rg = false;
    std::vector<Node*> ps;
    ps.reserve(scalars.size());
    for (std::size_t i = 0; i < scalars.size(); ++i) {
      if (!scalars[i].val().is_scalar())
        throw DimensionError("stack: non-scalar input " + scalars[i].val().shape_str());
      out.data[i] = scalars[i].scalar();
      rg = rg || scalars[i].node->requires_grad;
      ps.push_back(scalars[i].node);
    }
    return wrap(make(std::move(out), rg, "stack", std::move(ps),
                     [](Node& self) {
                       for (std::size_t i = 0; i < self.parents.size(); ++i)
                         if (self.parents[i]->requires_grad)
                           self.parents[i]->grad.data[0] += self.grad.data[i];
                     }));
  }

  // Elementwise max over equal-length vectors; ties keep the earliest
  // input so pooling is deterministic.
  Value max_elements(const std::vector<Value>& vs) {
    if (vs.empty()) throw ArgumentError("max_elements: no inputs");
    std::size_t n = vs[0].size();
    bool rg = false;
    std::vector<Node*> ps;
    for (const Value& v : vs) {
      if (v.size() != n)
        throw DimensionError("max_elements: length mismatch " + v.val().shape_str());
      rg = rg || v.node->requires_grad;
      ps.push_back(v.node);
    }
    Tensor out(n, 1);
    std::vector<std::size_t> winner(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
      double best = vs[0].val().data[j];
      for (std::size_t i = 1; i < vs.size(); ++i) {
        if (vs[i].val().data[j] > best) {
          best = vs[i].val().data[j];
          winner[j] = i;
        }
      }
      out.data[j] = best;
    }
    return wrap(make(std::move(out), rg, "max_elements", std::move(ps),
                     [winner](Node& self) {
                       for (std::size_t j = 0; j < self.grad.size(); ++j) {
                         Node* w = self.parents[winner[j]];
                         if (w->requires_grad) w->grad.data[j] += self.grad.data[j];
                       }
                     }));
  }

  // Embedding row as a vector; gradient lands in that row only.
  Value row_lookup(Value table, std::size_t id) {
    const Tensor& t = table.val();
    if (id >= t.rows)
      throw LookupError("row_lookup: id " + std::to_string(id) +
                        " out of range for table " + t.shape_str());
    Tensor out(t.cols, 1);
    for (std::size_t j = 0; j < t.cols; ++j) out.data[j] = t.at(id, j);
    return wrap(make(std::move(out), needs(table), "row_lookup", {table.node},
                     [id](Node& self) {
                       Node* t = self.parents[0];
                       if (!t->requires_grad) return;
                       for (std::size_t j = 0; j < self.grad.size(); ++j)
                         t->grad.data[id * t->value.cols + j] += self.grad.data[j];
                     }));
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse
  // creation order, accumulating into every reachable leaf.
  void backward(Value loss) {
    if (!loss.val().is_scalar())
      throw ArgumentError("backward: loss must be scalar, got " + loss.val().shape_str());
    if (!loss.node->requires_grad) return;
    loss.node->ensure_grad();
    loss.node->grad.data[0] += 1.0;
    const auto& hook = testing::corrupt_backward;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node& n = **it;
      if (!n.requires_grad || !n.backward_fn) continue;
      if (hook.active && hook.op == n.op)
        for (double& g : n.grad.data) g *= hook.factor;
      n.backward_fn(n);
    }
  }

  void zero_grad() {
    for (auto& n : nodes_)
      if (n->requires_grad) n->zero_grad();
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  static bool needs(Value a) { return a.node->requires_grad; }
  static bool needs(Value a, Value b) {
    return a.node->requires_grad || b.node->requires_grad;
  }

  Node* make(Tensor value, bool requires_grad, const char* op, std::vector<Node*> parents,
             std::function<void(Node&)> fn) {
    auto n = std::make_unique<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->op = op;
    n->parents = std::move(parents);
    if (requires_grad) {
      n->backward_fn = std::move(fn);
      n->ensure_grad();
    }
    nodes_.push_back(std::move(n));
    return nodes_.back().get();
  }

  Value wrap(Node* n) { return Value{n}; }

  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace gti
