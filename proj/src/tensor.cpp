// src/tensor.cpp

// Copyright 2026  The EKD Authors

// See ../LICENSE for clarification regarding multiple authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "ekd/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace ekd {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool t_grad_enabled = true;

NodePtr new_node(Shape shape, std::vector<double> data) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

void check_finite(const char *op, const std::vector<double> &data) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw NumericError(std::string("non-finite value produced by ") + op +
                         " at flat index " + std::to_string(i));
    }
  }
}

// Wraps a freshly computed result. The graph edge is only recorded when
// recording is on and some input needs a gradient.
Tensor make_result(const char *op, Shape shape, std::vector<double> data,
                   std::vector<NodePtr> inputs,
                   std::function<void(Node &)> backward_fn) {
  check_finite(op, data);
  NodePtr out = new_node(std::move(shape), std::move(data));
  out->op = op;
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto &in : inputs) needs = needs || in->requires_grad;
  }
  if (needs) {
    out->requires_grad = true;
    out->parents = std::move(inputs);
    out->backward_fn = std::move(backward_fn);
  }
  return Tensor(out);
}

// Gradient buffer of a parent, or nullptr if it does not want one.
double *grad_of(Node &parent) {
  if (!parent.requires_grad) return nullptr;
  parent.ensure_grad();
  return parent.grad.data();
}

void require_same_shape(const char *op, const Tensor &a, const Tensor &b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank2(const char *op, const Tensor &a) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_str(a.shape()));
  }
}

}  // namespace

std::string shape_str(const Shape &shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape &shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() : node_(new_node({}, {0.0})) {}

Tensor Tensor::from(const Shape &shape, std::vector<double> values) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("zero extent in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  check_finite("from", values);
  return Tensor(new_node(shape, std::move(values)));
}

Tensor Tensor::zeros(const Shape &shape) { return full(shape, 0.0); }

Tensor Tensor::full(const Shape &shape, double value) {
  return from(shape, std::vector<double>(shape_numel(shape), value));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::parameter(const Shape &shape, std::vector<double> values) {
  Tensor t = from(shape, std::move(values));
  t.set_requires_grad(true);
  return t;
}

Tensor Tensor::eye(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return from({n, n}, std::move(v));
}

std::size_t Tensor::rows() const {
  return rank() == 2 ? node_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return node_->shape[1];
  if (rank() == 1) return node_->shape[0];
  return 1;
}

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) {
    throw ContractError("in-place write to a non-leaf tensor produced by " +
                        std::string(node_->op));
  }
  return node_->data;
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  if (on && node_->frozen) {
    throw ContractError("cannot enable gradients on a frozen tensor");
  }
  node_->requires_grad = on;
  if (on) {
    node_->ensure_grad();
  } else {
    node_->grad.clear();
  }
}

void Tensor::freeze() {
  node_->requires_grad = false;
  node_->frozen = true;
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

bool Tensor::has_grad() const {
  return !node_->grad.empty() && node_->grad.size() == node_->data.size();
}

std::span<const double> Tensor::grad() const {
  if (node_->frozen) {
    throw ContractError("frozen tensor has no gradient");
  }
  if (!node_->requires_grad) {
    throw ContractError("gradient requested for a tensor without requires_grad");
  }
  node_->ensure_grad();
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (node_->frozen) throw ContractError("frozen tensor has no gradient");
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
}

Tensor Tensor::detach() const {
  return Tensor(new_node(node_->shape, node_->data));
}

Tensor Tensor::clone() const {
  Tensor t(new_node(node_->shape, node_->data));
  if (node_->requires_grad) t.set_requires_grad(true);
  return t;
}

// ---- grad mode ---------------------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
  t_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_recording_enabled() { return t_grad_enabled; }

// ---- tape / backward -----------------------------------------------------------

ComputationTape ComputationTape::record(const Tensor &root) {
  ComputationTape tape;
  if (!root.requires_grad()) return tape;
  std::unordered_set<const Node *> seen;
  std::vector<NodePtr> stack{root.node()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    NodePtr n = std::move(stack.back());
    stack.pop_back();
    for (const auto &p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p);
    }
    tape.nodes_.push_back(std::move(n));
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const NodePtr &a, const NodePtr &b) { return a->id < b->id; });
  return tape;
}

void backward(const Tensor &loss, const ComputationTape &tape) {
  if (loss.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  for (const auto &n : tape.nodes()) {
    if (n->frozen) {
      throw ContractError("backward reached a frozen tensor");
    }
    if (!n->parents.empty()) {
      n->grad.assign(n->data.size(), 0.0);
    } else {
      n->ensure_grad();
    }
  }
  Node &root = *loss.node();
  root.ensure_grad();
  root.grad[0] += 1.0;
  const auto &nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

void backward(const Tensor &loss) {
  backward(loss, ComputationTape::record(loss));
}

// ---- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor &a, const Tensor &b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner extents differ, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double *A = a.data().data();
  const double *B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double *row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double *brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_result(
      "matmul", {m, n}, std::move(out), {a.node(), b.node()},
      [m, k, n](Node &self) {
        Node &na = *self.parents[0];
        Node &nb = *self.parents[1];
        const double *G = self.grad.data();
        if (double *ga = grad_of(na)) {
          const double *B = nb.data.data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
              ga[i * k + p] += s;
            }
          }
        }
        if (double *gb = grad_of(nb)) {
          const double *A = na.data.data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double av = A[i * k + p];
              for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * G[i * n + j];
            }
          }
        }
      });
}

Tensor matmul_nt(const Tensor &a, const Tensor &b) {
  require_rank2("matmul_nt", a);
  require_rank2("matmul_nt", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner extents differ, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                         "^T");
  }
  std::vector<double> out(m * n, 0.0);
  const double *A = a.data().data();
  const double *B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
      out[i * n + j] = s;
    }
  }
  return make_result(
      "matmul_nt", {m, n}, std::move(out), {a.node(), b.node()},
      [m, k, n](Node &self) {
        Node &na = *self.parents[0];
        Node &nb = *self.parents[1];
        const double *G = self.grad.data();
        if (double *ga = grad_of(na)) {
          const double *B = nb.data.data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              const double g = G[i * n + j];
              for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += g * B[j * k + p];
            }
          }
        }
        if (double *gb = grad_of(nb)) {
          const double *A = na.data.data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              const double g = G[i * n + j];
              for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += g * A[i * k + p];
            }
          }
        }
      });
}

Tensor transpose(const Tensor &a) {
  require_rank2("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto A = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return make_result("transpose", {n, m}, std::move(out), {a.node()},
                     [m, n](Node &self) {
                       if (double *ga = grad_of(*self.parents[0])) {
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j)
                             ga[i * n + j] += self.grad[j * m + i];
                       }
                     });
}

// ---- elementwise -----------------------------------------------------------------

Tensor add(const Tensor &a, const Tensor &b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result("add", a.shape(), std::move(out), {a.node(), b.node()},
                     [](Node &self) {
                       for (int side = 0; side < 2; ++side) {
                         if (double *g = grad_of(*self.parents[side])) {
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             g[i] += self.grad[i];
                         }
                       }
                     });
}

Tensor sub(const Tensor &a, const Tensor &b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result("sub", a.shape(), std::move(out), {a.node(), b.node()},
                     [](Node &self) {
                       if (double *g = grad_of(*self.parents[0])) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[i] += self.grad[i];
                       }
                       if (double *g = grad_of(*self.parents[1])) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[i] -= self.grad[i];
                       }
                     });
}

Tensor mul(const Tensor &a, const Tensor &b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result("mul", a.shape(), std::move(out), {a.node(), b.node()},
                     [](Node &self) {
                       Node &na = *self.parents[0];
                       Node &nb = *self.parents[1];
                       if (double *g = grad_of(na)) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[i] += self.grad[i] * nb.data[i];
                       }
                       if (double *g = grad_of(nb)) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[i] += self.grad[i] * na.data[i];
                       }
                     });
}

Tensor scale(const Tensor &a, double factor) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_result("scale", a.shape(), std::move(out), {a.node()},
                     [factor](Node &self) {
                       if (double *g = grad_of(*self.parents[0])) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[i] += self.grad[i] * factor;
                       }
                     });
}

Tensor add_bias(const Tensor &x, const Tensor &bias) {
  require_rank2("add_bias", x);
  const std::size_t t = x.rows(), d = x.cols();
  if (bias.size() != d || bias.rank() > 2 || (bias.rank() == 2 && bias.rows() != 1)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) +
                         " does not fit rows of " + shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto B = bias.data();
  for (std::size_t s = 0; s < t; ++s)
    for (std::size_t j = 0; j < d; ++j) out[s * d + j] += B[j];
  return make_result("add_bias", x.shape(), std::move(out), {x.node(), bias.node()},
                     [t, d](Node &self) {
                       if (double *g = grad_of(*self.parents[0])) {
                         for (std::size_t i = 0; i < t * d; ++i) g[i] += self.grad[i];
                       }
                       if (double *g = grad_of(*self.parents[1])) {
                         for (std::size_t s = 0; s < t; ++s)
                           for (std::size_t j = 0; j < d; ++j)
                             g[j] += self.grad[s * d + j];
                       }
                     });
}

Tensor abs(const Tensor &a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a.data()[i]);
  return make_result("abs", a.shape(), std::move(out), {a.node()}, [](Node &self) {
    Node &na = *self.parents[0];
    if (double *g = grad_of(na)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double x = na.data[i];
        const double sgn = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        g[i] += self.grad[i] * sgn;
      }
    }
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor &a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.data()[i];
    out[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  }
  return make_result("gelu", a.shape(), std::move(out), {a.node()}, [](Node &self) {
    Node &na = *self.parents[0];
    if (double *g = grad_of(na)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double x = na.data[i];
        const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
        const double dth = (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        g[i] += self.grad[i] * (0.5 * (1.0 + th) + 0.5 * x * dth);
      }
    }
  });
}

Tensor log_sigmoid(const Tensor &a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.data()[i];
    out[i] = x < 0.0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
  }
  return make_result("log_sigmoid", a.shape(), std::move(out), {a.node()},
                     [](Node &self) {
                       Node &na = *self.parents[0];
                       if (double *g = grad_of(na)) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i) {
                           // d/dx log sigma(x) = sigma(-x)
                           const double x = na.data[i];
                           const double s = x >= 0.0 ? std::exp(-x) / (1.0 + std::exp(-x))
                                                     : 1.0 / (1.0 + std::exp(x));
                           g[i] += self.grad[i] * s;
                         }
                       }
                     });
}

// ---- reductions ------------------------------------------------------------------

Tensor sum(const Tensor &a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("sum", {}, {s}, {a.node()}, [](Node &self) {
    if (double *g = grad_of(*self.parents[0])) {
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor &a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double n = static_cast<double>(a.size());
  return make_result("mean", {}, {s / n}, {a.node()}, [n](Node &self) {
    if (double *g = grad_of(*self.parents[0])) {
      const std::size_t len = self.parents[0]->data.size();
      for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[0] / n;
    }
  });
}

Tensor mean_rows(const Tensor &a) {
  require_rank2("mean_rows", a);
  const std::size_t t = a.rows(), d = a.cols();
  std::vector<double> out(d, 0.0);
  const auto A = a.data();
  for (std::size_t s = 0; s < t; ++s)
    for (std::size_t j = 0; j < d; ++j) out[j] += A[s * d + j];
  for (auto &v : out) v /= static_cast<double>(t);
  return make_result("mean_rows", {1, d}, std::move(out), {a.node()},
                     [t, d](Node &self) {
                       if (double *g = grad_of(*self.parents[0])) {
                         for (std::size_t s = 0; s < t; ++s)
                           for (std::size_t j = 0; j < d; ++j)
                             g[s * d + j] += self.grad[j] / static_cast<double>(t);
                       }
                     });
}

// ---- normalization -------------------------------------------------------------

Tensor softmax(const Tensor &x) {
  if (x.size() == 0 || x.rank() == 0) {
    throw DomainError("softmax of an empty input");
  }
  if (x.rank() > 2) {
    throw DimensionError("softmax: unsupported shape " + shape_str(x.shape()));
  }
  const std::size_t r = x.rows(), n = x.cols();
  std::vector<double> out(x.size());
  const auto X = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double *in = X.data() + i * n;
    double *o = out.data() + i * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return make_result("softmax", x.shape(), std::move(out), {x.node()},
                     [r, n](Node &self) {
                       if (double *g = grad_of(*self.parents[0])) {
                         for (std::size_t i = 0; i < r; ++i) {
                           const double *y = self.data.data() + i * n;
                           const double *gy = self.grad.data() + i * n;
                           double dot = 0.0;
                           for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
                           for (std::size_t j = 0; j < n; ++j)
                             g[i * n + j] += y[j] * (gy[j] - dot);
                         }
                       }
                     });
}

Tensor layer_norm(const Tensor &x, const Tensor &gain, const Tensor &bias,
                  double eps) {
  if (x.rank() < 1 || x.rank() > 2) {
    throw DimensionError("layer_norm: unsupported shape " + shape_str(x.shape()));
  }
  const std::size_t t = x.rows(), d = x.cols();
  if (d < 2) throw DomainError("layer_norm needs at least 2 features, got " +
                               std::to_string(d));
  if (!(eps > 0.0)) throw DomainError("layer_norm eps must be positive");
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) +
                         " / bias " + shape_str(bias.shape()) +
                         " do not match width of " + shape_str(x.shape()));
  }
  std::vector<double> xhat(t * d), rstd(t), out(t * d);
  const auto X = x.data();
  const auto G = gain.data();
  const auto B = bias.data();
  for (std::size_t s = 0; s < t; ++s) {
    const double *row = X.data() + s * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    rstd[s] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[s * d + j] = (row[j] - mu) * rstd[s];
      out[s * d + j] = xhat[s * d + j] * G[j] + B[j];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
      [t, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node &self) {
        Node &nx = *self.parents[0];
        Node &ng = *self.parents[1];
        Node &nb = *self.parents[2];
        const double *gy = self.grad.data();
        if (double *gg = grad_of(ng)) {
          for (std::size_t s = 0; s < t; ++s)
            for (std::size_t j = 0; j < d; ++j) gg[j] += gy[s * d + j] * xhat[s * d + j];
        }
        if (double *gb = grad_of(nb)) {
          for (std::size_t s = 0; s < t; ++s)
            for (std::size_t j = 0; j < d; ++j) gb[j] += gy[s * d + j];
        }
        if (double *gx = grad_of(nx)) {
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t s = 0; s < t; ++s) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = gy[s * d + j] * ng.data[j];
              m1 += dxh;
              m2 += dxh * xhat[s * d + j];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = gy[s * d + j] * ng.data[j];
              gx[s * d + j] += rstd[s] * (dxh - m1 - xhat[s * d + j] * m2);
            }
          }
        }
      });
}

Tensor row_cosine_mean(const Tensor &a, const Tensor &b, double eps) {
  require_same_shape("row_cosine_mean", a, b);
  if (a.rank() == 0) throw DimensionError("row_cosine_mean needs rows");
  const std::size_t t = a.rows(), d = a.cols();
  std::vector<double> dots(t), na(t), nb(t);
  const auto A = a.data();
  const auto B = b.data();
  double total = 0.0;
  for (std::size_t s = 0; s < t; ++s) {
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += A[s * d + j] * B[s * d + j];
      aa += A[s * d + j] * A[s * d + j];
      bb += B[s * d + j] * B[s * d + j];
    }
    dots[s] = dot;
    na[s] = std::sqrt(aa);
    nb[s] = std::sqrt(bb);
    total += dot / (na[s] * nb[s] + eps);
  }
  const double value = total / static_cast<double>(t);
  return make_result(
      "row_cosine_mean", {}, {value}, {a.node(), b.node()},
      [t, d, eps, dots = std::move(dots), na = std::move(na),
       nb = std::move(nb)](Node &self) {
        Node &pa = *self.parents[0];
        Node &pb = *self.parents[1];
        const double up = self.grad[0] / static_cast<double>(t);
        // d/da of dot / (|a||b| + eps) = b / den - dot |b| a / (|a| den^2)
        auto accumulate = [&](Node &self_side, Node &other, const std::vector<double> &n_self,
                              const std::vector<double> &n_other, double *g) {
          for (std::size_t s = 0; s < t; ++s) {
            const double den = n_self[s] * n_other[s] + eps;
            const double k = n_self[s] > 0.0
                                 ? dots[s] * n_other[s] / (n_self[s] * den * den)
                                 : 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              g[s * d + j] += up * (other.data[s * d + j] / den -
                                    k * self_side.data[s * d + j]);
            }
          }
        };
        if (double *g = grad_of(pa)) accumulate(pa, pb, na, nb, g);
        if (double *g = grad_of(pb)) accumulate(pb, pa, nb, na, g);
      });
}

// ---- structural ------------------------------------------------------------------

Tensor slice_cols(const Tensor &a, std::size_t begin, std::size_t end) {
  require_rank2("slice_cols", a);
  const std::size_t t = a.rows(), d = a.cols();
  if (begin >= end || end > d) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") outside " + shape_str(a.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(t * w);
  for (std::size_t s = 0; s < t; ++s)
    for (std::size_t j = 0; j < w; ++j) out[s * w + j] = a.data()[s * d + begin + j];
  return make_result("slice_cols", {t, w}, std::move(out), {a.node()},
                     [t, d, w, begin](Node &self) {
                       if (double *g = grad_of(*self.parents[0])) {
                         for (std::size_t s = 0; s < t; ++s)
                           for (std::size_t j = 0; j < w; ++j)
                             g[s * d + begin + j] += self.grad[s * w + j];
                       }
                     });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t t = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  std::vector<NodePtr> inputs;
  for (const auto &p : parts) {
    require_rank2("concat_cols", p);
    if (p.rows() != t) {
      throw DimensionError("concat_cols: row counts differ, " +
                           shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
    inputs.push_back(p.node());
  }
  std::vector<double> out(t * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto P = parts[k].data();
    for (std::size_t s = 0; s < t; ++s)
      for (std::size_t j = 0; j < widths[k]; ++j)
        out[s * total + off + j] = P[s * widths[k] + j];
    off += widths[k];
  }
  return make_result("concat_cols", {t, total}, std::move(out), std::move(inputs),
                     [t, total, widths = std::move(widths)](Node &self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         if (double *g = grad_of(*self.parents[k])) {
                           for (std::size_t s = 0; s < t; ++s)
                             for (std::size_t j = 0; j < widths[k]; ++j)
                               g[s * widths[k] + j] += self.grad[s * total + off + j];
                         }
                         off += widths[k];
                       }
                     });
}

Tensor weighted_sum(std::span<const Tensor> states, const Tensor &weights) {
  if (states.empty()) throw DimensionError("weighted_sum of no states");
  if (weights.rank() != 1 || weights.size() != states.size()) {
    throw DimensionError("weighted_sum: weights " + shape_str(weights.shape()) +
                         " for " + std::to_string(states.size()) + " states");
  }
  const Shape &shape = states[0].shape();
  std::vector<NodePtr> inputs;
  for (const auto &s : states) {
    if (s.shape() != shape) {
      throw DimensionError("weighted_sum: state shapes differ, " + shape_str(shape) +
                           " vs " + shape_str(s.shape()));
    }
    inputs.push_back(s.node());
  }
  inputs.push_back(weights.node());
  const std::size_t n = states[0].size();
  std::vector<double> out(n, 0.0);
  const auto W = weights.data();
  for (std::size_t l = 0; l < states.size(); ++l) {
    const auto S = states[l].data();
    for (std::size_t i = 0; i < n; ++i) out[i] += W[l] * S[i];
  }
  return make_result("weighted_sum", shape, std::move(out), std::move(inputs),
                     [n](Node &self) {
                       const std::size_t L = self.parents.size() - 1;
                       Node &nw = *self.parents[L];
                       double *gw = grad_of(nw);
                       for (std::size_t l = 0; l < L; ++l) {
                         Node &ns = *self.parents[l];
                         if (double *gs = grad_of(ns)) {
                           for (std::size_t i = 0; i < n; ++i)
                             gs[i] += nw.data[l] * self.grad[i];
                         }
                         if (gw) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < n; ++i)
                             acc += self.grad[i] * ns.data[i];
                           gw[l] += acc;
                         }
                       }
                     });
}

Tensor cross_entropy(const Tensor &logits, std::span<const int> labels) {
  require_rank2("cross_entropy", logits);
  const std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_str(logits.shape()));
  }
  std::vector<double> probs(n * c);
  const auto X = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw DomainError("cross_entropy: label " + std::to_string(labels[i]) +
                        " outside [0, " + std::to_string(c) + ")");
    }
    const double *row = X.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - lse);
    total += lse - row[labels[i]];
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result("cross_entropy", {}, {total / static_cast<double>(n)},
                     {logits.node()},
                     [n, c, probs = std::move(probs), lab = std::move(lab)](Node &self) {
                       if (double *g = grad_of(*self.parents[0])) {
                         const double up = self.grad[0] / static_cast<double>(n);
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < c; ++j) {
                             const double y = (static_cast<int>(j) == lab[i]) ? 1.0 : 0.0;
                             g[i * c + j] += up * (probs[i * c + j] - y);
                           }
                         }
                       }
                     });
}

}  // namespace ekd
