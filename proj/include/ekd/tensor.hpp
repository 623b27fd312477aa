// ekd/tensor.hpp

// Copyright 2026  The EKD Authors

// See ../../LICENSE for clarification regarding multiple authors
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

#ifndef EKD_TENSOR_HPP_
#define EKD_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ekd/errors.hpp"

namespace ekd {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape &shape);
std::size_t shape_numel(const Shape &shape);

namespace detail {

// One vertex of the computation graph. Parents always carry a smaller id
// than their children, so sorting by id is a valid topological order.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool frozen = false;
  std::uint64_t id = 0;
  const char *op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node &)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Dense row-major float64 array with reverse-mode autodiff.
///
/// Tensors are cheap handles: copying a Tensor shares the underlying storage.
/// Use clone() for a deep copy. Rank is 0 (scalar), 1 or 2 in practice.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(const Shape &shape);
  static Tensor full(const Shape &shape, double value);
  static Tensor from(const Shape &shape, std::vector<double> values);
  static Tensor scalar(double value);
  /// Trainable leaf.
  static Tensor parameter(const Shape &shape, std::vector<double> values);
  /// Identity matrix n x n.
  static Tensor eye(std::size_t n);

  const Shape &shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  /// Mutable access for leaves (initialization, optimizer updates, tests).
  std::span<double> mutable_data();
  double operator()(std::size_t i, std::size_t j) const {
    return node_->data[i * cols() + j];
  }
  double at(std::size_t i) const { return node_->data.at(i); }
  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  /// Marks a leaf as immutable with respect to training. Frozen tensors can
  /// never require gradients and have no gradient buffer.
  void freeze();
  bool frozen() const { return node_->frozen; }
  bool is_leaf() const { return node_->parents.empty(); }

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Same values, cut from the graph.
  Tensor detach() const;
  /// Deep copy of the values (and requires_grad flag), no graph.
  Tensor clone() const;

  const char *op() const { return node_->op; }

  // Graph plumbing used by ops and the tape.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node> &node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

/// Ordered record of the differentiable operations that produced a value.
/// Every node appears after all of its inputs.
class ComputationTape {
 public:
  static ComputationTape record(const Tensor &root);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::shared_ptr<detail::Node>> &nodes() const {
    return nodes_;
  }

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

/// Fills grad buffers of every requires_grad leaf reachable from `loss`.
/// Gradients accumulate; callers zero them between steps.
void backward(const Tensor &loss, const ComputationTape &tape);
void backward(const Tensor &loss);

// ---- operations ------------------------------------------------------------

Tensor matmul(const Tensor &a, const Tensor &b);
/// a @ b^T without materializing the transpose.
Tensor matmul_nt(const Tensor &a, const Tensor &b);
Tensor transpose(const Tensor &a);

Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &a, double factor);
/// x[t x d] + bias[d] on every row.
Tensor add_bias(const Tensor &x, const Tensor &bias);

Tensor abs(const Tensor &a);
Tensor gelu(const Tensor &a);
Tensor log_sigmoid(const Tensor &a);

Tensor sum(const Tensor &a);
Tensor mean(const Tensor &a);
/// Column means of a [t x d] matrix, returned as [1 x d].
Tensor mean_rows(const Tensor &a);

/// Softmax over the last axis (the whole vector for rank 1, each row for
/// rank 2). Max-subtracted.
Tensor softmax(const Tensor &x);

/// Per-row normalization to zero mean and unit variance, then gain and bias.
Tensor layer_norm(const Tensor &x, const Tensor &gain, const Tensor &bias,
                  double eps = 1e-5);

/// Mean over rows of dot(a_s, b_s) / (|a_s| |b_s| + eps).
Tensor row_cosine_mean(const Tensor &a, const Tensor &b, double eps = 1e-8);

Tensor slice_cols(const Tensor &a, std::size_t begin, std::size_t end);
Tensor concat_cols(std::span<const Tensor> parts);

/// sum_l weights[l] * states[l] for equally shaped states and weights[L].
Tensor weighted_sum(std::span<const Tensor> states, const Tensor &weights);

/// Mean negative log-likelihood of `labels` under row-wise softmax(logits).
Tensor cross_entropy(const Tensor &logits, std::span<const int> labels);

}  // namespace ekd

#endif  // EKD_TENSOR_HPP_
