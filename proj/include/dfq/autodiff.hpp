#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dfq/tensor.hpp"

namespace dfq {

/// Reverse-mode autodiff over Tensor values. A forward pass builds a fresh
/// graph of Nodes; backward() runs one reverse sweep and accumulates into
/// the .grad of every node that requires gradients. Parameters are
/// long-lived Vars; intermediate nodes die with the loss Var.
struct Node {
  Tensor value;
  Tensor grad;  // lazily allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this->grad into the parents. Only set on nodes that
  // require gradients and have parents.
  std::function<void(const Tensor& upstream)> backward_fn;

  void accum_grad(const Tensor& g);
};

class Var {
public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return defined() && node_->grad.numel() > 0; }
  bool requires_grad() const { return defined() && node_->requires_grad; }
  void zero_grad() { if (defined()) node_->grad = Tensor(); }

  std::shared_ptr<Node> node() const { return node_; }

  static Var from_node(std::shared_ptr<Node> n) {
    Var v;
    v.node_ = std::move(n);
    return v;
  }

private:
  std::shared_ptr<Node> node_;
};

/// Runs the reverse sweep from a scalar loss. Call once per graph.
void backward(const Var& loss);

// ---- graph-building ops ----------------------------------------------

Var matmul(const Var& a, const Var& b);            // [m,k] x [k,n]
Var transpose(const Var& a);                       // [m,n] -> [n,m]
Var add(const Var& a, const Var& b);               // same shape
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var add_rowvec(const Var& x, const Var& v);        // [m,n] + [n]
Var sub_rowvec(const Var& x, const Var& v);
Var mul_rowvec(const Var& x, const Var& v);
Var scale(const Var& x, double c);
Var add_const(const Var& x, const Tensor& t);      // t is not differentiated
Var mul_const(const Var& x, const Tensor& t);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var vtanh(const Var& x);
Var rsqrt_eps(const Var& v, double eps);           // 1/sqrt(v + eps), elementwise
Var col_mean(const Var& x);                        // [m,n] -> [n]
Var col_var(const Var& x);                         // population variance, [m,n] -> [n]
Var sum(const Var& x);                             // -> scalar
Var mean_all(const Var& x);                        // -> scalar
Var reshape(const Var& x, std::vector<int64_t> shape);
Var detach(const Var& x);                          // value copy, no grad

/// Mean over rows of -sum_c target[r,c] * log softmax(logits)[r,c].
/// Targets are constants (probability rows).
Var soft_cross_entropy(const Var& logits, const Tensor& targets);

/// Mean over rows of KL(softmax(teacher_logits) || softmax(student_logits)).
/// The teacher side is constant.
Var kl_divergence(const Tensor& teacher_logits, const Var& student_logits);

/// sum_i (a[i] - target[i])^2 as a scalar.
Var sum_sq_diff(const Var& a, const Tensor& target);

// ---- plain-tensor helpers shared with non-autodiff code --------------

Tensor matmul_values(const Tensor& a, const Tensor& b);
Tensor transpose_values(const Tensor& a);
/// Row-wise softmax of a [m,n] tensor (stable).
Tensor softmax_rows(const Tensor& logits);
/// Row-wise log-softmax of a [m,n] tensor (stable).
Tensor log_softmax_rows(const Tensor& logits);

}  // namespace dfq
