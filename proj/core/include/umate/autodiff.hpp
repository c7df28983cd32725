#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "umate/tensor.hpp"

namespace umate::nd {

// Define-by-run reverse-mode tape. Each op appends a Node holding the
// forward value and a closure that scatters the output gradient into the
// parents. Graphs are single-threaded; values may be read concurrently.

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;  // may be empty for leaves
  const char* op = "leaf";

  void ensure_grad() {
    if (grad.data.empty()) grad = Tensor::zeros(value.shape);
  }
};

// Value-semantic handle on a graph node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  // Trainable leaf: participates in backward.
  static Var leaf(Tensor value);
  // Constant: recorded in the graph but receives no gradient.
  static Var constant(Tensor value);

  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  NodePtr node() const { return node_; }

  Tensor& mutable_value() { return node_->value; }
  Tensor& mutable_grad() { node_->ensure_grad(); return node_->grad; }
  void zero_grad() { if (node_) node_->grad = Tensor(); }

 private:
  NodePtr node_;
};

// Escape hatch for modules that need hand-written gradients (the tripartite
// Sinkhorn contractions use it). `backward_fn` receives the finished node and
// must accumulate into parents[i]->grad via ensure_grad().
Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backward_fn, const char* op_name);

// Seeds d(loss)/d(loss)=1 and propagates to every reachable leaf. Leaves not
// reachable from the loss keep an empty grad; read them via Var::grad() which
// returns zeros of the right shape.
void backward(const Var& loss);

// ---- primitive ops ----
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);            // same shape
Var add_rowvec(const Var& a, const Var& bias);  // (n,d) + (1,d)
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);            // elementwise, same shape
Var div(const Var& a, const Var& b);            // elementwise, same shape
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var sigmoid(const Var& a);
Var exp_op(const Var& a);
Var softmax_rows(const Var& a);                          // max-shifted
Var layer_norm(const Var& a, const Var& gain, const Var& bias);  // per row
Var sum(const Var& a);
Var mean(const Var& a);
Var l2_norm(const Var& a);  // Frobenius norm of all entries
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, int r0, int r1);  // [r0, r1)
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, int c0, int c1);
Var gather_rows(const Var& a, const std::vector<int>& indices);
Var cosine(const Var& u, const Var& v);  // flattened vectors -> scalar
Var row_cosine_matrix(const Var& a);     // (n,d) -> (n,n) pairwise CosSim
// Forward value is `target`; gradient passes to `pre` unchanged
// (straight-through rule for codebook rounding).
Var straight_through(const Var& pre, Tensor target);
// softmax(q kᵀ / sqrt(d_k)) v, composed from the primitives above.
Var attention(const Var& q, const Var& k, const Var& v);

// ---- utilities ----

// Max over all coordinates of |analytic - central difference| /
// (|central difference| + 1e-12). `fn` must rebuild the graph from the
// current parameter values on every call.
double grad_check(const std::function<Var()>& fn, std::vector<Var> params,
                  double eps);

}  // namespace umate::nd
