#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "tsfm/tensor.hpp"

namespace tsfm {

// Handle into a Tape.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Single-pass reverse-mode tape. Nodes are appended in evaluation order, so
// creation order is already a topological order; backward() walks it once in
// reverse. Every op validates shapes and traps NaN/Inf in its output,
// reporting the producing op by name.
class Tape {
 public:
  Var leaf(Tensor v, bool requires_grad = false);
  Var constant(Tensor v) { return leaf(std::move(v), false); }
  Var constant_scalar(double v) { return leaf(Tensor::scalar(v), false); }

  // elementwise
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var gelu(Var a);
  Var softplus(Var a);

  // shape
  Var transpose(Var a);
  Var reshape(Var a, std::vector<int64_t> shape);
  Var slice_rows(Var a, int64_t r0, int64_t r1);
  Var slice_cols(Var a, int64_t c0, int64_t c1);
  Var concat_rows(const std::vector<Var>& xs);
  Var concat_cols(const std::vector<Var>& xs);

  // linear algebra / reductions
  Var matmul(Var a, Var b);
  Var add_row_broadcast(Var a, Var row);  // [N,D] + [D]
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var mean_rows(Var a);  // [N,D] -> [D]

  // nonlinear blocks
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var causal_mask_fill(Var a);  // [N,N]; entries above the diagonal -> -1e30
  Var cosine_similarity(Var u, Var v);

  // Seeds d(loss)=1 and accumulates exact gradients into every node that the
  // loss depends on. May be called once per tape.
  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }
  Tensor& value(Var v) { return nodes_[static_cast<size_t>(v.id)].value; }
  const Tensor& grad(Var v);
  bool requires_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op;
    std::array<int32_t, 3> in{-1, -1, -1};
    int n_in = 0;
    bool requires_grad = false;
    Tensor value;
    // Accumulates into the input gradient buffers; null for leaves.
    std::function<void(Tape&, int32_t)> backward;
  };

  Var push(const char* op, std::initializer_list<Var> inputs, Tensor value,
           std::function<void(Tape&, int32_t)> bw);
  Tensor& grad_buf(int32_t id);
  void accumulate(int32_t id, const Tensor& g);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<char> has_grad_;

  friend struct TapeDetailAccess;
};

namespace detail {
// C += A(m x k) * B(k x n)
void mm_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n);
// C += A(m x n) * B(k x n)^T  -> (m x k)
void mm_abt_acc(const double* A, const double* B, double* C, int64_t m, int64_t n, int64_t k);
// C += A(m x k)^T * B(m x n)  -> (k x n)
void mm_atb_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n);
}  // namespace detail

// Central-difference comparison of an analytic gradient against f around x.
// Relative error uses denominator max(|fd|, |analytic|, 1e-8).
double finite_difference_check(const std::function<double(const std::vector<double>&)>& f,
                               std::vector<double> x, const std::vector<double>& analytic_grad,
                               double h = 1e-5);

// Convenience harness: `build` constructs a scalar loss from leaves created
// for `inputs`; gradients of every input are checked against central
// differences and the max relative error is returned.
double gradcheck(const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                 const std::vector<Tensor>& inputs, double h = 1e-5);

}  // namespace tsfm
