#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "mhcl/matrix.hpp"
#include "mhcl/sparse.hpp"

namespace mhcl {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// A (user, item) training pair for the bilinear decoder. `item` is the
/// item-local index in [0, N).
struct Pair {
  std::size_t user;
  std::size_t item;
};

/// Define-by-run reverse-mode autodiff over dense matrices. The tape is
/// rebuilt every forward pass; backward() visits nodes in reverse creation
/// order, which is a topological order by construction.
class Tape {
 public:
  // --- graph construction -------------------------------------------------
  Var leaf(Matrix value);
  Var constant(Matrix value) { return leaf(std::move(value)); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scalar_mul(Var a, double c);
  Var add_const(Var a, double c);

  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_rows(Var a, std::size_t start, std::size_t count);
  Var slice_cols(Var a, std::size_t start, std::size_t count);

  Var reduce_sum(Var a);        // -> 1x1
  Var frobenius_sq(Var a);      // -> 1x1
  Var log(Var a);               // domain error on non-positive entries
  Var log_clamped(Var a, double floor = 1e-12);
  Var exp(Var a);
  Var tanh(Var a);
  Var softplus(Var a);          // log(1 + e^x), overflow-safe
  Var leaky_relu(Var a, double slope);
  Var rowwise_softmax(Var a, double temperature);
  Var l2_normalize_rows(Var a);

  Var transpose(Var a);
  Var col_sum(Var a);                       // n x d -> 1 x d
  Var row_scale(Var a, Var s);              // scales row i by s[i]
  Var recip(Var a, double floor = 1e-12);   // elementwise 1/max(x, floor)
  Var row_dot(Var a, Var b);                // n x d, n x d -> n x 1

  Var gather_rows(Var a, std::shared_ptr<const std::vector<std::size_t>> idx);

  /// y = S * x. `symmetric` means S^T == S (the adjacency case); otherwise a
  /// transposed copy is built for the backward pass.
  Var spmm(std::shared_ptr<const SparseMatrix> s, Var x, bool symmetric = true);

  /// Mean-over-anchors InfoNCE with the positive pair excluded from the
  /// denominator. x and y are n x d views (rows should be pre-normalized);
  /// returns a 1x1 loss, 0 when n < 2.
  Var infonce(Var x, Var y, double temperature);

  /// Per-pair bilinear logits: out[p][r] = e[u_p]^T Q_r e[M + v_p].
  /// e holds user rows [0, M) followed by item rows.
  Var bilinear_logits(Var e, const std::vector<Var>& q,
                      std::shared_ptr<const std::vector<Pair>> pairs,
                      std::size_t num_users);

  // --- evaluation ---------------------------------------------------------
  const Matrix& value(Var v) const;
  void backward(Var loss);
  /// Gradient from the last backward() call; zeros if the node was unreached.
  const Matrix& grad(Var v);

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Matrix value;
    std::function<void(Tape&, int)> backprop;  // null for leaves
  };

  int push(Matrix value, std::function<void(Tape&, int)> backprop);
  Matrix& grad_buf(int id);  // allocates zeros on first touch
  const Matrix& checked(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
};

}  // namespace mhcl
