// afd/autodiff.hpp -- minimal reverse-mode tape over dense row-major
// matrices. Templated on the scalar so the same graph code runs in float for
// training and in double for finite-difference verification.

// Copyright 2026  AFD project authors
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

#ifndef AFD_AUTODIFF_HPP
#define AFD_AUTODIFF_HPP

#include <functional>
#include <vector>

#include "afd/matrix.hpp"

namespace afd {

template <class T>
class Tape {
 public:
  using M = Mat<T>;

  int leaf(M value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr});
    return int(nodes_.size()) - 1;
  }

  const M& val(int i) const { return nodes_[size_t(i)].val; }
  M& grad(int i) { return nodes_[size_t(i)].grad; }
  size_t size() const { return nodes_.size(); }

  int matmul(int a, int b) {
    const M& A = val(a);
    const M& B = val(b);
    if (A.cols() != B.rows()) throw ShapeError("matmul: inner dims differ");
    M out = A * B;
    return push(std::move(out), [a, b](Tape& t, int self) {
      const M& g = t.grad(self);
      t.grad(a).noalias() += g * t.val(b).transpose();
      t.grad(b).noalias() += t.val(a).transpose() * g;
    });
  }

  // A * B^T (used for attention scores against stacked keys).
  int matmul_nt(int a, int b) {
    const M& A = val(a);
    const M& B = val(b);
    if (A.cols() != B.cols()) throw ShapeError("matmul_nt: inner dims differ");
    M out = A * B.transpose();
    return push(std::move(out), [a, b](Tape& t, int self) {
      const M& g = t.grad(self);
      t.grad(a).noalias() += g * t.val(b);
      t.grad(b).noalias() += g.transpose() * t.val(a);
    });
  }

  int add(int a, int b) {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw ShapeError("add: shape mismatch");
    M out = val(a) + val(b);
    return push(std::move(out), [a, b](Tape& t, int self) {
      t.grad(a) += t.grad(self);
      t.grad(b) += t.grad(self);
    });
  }

  int scale(int a, T s) {
    M out = val(a) * s;
    return push(std::move(out), [a, s](Tape& t, int self) { t.grad(a) += t.grad(self) * s; });
  }

  int hadamard(int a, int b) {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw ShapeError("hadamard: shape mismatch");
    M out = val(a).cwiseProduct(val(b));
    return push(std::move(out), [a, b](Tape& t, int self) {
      t.grad(a) += t.grad(self).cwiseProduct(t.val(b));
      t.grad(b) += t.grad(self).cwiseProduct(t.val(a));
    });
  }

  // Elementwise multiply by a constant (dropout masks, feedback gates).
  int mul_const(int a, M mask) {
    if (val(a).rows() != mask.rows() || val(a).cols() != mask.cols())
      throw ShapeError("mul_const: shape mismatch");
    M out = val(a).cwiseProduct(mask);
    return push(std::move(out), [a, mask = std::move(mask)](Tape& t, int self) {
      t.grad(a) += t.grad(self).cwiseProduct(mask);
    });
  }

  int sigmoid(int a) {
    M out = val(a).unaryExpr([](T x) { return T(1) / (T(1) + std::exp(-x)); });
    return push(std::move(out), [a](Tape& t, int self) {
      const M& y = t.val(self);
      t.grad(a) += t.grad(self).cwiseProduct(y.cwiseProduct(M::Ones(y.rows(), y.cols()) - y));
    });
  }

  int tanh_op(int a) {
    M out = val(a).array().tanh().matrix();
    return push(std::move(out), [a](Tape& t, int self) {
      const M& y = t.val(self);
      t.grad(a) += t.grad(self).cwiseProduct(M::Ones(y.rows(), y.cols()) - y.cwiseProduct(y));
    });
  }

  int concat_cols(int a, int b) {
    const M& A = val(a);
    const M& B = val(b);
    if (A.rows() != B.rows()) throw ShapeError("concat_cols: row mismatch");
    M out(A.rows(), A.cols() + B.cols());
    out.leftCols(A.cols()) = A;
    out.rightCols(B.cols()) = B;
    const long ac = A.cols();
    return push(std::move(out), [a, b, ac](Tape& t, int self) {
      const M& g = t.grad(self);
      t.grad(a) += g.leftCols(ac);
      t.grad(b) += g.rightCols(g.cols() - ac);
    });
  }

  int slice_cols(int a, long start, long len) {
    const M& A = val(a);
    if (start < 0 || start + len > A.cols()) throw ShapeError("slice_cols: out of range");
    M out = A.middleCols(start, len);
    return push(std::move(out), [a, start, len](Tape& t, int self) {
      t.grad(a).middleCols(start, len) += t.grad(self);
    });
  }

  int row(int a, long r) {
    const M& A = val(a);
    if (r < 0 || r >= A.rows()) throw ShapeError("row: out of range");
    M out = A.row(r);
    return push(std::move(out), [a, r](Tape& t, int self) { t.grad(a).row(r) += t.grad(self); });
  }

  int stack_rows(const std::vector<int>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: empty");
    const long cols = val(rows[0]).cols();
    M out(long(rows.size()), cols);
    for (size_t i = 0; i < rows.size(); ++i) {
      if (val(rows[i]).rows() != 1 || val(rows[i]).cols() != cols)
        throw ShapeError("stack_rows: rows must be 1 x n of equal width");
      out.row(long(i)) = val(rows[i]);
    }
    return push(std::move(out), [rows](Tape& t, int self) {
      for (size_t i = 0; i < rows.size(); ++i) t.grad(rows[i]) += t.grad(self).row(long(i));
    });
  }

  // Row-wise softmax of a 1 x n node.
  int softmax_row(int a) {
    const M& A = val(a);
    if (A.rows() != 1) throw ShapeError("softmax_row: expected a row vector");
    const T mx = A.maxCoeff();
    M out = (A.array() - mx).exp().matrix();
    out /= out.sum();
    return push(std::move(out), [a](Tape& t, int self) {
      const M& y = t.val(self);
      const M& g = t.grad(self);
      const T dot = (g.cwiseProduct(y)).sum();
      t.grad(a) += y.cwiseProduct(g.array().matrix() - M::Constant(1, y.cols(), dot));
    });
  }

  // Cross entropy of a 1 x V logits row against a class index. Returns 1x1.
  int ce_from_logits(int a, int target) {
    const M& A = val(a);
    if (A.rows() != 1) throw ShapeError("ce_from_logits: expected a row vector");
    if (target < 0 || target >= A.cols()) throw ShapeError("ce_from_logits: target out of range");
    const T mx = A.maxCoeff();
    M p = (A.array() - mx).exp().matrix();
    const T z = p.sum();
    p /= z;
    M out(1, 1);
    out(0, 0) = -(A(0, target) - mx - std::log(z));
    return push(std::move(out), [a, target, p = std::move(p)](Tape& t, int self) {
      const T g = t.grad(self)(0, 0);
      M d = p;
      d(0, target) -= T(1);
      t.grad(a) += d * g;
    });
  }

  // Summed binary cross entropy of a 1 x F logits row against a 0/1 target
  // row (numerically stable logits form). Returns 1x1.
  int bce_sum_from_logits(int a, M targets) {
    const M& A = val(a);
    if (A.rows() != 1 || targets.rows() != 1 || A.cols() != targets.cols())
      throw ShapeError("bce_sum_from_logits: shape mismatch");
    T loss = 0;
    for (long j = 0; j < A.cols(); ++j) {
      const T z = A(0, j), y = targets(0, j);
      loss += std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    M out(1, 1);
    out(0, 0) = loss;
    return push(std::move(out), [a, targets = std::move(targets)](Tape& t, int self) {
      const T g = t.grad(self)(0, 0);
      const M& z = t.val(a);
      M d(1, z.cols());
      for (long j = 0; j < z.cols(); ++j)
        d(0, j) = (T(1) / (T(1) + std::exp(-z(0, j))) - targets(0, j)) * g;
      t.grad(a) += d;
    });
  }

  // Sum of 1x1 scalar nodes.
  int add_all(const std::vector<int>& scalars) {
    if (scalars.empty()) throw ShapeError("add_all: empty");
    M out = M::Zero(1, 1);
    for (int s : scalars) {
      if (val(s).rows() != 1 || val(s).cols() != 1) throw ShapeError("add_all: non-scalar node");
      out(0, 0) += val(s)(0, 0);
    }
    return push(std::move(out), [scalars](Tape& t, int self) {
      const M& g = t.grad(self);
      for (int s : scalars) t.grad(s) += g;
    });
  }

  int zeros(long rows, long cols) { return leaf(M::Zero(rows, cols)); }

  // Reverse pass from a 1x1 loss node.
  void backward(int loss) {
    if (val(loss).rows() != 1 || val(loss).cols() != 1)
      throw ShapeError("backward: loss must be 1x1");
    for (auto& n : nodes_) n.grad = M::Zero(n.val.rows(), n.val.cols());
    nodes_[size_t(loss)].grad(0, 0) = T(1);
    for (int i = loss; i >= 0; --i)
      if (nodes_[size_t(i)].back) nodes_[size_t(i)].back(*this, i);
  }

 private:
  struct Node {
    M val;
    M grad;
    std::function<void(Tape&, int)> back;
  };

  int push(M&& val, std::function<void(Tape&, int)> back) {
    nodes_.push_back(Node{std::move(val), {}, std::move(back)});
    return int(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
};

}  // namespace afd

#endif  // AFD_AUTODIFF_HPP
