#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace vrpflow::nn {

using Matrix = Eigen::MatrixXd;

// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
};

// Reverse-mode differentiation over dense matrices. Every op appends a node
// holding its value and, when any input needs a gradient, a closure that
// propagates the node's gradient to its inputs. A tape is single-use and not
// thread-safe; build one per forward pass.
class Tape {
 public:
  // A leaf. Parameters pass requires_grad = true; inputs and constants false.
  Var leaf(Matrix value, bool requires_grad = false);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value(0, 0); }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient of the last backward() root with respect to v; zeros when v
  // does not influence it.
  Matrix grad(Var v) const;

  // Seeds d(root)/d(root) = 1 for a 1x1 root and back-propagates.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward back);
  Var record(Matrix value, const std::vector<Var>& inputs, Backward back);
  void accumulate(Var v, const Matrix& g);
  template <class Expr>
  void accumulate_block(Var v, Eigen::Index row, Eigen::Index col, const Expr& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    ensure_grad(n);
    n.grad.block(row, col, g.rows(), g.cols()) += g;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward back;
    bool requires_grad = false;
  };
  void ensure_grad(Node& n) {
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }

  std::vector<Node> nodes_;
};

// Dense algebra.
Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);           // elementwise
Var scale(Tape& t, Var a, double s);
Var add_scalar(Tape& t, Var a, double s);
Var add_row(Tape& t, Var a, Var row);     // row (1 x c) added to every row of a
Var mul_rows(Tape& t, Var a, Var w);      // row r of a scaled by w(r, 0)
Var broadcast(Tape& t, Var scalar, Eigen::Index rows);  // 1x1 -> rows x 1

// Elementwise nonlinearities.
Var leaky_relu(Tape& t, Var a, double slope);
Var sigmoid(Tape& t, Var a);
Var log_sigmoid(Tape& t, Var a);
Var exp(Tape& t, Var a);
Var square(Tape& t, Var a);

// Structure.
Var gather_rows(Tape& t, Var a, const std::vector<int>& rows);
// out has `rows` rows; out[index[k]] += a[k].
Var scatter_add_rows(Tape& t, Var a, const std::vector<int>& index, Eigen::Index rows);
Var concat_cols(Tape& t, const std::vector<Var>& parts);
Var concat_rows(Tape& t, const std::vector<Var>& parts);

// Reductions to 1x1.
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);

// Softmax of a column vector within contiguous segments
// [offsets[s], offsets[s + 1]).
Var segment_softmax(Tape& t, Var scores, const std::vector<int>& offsets);

// Sum over decisions of log softmax(logits restricted to `valid`)[chosen].
// `chosen` must be one of `valid`. Entries outside `valid` get no gradient.
struct Choice {
  std::vector<int> valid;
  int chosen = -1;
};
Var log_softmax_picks(Tape& t, Var logits, const std::vector<Choice>& choices);

// Batch normalization over rows (one row per sample). Training mode uses the
// batch mean and biased variance and reports them through batch_mean and
// batch_var; inference mode uses the supplied running statistics.
struct BatchNormStats {
  Matrix mean;  // 1 x c
  Matrix var;   // 1 x c
};
Var batch_norm(Tape& t, Var x, Var gamma, Var beta, bool training,
               const BatchNormStats& running, double eps,
               BatchNormStats* batch_stats = nullptr);

}  // namespace vrpflow::nn
