#include "vrpflow/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace vrpflow::nn {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(fmt::format("{}: shape {}x{} vs {}x{}", op, a.rows(),
                                            a.cols(), b.rows(), b.cols()));
  }
}

double log_sigmoid_scalar(double x) {
  return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward back) {
  bool needs = false;
  for (Var v : inputs) needs = needs || nodes_[v.id].requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward back) {
  bool needs = false;
  for (Var v : inputs) needs = needs || nodes_[v.id].requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  if (nodes_[root.id].value.size() != 1) {
    throw std::invalid_argument("backward needs a 1x1 root");
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  nodes_[root.id].grad = Matrix::Ones(1, 1);
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.back || n.grad.size() == 0) continue;
    n.back(*this, n.grad);
  }
}

Var matmul(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.cols() != bv.rows()) {
    throw std::invalid_argument(fmt::format("matmul: {}x{} times {}x{}", av.rows(),
                                            av.cols(), bv.rows(), bv.cols()));
  }
  return t.record(av * bv, {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "add");
  return t.record(t.value(a) + t.value(b), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "sub");
  return t.record(t.value(a) - t.value(b), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "mul");
  return t.record(t.value(a).cwiseProduct(t.value(b)), {a, b},
                  [a, b](Tape& t, const Matrix& g) {
                    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
                    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
                  });
}

Var scale(Tape& t, Var a, double s) {
  return t.record(t.value(a) * s, {a},
                  [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var add_scalar(Tape& t, Var a, double s) {
  Matrix v = t.value(a).array() + s;
  return t.record(std::move(v), {a},
                  [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var add_row(Tape& t, Var a, Var row) {
  const Matrix& av = t.value(a);
  const Matrix& rv = t.value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw std::invalid_argument(fmt::format("add_row: {}x{} plus row {}x{}", av.rows(),
                                            av.cols(), rv.rows(), rv.cols()));
  }
  Matrix out = av.rowwise() + rv.row(0);
  return t.record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var mul_rows(Tape& t, Var a, Var w) {
  const Matrix& av = t.value(a);
  const Matrix& wv = t.value(w);
  if (wv.cols() != 1 || wv.rows() != av.rows()) {
    throw std::invalid_argument("mul_rows: weight must be rows x 1");
  }
  Matrix out = av.array().colwise() * wv.col(0).array();
  return t.record(std::move(out), {a, w}, [a, w](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) {
      Matrix ga = g.array().colwise() * t.value(w).col(0).array();
      t.accumulate(a, ga);
    }
    if (t.requires_grad(w)) {
      t.accumulate(w, g.cwiseProduct(t.value(a)).rowwise().sum());
    }
  });
}

Var broadcast(Tape& t, Var scalar, Eigen::Index rows) {
  if (t.value(scalar).size() != 1) throw std::invalid_argument("broadcast needs 1x1");
  Matrix out = Matrix::Constant(rows, 1, t.scalar(scalar));
  return t.record(std::move(out), {scalar}, [scalar](Tape& t, const Matrix& g) {
    t.accumulate(scalar, Matrix::Constant(1, 1, g.sum()));
  });
}

Var leaky_relu(Tape& t, Var a, double slope) {
  const Matrix& av = t.value(a);
  Matrix out = av.unaryExpr([slope](double x) { return x > 0 ? x : slope * x; });
  return t.record(std::move(out), {a}, [a, slope](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    Matrix d = av.unaryExpr([slope](double x) { return x > 0 ? 1.0 : slope; });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var sigmoid(Tape& t, Var a) {
  Matrix out = t.value(a).unaryExpr(&sigmoid_scalar);
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), {a}, [a, self](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(Var{self});
    t.accumulate(a, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var log_sigmoid(Tape& t, Var a) {
  Matrix out = t.value(a).unaryExpr(&log_sigmoid_scalar);
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    Matrix d = t.value(a).unaryExpr([](double x) { return sigmoid_scalar(-x); });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var exp(Tape& t, Var a) {
  Matrix out = t.value(a).array().exp();
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), {a}, [a, self](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(t.value(Var{self})));
  });
}

Var square(Tape& t, Var a) {
  Matrix out = t.value(a).array().square();
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, 2.0 * g.cwiseProduct(t.value(a)));
  });
}

Var gather_rows(Tape& t, Var a, const std::vector<int>& rows) {
  const Matrix& av = t.value(a);
  Matrix out(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= av.rows()) {
      throw std::out_of_range(fmt::format("gather_rows: row {} of {}", rows[k], av.rows()));
    }
    out.row(static_cast<Eigen::Index>(k)) = av.row(rows[k]);
  }
  return t.record(std::move(out), {a}, [a, rows](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    Matrix ga = Matrix::Zero(av.rows(), av.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      ga.row(rows[k]) += g.row(static_cast<Eigen::Index>(k));
    }
    t.accumulate(a, ga);
  });
}

Var scatter_add_rows(Tape& t, Var a, const std::vector<int>& index, Eigen::Index rows) {
  const Matrix& av = t.value(a);
  if (static_cast<Eigen::Index>(index.size()) != av.rows()) {
    throw std::invalid_argument("scatter_add_rows: one index per input row");
  }
  Matrix out = Matrix::Zero(rows, av.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= rows) {
      throw std::out_of_range(fmt::format("scatter_add_rows: row {} of {}", index[k], rows));
    }
    out.row(index[k]) += av.row(static_cast<Eigen::Index>(k));
  }
  return t.record(std::move(out), {a}, [a, index](Tape& t, const Matrix& g) {
    Matrix ga(static_cast<Eigen::Index>(index.size()), g.cols());
    for (std::size_t k = 0; k < index.size(); ++k) {
      ga.row(static_cast<Eigen::Index>(k)) = g.row(index[k]);
    }
    t.accumulate(a, ga);
  });
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: nothing to concatenate");
  const Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += t.value(p).cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, t.value(p).cols()) = t.value(p);
    at += t.value(p).cols();
  }
  return t.record(std::move(out), parts, [parts](Tape& t, const Matrix& g) {
    Eigen::Index at = 0;
    for (Var p : parts) {
      const Eigen::Index c = t.value(p).cols();
      if (t.requires_grad(p)) t.accumulate(p, g.middleCols(at, c));
      at += c;
    }
  });
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: nothing to concatenate");
  const Eigen::Index cols = t.value(parts[0]).cols();
  Eigen::Index rows = 0;
  for (Var p : parts) {
    if (t.value(p).cols() != cols) throw std::invalid_argument("concat_rows: col mismatch");
    rows += t.value(p).rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleRows(at, t.value(p).rows()) = t.value(p);
    at += t.value(p).rows();
  }
  return t.record(std::move(out), parts, [parts](Tape& t, const Matrix& g) {
    Eigen::Index at = 0;
    for (Var p : parts) {
      const Eigen::Index r = t.value(p).rows();
      if (t.requires_grad(p)) t.accumulate(p, g.middleRows(at, r));
      at += r;
    }
  });
}

Var sum(Tape& t, Var a) {
  return t.record(Matrix::Constant(1, 1, t.value(a).sum()), {a},
                  [a](Tape& t, const Matrix& g) {
                    const Matrix& av = t.value(a);
                    t.accumulate(a, Matrix::Constant(av.rows(), av.cols(), g(0, 0)));
                  });
}

Var mean(Tape& t, Var a) {
  const double n = static_cast<double>(t.value(a).size());
  if (n == 0) throw std::invalid_argument("mean of an empty matrix");
  return scale(t, sum(t, a), 1.0 / n);
}

Var segment_softmax(Tape& t, Var scores, const std::vector<int>& offsets) {
  const Matrix& s = t.value(scores);
  if (s.cols() != 1 || offsets.empty() || offsets.back() != s.rows()) {
    throw std::invalid_argument("segment_softmax: offsets must cover the column");
  }
  Matrix out(s.rows(), 1);
  for (std::size_t seg = 0; seg + 1 < offsets.size(); ++seg) {
    const int b = offsets[seg], e = offsets[seg + 1];
    if (b == e) continue;
    const double top = s.col(0).segment(b, e - b).maxCoeff();
    double z = 0.0;
    for (int k = b; k < e; ++k) z += std::exp(s(k, 0) - top);
    for (int k = b; k < e; ++k) out(k, 0) = std::exp(s(k, 0) - top) / z;
  }
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), {scores}, [scores, offsets, self](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(Var{self});
    Matrix gs(y.rows(), 1);
    for (std::size_t seg = 0; seg + 1 < offsets.size(); ++seg) {
      const int b = offsets[seg], e = offsets[seg + 1];
      double dot = 0.0;
      for (int k = b; k < e; ++k) dot += y(k, 0) * g(k, 0);
      for (int k = b; k < e; ++k) gs(k, 0) = y(k, 0) * (g(k, 0) - dot);
    }
    t.accumulate(scores, gs);
  });
}

Var log_softmax_picks(Tape& t, Var logits, const std::vector<Choice>& choices) {
  const Matrix& l = t.value(logits);
  if (l.cols() != 1) throw std::invalid_argument("log_softmax_picks: logits must be a column");
  double total = 0.0;
  for (const Choice& c : choices) {
    double top = -INFINITY;
    bool found = false;
    for (int v : c.valid) {
      if (v < 0 || v >= l.rows()) throw std::out_of_range("log_softmax_picks: bad index");
      top = std::max(top, l(v, 0));
      found = found || v == c.chosen;
    }
    if (!found) throw std::invalid_argument("log_softmax_picks: chosen not in valid set");
    double z = 0.0;
    for (int v : c.valid) z += std::exp(l(v, 0) - top);
    total += l(c.chosen, 0) - top - std::log(z);
  }
  return t.record(Matrix::Constant(1, 1, total), {logits},
                  [logits, choices](Tape& t, const Matrix& g) {
                    const Matrix& l = t.value(logits);
                    Matrix gl = Matrix::Zero(l.rows(), 1);
                    for (const Choice& c : choices) {
                      double top = -INFINITY;
                      for (int v : c.valid) top = std::max(top, l(v, 0));
                      double z = 0.0;
                      for (int v : c.valid) z += std::exp(l(v, 0) - top);
                      for (int v : c.valid) gl(v, 0) -= g(0, 0) * std::exp(l(v, 0) - top) / z;
                      gl(c.chosen, 0) += g(0, 0);
                    }
                    t.accumulate(logits, gl);
                  });
}

Var batch_norm(Tape& t, Var x, Var gamma, Var beta, bool training,
               const BatchNormStats& running, double eps, BatchNormStats* batch_stats) {
  const Matrix& xv = t.value(x);
  const Eigen::Index n = xv.rows();
  if (t.value(gamma).cols() != xv.cols() || t.value(beta).cols() != xv.cols()) {
    throw std::invalid_argument("batch_norm: parameter width mismatch");
  }
  Eigen::RowVectorXd mu, var;
  if (training) {
    mu = xv.colwise().mean();
    var = (xv.rowwise() - mu).array().square().colwise().mean();
    if (batch_stats) {
      batch_stats->mean = mu;
      batch_stats->var = var;
    }
  } else {
    mu = running.mean.row(0);
    var = running.var.row(0);
  }
  const Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt();
  Matrix xhat = (xv.rowwise() - mu).array().rowwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * t.value(gamma).row(0).array()).rowwise() +
               t.value(beta).row(0).array();
  return t.record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, training, inv_std, xhat = std::move(xhat), n](Tape& t,
                                                                     const Matrix& g) {
        if (t.requires_grad(beta)) t.accumulate(beta, g.colwise().sum());
        if (t.requires_grad(gamma)) t.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
        if (!t.requires_grad(x)) return;
        Matrix gx = g.array().rowwise() * t.value(gamma).row(0).array();
        if (training) {
          const Eigen::RowVectorXd s1 = gx.colwise().sum();
          const Eigen::RowVectorXd s2 = gx.cwiseProduct(xhat).colwise().sum();
          const double nd = static_cast<double>(n);
          Matrix centered = (gx * nd).rowwise() - s1;
          centered -= (xhat.array().rowwise() * s2.array()).matrix();
          gx = (centered.array().rowwise() * (inv_std.array() / nd)).matrix();
        } else {
          gx = (gx.array().rowwise() * inv_std.array()).matrix();
        }
        t.accumulate(x, gx);
      });
}

}  // namespace vrpflow::nn
