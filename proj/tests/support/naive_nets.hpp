#pragma once

// Loop-by-loop re-evaluation of the networks, written without the tape, and
// a central finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "vrpflow/policy.hpp"
#include "vrpflow/rollout.hpp"

namespace vrpflow::testing {

using nn::Matrix;

// When set, every leaky ReLU appends the side of the kink its input lies on.
inline thread_local std::vector<char>* kink_sides = nullptr;

inline double lrelu(double x) {
  if (kink_sides) kink_sides->push_back(x > 0);
  return x > 0 ? x : 0.2 * x;
}

inline Matrix naive_gat(const nn::GatParams<Matrix>& p, const nn::GraphInput& g,
                        const nn::RunningStats& running, bool training) {
  const int n = static_cast<int>(g.num_nodes);
  const int d = static_cast<int>(p.w_node.cols());
  const int feats = static_cast<int>(p.w_node.rows());
  Matrix h(n, d);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c) {
      double s = p.b_node(0, c);
      for (int f = 0; f < feats; ++f) s += g.node_features(i, f) * p.w_node(f, c);
      h(i, c) = lrelu(s);
    }
  }
  const int arcs = static_cast<int>(g.attn_src.size());
  Matrix e(arcs, d);
  for (int k = 0; k < arcs; ++k) {
    for (int c = 0; c < d; ++c) e(k, c) = lrelu(g.attn_edge(k, 0) * p.w_edge(0, c) + p.b_edge(0, c));
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    const bool last = l + 1 == p.layers.size();
    std::vector<Matrix> outs;
    for (const auto& head : layer.heads) {
      const int dh = static_cast<int>(head.w.cols());
      Matrix wh = Matrix::Zero(n, dh);
      for (int i = 0; i < n; ++i) {
        for (int c = 0; c < dh; ++c) {
          for (int r = 0; r < d; ++r) wh(i, c) += h(i, r) * head.w(r, c);
        }
      }
      std::vector<double> score(arcs);
      for (int k = 0; k < arcs; ++k) {
        double s = 0.0;
        for (int c = 0; c < dh; ++c) {
          s += wh(g.attn_src[k], c) * head.a_src(c, 0) + wh(g.attn_dst[k], c) * head.a_dst(c, 0);
        }
        for (int c = 0; c < d; ++c) s += e(k, c) * head.a_edge(c, 0);
        score[k] = lrelu(s);
      }
      Matrix out = Matrix::Zero(n, dh);
      for (int i = 0; i < n; ++i) {
        const int b = g.attn_offsets[i], en = g.attn_offsets[i + 1];
        if (b == en) continue;
        double top = score[b];
        for (int k = b; k < en; ++k) top = std::max(top, score[k]);
        double z = 0.0;
        for (int k = b; k < en; ++k) z += std::exp(score[k] - top);
        for (int k = b; k < en; ++k) {
          const double alpha = std::exp(score[k] - top) / z;
          for (int c = 0; c < dh; ++c) out(i, c) += alpha * wh(g.attn_dst[k], c);
        }
      }
      outs.push_back(out);
    }
    Matrix aggr(n, d);
    if (last) {
      aggr.setZero();
      for (const Matrix& o : outs) aggr += o;
      aggr /= static_cast<double>(outs.size());
    } else {
      int col = 0;
      for (const Matrix& o : outs) {
        aggr.middleCols(col, o.cols()) = o;
        col += static_cast<int>(o.cols());
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < d; ++c) aggr(i, c) = lrelu(aggr(i, c));
    }
    for (int c = 0; c < d; ++c) {
      double mu = running[l].mean(0, c), var = running[l].var(0, c);
      if (training) {
        mu = 0.0;
        for (int i = 0; i < n; ++i) mu += aggr(i, c);
        mu /= n;
        var = 0.0;
        for (int i = 0; i < n; ++i) var += (aggr(i, c) - mu) * (aggr(i, c) - mu);
        var /= n;
      }
      for (int i = 0; i < n; ++i) {
        h(i, c) += layer.gamma(0, c) * (aggr(i, c) - mu) / std::sqrt(var + 1e-5) + layer.beta(0, c);
      }
    }
  }
  return h;
}

inline std::vector<double> naive_decoder(const nn::DecoderParams<Matrix>& p, const Matrix& h,
                                         const nn::GraphInput& g) {
  std::vector<double> out;
  const int hidden = static_cast<int>(p.b1.cols());
  for (std::size_t k = 0; k < g.cand_src.size(); ++k) {
    double u = p.b2(0, 0);
    for (int c = 0; c < hidden; ++c) {
      double z = p.b1(0, c);
      for (int r = 0; r < h.cols(); ++r) {
        z += h(g.cand_src[k], r) * p.w_src(r, c) + h(g.cand_dst[k], r) * p.w_dst(r, c);
      }
      u += lrelu(z) * p.w2(c, 0);
    }
    out.push_back(u);
  }
  return out;
}

// Sigmoid edge probabilities over the candidate arcs followed by `extra`.
inline std::vector<double> naive_disc(const nn::DiscParamsT<Matrix>& p, const Matrix& h,
                                      const nn::GraphInput& g,
                                      const std::vector<std::pair<int, int>>& extra = {},
                                      const DistanceMatrix* dm = nullptr, double edge_scale = 1.0) {
  std::vector<int> src = g.cand_src, dst = g.cand_dst;
  std::vector<double> feat(g.cand_edge.data(), g.cand_edge.data() + g.cand_edge.size());
  for (const auto& [i, j] : extra) {
    src.push_back(i);
    dst.push_back(j);
    feat.push_back((*dm)(i, j) / edge_scale);
  }
  std::vector<double> out;
  const auto& q = p.head;
  const int hidden = static_cast<int>(q.b1.cols());
  const int d = static_cast<int>(h.cols());
  for (std::size_t k = 0; k < src.size(); ++k) {
    std::vector<double> e(d);
    for (int c = 0; c < d; ++c) e[c] = lrelu(feat[k] * p.gat.w_edge(0, c) + p.gat.b_edge(0, c));
    double u = q.b2(0, 0);
    for (int c = 0; c < hidden; ++c) {
      double z = q.b1(0, c);
      for (int r = 0; r < d; ++r) {
        z += h(src[k], r) * q.w_src(r, c) + h(dst[k], r) * q.w_dst(r, c) + e[r] * q.w_edge(r, c);
      }
      u += lrelu(z) * q.w2(c, 0);
    }
    out.push_back(1.0 / (1.0 + std::exp(-u)));
  }
  return out;
}

inline std::vector<std::pair<int, int>> arcs_outside(
    const nn::GraphInput& g, std::initializer_list<const std::vector<nn::Trajectory>*> sets) {
  std::vector<std::pair<int, int>> extra;
  for (const auto* set : sets) {
    for (const auto& t : *set) {
      for (const auto& arc : t.arcs()) {
        if (g.arc(arc.first, arc.second) < 0 &&
            std::find(extra.begin(), extra.end(), arc) == extra.end()) {
          extra.push_back(arc);
        }
      }
    }
  }
  return extra;
}

// Which side of its kink every leaky ReLU input lies on, in evaluation order.
inline std::vector<char> policy_kink_sides(const nn::PolicyParamsT<Matrix>& p,
                                           const nn::GraphInput& g,
                                           const nn::RunningStats& running) {
  std::vector<char> sides;
  kink_sides = &sides;
  naive_decoder(p.decoder, naive_gat(p.gat, g, running, true), g);
  kink_sides = nullptr;
  return sides;
}

inline std::vector<char> disc_kink_sides(const nn::DiscParamsT<Matrix>& p, const nn::GraphInput& g,
                                         const nn::RunningStats& running,
                                         const std::vector<std::pair<int, int>>& extra,
                                         const DistanceMatrix& dm, double edge_scale) {
  std::vector<char> sides;
  kink_sides = &sides;
  naive_disc(p, naive_gat(p.gat, g, running, true), g, extra, &dm, edge_scale);
  kink_sides = nullptr;
  return sides;
}

// mean(R_neg^2) + mean((1 - R_pos)^2) minus its constant term, so that
// differences of nearby values keep their significant digits when the
// rewards are small. Rewards come from the training-mode forward.
inline double shifted_disc_loss(const nn::Discriminator& disc, const Instance& inst,
                                const DistanceMatrix& dm, const nn::GraphInput& g,
                                const std::vector<nn::Trajectory>& neg,
                                const std::vector<nn::Trajectory>& pos) {
  const auto extra = arcs_outside(g, {&neg, &pos});
  const nn::EdgeProbMatrix m = nn::disc_forward(disc, inst, dm, g, nn::NormMode::kTraining, extra);
  double a = 0.0, b = 0.0;
  for (const auto& t : neg) a += std::exp(2.0 * nn::disc_score(m, t));
  for (const auto& t : pos) {
    const double r = std::exp(nn::disc_score(m, t));
    b += r * r - 2.0 * r;
  }
  return a / static_cast<double>(neg.size()) + b / static_cast<double>(pos.size());
}

struct PolicyTensors {
  template <class F, class... P>
  void operator()(F&& f, P&... p) const {
    nn::for_each_policy_tensor(f, p...);
  }
};

struct DiscTensors {
  template <class F, class... P>
  void operator()(F&& f, P&... p) const {
    nn::for_each_disc_tensor(f, p...);
  }
};

struct FdReport {
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::size_t one_sided = 0;  // entries whose stencil crossed a kink
  double worst_relative = 0.0;  // over gradients above the floor
  std::string worst;
};

// Compares `analytic` with central differences of `loss` for every scalar.
// Parameters whose gradients are both below abs_floor are compared
// absolutely against abs_floor; all others relatively against rel_tol.
//
// With `sides`, a mismatching stencil whose two ends put some leaky ReLU
// input on different sides of its kink is not differentiating one smooth
// piece. The analytic gradient is then compared with the second-order
// one-sided difference (3 f(x) - 4 f(x -+ h/2) + f(x -+ h)) / (+-h) over the
// half of the stencil that keeps the activation pattern of x. An entry with
// no such half fails.
template <class P, class Visit>
FdReport finite_difference_check(
    P params, P analytic, Visit visit, const std::function<double(const P&)>& loss, double step,
    double rel_tol, double abs_floor,
    const std::function<std::vector<char>(const P&)>& sides = nullptr) {
  std::vector<Matrix*> values, grads;
  visit(
      [&](Matrix& v, Matrix& g) {
        values.push_back(&v);
        grads.push_back(&g);
      },
      params, analytic);
  const double center = loss(params);
  const std::vector<char> here = sides ? sides(params) : std::vector<char>{};
  const auto compare = [&](double an, double fd) {
    const double scale = std::max(std::abs(fd), std::abs(an));
    const bool tiny = scale < abs_floor;
    const double err = tiny ? std::abs(fd - an) : std::abs(fd - an) / scale;
    return std::tuple{tiny, err, tiny ? err > abs_floor : err > rel_tol};
  };
  FdReport rep;
  for (std::size_t t = 0; t < values.size(); ++t) {
    Matrix& v = *values[t];
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      const double saved = v.data()[k];
      const auto at = [&](double offset) {
        v.data()[k] = saved + offset;
        const double f = loss(params);
        v.data()[k] = saved;
        return f;
      };
      const auto sides_at = [&](double offset) {
        v.data()[k] = saved + offset;
        std::vector<char> s = sides(params);
        v.data()[k] = saved;
        return s;
      };
      const double up = at(step), down = at(-step);
      const double an = grads[t]->data()[k];
      double fd = (up - down) / (2.0 * step);
      auto [tiny, err, bad] = compare(an, fd);
      bool unusable = false;
      if (bad && sides) {
        const std::vector<char> up_sides = sides_at(step), down_sides = sides_at(-step);
        if (up_sides != down_sides) {
          ++rep.one_sided;
          const double dir = up_sides == here ? 1.0 : down_sides == here ? -1.0 : 0.0;
          if (dir != 0.0 && sides_at(dir * step / 2) == here) {
            const double far = dir > 0 ? up : down;
            fd = (4.0 * at(dir * step / 2) - 3.0 * center - far) / (dir * step);
            std::tie(tiny, err, bad) = compare(an, fd);
          } else {
            unusable = true;
          }
        }
      }
      ++rep.checked;
      if (bad) ++rep.failures;
      if (bad || (!tiny && err > rep.worst_relative)) {
        if (!tiny) rep.worst_relative = std::max(rep.worst_relative, err);
        if (bad || rep.failures == 0) {
          rep.worst = fmt::format("tensor {} entry {}: analytic {:.12e}, fd {:.12e}{}", t, k, an, fd,
                                  unusable ? " (kinks on both sides)" : "");
        }
      }
    }
  }
  return rep;
}

}  // namespace vrpflow::testing
