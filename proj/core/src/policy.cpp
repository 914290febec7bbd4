#include "vrpflow/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "vrpflow/rng.hpp"

namespace vrpflow::nn {
namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Matrix uniform(Eigen::Index rows, Eigen::Index cols, double fan_in) {
    const double s = 1.0 / std::sqrt(fan_in);
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng_.uniform(-s, s);
    }
    return m;
  }

 private:
  Rng rng_;
};

int head_width(const Dims& dims, int layer) {
  return layer + 1 == dims.layers ? dims.units : dims.units / dims.heads;
}

GatParams<Matrix> init_gat(const Dims& dims, Initializer& init) {
  const int d = dims.units;
  GatParams<Matrix> g;
  g.w_node = init.uniform(kNodeFeatures, d, kNodeFeatures);
  g.b_node = Matrix::Zero(1, d);
  g.w_edge = init.uniform(1, d, 1);
  g.b_edge = Matrix::Zero(1, d);
  for (int l = 0; l < dims.layers; ++l) {
    const int dh = head_width(dims, l);
    LayerParams<Matrix> layer;
    for (int h = 0; h < dims.heads; ++h) {
      HeadParams<Matrix> head;
      head.w = init.uniform(d, dh, d);
      head.a_src = init.uniform(dh, 1, 2 * dh + d);
      head.a_dst = init.uniform(dh, 1, 2 * dh + d);
      head.a_edge = init.uniform(d, 1, 2 * dh + d);
      layer.heads.push_back(std::move(head));
    }
    layer.gamma = Matrix::Ones(1, d);
    layer.beta = Matrix::Zero(1, d);
    g.layers.push_back(std::move(layer));
  }
  return g;
}

RunningStats init_running(const Dims& dims) {
  RunningStats stats(static_cast<std::size_t>(dims.layers));
  for (BatchNormStats& s : stats) {
    s.mean = Matrix::Zero(1, dims.units);
    s.var = Matrix::Ones(1, dims.units);
  }
  return stats;
}

Var edge_embedding(Tape& t, const GatParams<Var>& p, const Matrix& features) {
  Var a = t.leaf(features);
  return leaky_relu(t, add_row(t, matmul(t, a, p.w_edge), p.b_edge), kLeakySlope);
}

Var pair_hidden(Tape& t, Var embeddings, Var w_src, Var w_dst, Var b1,
                const std::vector<int>& src, const std::vector<int>& dst) {
  Var a = matmul(t, embeddings, w_src);
  Var b = matmul(t, embeddings, w_dst);
  return add_row(t, add(t, gather_rows(t, a, src), gather_rows(t, b, dst)), b1);
}

}  // namespace

void validate(const Dims& dims) {
  if (dims.layers < 1 || dims.heads < 1 || dims.units < 1 || dims.mlp_hidden < 1) {
    throw std::invalid_argument("network sizes must be positive");
  }
  if (dims.units % dims.heads != 0) {
    throw std::invalid_argument(
        fmt::format("{} heads do not divide {} units", dims.heads, dims.units));
  }
}

Policy init_policy(const Dims& dims, std::uint64_t seed) {
  validate(dims);
  Initializer init(seed);
  Policy p;
  p.dims = dims;
  p.params.gat = init_gat(dims, init);
  const int d = dims.units, m = dims.mlp_hidden;
  p.params.decoder.w_src = init.uniform(d, m, 2 * d);
  p.params.decoder.w_dst = init.uniform(d, m, 2 * d);
  p.params.decoder.b1 = Matrix::Zero(1, m);
  p.params.decoder.w2 = init.uniform(m, 1, m);
  p.params.decoder.b2 = Matrix::Zero(1, 1);
  p.params.log_z = Matrix::Zero(1, 1);
  p.bn = init_running(dims);
  return p;
}

Discriminator init_discriminator(const Dims& dims, std::uint64_t seed) {
  validate(dims);
  Initializer init(seed);
  Discriminator disc;
  disc.dims = dims;
  disc.params.gat = init_gat(dims, init);
  const int d = dims.units, m = dims.mlp_hidden;
  disc.params.head.w_src = init.uniform(d, m, 3 * d);
  disc.params.head.w_dst = init.uniform(d, m, 3 * d);
  disc.params.head.w_edge = init.uniform(d, m, 3 * d);
  disc.params.head.b1 = Matrix::Zero(1, m);
  disc.params.head.w2 = init.uniform(m, 1, m);
  disc.params.head.b2 = Matrix::Zero(1, 1);
  disc.bn = init_running(dims);
  return disc;
}

std::size_t parameter_count(const Policy& policy) {
  std::size_t n = 0;
  for_each_policy_tensor([&](const Matrix& m) { n += static_cast<std::size_t>(m.size()); },
                         policy.params);
  return n;
}

std::size_t parameter_count(const Discriminator& disc) {
  std::size_t n = 0;
  for_each_disc_tensor([&](const Matrix& m) { n += static_cast<std::size_t>(m.size()); },
                       disc.params);
  return n;
}

double normalization_scale(const Instance& instance) {
  double lo_x = instance.depot().x, hi_x = lo_x, lo_y = instance.depot().y, hi_y = lo_y;
  for (const Customer& c : instance.customers()) {
    lo_x = std::min(lo_x, c.location.x);
    hi_x = std::max(hi_x, c.location.x);
    lo_y = std::min(lo_y, c.location.y);
    hi_y = std::max(hi_y, c.location.y);
  }
  const double side = std::max(hi_x - lo_x, hi_y - lo_y);
  return side > 0 ? side : 1.0;
}

Matrix node_features(const Instance& instance) {
  double lo_x = instance.depot().x, lo_y = instance.depot().y;
  for (const Customer& c : instance.customers()) {
    lo_x = std::min(lo_x, c.location.x);
    lo_y = std::min(lo_y, c.location.y);
  }
  const double side = normalization_scale(instance);
  const auto n = static_cast<Eigen::Index>(instance.num_nodes());
  Matrix x(n, kNodeFeatures);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point& p = instance.location(static_cast<std::size_t>(i));
    x(i, 0) = (p.x - lo_x) / side;
    x(i, 1) = (p.y - lo_y) / side;
    x(i, 2) = static_cast<double>(instance.demand(static_cast<std::size_t>(i))) /
              instance.capacity();
    x(i, 3) = i == 0 ? 1.0 : 0.0;
  }
  return x;
}

GraphInput build_graph_input(const Instance& instance, const DistanceMatrix& dm,
                             const SparseGraph& graph) {
  const std::size_t n = instance.num_nodes();
  if (graph.num_nodes() != n || dm.size() != n) {
    throw std::invalid_argument("graph, matrix and instance sizes differ");
  }
  const double side = normalization_scale(instance);
  GraphInput g;
  g.num_nodes = n;
  g.node_features = node_features(instance);
  std::vector<double> attn_d, cand_d;
  g.attn_offsets.push_back(0);
  g.cand_offsets.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nb = graph.neighbors[i];
    for (int j : nb) {
      g.attn_src.push_back(static_cast<int>(i));
      g.attn_dst.push_back(j);
      attn_d.push_back(dm(i, j) / side);
      g.cand_src.push_back(static_cast<int>(i));
      g.cand_dst.push_back(j);
      cand_d.push_back(dm(i, j) / side);
    }
    if (i == 0) {
      for (std::size_t j = 1; j < n; ++j) {
        if (std::find(nb.begin(), nb.end(), static_cast<int>(j)) != nb.end()) continue;
        g.cand_src.push_back(0);
        g.cand_dst.push_back(static_cast<int>(j));
        cand_d.push_back(dm(0, j) / side);
      }
    }
    g.attn_offsets.push_back(static_cast<int>(g.attn_src.size()));
    g.cand_offsets.push_back(static_cast<int>(g.cand_src.size()));
  }
  g.attn_edge = Eigen::Map<Matrix>(attn_d.data(), static_cast<Eigen::Index>(attn_d.size()), 1);
  g.cand_edge = Eigen::Map<Matrix>(cand_d.data(), static_cast<Eigen::Index>(cand_d.size()), 1);
  return g;
}

int GraphInput::arc(int from, int to) const {
  if (from < 0 || static_cast<std::size_t>(from) >= num_nodes) return -1;
  for (int k = cand_offsets[from]; k < cand_offsets[from + 1]; ++k) {
    if (cand_dst[k] == to) return k;
  }
  return -1;
}

Var gat_forward(Tape& t, const GatParams<Var>& p, const GraphInput& g,
                const RunningStats& running, NormMode mode, const Dims& dims,
                RunningStats* stats) {
  if (g.node_features.cols() != t.value(p.w_node).rows()) {
    throw std::invalid_argument("node feature width does not match the network");
  }
  if (static_cast<int>(p.layers.size()) != dims.layers || running.size() != p.layers.size()) {
    throw std::invalid_argument("layer count mismatch");
  }
  const auto n = static_cast<Eigen::Index>(g.num_nodes);
  Var x = t.leaf(g.node_features);
  Var h = leaky_relu(t, add_row(t, matmul(t, x, p.w_node), p.b_node), kLeakySlope);
  Var e = edge_embedding(t, p, g.attn_edge);
  if (stats) stats->assign(p.layers.size(), {});

  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const LayerParams<Var>& layer = p.layers[l];
    const bool last = l + 1 == p.layers.size();
    std::vector<Var> outs;
    for (const HeadParams<Var>& head : layer.heads) {
      Var wh = matmul(t, h, head.w);
      Var score = add(t,
                      add(t, gather_rows(t, matmul(t, wh, head.a_src), g.attn_src),
                          gather_rows(t, matmul(t, wh, head.a_dst), g.attn_dst)),
                      matmul(t, e, head.a_edge));
      Var alpha = segment_softmax(t, leaky_relu(t, score, kLeakySlope), g.attn_offsets);
      Var msg = mul_rows(t, gather_rows(t, wh, g.attn_dst), alpha);
      outs.push_back(scatter_add_rows(t, msg, g.attn_src, n));
    }
    Var aggr;
    if (last) {
      aggr = outs[0];
      for (std::size_t k = 1; k < outs.size(); ++k) aggr = add(t, aggr, outs[k]);
      aggr = scale(t, aggr, 1.0 / static_cast<double>(outs.size()));
    } else {
      aggr = concat_cols(t, outs);
    }
    Var normed = batch_norm(t, leaky_relu(t, aggr, kLeakySlope), layer.gamma, layer.beta,
                            mode == NormMode::kTraining, running[l], kBatchNormEps,
                            stats ? &(*stats)[l] : nullptr);
    h = add(t, h, normed);
  }
  return h;
}

Var decoder_logits(Tape& t, const DecoderParams<Var>& p, Var embeddings,
                   const GraphInput& g) {
  Var z = leaky_relu(t, pair_hidden(t, embeddings, p.w_src, p.w_dst, p.b1, g.cand_src, g.cand_dst),
                     kLeakySlope);
  return add_row(t, matmul(t, z, p.w2), p.b2);
}

Var disc_logits(Tape& t, const DiscParamsT<Var>& p, Var embeddings, const GraphInput& g,
                const std::vector<std::pair<int, int>>& extra, const DistanceMatrix& dm,
                double edge_scale) {
  std::vector<int> src = g.cand_src, dst = g.cand_dst;
  Matrix feats(g.cand_edge.rows() + static_cast<Eigen::Index>(extra.size()), 1);
  feats.topRows(g.cand_edge.rows()) = g.cand_edge;
  for (std::size_t k = 0; k < extra.size(); ++k) {
    const auto [i, j] = extra[k];
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= g.num_nodes ||
        static_cast<std::size_t>(j) >= g.num_nodes || i == j) {
      throw std::out_of_range(fmt::format("arc ({}, {}) outside the graph", i, j));
    }
    src.push_back(i);
    dst.push_back(j);
    feats(g.cand_edge.rows() + static_cast<Eigen::Index>(k), 0) = dm(i, j) / edge_scale;
  }
  const EdgeHeadParams<Var>& h = p.head;
  Var e = edge_embedding(t, p.gat, feats);
  Var z = add(t, pair_hidden(t, embeddings, h.w_src, h.w_dst, h.b1, src, dst),
              matmul(t, e, h.w_edge));
  return add_row(t, matmul(t, leaky_relu(t, z, kLeakySlope), h.w2), h.b2);
}

PolicyParamsT<Var> policy_leaves(Tape& t, const PolicyParamsT<Matrix>& p, bool requires_grad) {
  return map_policy<Var>(p, [&](const Matrix& m) { return t.leaf(m, requires_grad); });
}

DiscParamsT<Var> disc_leaves(Tape& t, const DiscParamsT<Matrix>& p, bool requires_grad) {
  return map_disc<Var>(p, [&](const Matrix& m) { return t.leaf(m, requires_grad); });
}

Matrix policy_logits(const Policy& policy, const GraphInput& g, NormMode mode) {
  Tape t;
  const PolicyParamsT<Var> v = policy_leaves(t, policy.params, false);
  Var h = gat_forward(t, v.gat, g, policy.bn, mode, policy.dims);
  return t.value(decoder_logits(t, v.decoder, h, g));
}

void update_running(RunningStats& running, const RunningStats& batch) {
  if (running.size() != batch.size()) throw std::invalid_argument("layer count mismatch");
  for (std::size_t l = 0; l < running.size(); ++l) {
    running[l].mean = kBatchNormMomentum * running[l].mean +
                      (1.0 - kBatchNormMomentum) * batch[l].mean;
    running[l].var = kBatchNormMomentum * running[l].var +
                     (1.0 - kBatchNormMomentum) * batch[l].var;
  }
}

EdgeProbMatrix::EdgeProbMatrix(std::size_t num_nodes, std::vector<std::pair<int, int>> arcs,
                               std::vector<double> log_probs)
    : num_nodes_(num_nodes),
      arcs_(std::move(arcs)),
      log_probs_(std::move(log_probs)),
      index_(num_nodes) {
  if (arcs_.size() != log_probs_.size()) {
    throw std::invalid_argument("one log-probability per arc");
  }
  for (std::size_t k = 0; k < arcs_.size(); ++k) {
    const auto [i, j] = arcs_[k];
    if (i < 0 || static_cast<std::size_t>(i) >= num_nodes) {
      throw std::out_of_range("arc source out of range");
    }
    index_[i].push_back({j, static_cast<int>(k)});
  }
  // Duplicate arcs resolve to their first row.
  for (auto& row : index_) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end(),
                          [](const auto& a, const auto& b) { return a.first == b.first; }),
              row.end());
  }
}

int EdgeProbMatrix::find(int from, int to) const {
  if (from < 0 || static_cast<std::size_t>(from) >= num_nodes_) return -1;
  const auto& row = index_[from];
  const auto it = std::lower_bound(row.begin(), row.end(), std::pair<int, int>{to, -1});
  return it != row.end() && it->first == to ? it->second : -1;
}

double EdgeProbMatrix::log_prob(int from, int to) const {
  const int k = find(from, to);
  if (k < 0) throw std::out_of_range(fmt::format("arc ({}, {}) is not scored", from, to));
  return log_probs_[k];
}

double EdgeProbMatrix::prob(int from, int to) const { return std::exp(log_prob(from, to)); }

EdgeProbMatrix disc_forward(const Discriminator& disc, const Instance& instance,
                            const DistanceMatrix& dm, const GraphInput& g, NormMode mode,
                            const std::vector<std::pair<int, int>>& extra) {
  Tape t;
  const DiscParamsT<Var> v = disc_leaves(t, disc.params, false);
  Var h = gat_forward(t, v.gat, g, disc.bn, mode, disc.dims);
  Var logits = disc_logits(t, v, h, g, extra, dm, normalization_scale(instance));
  const Matrix logm = t.value(log_sigmoid(t, logits));
  std::vector<std::pair<int, int>> arcs;
  for (std::size_t k = 0; k < g.cand_src.size(); ++k) arcs.push_back({g.cand_src[k], g.cand_dst[k]});
  arcs.insert(arcs.end(), extra.begin(), extra.end());
  return EdgeProbMatrix(g.num_nodes, std::move(arcs),
                        std::vector<double>(logm.data(), logm.data() + logm.size()));
}

}  // namespace vrpflow::nn
