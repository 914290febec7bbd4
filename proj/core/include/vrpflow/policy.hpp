#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vrpflow/autodiff.hpp"
#include "vrpflow/instance.hpp"
#include "vrpflow/sparse_graph.hpp"

namespace vrpflow::nn {

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr int kNodeFeatures = 4;  // x, y, demand / Q, depot bit

struct Dims {
  int layers = 3;
  int heads = 8;
  int units = 64;      // D_units
  int mlp_hidden = 128;

  friend bool operator==(const Dims&, const Dims&) = default;
};

// Throws std::invalid_argument unless all sizes are positive and the head
// count divides the width (needed by concatenating layers).
void validate(const Dims& dims);

// Parameter containers are templated on the tensor type so the same layout
// holds raw matrices, tape handles, gradients and optimizer moments.
template <class T>
struct HeadParams {
  T w;       // D x d_head value projection
  T a_src;   // d_head x 1, scores the receiving node
  T a_dst;   // d_head x 1, scores the neighbour
  T a_edge;  // D x 1, scores the edge embedding
};

template <class T>
struct LayerParams {
  std::vector<HeadParams<T>> heads;
  T gamma;  // 1 x D
  T beta;   // 1 x D
};

template <class T>
struct GatParams {
  T w_node;  // F x D
  T b_node;  // 1 x D
  T w_edge;  // 1 x D
  T b_edge;  // 1 x D
  std::vector<LayerParams<T>> layers;
};

// Two-layer perceptron over a concatenated pair of embeddings, with the first
// layer split per input block.
template <class T>
struct DecoderParams {
  T w_src;  // D x hidden
  T w_dst;  // D x hidden
  T b1;     // 1 x hidden
  T w2;     // hidden x 1
  T b2;     // 1 x 1
};

template <class T>
struct PolicyParamsT {
  GatParams<T> gat;
  DecoderParams<T> decoder;
  T log_z;  // 1 x 1
};

template <class T>
struct EdgeHeadParams {
  T w_src;   // D x hidden
  T w_dst;   // D x hidden
  T w_edge;  // D x hidden
  T b1;
  T w2;
  T b2;
};

template <class T>
struct DiscParamsT {
  GatParams<T> gat;
  EdgeHeadParams<T> head;
};

// Visits tensors in declaration order: input projections, then each layer's
// heads (w, a_src, a_dst, a_edge) followed by gamma and beta, then the head.
// Works for any number of parallel containers with identical structure.
template <class F, class... G>
void for_each_tensor(F&& f, G&... gat) {
  f(gat.w_node...);
  f(gat.b_node...);
  f(gat.w_edge...);
  f(gat.b_edge...);
  const std::size_t layers = std::get<0>(std::forward_as_tuple(gat...)).layers.size();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t heads = std::get<0>(std::forward_as_tuple(gat...)).layers[l].heads.size();
    for (std::size_t h = 0; h < heads; ++h) {
      f(gat.layers[l].heads[h].w...);
      f(gat.layers[l].heads[h].a_src...);
      f(gat.layers[l].heads[h].a_dst...);
      f(gat.layers[l].heads[h].a_edge...);
    }
    f(gat.layers[l].gamma...);
    f(gat.layers[l].beta...);
  }
}

template <class F, class... P>
void for_each_policy_tensor(F&& f, P&... p) {
  for_each_tensor(f, p.gat...);
  f(p.decoder.w_src...);
  f(p.decoder.w_dst...);
  f(p.decoder.b1...);
  f(p.decoder.w2...);
  f(p.decoder.b2...);
  f(p.log_z...);
}

template <class F, class... P>
void for_each_disc_tensor(F&& f, P&... p) {
  for_each_tensor(f, p.gat...);
  f(p.head.w_src...);
  f(p.head.w_dst...);
  f(p.head.w_edge...);
  f(p.head.b1...);
  f(p.head.w2...);
  f(p.head.b2...);
}

// Same structure with every tensor mapped through f.
template <class U, class T, class F>
GatParams<U> map_gat(const GatParams<T>& in, F&& f) {
  GatParams<U> out{f(in.w_node), f(in.b_node), f(in.w_edge), f(in.b_edge), {}};
  for (const auto& layer : in.layers) {
    LayerParams<U> l;
    for (const auto& h : layer.heads) {
      l.heads.push_back({f(h.w), f(h.a_src), f(h.a_dst), f(h.a_edge)});
    }
    l.gamma = f(layer.gamma);
    l.beta = f(layer.beta);
    out.layers.push_back(std::move(l));
  }
  return out;
}

template <class U, class T, class F>
PolicyParamsT<U> map_policy(const PolicyParamsT<T>& in, F&& f) {
  const auto& d = in.decoder;
  return {map_gat<U>(in.gat, f),
          {f(d.w_src), f(d.w_dst), f(d.b1), f(d.w2), f(d.b2)},
          f(in.log_z)};
}

template <class U, class T, class F>
DiscParamsT<U> map_disc(const DiscParamsT<T>& in, F&& f) {
  const auto& h = in.head;
  return {map_gat<U>(in.gat, f),
          {f(h.w_src), f(h.w_dst), f(h.w_edge), f(h.b1), f(h.w2), f(h.b2)}};
}

// Running batch-norm statistics, one entry per GAT layer.
using RunningStats = std::vector<BatchNormStats>;

struct Policy {
  Dims dims;
  PolicyParamsT<Matrix> params;
  RunningStats bn;
};

struct Discriminator {
  Dims dims;
  DiscParamsT<Matrix> params;
  RunningStats bn;
};

// Weights uniform on (-1/sqrt(fan_in), 1/sqrt(fan_in)); biases and logZ zero;
// batch-norm scale one. Deterministic per seed.
Policy init_policy(const Dims& dims, std::uint64_t seed);
Discriminator init_discriminator(const Dims& dims, std::uint64_t seed);

std::size_t parameter_count(const Policy& policy);
std::size_t parameter_count(const Discriminator& disc);

// Graph-level inputs shared by the generator and the discriminator.
//
// Attention arcs are the sparse graph's arcs grouped by receiving node:
// node i aggregates over attn_dst[k] for k in [attn_offsets[i], attn_offsets[i+1]).
// Candidate arcs are the moves the decoder may make: the sparse arcs plus
// every depot-to-customer arc, grouped by source node the same way.
struct GraphInput {
  std::size_t num_nodes = 0;
  Matrix node_features;  // n x 4
  std::vector<int> attn_src, attn_dst, attn_offsets;
  Matrix attn_edge;  // A x 1, normalized distance
  std::vector<int> cand_src, cand_dst, cand_offsets;
  Matrix cand_edge;  // C x 1

  // Candidate arc id for (from, to), or -1.
  int arc(int from, int to) const;
};

// Coordinates are shifted to the bounding-box origin and divided by the
// longer box side; edge features are matrix distances divided by the same
// side.
Matrix node_features(const Instance& instance);
GraphInput build_graph_input(const Instance& instance, const DistanceMatrix& dm,
                             const SparseGraph& graph);

enum class NormMode { kTraining, kInference };

// Node embeddings on a tape. In training mode the per-layer batch statistics
// are written to `stats` when it is non-null.
Var gat_forward(Tape& t, const GatParams<Var>& p, const GraphInput& g,
                const RunningStats& running, NormMode mode, const Dims& dims,
                RunningStats* stats = nullptr);

// Decoder logits for every candidate arc (C x 1).
Var decoder_logits(Tape& t, const DecoderParams<Var>& p, Var embeddings,
                   const GraphInput& g);

// Discriminator logits for the candidate arcs followed by `extra` arcs, in
// that order (rows x 1).
// Extra arcs take their edge feature from `dm` scaled like the graph input.
Var disc_logits(Tape& t, const DiscParamsT<Var>& p, Var embeddings, const GraphInput& g,
                const std::vector<std::pair<int, int>>& extra, const DistanceMatrix& dm,
                double edge_scale);

// Tape leaves for a parameter set. requires_grad marks them as trainable.
PolicyParamsT<Var> policy_leaves(Tape& t, const PolicyParamsT<Matrix>& p, bool requires_grad);
DiscParamsT<Var> disc_leaves(Tape& t, const DiscParamsT<Matrix>& p, bool requires_grad);

// Convenience: full generator forward without gradients.
Matrix policy_logits(const Policy& policy, const GraphInput& g, NormMode mode);

// Moves running statistics toward a batch: r <- momentum r + (1 - momentum) b.
void update_running(RunningStats& running, const RunningStats& batch);

// Edge probabilities M_ij in (0, 1) keyed by directed arc.
class EdgeProbMatrix {
 public:
  EdgeProbMatrix() = default;
  EdgeProbMatrix(std::size_t num_nodes, std::vector<std::pair<int, int>> arcs,
                 std::vector<double> log_probs);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t size() const { return arcs_.size(); }
  bool contains(int from, int to) const { return find(from, to) >= 0; }
  // Throws std::out_of_range for an arc outside the matrix.
  double prob(int from, int to) const;
  double log_prob(int from, int to) const;
  const std::vector<std::pair<int, int>>& arcs() const { return arcs_; }
  // Row index of (from, to), -1 when absent.
  int find(int from, int to) const;

 private:
  std::size_t num_nodes_ = 0;
  std::vector<std::pair<int, int>> arcs_;
  std::vector<double> log_probs_;
  std::vector<std::vector<std::pair<int, int>>> index_;  // per source: (dst, row)
};

// Discriminator output over the candidate arcs and any `extra` arcs.
EdgeProbMatrix disc_forward(const Discriminator& disc, const Instance& instance,
                            const DistanceMatrix& dm, const GraphInput& g, NormMode mode,
                            const std::vector<std::pair<int, int>>& extra = {});

// Bounding-box side used for feature normalization.
double normalization_scale(const Instance& instance);

}  // namespace vrpflow::nn
