#pragma once

#include <cstddef>
#include <vector>

#include "vrpflow/instance.hpp"

namespace vrpflow {

// k-nearest-neighbour graph. neighbors[i] lists the nodes node i attends to,
// nearest first; distance[i][k] is the matrix entry for that arc.
struct SparseGraph {
  std::vector<std::vector<int>> neighbors;
  std::vector<std::vector<double>> distance;

  std::size_t num_nodes() const { return neighbors.size(); }
  std::size_t num_arcs() const;
  bool has_arc(int from, int to) const;
};

// Keeps min(k_nn, n-1) nearest neighbours per node (ties to the lower index).
// The depot is forced into every customer's list, displacing the farthest
// neighbour when absent. Throws std::invalid_argument when k_nn < 1.
SparseGraph knn_sparsify(const DistanceMatrix& dm, std::size_t k_nn);

// |V| / 4, at least one.
std::size_t default_knn(std::size_t num_nodes);

}  // namespace vrpflow
