#include "vrpflow/sparse_graph.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace vrpflow {

std::size_t SparseGraph::num_arcs() const {
  std::size_t total = 0;
  for (const auto& list : neighbors) total += list.size();
  return total;
}

bool SparseGraph::has_arc(int from, int to) const {
  const auto& list = neighbors.at(from);
  return std::find(list.begin(), list.end(), to) != list.end();
}

SparseGraph knn_sparsify(const DistanceMatrix& dm, std::size_t k_nn) {
  if (k_nn < 1) throw std::invalid_argument("k_nn must be at least 1");
  const std::size_t n = dm.size();
  const std::size_t k = std::min(k_nn, n > 0 ? n - 1 : 0);

  SparseGraph graph;
  graph.neighbors.resize(n);
  graph.distance.resize(n);
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    order.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) order.push_back(static_cast<int>(j));
    }
    auto closer = [&](int a, int b) {
      const double da = dm(i, a), db = dm(i, b);
      return da < db || (da == db && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + k, order.end(), closer);
    order.resize(k);
    if (i != 0 && k > 0 && std::find(order.begin(), order.end(), 0) == order.end()) {
      order.back() = 0;
      std::sort(order.begin(), order.end(), closer);
    }
    graph.neighbors[i] = order;
    graph.distance[i].reserve(k);
    for (int j : order) graph.distance[i].push_back(dm(i, j));
  }
  return graph;
}

std::size_t default_knn(std::size_t num_nodes) {
  return std::max<std::size_t>(1, num_nodes / 4);
}

}  // namespace vrpflow
