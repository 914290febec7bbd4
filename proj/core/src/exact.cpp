#include "vrpflow/exact.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace vrpflow {
namespace {

struct BlockTour {
  bool feasible = false;
  double cost = 0.0;
  std::vector<int> sequence;
};

// Cheapest sequencing of each capacity-feasible customer subset.
std::vector<BlockTour> best_block_tours(const Instance& instance,
                                        const DistanceMatrix& dm) {
  const std::size_t n = instance.num_customers();
  std::vector<BlockTour> tours(std::size_t{1} << n);
  for (std::size_t mask = 1; mask < tours.size(); ++mask) {
    std::vector<int> members;
    long load = 0;
    for (std::size_t c = 0; c < n; ++c) {
      if (mask & (std::size_t{1} << c)) {
        members.push_back(static_cast<int>(c + 1));
        load += instance.demand(c + 1);
      }
    }
    if (load > instance.capacity()) continue;
    BlockTour& best = tours[mask];
    best.feasible = true;
    best.cost = std::numeric_limits<double>::infinity();
    // Permutations come in lexicographic order, so the first strict minimum
    // is also the lexicographically smallest optimal sequence.
    do {
      const double cost = route_cost(dm, members);
      if (cost < best.cost) {
        best.cost = cost;
        best.sequence = members;
      }
    } while (std::next_permutation(members.begin(), members.end()));
  }
  return tours;
}

struct PartitionSearch {
  const DistanceMatrix* dm;
  const std::vector<BlockTour>& tours;
  std::size_t full_mask;
  std::size_t max_routes;

  std::vector<std::size_t> blocks;
  bool found = false;
  double best_cost = 0.0;
  std::vector<std::vector<int>> best_routes;

  void consider() {
    Solution candidate;
    for (std::size_t b : blocks) {
      candidate.routes.push_back(Route{tours[b].sequence, 0});
    }
    candidate = canonicalize(candidate);
    // Summed in canonical order so equal partitions give bit-equal costs.
    double cost = 0.0;
    std::vector<std::vector<int>> routes;
    for (const Route& r : candidate.routes) {
      cost += route_cost(*dm, r);
      routes.push_back(r.customers);
    }
    if (!found || cost < best_cost ||
        (cost == best_cost && routes < best_routes)) {
      found = true;
      best_cost = cost;
      best_routes = std::move(routes);
    }
  }

  void recurse(std::size_t assigned) {
    if (assigned == full_mask) {
      consider();
      return;
    }
    if (blocks.size() >= max_routes) return;
    const std::size_t remaining = full_mask & ~assigned;
    const std::size_t lowest = remaining & (~remaining + 1);
    // Enumerate subsets of `remaining` that contain its lowest customer.
    const std::size_t rest = remaining & ~lowest;
    for (std::size_t sub = rest;; sub = (sub - 1) & rest) {
      const std::size_t block = sub | lowest;
      if (tours[block].feasible) {
        blocks.push_back(block);
        recurse(assigned | block);
        blocks.pop_back();
      }
      if (sub == 0) break;
    }
  }
};

}  // namespace

Solution exact_solve_small(const Instance& instance, const DistanceMatrix& dm) {
  const std::size_t n = instance.num_customers();
  if (n > kExactMaxCustomers) {
    throw std::invalid_argument(fmt::format(
        "exact solver supports at most {} customers, got {}",
        kExactMaxCustomers, n));
  }
  if (n == 0) return Solution{};
  const auto tours = best_block_tours(instance, dm);
  const std::size_t max_routes =
      instance.fleet_limit() ? static_cast<std::size_t>(*instance.fleet_limit())
                             : n;
  PartitionSearch search{&dm, tours, (std::size_t{1} << n) - 1, max_routes, {}, false,
                         0.0, {}};
  search.recurse(0);
  if (!search.found) {
    throw std::invalid_argument("instance has no solution within the fleet limit");
  }
  return make_solution(instance, dm, search.best_routes);
}

Solution exact_solve_small(const Instance& instance) {
  return exact_solve_small(instance, build_distance_matrix(instance));
}

}  // namespace vrpflow
