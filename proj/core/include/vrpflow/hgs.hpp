#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vrpflow/instance.hpp"

namespace vrpflow::expert {

struct MoveSet {
  bool two_opt = true;       // segment reversal within a route
  bool relocate = true;      // move one customer anywhere
  bool swap = true;          // exchange two customers
  bool two_opt_star = true;  // exchange route tails
};

struct HgsConfig {
  std::size_t population_size = 25;
  double elite_fraction = 0.4;
  // Offspring generations; the run also stops after
  // `max_iterations_without_improvement` generations without a new best.
  std::size_t max_iterations = 20000;
  std::size_t max_iterations_without_improvement = 2000;
  double time_budget_s = 10.0;
  MoveSet moves;
  double mutation_rate = 0.2;
  std::uint64_t seed = 1;
};

// Angular sweep around the depot, filled greedily to capacity, each route
// then 2-opted. The sweep starts at customer seed % N of the angular order.
Solution initial_solution(const Instance& instance, const DistanceMatrix& dm,
                          std::uint64_t seed);

// Giant-tour genetic search with Split decoding and penalized local search.
// The result is feasible, never costlier than `warm_start` or a feasible
// sweep solution, and a pure function of the inputs unless the time budget
// cuts the run short.
Solution hgs_solve(const Instance& instance, const DistanceMatrix& dm,
                   const std::optional<Solution>& warm_start,
                   const HgsConfig& config);

// Optimal cut of `tour` into at most `max_routes` routes (unlimited when
// nullopt). Loads above capacity are allowed at `penalty` per unit over;
// returns nothing when no split within the fleet limit exists.
std::optional<std::vector<std::vector<int>>> split_tour(
    const Instance& instance, const DistanceMatrix& dm,
    const std::vector<int>& tour, std::optional<int> max_routes, double penalty);

// Local search to a local optimum of distance + penalty * overload.
void local_search(const Instance& instance, const DistanceMatrix& dm,
                  std::vector<std::vector<int>>& routes, double penalty,
                  const MoveSet& moves, std::uint64_t seed);

// Intra-route 2-opt to a local optimum.
void two_opt_route(const DistanceMatrix& dm, std::vector<int>& route);

}  // namespace vrpflow::expert
