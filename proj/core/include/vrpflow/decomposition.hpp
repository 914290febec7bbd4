#pragma once

#include <cstdint>
#include <vector>

#include "vrpflow/hgs.hpp"
#include "vrpflow/instance.hpp"

namespace vrpflow::expert {

// Route-based spatial partition of a solution.
struct DecompositionPlan {
  std::vector<Point> barycenters;  // one per route
  std::vector<int> labels;         // cluster id per route
  std::size_t k = 0;               // subproblem count
  std::size_t m = 0;               // target subproblem size in customers
};

// One cluster as a standalone instance. Local node 0 is the depot and local
// customer i maps to global customer `to_global[i]` (to_global[0] == 0).
struct Subproblem {
  Instance instance;
  std::vector<int> to_global;
  std::size_t vehicle_count = 0;
  // The cluster's input routes in local ids; feasible by construction.
  Solution warm_start;
};

// Unweighted mean of each route's customer coordinates.
std::vector<Point> compute_barycenters(const Instance& instance,
                                       const Solution& solution);

// Lloyd's algorithm from k-means++ seeding; stops when assignments are stable
// or after 100 iterations. Ties go to the lower centroid id. Clusters that
// become empty steal the point farthest from its centroid in the largest
// cluster. Requires 1 <= k <= points.size().
std::vector<int> kmeans(const std::vector<Point>& points, std::size_t k,
                        std::uint64_t seed);

struct Decomposition {
  DecompositionPlan plan;
  std::vector<Subproblem> subproblems;  // ordered by cluster id
};

// k = ceil(N / m), capped at the route count. Clusters left without routes
// are dropped, so subproblems.size() may be less than k.
Decomposition decompose(const Instance& instance, const Solution& solution,
                        std::size_t m, std::uint64_t seed);

// Solves every subproblem with hgs_solve warm-started from its own routes,
// each with time budget config.time_budget_s / count and seed derived from
// config.seed and the subproblem index. Results use global customer ids and
// keep input order.
std::vector<Solution> solve_subproblems(const std::vector<Subproblem>& subproblems,
                                        const HgsConfig& config);

struct RefineResult {
  Solution solution;
  Decomposition decomposition;
  std::vector<Solution> parts;  // per subproblem, global ids
};

// Decompose, solve the parts concurrently, merge. Never costlier than
// `seed_solution`.
RefineResult expert_refine_detailed(const Instance& instance, const DistanceMatrix& dm,
                                    const Solution& seed_solution, std::size_t m,
                                    const HgsConfig& config);
Solution expert_refine(const Instance& instance, const DistanceMatrix& dm,
                       const Solution& seed_solution, std::size_t m,
                       const HgsConfig& config);

inline constexpr std::size_t kDefaultSubproblemSize = 200;

}  // namespace vrpflow::expert
