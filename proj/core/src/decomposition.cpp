#include "vrpflow/decomposition.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "vrpflow/parallel.hpp"
#include "vrpflow/rng.hpp"

namespace vrpflow::expert {
namespace {

double sq_dist(const Point& a, const Point& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

std::vector<int> assign(const std::vector<Point>& points,
                        const std::vector<Point>& centroids) {
  std::vector<int> labels(points.size(), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const double d = sq_dist(points[i], centroids[c]);
      if (d < best) {
        best = d;
        labels[i] = static_cast<int>(c);
      }
    }
  }
  return labels;
}

std::vector<Point> means(const std::vector<Point>& points, const std::vector<int>& labels,
                         const std::vector<Point>& previous) {
  std::vector<Point> sums(previous.size());
  std::vector<std::size_t> counts(previous.size(), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    sums[labels[i]].x += points[i].x;
    sums[labels[i]].y += points[i].y;
    ++counts[labels[i]];
  }
  for (std::size_t c = 0; c < sums.size(); ++c) {
    if (counts[c] == 0) {
      sums[c] = previous[c];
    } else {
      sums[c].x /= static_cast<double>(counts[c]);
      sums[c].y /= static_cast<double>(counts[c]);
    }
  }
  return sums;
}

void repair_empty(const std::vector<Point>& points, std::vector<int>& labels,
                  std::vector<Point>& centroids) {
  const std::size_t k = centroids.size();
  for (;;) {
    std::vector<std::size_t> counts(k, 0);
    for (int l : labels) ++counts[l];
    const auto empty = std::find(counts.begin(), counts.end(), 0);
    if (empty == counts.end()) return;
    const auto largest =
        static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    if (counts[largest] < 2) return;
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (labels[i] != largest) continue;
      const double d = sq_dist(points[i], centroids[largest]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    const auto target = static_cast<int>(empty - counts.begin());
    labels[far] = target;
    centroids[target] = points[far];
  }
}

}  // namespace

std::vector<Point> compute_barycenters(const Instance& instance,
                                       const Solution& solution) {
  std::vector<Point> centers;
  centers.reserve(solution.routes.size());
  for (const Route& r : solution.routes) {
    Point sum;
    for (int c : r.customers) {
      sum.x += instance.location(c).x;
      sum.y += instance.location(c).y;
    }
    const double count = static_cast<double>(std::max<std::size_t>(1, r.customers.size()));
    centers.push_back({sum.x / count, sum.y / count});
  }
  return centers;
}

std::vector<int> kmeans(const std::vector<Point>& points, std::size_t k,
                        std::uint64_t seed) {
  if (k < 1 || k > points.size()) {
    throw std::invalid_argument(
        fmt::format("kmeans needs 1 <= k <= {}, got {}", points.size(), k));
  }
  Rng rng(seed);
  std::vector<Point> centroids;
  centroids.reserve(k);
  centroids.push_back(points[rng.index(points.size())]);
  std::vector<double> nearest(points.size(), std::numeric_limits<double>::infinity());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      nearest[i] = std::min(nearest[i], sq_dist(points[i], centroids.back()));
      total += nearest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      pick = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (nearest[i] <= 0.0) continue;
        target -= nearest[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.index(points.size());
    }
    centroids.push_back(points[pick]);
  }

  std::vector<int> labels = assign(points, centroids);
  repair_empty(points, labels, centroids);
  for (int iter = 0; iter < 100; ++iter) {
    centroids = means(points, labels, centroids);
    std::vector<int> next = assign(points, centroids);
    repair_empty(points, next, centroids);
    if (next == labels) break;
    labels = std::move(next);
  }
  return labels;
}

Decomposition decompose(const Instance& instance, const Solution& solution,
                        std::size_t m, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("subproblem size must be at least 1");
  Decomposition out;
  DecompositionPlan& plan = out.plan;
  const std::size_t n = instance.num_customers();
  plan.m = m;
  plan.k = std::max<std::size_t>(
      1, std::min((n + m - 1) / m, solution.routes.size()));
  plan.barycenters = compute_barycenters(instance, solution);
  if (solution.routes.empty()) return out;
  plan.labels = kmeans(plan.barycenters, plan.k, seed);

  for (std::size_t cluster = 0; cluster < plan.k; ++cluster) {
    std::vector<const Route*> members;
    for (std::size_t r = 0; r < solution.routes.size(); ++r) {
      if (plan.labels[r] == static_cast<int>(cluster)) {
        members.push_back(&solution.routes[r]);
      }
    }
    if (members.empty()) continue;

    std::vector<int> globals;
    for (const Route* r : members) {
      globals.insert(globals.end(), r->customers.begin(), r->customers.end());
    }
    std::sort(globals.begin(), globals.end());
    std::vector<int> to_local(instance.num_nodes(), -1);
    Subproblem sub{
        Instance(fmt::format("{}-sub{}", instance.name(), cluster), instance.depot(),
                 [&] {
                   std::vector<Customer> cs;
                   for (int g : globals) {
                     cs.push_back(Customer{instance.location(g), instance.demand(g)});
                   }
                   return cs;
                 }(),
                 instance.capacity(), static_cast<int>(members.size()),
                 instance.distance_mode()),
        {0},
        members.size(),
        {}};
    for (std::size_t i = 0; i < globals.size(); ++i) {
      sub.to_global.push_back(globals[i]);
      to_local[globals[i]] = static_cast<int>(i + 1);
    }
    std::vector<std::vector<int>> local_routes;
    for (const Route* r : members) {
      std::vector<int> local;
      for (int g : r->customers) local.push_back(to_local[g]);
      local_routes.push_back(std::move(local));
    }
    sub.warm_start =
        make_solution(sub.instance, build_distance_matrix(sub.instance), local_routes);
    out.subproblems.push_back(std::move(sub));
  }
  return out;
}

std::vector<Solution> solve_subproblems(const std::vector<Subproblem>& subproblems,
                                        const HgsConfig& config) {
  std::vector<Solution> results(subproblems.size());
  if (subproblems.empty()) return results;
  HgsConfig per = config;
  per.time_budget_s = config.time_budget_s / static_cast<double>(subproblems.size());
  parallel_for(subproblems.size(), [&](std::size_t i) {
    const Subproblem& sub = subproblems[i];
    HgsConfig local = per;
    local.seed = derive_seed(config.seed, i);
    const DistanceMatrix local_dm = build_distance_matrix(sub.instance);
    const Solution solved = hgs_solve(sub.instance, local_dm, sub.warm_start, local);
    Solution global;
    global.total_cost = solved.total_cost;
    for (const Route& r : solved.routes) {
      Route mapped{{}, r.load};
      for (int c : r.customers) mapped.customers.push_back(sub.to_global[c]);
      global.routes.push_back(std::move(mapped));
    }
    results[i] = std::move(global);
  });
  return results;
}

RefineResult expert_refine_detailed(const Instance& instance, const DistanceMatrix& dm,
                                    const Solution& seed_solution, std::size_t m,
                                    const HgsConfig& config) {
  RefineResult result;
  result.decomposition = decompose(instance, seed_solution, m, config.seed);
  result.parts = solve_subproblems(result.decomposition.subproblems, config);
  Solution merged;
  for (const Solution& part : result.parts) {
    merged.routes.insert(merged.routes.end(), part.routes.begin(), part.routes.end());
  }
  merged.total_cost = recompute_cost(dm, merged);
  result.solution = merged.total_cost <= seed_solution.total_cost ? std::move(merged)
                                                                   : seed_solution;
  return result;
}

Solution expert_refine(const Instance& instance, const DistanceMatrix& dm,
                       const Solution& seed_solution, std::size_t m,
                       const HgsConfig& config) {
  return expert_refine_detailed(instance, dm, seed_solution, m, config).solution;
}

}  // namespace vrpflow::expert
