#include "vrpflow/hgs.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "vrpflow/feasibility.hpp"
#include "vrpflow/rng.hpp"

namespace vrpflow::expert {
namespace {

constexpr double kImprovementEps = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

using RouteList = std::vector<std::vector<int>>;

class LocalSearch {
 public:
  LocalSearch(const Instance& instance, const DistanceMatrix& dm, double penalty,
              const MoveSet& moves)
      : inst_(instance),
        dm_(dm),
        penalty_(penalty),
        moves_(moves),
        capacity_(instance.capacity()),
        route_of_(instance.num_nodes(), -1),
        pos_of_(instance.num_nodes(), -1),
        prefix_load_(instance.num_nodes(), 0) {}

  void run(RouteList& routes, Rng& rng) {
    routes_ = std::move(routes);
    drop_empty_routes();
    std::vector<int> order;
    for (const auto& r : routes_) order.insert(order.end(), r.begin(), r.end());
    std::sort(order.begin(), order.end());

    // Bounded so floating-point noise can never cycle forever.
    for (int pass = 0; pass < 1000; ++pass) {
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.index(i)]);
      }
      bool improved = false;
      for (int u : order) {
        if ((moves_.relocate && try_relocate(u)) || (moves_.swap && try_swap(u)) ||
            (moves_.two_opt && try_two_opt(u)) ||
            (moves_.two_opt_star && try_two_opt_star(u))) {
          improved = true;
        }
      }
      if (!improved) break;
    }
    routes = std::move(routes_);
  }

 private:
  double c(int a, int b) const { return dm_(a, b); }
  double overload(long load) const {
    return penalty_ * static_cast<double>(std::max(0L, load - capacity_));
  }
  int pred(int u) const {
    const int p = pos_of_[u];
    return p > 0 ? routes_[route_of_[u]][p - 1] : 0;
  }
  int succ(int u) const {
    const auto& r = routes_[route_of_[u]];
    const int p = pos_of_[u];
    return p + 1 < static_cast<int>(r.size()) ? r[p + 1] : 0;
  }
  bool may_open_route() const {
    const auto& limit = inst_.fleet_limit();
    return !limit || static_cast<int>(routes_.size()) < *limit;
  }

  void rebuild(std::size_t r) {
    long load = 0;
    for (std::size_t k = 0; k < routes_[r].size(); ++k) {
      const int c = routes_[r][k];
      route_of_[c] = static_cast<int>(r);
      pos_of_[c] = static_cast<int>(k);
      load += inst_.demand(c);
      prefix_load_[c] = load;
    }
    loads_[r] = load;
  }

  void drop_empty_routes() {
    routes_.erase(std::remove_if(routes_.begin(), routes_.end(),
                                 [](const auto& r) { return r.empty(); }),
                  routes_.end());
    loads_.assign(routes_.size(), 0);
    for (std::size_t r = 0; r < routes_.size(); ++r) rebuild(r);
  }

  void finish_move(std::size_t a, std::size_t b) {
    if (routes_[a].empty() || routes_[b].empty()) {
      drop_empty_routes();
    } else {
      rebuild(a);
      if (b != a) rebuild(b);
    }
  }

  bool try_relocate(int u) {
    const std::size_t ru = route_of_[u];
    const int pu = pos_of_[u];
    const auto& from = routes_[ru];
    const int du = inst_.demand(u);
    const double removal = c(pred(u), u) + c(u, succ(u)) - c(pred(u), succ(u));
    const double from_pen = overload(loads_[ru] - du) - overload(loads_[ru]);

    double best = -kImprovementEps;
    std::size_t best_route = 0;
    int best_pos = -1;
    bool open_new = false;

    for (std::size_t r = 0; r < routes_.size(); ++r) {
      const auto& to = routes_[r];
      if (r != ru) {
        const double pen = overload(loads_[r] + du) - overload(loads_[r]) + from_pen;
        for (std::size_t p = 0; p <= to.size(); ++p) {
          const int x = p > 0 ? to[p - 1] : 0;
          const int y = p < to.size() ? to[p] : 0;
          const double delta = c(x, u) + c(u, y) - c(x, y) - removal + pen;
          if (delta < best) {
            best = delta;
            best_route = r;
            best_pos = static_cast<int>(p);
          }
        }
      } else {
        // Positions in the route with u removed.
        const int len = static_cast<int>(from.size()) - 1;
        auto reduced = [&](int k) { return from[k < pu ? k : k + 1]; };
        for (int p = 0; p <= len; ++p) {
          if (p == pu) continue;
          const int x = p > 0 ? reduced(p - 1) : 0;
          const int y = p < len ? reduced(p) : 0;
          const double delta = c(x, u) + c(u, y) - c(x, y) - removal;
          if (delta < best) {
            best = delta;
            best_route = r;
            best_pos = p;
          }
        }
      }
    }
    if (from.size() > 1 && may_open_route()) {
      const double delta = c(0, u) + c(u, 0) - removal + overload(du) + from_pen;
      if (delta < best) {
        best = delta;
        open_new = true;
      }
    }
    if (!open_new && best_pos < 0) return false;

    routes_[ru].erase(routes_[ru].begin() + pu);
    if (open_new) {
      routes_.push_back({u});
      loads_.push_back(0);
      rebuild(routes_.size() - 1);
      finish_move(ru, ru);
    } else {
      auto& to = routes_[best_route];
      to.insert(to.begin() + best_pos, u);
      finish_move(ru, best_route);
    }
    return true;
  }

  bool try_swap(int u) {
    const std::size_t ru = route_of_[u];
    const int du = inst_.demand(u);
    const int au = pred(u), bu = succ(u);
    double best = -kImprovementEps;
    int best_v = -1;
    for (std::size_t r = 0; r < routes_.size(); ++r) {
      for (int v : routes_[r]) {
        if (v == u) continue;
        const int av = pred(v), bv = succ(v);
        if (r == ru && (av == u || bv == u)) continue;  // adjacent: relocate covers it
        double delta = c(au, v) + c(v, bu) + c(av, u) + c(u, bv) - c(au, u) -
                       c(u, bu) - c(av, v) - c(v, bv);
        if (r != ru) {
          const int dv = inst_.demand(v);
          delta += overload(loads_[ru] - du + dv) - overload(loads_[ru]) +
                   overload(loads_[r] - dv + du) - overload(loads_[r]);
        }
        if (delta < best) {
          best = delta;
          best_v = v;
        }
      }
    }
    if (best_v < 0) return false;
    const std::size_t rv = route_of_[best_v];
    std::swap(routes_[ru][pos_of_[u]], routes_[rv][pos_of_[best_v]]);
    finish_move(ru, rv);
    return true;
  }

  bool try_two_opt(int u) {
    const std::size_t ru = route_of_[u];
    auto& route = routes_[ru];
    const int i = pos_of_[u];
    const int before = pred(u);
    double best = -kImprovementEps;
    int best_j = -1;
    for (int j = i + 1; j < static_cast<int>(route.size()); ++j) {
      const int after = j + 1 < static_cast<int>(route.size()) ? route[j + 1] : 0;
      const double delta = c(before, route[j]) + c(u, after) - c(before, u) -
                           c(route[j], after);
      if (delta < best) {
        best = delta;
        best_j = j;
      }
    }
    if (best_j < 0) return false;
    std::reverse(route.begin() + i, route.begin() + best_j + 1);
    finish_move(ru, ru);
    return true;
  }

  bool try_two_opt_star(int u) {
    const std::size_t ra = route_of_[u];
    const auto& a = routes_[ra];
    const int i = pos_of_[u];
    const int a_next = i + 1 < static_cast<int>(a.size()) ? a[i + 1] : 0;
    const long head_a = prefix_load_[u];
    const long tail_a = loads_[ra] - head_a;
    const double pen_a = overload(loads_[ra]);

    double best = -kImprovementEps;
    std::size_t best_route = 0;
    int best_j = -2;
    for (std::size_t rb = 0; rb < routes_.size(); ++rb) {
      if (rb == ra) continue;
      const auto& b = routes_[rb];
      const double pen_before = pen_a + overload(loads_[rb]);
      for (int j = -1; j < static_cast<int>(b.size()); ++j) {
        const int bj = j >= 0 ? b[j] : 0;
        const int b_next = j + 1 < static_cast<int>(b.size()) ? b[j + 1] : 0;
        const long head_b = j >= 0 ? prefix_load_[bj] : 0;
        const long tail_b = loads_[rb] - head_b;
        const double delta = c(u, b_next) + c(bj, a_next) - c(u, a_next) -
                             c(bj, b_next) + overload(head_a + tail_b) +
                             overload(head_b + tail_a) - pen_before;
        if (delta < best) {
          best = delta;
          best_route = rb;
          best_j = j;
        }
      }
    }
    if (best_j < -1) return false;
    auto& ra_nodes = routes_[ra];
    auto& rb_nodes = routes_[best_route];
    std::vector<int> new_a(ra_nodes.begin(), ra_nodes.begin() + i + 1);
    new_a.insert(new_a.end(), rb_nodes.begin() + best_j + 1, rb_nodes.end());
    std::vector<int> new_b(rb_nodes.begin(), rb_nodes.begin() + best_j + 1);
    new_b.insert(new_b.end(), ra_nodes.begin() + i + 1, ra_nodes.end());
    ra_nodes = std::move(new_a);
    rb_nodes = std::move(new_b);
    finish_move(ra, best_route);
    return true;
  }

  const Instance& inst_;
  const DistanceMatrix& dm_;
  double penalty_;
  MoveSet moves_;
  long capacity_;
  RouteList routes_;
  std::vector<long> loads_;
  std::vector<int> route_of_;
  std::vector<int> pos_of_;
  std::vector<long> prefix_load_;
};

long max_overload(const Instance& instance, const RouteList& routes) {
  long worst = 0;
  for (const auto& r : routes) {
    long load = 0;
    for (int c : r) load += instance.demand(c);
    worst = std::max(worst, load - instance.capacity());
  }
  return worst;
}

bool within_fleet(const Instance& instance, const RouteList& routes) {
  const auto& limit = instance.fleet_limit();
  const auto used = std::count_if(routes.begin(), routes.end(),
                                  [](const auto& r) { return !r.empty(); });
  return !limit || used <= *limit;
}

double routes_cost(const DistanceMatrix& dm, const RouteList& routes) {
  double total = 0.0;
  for (const auto& r : routes) total += route_cost(dm, r);
  return total;
}

RouteList canonical_routes(RouteList routes) {
  for (auto& r : routes) {
    if (!r.empty() && r.front() > r.back()) std::reverse(r.begin(), r.end());
  }
  routes.erase(std::remove_if(routes.begin(), routes.end(),
                              [](const auto& r) { return r.empty(); }),
               routes.end());
  std::sort(routes.begin(), routes.end());
  return routes;
}

std::vector<int> giant_tour(const RouteList& routes) {
  std::vector<int> tour;
  for (const auto& r : routes) tour.insert(tour.end(), r.begin(), r.end());
  return tour;
}

std::vector<int> order_crossover(const std::vector<int>& a, const std::vector<int>& b,
                                 Rng& rng, std::size_t num_nodes) {
  const std::size_t n = a.size();
  if (n < 2) return a;
  std::size_t start = rng.index(n);
  std::size_t end = rng.index(n);
  if (start > end) std::swap(start, end);
  std::vector<int> child(n, -1);
  std::vector<char> taken(num_nodes, 0);
  for (std::size_t k = start; k <= end; ++k) {
    child[k] = a[k];
    taken[a[k]] = 1;
  }
  std::size_t write = (end + 1) % n;
  for (std::size_t k = 0; k < n; ++k) {
    const int gene = b[(end + 1 + k) % n];
    if (taken[gene]) continue;
    child[write] = gene;
    write = (write + 1) % n;
  }
  return child;
}

struct Individual {
  std::vector<int> tour;
  RouteList routes;  // canonical
  double cost = 0.0;
};

}  // namespace

void two_opt_route(const DistanceMatrix& dm, std::vector<int>& route) {
  const int n = static_cast<int>(route.size());
  if (n < 2) return;
  auto node = [&](int k) { return k < 0 || k >= n ? 0 : route[k]; };
  bool improved = true;
  while (improved) {
    improved = false;
    for (int i = 0; i < n - 1; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double delta = dm(node(i - 1), node(j)) + dm(node(i), node(j + 1)) -
                             dm(node(i - 1), node(i)) - dm(node(j), node(j + 1));
        if (delta < -kImprovementEps) {
          std::reverse(route.begin() + i, route.begin() + j + 1);
          improved = true;
        }
      }
    }
  }
}

Solution initial_solution(const Instance& instance, const DistanceMatrix& dm,
                          std::uint64_t seed) {
  const std::size_t n = instance.num_customers();
  if (n == 0) return Solution{};
  const Point depot = instance.depot();
  std::vector<std::pair<double, int>> by_angle;
  by_angle.reserve(n);
  for (std::size_t c = 1; c <= n; ++c) {
    const Point& p = instance.location(c);
    by_angle.emplace_back(std::atan2(p.y - depot.y, p.x - depot.x),
                          static_cast<int>(c));
  }
  std::sort(by_angle.begin(), by_angle.end());
  std::rotate(by_angle.begin(), by_angle.begin() + static_cast<long>(seed % n),
              by_angle.end());

  RouteList routes(1);
  long load = 0;
  for (const auto& [angle, c] : by_angle) {
    const int d = instance.demand(c);
    if (load + d > instance.capacity()) {
      routes.emplace_back();
      load = 0;
    }
    routes.back().push_back(c);
    load += d;
  }
  for (auto& r : routes) two_opt_route(dm, r);
  return make_solution(instance, dm, routes);
}

std::optional<RouteList> split_tour(const Instance& instance, const DistanceMatrix& dm,
                                    const std::vector<int>& tour,
                                    std::optional<int> max_routes, double penalty) {
  const std::size_t n = tour.size();
  if (n == 0) return RouteList{};
  const long capacity = instance.capacity();
  const long load_cap = 2 * capacity;
  const std::size_t layers =
      max_routes ? std::min<std::size_t>(static_cast<std::size_t>(*max_routes), n) : 0;
  auto over = [&](long load) {
    return penalty * static_cast<double>(std::max(0L, load - capacity));
  };

  if (!max_routes) {
    std::vector<double> best(n + 1, kInf);
    std::vector<std::size_t> from(n + 1, 0);
    best[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (best[i] == kInf) continue;
      long load = 0;
      double inner = 0.0;
      for (std::size_t j = i + 1; j <= n; ++j) {
        load += instance.demand(tour[j - 1]);
        if (j > i + 1) inner += dm(tour[j - 2], tour[j - 1]);
        if (load > load_cap && j > i + 1) break;
        const double cost =
            best[i] + dm(0, tour[i]) + inner + dm(tour[j - 1], 0) + over(load);
        if (cost < best[j]) {
          best[j] = cost;
          from[j] = i;
        }
      }
    }
    RouteList routes;
    for (std::size_t j = n; j > 0; j = from[j]) {
      routes.emplace_back(tour.begin() + static_cast<long>(from[j]),
                          tour.begin() + static_cast<long>(j));
    }
    std::reverse(routes.begin(), routes.end());
    return routes;
  }

  // best[k][j]: first j customers in exactly k routes.
  std::vector<std::vector<double>> best(layers + 1, std::vector<double>(n + 1, kInf));
  std::vector<std::vector<std::size_t>> from(layers + 1,
                                             std::vector<std::size_t>(n + 1, 0));
  best[0][0] = 0.0;
  for (std::size_t k = 0; k < layers; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (best[k][i] == kInf) continue;
      long load = 0;
      double inner = 0.0;
      for (std::size_t j = i + 1; j <= n; ++j) {
        load += instance.demand(tour[j - 1]);
        if (j > i + 1) inner += dm(tour[j - 2], tour[j - 1]);
        if (load > load_cap && j > i + 1) break;
        const double cost =
            best[k][i] + dm(0, tour[i]) + inner + dm(tour[j - 1], 0) + over(load);
        if (cost < best[k + 1][j]) {
          best[k + 1][j] = cost;
          from[k + 1][j] = i;
        }
      }
    }
  }
  std::size_t best_k = 0;
  double best_cost = kInf;
  for (std::size_t k = 1; k <= layers; ++k) {
    if (best[k][n] < best_cost) {
      best_cost = best[k][n];
      best_k = k;
    }
  }
  if (best_cost == kInf) return std::nullopt;
  RouteList routes;
  std::size_t j = n;
  for (std::size_t k = best_k; k > 0; --k) {
    const std::size_t i = from[k][j];
    routes.emplace_back(tour.begin() + static_cast<long>(i),
                        tour.begin() + static_cast<long>(j));
    j = i;
  }
  std::reverse(routes.begin(), routes.end());
  return routes;
}

void local_search(const Instance& instance, const DistanceMatrix& dm,
                  RouteList& routes, double penalty, const MoveSet& moves,
                  std::uint64_t seed) {
  Rng rng(seed);
  LocalSearch(instance, dm, penalty, moves).run(routes, rng);
}

Solution hgs_solve(const Instance& instance, const DistanceMatrix& dm,
                   const std::optional<Solution>& warm_start,
                   const HgsConfig& config) {
  if (config.population_size < 2) {
    throw std::invalid_argument("population size must be at least 2");
  }
  const std::size_t n = instance.num_customers();
  if (n == 0) return Solution{};

  const auto started = std::chrono::steady_clock::now();
  auto out_of_time = [&] {
    const std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - started;
    return elapsed.count() >= config.time_budget_s;
  };

  Rng rng(config.seed);
  const double base_penalty = std::max(dm.max_entry(), 1e-6);
  const std::size_t elite_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(config.elite_fraction *
                                  static_cast<double>(config.population_size)));

  std::vector<Individual> population;
  std::optional<Individual> best;

  auto educate = [&](RouteList routes) -> std::optional<RouteList> {
    double penalty = base_penalty;
    for (int attempt = 0; attempt < 3; ++attempt, penalty *= 10.0) {
      local_search(instance, dm, routes, penalty, config.moves, rng.next());
      if (max_overload(instance, routes) <= 0 && within_fleet(instance, routes)) {
        return routes;
      }
    }
    return std::nullopt;
  };

  // Returns true when `routes` becomes the new best.
  auto consider = [&](const RouteList& routes) {
    if (max_overload(instance, routes) > 0 || !within_fleet(instance, routes)) {
      return false;
    }
    Individual ind;
    ind.routes = canonical_routes(routes);
    ind.tour = giant_tour(routes);
    ind.cost = routes_cost(dm, ind.routes);
    bool improved = false;
    if (!best || ind.cost < best->cost - kImprovementEps) {
      best = ind;
      improved = true;
    }
    for (const Individual& other : population) {
      if (other.routes == ind.routes) return improved;
    }
    population.push_back(std::move(ind));
    std::sort(population.begin(), population.end(),
              [](const Individual& a, const Individual& b) { return a.cost < b.cost; });
    if (population.size() > config.population_size) {
      // Elites are never culled; one of the rest is dropped at random.
      const std::size_t lo = std::min(elite_count, population.size() - 1);
      const std::size_t victim = lo + rng.index(population.size() - lo);
      population.erase(population.begin() + static_cast<long>(victim));
    }
    return improved;
  };

  auto to_routes = [](const Solution& s) {
    RouteList routes;
    for (const Route& r : s.routes) routes.push_back(r.customers);
    return routes;
  };

  if (warm_start && check_feasible(instance, *warm_start).feasible()) {
    const RouteList routes = to_routes(*warm_start);
    consider(routes);
    if (auto improved = educate(routes)) consider(*improved);
  }
  {
    const RouteList sweep = to_routes(initial_solution(instance, dm, config.seed));
    consider(sweep);
    if (auto improved = educate(sweep)) consider(*improved);
  }
  for (std::size_t attempt = 0;
       population.size() < config.population_size &&
       attempt < 4 * config.population_size && !out_of_time();
       ++attempt) {
    std::vector<int> tour(n);
    std::iota(tour.begin(), tour.end(), 1);
    for (std::size_t i = n; i > 1; --i) std::swap(tour[i - 1], tour[rng.index(i)]);
    auto routes = split_tour(instance, dm, tour, instance.fleet_limit(), base_penalty);
    if (!routes) continue;
    if (auto improved = educate(std::move(*routes))) consider(*improved);
  }
  if (!best) throw std::runtime_error("hgs: no feasible solution found");

  auto tournament = [&]() -> const Individual& {
    const std::size_t a = rng.index(population.size());
    const std::size_t b = rng.index(population.size());
    return population[std::min(a, b)];  // population is sorted by cost
  };

  std::size_t stale = 0;
  for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
    if (stale >= config.max_iterations_without_improvement || out_of_time()) break;
    const Individual& pa = tournament();
    const Individual& pb = tournament();
    std::vector<int> child = order_crossover(pa.tour, pb.tour, rng, instance.num_nodes());
    if (rng.bernoulli(config.mutation_rate) && n > 2) {
      std::size_t i = rng.index(n), j = rng.index(n);
      if (i > j) std::swap(i, j);
      std::reverse(child.begin() + static_cast<long>(i),
                   child.begin() + static_cast<long>(j) + 1);
    }
    auto routes = split_tour(instance, dm, child, instance.fleet_limit(), base_penalty);
    bool improved = false;
    if (routes) {
      if (auto educated = educate(std::move(*routes))) improved = consider(*educated);
    }
    stale = improved ? 0 : stale + 1;
  }
  Solution result = make_solution(instance, dm, best->routes);
  // Summation order can differ by an ulp from the warm start's cached cost.
  if (warm_start && check_feasible(instance, *warm_start).feasible() &&
      result.total_cost >= warm_start->total_cost) {
    return *warm_start;
  }
  return result;
}

}  // namespace vrpflow::expert
