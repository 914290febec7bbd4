#include "vrpflow/instance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace vrpflow {

Instance::Instance(std::string name, Point depot,
                   std::vector<Customer> customers, int capacity,
                   std::optional<int> fleet_limit, DistanceMode mode)
    : name_(std::move(name)),
      depot_(depot),
      customers_(std::move(customers)),
      capacity_(capacity),
      fleet_limit_(fleet_limit),
      mode_(mode) {
  if (capacity_ <= 0) {
    throw std::invalid_argument(
        fmt::format("capacity must be positive, got {}", capacity_));
  }
  if (fleet_limit_ && *fleet_limit_ <= 0) {
    throw std::invalid_argument(
        fmt::format("fleet limit must be positive, got {}", *fleet_limit_));
  }
  if (!std::isfinite(depot_.x) || !std::isfinite(depot_.y)) {
    throw std::invalid_argument("depot coordinates must be finite");
  }
  for (std::size_t i = 0; i < customers_.size(); ++i) {
    const Customer& c = customers_[i];
    if (!std::isfinite(c.location.x) || !std::isfinite(c.location.y)) {
      throw std::invalid_argument(
          fmt::format("customer {} has non-finite coordinates", i + 1));
    }
    if (c.demand <= 0 || c.demand > capacity_) {
      throw std::invalid_argument(fmt::format(
          "customer {} demand {} outside (0, {}]", i + 1, c.demand, capacity_));
    }
  }
}

long Instance::total_demand() const {
  long total = 0;
  for (const Customer& c : customers_) total += c.demand;
  return total;
}

DistanceMatrix::DistanceMatrix(std::size_t n, DistanceMode mode)
    : n_(n), mode_(mode), data_(n * n, 0.0) {}

double DistanceMatrix::max_entry() const {
  return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
}

DistanceMatrix build_distance_matrix(const Instance& instance) {
  const std::size_t n = instance.num_nodes();
  DistanceMatrix dm(n, instance.distance_mode());
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = instance.location(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const Point& b = instance.location(j);
      double d = std::hypot(a.x - b.x, a.y - b.y);
      if (instance.distance_mode() == DistanceMode::kRounded) {
        d = std::floor(d + 0.5);
      }
      dm.set(i, j, d);
    }
  }
  return dm;
}

double route_cost(const DistanceMatrix& dm, std::span<const int> customers) {
  if (customers.empty()) return 0.0;
  for (int c : customers) {
    if (c <= 0 || static_cast<std::size_t>(c) >= dm.size()) {
      throw std::out_of_range(fmt::format("customer index {} out of range", c));
    }
  }
  double cost = dm(0, customers.front());
  for (std::size_t k = 0; k + 1 < customers.size(); ++k) {
    cost += dm(customers[k], customers[k + 1]);
  }
  return cost + dm(customers.back(), 0);
}

Solution make_solution(const Instance& instance, const DistanceMatrix& dm,
                       const std::vector<std::vector<int>>& routes) {
  Solution solution;
  for (const auto& customers : routes) {
    if (customers.empty()) continue;
    Route route{customers, 0};
    for (int c : customers) {
      if (c > 0 && static_cast<std::size_t>(c) < instance.num_nodes()) {
        route.load += instance.demand(c);
      }
    }
    solution.total_cost += route_cost(dm, route);
    solution.routes.push_back(std::move(route));
  }
  return solution;
}

double recompute_cost(const DistanceMatrix& dm, const Solution& solution) {
  double total = 0.0;
  for (const Route& r : solution.routes) total += route_cost(dm, r);
  return total;
}

Solution canonicalize(const Solution& solution) {
  Solution out = solution;
  for (Route& r : out.routes) {
    if (!r.customers.empty() && r.customers.front() > r.customers.back()) {
      std::reverse(r.customers.begin(), r.customers.end());
    }
  }
  std::sort(out.routes.begin(), out.routes.end(),
            [](const Route& a, const Route& b) {
              return a.customers < b.customers;
            });
  return out;
}

}  // namespace vrpflow
