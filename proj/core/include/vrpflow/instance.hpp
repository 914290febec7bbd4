#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vrpflow {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

enum class DistanceMode {
  kContinuous,  // plain double-precision Euclidean
  kRounded,     // VRPLIB EUC_2D: nearest integer
};

struct Customer {
  Point location;
  int demand = 0;

  friend bool operator==(const Customer&, const Customer&) = default;
};

// A single-depot CVRP instance. Node 0 is the depot, nodes 1..N are the
// customers in the order given. Immutable after construction.
class Instance {
 public:
  Instance(std::string name, Point depot, std::vector<Customer> customers,
           int capacity, std::optional<int> fleet_limit, DistanceMode mode);

  const std::string& name() const { return name_; }
  const Point& depot() const { return depot_; }
  const std::vector<Customer>& customers() const { return customers_; }
  int capacity() const { return capacity_; }
  // nullopt means unbounded.
  const std::optional<int>& fleet_limit() const { return fleet_limit_; }
  DistanceMode distance_mode() const { return mode_; }

  std::size_t num_customers() const { return customers_.size(); }
  std::size_t num_nodes() const { return customers_.size() + 1; }

  const Point& location(std::size_t node) const {
    return node == 0 ? depot_ : customers_[node - 1].location;
  }
  int demand(std::size_t node) const {
    return node == 0 ? 0 : customers_[node - 1].demand;
  }
  long total_demand() const;

  friend bool operator==(const Instance&, const Instance&) = default;

 private:
  std::string name_;
  Point depot_;
  std::vector<Customer> customers_;
  int capacity_;
  std::optional<int> fleet_limit_;
  DistanceMode mode_;
};

// Dense symmetric travel-cost matrix over all nodes (depot included).
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  DistanceMatrix(std::size_t n, DistanceMode mode);

  std::size_t size() const { return n_; }
  DistanceMode mode() const { return mode_; }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * n_ + j];
  }
  void set(std::size_t i, std::size_t j, double value) {
    data_[i * n_ + j] = value;
    data_[j * n_ + i] = value;
  }
  // Largest entry; zero for a single node.
  double max_entry() const;

 private:
  std::size_t n_ = 0;
  DistanceMode mode_ = DistanceMode::kContinuous;
  std::vector<double> data_;
};

DistanceMatrix build_distance_matrix(const Instance& instance);

// Customers visited in order; the depot is implicit at both ends.
struct Route {
  std::vector<int> customers;
  int load = 0;

  friend bool operator==(const Route&, const Route&) = default;
};

struct Solution {
  std::vector<Route> routes;
  double total_cost = 0.0;

  std::size_t num_routes() const { return routes.size(); }
};

// Throws std::out_of_range when an index is not a customer of `dm`.
double route_cost(const DistanceMatrix& dm, std::span<const int> customers);
inline double route_cost(const DistanceMatrix& dm, const Route& route) {
  return route_cost(dm, route.customers);
}

// Builds a solution with loads and cached cost filled in. Does not check
// feasibility; empty customer lists are dropped.
Solution make_solution(const Instance& instance, const DistanceMatrix& dm,
                       const std::vector<std::vector<int>>& routes);

// Sum of route costs recomputed from the matrix.
double recompute_cost(const DistanceMatrix& dm, const Solution& solution);

// Routes oriented so the first customer is not larger than the last, then
// sorted lexicographically. Cost is unchanged for symmetric matrices.
Solution canonicalize(const Solution& solution);

}  // namespace vrpflow
