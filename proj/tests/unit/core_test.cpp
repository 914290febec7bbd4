#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "vrpflow/exact.hpp"
#include "vrpflow/feasibility.hpp"
#include "vrpflow/instance.hpp"
#include "vrpflow/io.hpp"
#include "vrpflow/sparse_graph.hpp"

namespace vrpflow {
namespace {

Instance line_instance(std::vector<double> xs, int capacity = 10,
                       DistanceMode mode = DistanceMode::kContinuous) {
  std::vector<Customer> cs;
  for (double x : xs) cs.push_back(Customer{{x, 0.0}, 1});
  return Instance("line", {0.0, 0.0}, cs, capacity, std::nullopt, mode);
}

TEST(Instance, RejectsInvalidDemands) {
  EXPECT_THROW(Instance("x", {0, 0}, {Customer{{1, 1}, 0}}, 5, std::nullopt,
                        DistanceMode::kContinuous),
               std::invalid_argument);
  EXPECT_THROW(Instance("x", {0, 0}, {Customer{{1, 1}, 6}}, 5, std::nullopt,
                        DistanceMode::kContinuous),
               std::invalid_argument);
  EXPECT_THROW(Instance("x", {0, NAN}, {Customer{{1, 1}, 1}}, 5, std::nullopt,
                        DistanceMode::kContinuous),
               std::invalid_argument);
}

TEST(DistanceMatrix, ThreeFourFive) {
  Instance cont("t", {0, 0}, {Customer{{3, 4}, 1}}, 1, std::nullopt,
                DistanceMode::kContinuous);
  Instance rnd("t", {0, 0}, {Customer{{3, 4}, 1}}, 1, std::nullopt,
               DistanceMode::kRounded);
  EXPECT_DOUBLE_EQ(build_distance_matrix(cont)(0, 1), 5.0);
  EXPECT_EQ(build_distance_matrix(rnd)(0, 1), 5.0);
}

TEST(DistanceMatrix, SymmetricZeroDiagonalTriangle) {
  const Instance inst = io::generate_uniform(30, 7);
  const DistanceMatrix dm = build_distance_matrix(inst);
  for (std::size_t i = 0; i < dm.size(); ++i) {
    EXPECT_EQ(dm(i, i), 0.0);
    for (std::size_t j = 0; j < dm.size(); ++j) {
      EXPECT_EQ(dm(i, j), dm(j, i));
      for (std::size_t k = 0; k < dm.size(); ++k) {
        EXPECT_LE(dm(i, j), dm(i, k) + dm(k, j) + 1e-12);
      }
    }
  }
}

TEST(DistanceMatrix, RoundedHalfUp) {
  Instance inst("r", {0, 0}, {Customer{{1, 1}, 1}, Customer{{2.5, 0}, 1}}, 5,
                std::nullopt, DistanceMode::kRounded);
  const DistanceMatrix dm = build_distance_matrix(inst);
  EXPECT_EQ(dm(0, 1), 1.0);  // sqrt(2)
  EXPECT_EQ(dm(0, 2), 3.0);  // 2.5 rounds up
}

TEST(RouteCost, Basics) {
  const Instance one = line_instance({2.5});
  EXPECT_DOUBLE_EQ(route_cost(build_distance_matrix(one), std::vector<int>{1}), 5.0);

  DistanceMatrix dm(3, DistanceMode::kContinuous);
  dm.set(0, 1, 1.0);
  dm.set(1, 2, 1.0);
  dm.set(2, 0, 1.0);
  EXPECT_DOUBLE_EQ(route_cost(dm, std::vector<int>{1, 2}), 3.0);
  EXPECT_THROW(route_cost(dm, std::vector<int>{3}), std::out_of_range);
  EXPECT_THROW(route_cost(dm, std::vector<int>{0}), std::out_of_range);
}

TEST(RouteCost, MatchesNaiveLoopAndReversal) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = io::generate_uniform(5, 100 + trial);
    const DistanceMatrix dm = build_distance_matrix(inst);
    std::vector<int> route{1, 2, 3, 4, 5};
    std::shuffle(route.begin(), route.end(), gen);
    double naive = testing::naive_distance(inst, 0, route.front());
    for (std::size_t k = 0; k + 1 < route.size(); ++k) {
      naive += testing::naive_distance(inst, route[k], route[k + 1]);
    }
    naive += testing::naive_distance(inst, route.back(), 0);
    EXPECT_NEAR(route_cost(dm, route), naive, 1e-12);
    std::vector<int> reversed(route.rbegin(), route.rend());
    EXPECT_NEAR(route_cost(dm, reversed), route_cost(dm, route), 1e-12);
  }
}

TEST(Feasibility, CleanSolution) {
  const Instance inst = line_instance({1, 2, 3, 4}, 2);
  const DistanceMatrix dm = build_distance_matrix(inst);
  const Solution s = make_solution(inst, dm, {{1, 2}, {3, 4}});
  const FeasibilityReport r = check_feasible(inst, dm, s);
  EXPECT_TRUE(r.feasible());
  ASSERT_TRUE(r.certificate.has_value());
  EXPECT_TRUE(verify_mtz(inst, s, *r.certificate));
  EXPECT_EQ(r.certificate->load_on_arrival[2], 2.0);
}

TEST(Feasibility, DuplicateNamesCustomer) {
  const Instance inst = line_instance({1, 2, 3, 4}, 4);
  const DistanceMatrix dm = build_distance_matrix(inst);
  const Solution s = make_solution(inst, dm, {{1, 3}, {2, 3, 4}});
  const FeasibilityReport r = check_feasible(inst, dm, s);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].kind, ViolationKind::kDuplicateCustomer);
  EXPECT_EQ(r.violations[0].subject, 3);
  EXPECT_FALSE(r.certificate.has_value());
}

TEST(Feasibility, CapacityOverflowAmount) {
  const Instance inst = line_instance({1, 2, 3}, 2);
  const DistanceMatrix dm = build_distance_matrix(inst);
  const Solution s = make_solution(inst, dm, {{1, 2, 3}});
  const FeasibilityReport r = check_feasible(inst, dm, s);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].kind, ViolationKind::kCapacityOverflow);
  EXPECT_EQ(r.violations[0].amount, 1.0);
}

TEST(Feasibility, MissingFleetAndCost) {
  Instance inst("f", {0, 0}, {Customer{{1, 0}, 1}, Customer{{2, 0}, 1}, Customer{{3, 0}, 1}},
                3, 1, DistanceMode::kContinuous);
  const DistanceMatrix dm = build_distance_matrix(inst);
  Solution s = make_solution(inst, dm, {{1}, {2}});
  FeasibilityReport r = check_feasible(inst, dm, s);
  EXPECT_EQ(r.count(ViolationKind::kMissingCustomer), 1u);
  EXPECT_EQ(r.count(ViolationKind::kFleetLimitExceeded), 1u);

  s = make_solution(inst, dm, {{1, 2, 3}});
  s.total_cost += 1e-6;
  r = check_feasible(inst, dm, s);
  EXPECT_EQ(r.count(ViolationKind::kCostMismatch), 1u);
  s.routes.push_back(Route{});
  r = check_feasible(inst, s);
  EXPECT_EQ(r.count(ViolationKind::kEmptyRoute), 1u);
}

TEST(Feasibility, RejectsBadMtzCertificate) {
  const Instance inst = line_instance({1, 2}, 2);
  const DistanceMatrix dm = build_distance_matrix(inst);
  const Solution s = make_solution(inst, dm, {{1, 2}});
  MtzCertificate bad{{0.0, 2.0, 1.0}};
  EXPECT_FALSE(verify_mtz(inst, s, bad));
}

TEST(Knn, CollinearNearestTiesLow) {
  // Nodes at x = 0, 1, 2, 3: node 1 and 2 each have two neighbours at distance 1.
  const Instance inst = line_instance({1, 2, 3});
  const DistanceMatrix dm = build_distance_matrix(inst);
  const SparseGraph g = knn_sparsify(dm, 1);
  EXPECT_EQ(g.neighbors[0], std::vector<int>{1});
  // Every customer must keep the depot, which displaces its nearest otherwise.
  EXPECT_EQ(g.neighbors[1], std::vector<int>{0});
  EXPECT_EQ(g.neighbors[2], std::vector<int>{0});
  EXPECT_EQ(g.neighbors[3], std::vector<int>{0});

  // Without depot forcing the tie at node 2 would go to node 1; with k=2 the
  // depot takes the last slot.
  const SparseGraph g2 = knn_sparsify(dm, 2);
  EXPECT_EQ(g2.neighbors[0], (std::vector<int>{1, 2}));
  EXPECT_EQ(g2.neighbors[1], (std::vector<int>{0, 2}));
  EXPECT_EQ(g2.neighbors[2], (std::vector<int>{1, 0}));
}

TEST(Knn, CompleteWhenKLarge) {
  const Instance inst = io::generate_uniform(9, 3);
  const SparseGraph g = knn_sparsify(build_distance_matrix(inst), 50);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    EXPECT_EQ(g.neighbors[i].size(), 9u);
    for (std::size_t j = 0; j < g.num_nodes(); ++j) {
      if (i != j) EXPECT_TRUE(g.has_arc(static_cast<int>(i), static_cast<int>(j)));
    }
  }
  EXPECT_THROW(knn_sparsify(build_distance_matrix(inst), 0), std::invalid_argument);
}

TEST(Knn, MatchesFullSortOracle) {
  const Instance inst = io::generate_uniform(39, 21);
  const DistanceMatrix dm = build_distance_matrix(inst);
  const SparseGraph g = knn_sparsify(dm, 10);
  EXPECT_EQ(default_knn(40), 10u);
  for (int i = 0; i < 40; ++i) {
    std::vector<int> order;
    for (int j = 0; j < 40; ++j) {
      if (j != i) order.push_back(j);
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return dm(i, a) != dm(i, b) ? dm(i, a) < dm(i, b) : a < b;
    });
    order.resize(10);
    if (i != 0 && std::find(order.begin(), order.end(), 0) == order.end()) {
      order.back() = 0;
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return dm(i, a) != dm(i, b) ? dm(i, a) < dm(i, b) : a < b;
    });
    EXPECT_EQ(g.neighbors[i], order) << "node " << i;
    ASSERT_EQ(g.distance[i].size(), order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      EXPECT_EQ(g.distance[i][k], dm(i, order[k]));
    }
  }
  const SparseGraph again = knn_sparsify(dm, 10);
  EXPECT_EQ(again.neighbors, g.neighbors);
}

TEST(Exact, SingleCustomer) {
  const Instance inst = line_instance({3});
  const Solution s = exact_solve_small(inst);
  ASSERT_EQ(s.routes.size(), 1u);
  EXPECT_DOUBLE_EQ(s.total_cost, 6.0);
}

TEST(Exact, CollinearSingleRouteInLineOrder) {
  const Instance inst = line_instance({1, 2, 3});
  const Solution s = exact_solve_small(inst);
  ASSERT_EQ(s.routes.size(), 1u);
  EXPECT_EQ(s.routes[0].customers, (std::vector<int>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(s.total_cost, 6.0);
}

TEST(Exact, TooLargeThrows) {
  EXPECT_THROW(exact_solve_small(io::generate_uniform(9, 1)), std::invalid_argument);
}

TEST(Exact, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance inst =
        testing::random_grid_instance(6, seed, 12, DistanceMode::kRounded);
    const DistanceMatrix dm = build_distance_matrix(inst);
    const Solution s = exact_solve_small(inst, dm);
    EXPECT_TRUE(check_feasible(inst, dm, s).feasible());
    EXPECT_GE(s.num_routes(), 2u);
    EXPECT_EQ(s.total_cost, *testing::brute_force_cost(inst)) << "seed " << seed;
  }
}

TEST(Exact, ContinuousWithinRoundoff) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Instance inst = io::generate_uniform(6, 500 + seed);
    const Solution s = exact_solve_small(inst);
    EXPECT_NEAR(s.total_cost, *testing::brute_force_cost(inst), 1e-9 * s.total_cost);
  }
}

TEST(Exact, HonorsFleetLimit) {
  const Instance free =
      testing::random_grid_instance(6, 77, 15, DistanceMode::kRounded);
  const int limit = static_cast<int>((free.total_demand() + 14) / 15);
  const Instance limited("lim", free.depot(), free.customers(), 15, limit,
                         DistanceMode::kRounded);
  const Solution s = exact_solve_small(limited);
  EXPECT_LE(s.num_routes(), static_cast<std::size_t>(limit));
  EXPECT_EQ(s.total_cost, *testing::brute_force_cost(limited));
  EXPECT_TRUE(check_feasible(limited, s).feasible());
}

TEST(Exact, TieBreakIsCanonical) {
  // Square around the depot: both orientations and both pairings tie.
  Instance inst("sq", {0, 0},
                {Customer{{1, 0}, 1}, Customer{{0, 1}, 1}, Customer{{-1, 0}, 1},
                 Customer{{0, -1}, 1}},
                2, std::nullopt, DistanceMode::kContinuous);
  const Solution a = exact_solve_small(inst);
  const Solution b = canonicalize(a);
  ASSERT_EQ(a.routes.size(), b.routes.size());
  for (std::size_t r = 0; r < a.routes.size(); ++r) {
    EXPECT_EQ(a.routes[r].customers, b.routes[r].customers);
  }
}

TEST(Canonicalize, OrientsAndSorts) {
  const Instance inst = line_instance({1, 2, 3, 4});
  const DistanceMatrix dm = build_distance_matrix(inst);
  const Solution s = canonicalize(make_solution(inst, dm, {{4, 3}, {2, 1}}));
  EXPECT_EQ(s.routes[0].customers, (std::vector<int>{1, 2}));
  EXPECT_EQ(s.routes[1].customers, (std::vector<int>{3, 4}));
}

}  // namespace
}  // namespace vrpflow
