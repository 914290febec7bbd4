#pragma once

#include "vrpflow/instance.hpp"

namespace vrpflow {

inline constexpr std::size_t kExactMaxCustomers = 8;

// Globally optimal solution by enumerating every capacity-feasible set
// partition, each block sequenced by exhaustive permutation. Among equal-cost
// optima the lexicographically smallest canonical route list wins. Honors the
// fleet limit. Throws std::invalid_argument above kExactMaxCustomers.
Solution exact_solve_small(const Instance& instance, const DistanceMatrix& dm);
Solution exact_solve_small(const Instance& instance);

}  // namespace vrpflow
