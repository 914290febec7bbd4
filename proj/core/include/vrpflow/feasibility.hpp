#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vrpflow/instance.hpp"

namespace vrpflow {

enum class ViolationKind {
  kMissingCustomer,
  kDuplicateCustomer,
  kInvalidNode,
  kEmptyRoute,
  kCapacityOverflow,
  kFleetLimitExceeded,
  kCostMismatch,
};

std::string to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  // Customer id for coverage violations, route index for route violations.
  int subject = -1;
  // Overflow amount, excess route count, or absolute cost error.
  double amount = 0.0;
};

// Cumulative load on arrival at each node (index 0 is the depot and unused).
// Satisfies d_i <= u_i <= Q and u_i - u_j + Q x_ij <= Q - d_j on used arcs.
struct MtzCertificate {
  std::vector<double> load_on_arrival;
};

struct FeasibilityReport {
  std::vector<Violation> violations;
  std::optional<MtzCertificate> certificate;

  bool feasible() const { return violations.empty(); }
  std::size_t count(ViolationKind kind) const;
};

FeasibilityReport check_feasible(const Instance& instance,
                                 const Solution& solution);

// Cost consistency is checked against `dm` in addition to the structural
// checks: exact in rounded mode, 1e-9 relative otherwise.
FeasibilityReport check_feasible(const Instance& instance,
                                 const DistanceMatrix& dm,
                                 const Solution& solution);

// Verifies the MTZ load inequalities over the arcs used by `solution`.
bool verify_mtz(const Instance& instance, const Solution& solution,
                const MtzCertificate& certificate);

}  // namespace vrpflow
