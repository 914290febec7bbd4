#include "vrpflow/feasibility.hpp"

#include <algorithm>
#include <cmath>

namespace vrpflow {

std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kMissingCustomer: return "missing-customer";
    case ViolationKind::kDuplicateCustomer: return "duplicate-customer";
    case ViolationKind::kInvalidNode: return "invalid-node";
    case ViolationKind::kEmptyRoute: return "empty-route";
    case ViolationKind::kCapacityOverflow: return "capacity-overflow";
    case ViolationKind::kFleetLimitExceeded: return "fleet-limit-exceeded";
    case ViolationKind::kCostMismatch: return "cost-mismatch";
  }
  return "unknown";
}

std::size_t FeasibilityReport::count(ViolationKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(violations.begin(), violations.end(),
                    [kind](const Violation& v) { return v.kind == kind; }));
}

FeasibilityReport check_feasible(const Instance& instance,
                                 const Solution& solution) {
  FeasibilityReport report;
  const std::size_t n = instance.num_nodes();
  std::vector<int> visits(n, 0);

  for (std::size_t r = 0; r < solution.routes.size(); ++r) {
    const Route& route = solution.routes[r];
    if (route.customers.empty()) {
      report.violations.push_back(
          {ViolationKind::kEmptyRoute, static_cast<int>(r), 0.0});
      continue;
    }
    long load = 0;
    for (int c : route.customers) {
      if (c <= 0 || static_cast<std::size_t>(c) >= n) {
        report.violations.push_back({ViolationKind::kInvalidNode, c, 0.0});
        continue;
      }
      ++visits[c];
      load += instance.demand(c);
    }
    if (load > instance.capacity()) {
      report.violations.push_back(
          {ViolationKind::kCapacityOverflow, static_cast<int>(r),
           static_cast<double>(load - instance.capacity())});
    }
  }
  for (std::size_t c = 1; c < n; ++c) {
    if (visits[c] == 0) {
      report.violations.push_back(
          {ViolationKind::kMissingCustomer, static_cast<int>(c), 0.0});
    } else if (visits[c] > 1) {
      report.violations.push_back({ViolationKind::kDuplicateCustomer,
                                   static_cast<int>(c),
                                   static_cast<double>(visits[c] - 1)});
    }
  }
  if (instance.fleet_limit() &&
      solution.routes.size() > static_cast<std::size_t>(*instance.fleet_limit())) {
    report.violations.push_back(
        {ViolationKind::kFleetLimitExceeded, -1,
         static_cast<double>(solution.routes.size() - *instance.fleet_limit())});
  }

  if (report.feasible()) {
    MtzCertificate cert;
    cert.load_on_arrival.assign(n, 0.0);
    for (const Route& route : solution.routes) {
      double running = 0.0;
      for (int c : route.customers) {
        running += instance.demand(c);
        cert.load_on_arrival[c] = running;
      }
    }
    report.certificate = std::move(cert);
  }
  return report;
}

FeasibilityReport check_feasible(const Instance& instance,
                                 const DistanceMatrix& dm,
                                 const Solution& solution) {
  FeasibilityReport report = check_feasible(instance, solution);
  if (report.count(ViolationKind::kInvalidNode) > 0) return report;
  const double recomputed = recompute_cost(dm, solution);
  const double error = std::abs(recomputed - solution.total_cost);
  const double tolerance = dm.mode() == DistanceMode::kRounded
                               ? 0.0
                               : 1e-9 * std::max(1.0, std::abs(recomputed));
  if (error > tolerance) {
    report.violations.push_back({ViolationKind::kCostMismatch, -1, error});
    report.certificate.reset();
  }
  return report;
}

bool verify_mtz(const Instance& instance, const Solution& solution,
                const MtzCertificate& certificate) {
  const double q = instance.capacity();
  const auto& u = certificate.load_on_arrival;
  if (u.size() != instance.num_nodes()) return false;
  for (std::size_t i = 1; i < u.size(); ++i) {
    if (u[i] < instance.demand(i) || u[i] > q) return false;
  }
  // Arcs with x_ij = 0 satisfy u_i - u_j <= Q - d_j trivially given the bounds.
  for (const Route& route : solution.routes) {
    for (std::size_t k = 0; k + 1 < route.customers.size(); ++k) {
      const int i = route.customers[k];
      const int j = route.customers[k + 1];
      if (u[i] - u[j] + q > q - instance.demand(j) + 1e-9) return false;
    }
  }
  return true;
}

}  // namespace vrpflow
