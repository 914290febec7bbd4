#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vrpflow/instance.hpp"

namespace vrpflow::io {

// Malformed benchmark text. line() is 1-based; 0 when the problem is only
// detectable at the end of input.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

// VRPLIB CVRP with EUC_2D weights. Customers are the non-depot nodes in
// ascending id order. The fleet limit comes from a VEHICLES field or from a
// "-k<count>" suffix in the name. Rounded distances unless the COMMENT field
// carries "distance_mode=continuous" (written by write_vrplib).
Instance parse_vrplib(std::string_view text);

// TSPLIB EUC_2D tour problem as a single-route CVRP: node 1 is the depot,
// every other node has demand 1 and the capacity equals the customer count.
Instance parse_tsplib(std::string_view text);

// Dispatches on the TYPE field (CVRP or TSP).
Instance parse_instance(std::string_view text);
Instance load_instance(const std::filesystem::path& path);

// VRPLIB text with full-precision coordinates and the distance mode recorded
// in COMMENT, so parse_vrplib(write_vrplib(x)) == x.
std::string write_vrplib(const Instance& instance);

// CVRPLIB solution text: "Route #k: c1 c2 ..." lines, customer ids as
// instance indices. Returns the route lists; "Cost" lines are ignored.
std::vector<std::vector<int>> parse_solution(std::string_view text);
std::string write_solution(const Solution& solution);

// Depot and customers i.i.d. uniform on [0,1]^2, demands uniform on {1..9},
// capacity 50, continuous distances, unbounded fleet.
Instance generate_uniform(std::size_t num_customers, std::uint64_t seed);

// Instance i uses seed derive_seed(master_seed, i).
std::vector<Instance> generate_batch(std::size_t num_customers,
                                     std::size_t count,
                                     std::uint64_t master_seed);

struct RunRecord {
  std::string instance;
  std::string method;
  double objective = 0.0;
  std::optional<double> gap_pct;
  double time_s = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline constexpr std::string_view kResultsHeader =
    "instance,method,obj,gap_pct,time_s,seed";

// Rows sorted by (instance, method), stable for equal keys. Throws
// std::runtime_error when the file cannot be written.
void write_results_csv(std::vector<RunRecord> records,
                       const std::filesystem::path& path);
std::string format_results_csv(std::vector<RunRecord> records);
std::vector<RunRecord> parse_results_csv(std::string_view text);
std::vector<RunRecord> read_results_csv(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace vrpflow::io
