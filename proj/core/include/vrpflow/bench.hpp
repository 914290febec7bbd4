#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vrpflow/io.hpp"

namespace vrpflow::bench {

// Invalid or inconsistent benchmark specification.
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A checkpoint or instance file that does not exist or cannot be read.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 100 (obj - ref) / ref. Throws SpecError for a non-positive reference.
double gap_percent(double obj, double ref);

struct Method {
  enum Kind { kNeuralGreedy, kNeuralBestOf, kHgs, kExpertRefine, kExact };
  Kind kind = kHgs;
  std::size_t rollouts = 100;        // N-hat for best-of
  std::size_t subproblem_size = 100;  // m for expert-refine

  // "neural-greedy", "neural-best-of(100)", "hgs", "expert-refine(100)", "exact".
  std::string name() const;
  bool neural() const { return kind == kNeuralGreedy || kind == kNeuralBestOf; }

  friend bool operator==(const Method&, const Method&) = default;
};

// Accepts the names produced by Method::name; "neural-best-of" and
// "expert-refine" without a count keep the defaults.
Method parse_method(std::string_view text);

struct SyntheticSet {
  std::size_t n = 20;
  std::size_t count = 8;
  std::uint64_t seed = 1;
};

struct BenchSpec {
  // Exactly one of the two sources.
  std::optional<SyntheticSet> synthetic;
  std::string glob;  // e.g. "data/*.vrp"; wildcards only in the file name

  std::vector<Method> methods;
  bool gaps = false;
  // Either a method (run as part of the benchmark) or fixed objectives.
  std::optional<Method> reference_method;
  std::map<std::string, double> reference_by_instance;
  std::map<std::size_t, double> reference_by_size;  // customer count -> objective

  double time_budget_s = 10.0;  // hgs and expert-refine, per instance
  std::filesystem::path checkpoint;  // required by neural methods
  std::size_t knn = 0;               // 0 selects default_knn
  std::uint64_t seed = 1;
  std::filesystem::path output_csv;  // empty: nothing written
};

// Throws SpecError naming the first problem found.
void validate(const BenchSpec& spec);

// JSON object with the fields of BenchSpec:
//   {"instances": {"n": 20, "count": 8, "seed": 1} | "data/*.vrp",
//    "methods": ["hgs", "neural-best-of(100)"], "gaps": true,
//    "reference": "hgs" | {"uniform-n20-s1": 4.1, ...} | {"n20": 4.1, ...},
//    "time_budget_s": 10, "checkpoint": "run/checkpoint-0010.json",
//    "knn": 0, "seed": 1, "output": "results.csv"}
// Throws SpecError on malformed input.
BenchSpec parse_spec(std::string_view json_text);
BenchSpec load_spec(const std::filesystem::path& path);

// Name of the aggregate rows for a set of instances with `n` customers, or
// for mixed sizes when n is nullopt.
std::string aggregate_name(std::optional<std::size_t> n);

struct BenchResult {
  std::vector<io::RunRecord> runs;        // one per instance and method
  std::vector<io::RunRecord> aggregates;  // one per method: mean obj, gap, time

  std::vector<io::RunRecord> all() const;
};

// Every method on every instance. Timed sections cover graph construction
// and solving but not instance loading, run one at a time, and use a
// monotonic clock. Seeds: instance i uses derive_seed(spec.seed, i) for
// every method. Neural best-of keeps the greedy rollout among its candidates
// and draws the sampled ones with prefix-shared seeds. Expert-refine starts
// from the neural greedy solution when a checkpoint is given, otherwise
// from the sweep construction. Writes spec.output_csv when set.
BenchResult run_bench(const BenchSpec& spec);

// One method on one instance under the spec's budget, k-NN size and
// checkpoint; the instance source and methods of `settings` are ignored.
Solution solve_one(const BenchSpec& settings, const Method& method, const Instance& instance,
                   std::uint64_t seed);

enum class SweepParameter { kRollouts, kKnn, kSubproblemSize };

SweepParameter parse_sweep_parameter(std::string_view text);  // "rollouts", "knn", "m"
std::string to_string(SweepParameter p);

struct SweepRecord {
  SweepParameter parameter = SweepParameter::kRollouts;
  std::size_t value = 0;
  io::RunRecord record;
  bool aggregate = false;
};

inline constexpr std::string_view kSweepHeader =
    "parameter,value,instance,method,obj,gap_pct,time_s,seed";

// run_bench once per value with the parameter substituted (N-hat of every
// best-of method, the k-NN size, or m of every expert-refine method).
std::vector<SweepRecord> sweep(const BenchSpec& spec, SweepParameter parameter,
                               const std::vector<std::size_t>& values);
std::string format_sweep_csv(const std::vector<SweepRecord>& records);

// Method x size grid of the aggregate rows found in the given result CSVs:
// objective to 6 decimals, gap to 2, time to 3; "−" for missing cells.
// Methods are ordered by kind as listed in Method, then by parameter; sizes
// ascend. Throws io::ParseError on malformed CSV and MissingArtifact on
// unreadable files.
std::string report_table(const std::vector<std::filesystem::path>& csv_paths);
std::string report_table(const std::vector<io::RunRecord>& records);

}  // namespace vrpflow::bench
