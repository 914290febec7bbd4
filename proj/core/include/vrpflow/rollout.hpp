#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "vrpflow/policy.hpp"

namespace vrpflow::nn {

struct RolloutState {
  int current = 0;
  int residual = 0;
  std::vector<char> visited;  // per node; the depot entry stays 0
  std::size_t num_visited = 0;
  std::vector<std::vector<int>> routes;  // closed routes, then the open one
  double log_pf = 0.0;
};

RolloutState initial_state(const Instance& instance);

// Back at the depot with every customer served.
bool is_terminal(const Instance& instance, const RolloutState& state);

// Candidate arc ids the mask leaves open: unvisited customers that fit the
// residual capacity, plus the depot whenever the vehicle is away from it.
std::vector<int> valid_arcs(const Instance& instance, const GraphInput& g,
                            const RolloutState& state);

// Action distribution over nodes from the candidate-arc logits. Masked nodes
// get exactly zero. Throws std::logic_error in a terminal state.
std::vector<double> decode_step(const Matrix& logits, const Instance& instance,
                                const GraphInput& g, const RolloutState& state);

// Moves the vehicle to `node` and adds log_prob to log P_F.
void apply_action(const Instance& instance, RolloutState& state, int node, double log_prob);

struct DecodeMode {
  enum Kind { kGreedy, kEpsilonGreedy, kSample };
  Kind kind = kSample;
  double epsilon = 0.0;

  static DecodeMode greedy() { return {kGreedy, 0.0}; }
  static DecodeMode sample() { return {kSample, 0.0}; }
  static DecodeMode epsilon_greedy(double e) { return {kEpsilonGreedy, e}; }
};

struct Trajectory {
  // Nodes entered after leaving the depot; depot returns appear as 0 and the
  // sequence ends with 0.
  std::vector<int> actions;
  // The decision made at each step, in candidate-arc ids, for re-scoring
  // log P_F on a tape. Empty for trajectories not built by a rollout.
  std::vector<Choice> choices;
  Solution solution;
  double log_pf = 0.0;
  double log_pb = 0.0;  // each state has a single parent

  // Directed arcs (from, to) traversed, starting at the depot.
  std::vector<std::pair<int, int>> arcs() const;
};

// Greedy picks the most probable node (lowest id on ties); epsilon-greedy
// samples with probability epsilon and is greedy otherwise.
Trajectory rollout(const Matrix& logits, const Instance& instance, const DistanceMatrix& dm,
                   const GraphInput& g, DecodeMode mode, std::uint64_t seed);
Trajectory rollout(const Policy& policy, const Instance& instance, const DistanceMatrix& dm,
                   const GraphInput& g, DecodeMode mode, std::uint64_t seed,
                   NormMode norm = NormMode::kInference);

// Trajectory k uses seed derive_seed(seed, k), so a smaller batch is a prefix
// of a larger one.
std::vector<Trajectory> batch_rollouts(const Matrix& logits, const Instance& instance,
                                       const DistanceMatrix& dm, const GraphInput& g,
                                       std::size_t count, DecodeMode mode, std::uint64_t seed);
std::vector<Trajectory> batch_rollouts(const Policy& policy, const Instance& instance,
                                       const DistanceMatrix& dm, const GraphInput& g,
                                       std::size_t count, DecodeMode mode, std::uint64_t seed,
                                       NormMode norm = NormMode::kInference);

// Index of the cheapest trajectory, first on ties. Requires a non-empty list.
std::size_t best_of(const std::vector<Trajectory>& trajectories);

// The action sequence that builds `solution` route by route. log P_F is left
// at zero and there are no recorded choices.
Trajectory trajectory_from_solution(const Solution& solution);

// The decisions a rollout on `g` would make to build `solution`, with log
// P_F under `logits`. Routes keep their stored orientation when every arc is
// a candidate, else are reversed; nullopt when neither direction fits.
std::optional<Trajectory> replay_solution(const Matrix& logits, const Instance& instance,
                                          const GraphInput& g, const Solution& solution);

// log of 1 / (r! 2^r') for a solution of r routes, r' of them with more than
// one customer: the chance of one particular route order and orientation
// when all the trajectories that build the same routes are equally likely.
double route_order_log_pb(const Solution& solution);

// Sum of log M over the trajectory's arcs; at most zero. Throws
// std::out_of_range when an arc is not in the matrix.
double disc_score(const EdgeProbMatrix& matrix, const Trajectory& trajectory);

}  // namespace vrpflow::nn
