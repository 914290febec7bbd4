#include "vrpflow/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "vrpflow/rng.hpp"

namespace vrpflow::nn {
namespace {

// Normalized probabilities over `valid` (parallel arrays).
std::vector<double> masked_softmax(const Matrix& logits, const std::vector<int>& valid) {
  double top = -INFINITY;
  for (int a : valid) top = std::max(top, logits(a, 0));
  std::vector<double> p(valid.size());
  double z = 0.0;
  for (std::size_t k = 0; k < valid.size(); ++k) {
    p[k] = std::exp(logits(valid[k], 0) - top);
    z += p[k];
  }
  for (double& v : p) v /= z;
  return p;
}

std::size_t argmax_lowest_node(const std::vector<double>& p, const std::vector<int>& valid,
                               const GraphInput& g) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < p.size(); ++k) {
    if (p[k] > p[best] || (p[k] == p[best] && g.cand_dst[valid[k]] < g.cand_dst[valid[best]])) {
      best = k;
    }
  }
  return best;
}

std::size_t sample_index(const std::vector<double>& p, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return k;
  }
  // Rounding left a sliver above the last cumulative sum.
  for (std::size_t k = p.size(); k-- > 0;) {
    if (p[k] > 0) return k;
  }
  return p.size() - 1;
}

}  // namespace

RolloutState initial_state(const Instance& instance) {
  RolloutState s;
  s.current = 0;
  s.residual = instance.capacity();
  s.visited.assign(instance.num_nodes(), 0);
  s.routes.emplace_back();
  return s;
}

bool is_terminal(const Instance& instance, const RolloutState& state) {
  return state.current == 0 && state.num_visited == instance.num_customers();
}

std::vector<int> valid_arcs(const Instance& instance, const GraphInput& g,
                            const RolloutState& state) {
  std::vector<int> valid;
  for (int k = g.cand_offsets[state.current]; k < g.cand_offsets[state.current + 1]; ++k) {
    const int j = g.cand_dst[k];
    if (j == 0) {
      if (state.current != 0) valid.push_back(k);
    } else if (!state.visited[j] && instance.demand(j) <= state.residual) {
      valid.push_back(k);
    }
  }
  return valid;
}

std::vector<double> decode_step(const Matrix& logits, const Instance& instance,
                                const GraphInput& g, const RolloutState& state) {
  if (is_terminal(instance, state)) throw std::logic_error("decode_step on a terminal state");
  const std::vector<int> valid = valid_arcs(instance, g, state);
  if (valid.empty()) throw std::logic_error("no admissible action");
  const std::vector<double> p = masked_softmax(logits, valid);
  std::vector<double> out(instance.num_nodes(), 0.0);
  for (std::size_t k = 0; k < valid.size(); ++k) out[g.cand_dst[valid[k]]] = p[k];
  return out;
}

void apply_action(const Instance& instance, RolloutState& state, int node, double log_prob) {
  if (node == 0) {
    if (state.current == 0) throw std::logic_error("empty route");
    state.residual = instance.capacity();
    if (state.num_visited < instance.num_customers()) state.routes.emplace_back();
  } else {
    if (state.visited[node]) throw std::logic_error(fmt::format("customer {} revisited", node));
    if (instance.demand(node) > state.residual) {
      throw std::logic_error(fmt::format("customer {} exceeds residual capacity", node));
    }
    state.visited[node] = 1;
    ++state.num_visited;
    state.residual -= instance.demand(node);
    state.routes.back().push_back(node);
  }
  state.current = node;
  state.log_pf += log_prob;
}

std::vector<std::pair<int, int>> Trajectory::arcs() const {
  std::vector<std::pair<int, int>> out;
  int prev = 0;
  for (int a : actions) {
    out.push_back({prev, a});
    prev = a;
  }
  return out;
}

Trajectory rollout(const Matrix& logits, const Instance& instance, const DistanceMatrix& dm,
                   const GraphInput& g, DecodeMode mode, std::uint64_t seed) {
  if (logits.rows() != static_cast<Eigen::Index>(g.cand_src.size())) {
    throw std::invalid_argument("one logit per candidate arc expected");
  }
  Rng rng(seed);
  RolloutState state = initial_state(instance);
  Trajectory traj;
  while (!is_terminal(instance, state)) {
    const std::vector<int> valid = valid_arcs(instance, g, state);
    if (valid.empty()) throw std::logic_error("no admissible action");
    const std::vector<double> p = masked_softmax(logits, valid);
    std::size_t pick;
    switch (mode.kind) {
      case DecodeMode::kGreedy:
        pick = argmax_lowest_node(p, valid, g);
        break;
      case DecodeMode::kEpsilonGreedy:
        pick = rng.bernoulli(mode.epsilon) ? sample_index(p, rng)
                                           : argmax_lowest_node(p, valid, g);
        break;
      default:
        pick = sample_index(p, rng);
        break;
    }
    const int node = g.cand_dst[valid[pick]];
    traj.actions.push_back(node);
    traj.choices.push_back({valid, valid[pick]});
    apply_action(instance, state, node, std::log(p[pick]));
  }
  traj.log_pf = state.log_pf;
  traj.solution = make_solution(instance, dm, state.routes);
  return traj;
}

Trajectory rollout(const Policy& policy, const Instance& instance, const DistanceMatrix& dm,
                   const GraphInput& g, DecodeMode mode, std::uint64_t seed, NormMode norm) {
  return rollout(policy_logits(policy, g, norm), instance, dm, g, mode, seed);
}

std::vector<Trajectory> batch_rollouts(const Matrix& logits, const Instance& instance,
                                       const DistanceMatrix& dm, const GraphInput& g,
                                       std::size_t count, DecodeMode mode, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("batch_rollouts needs count >= 1");
  std::vector<Trajectory> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back(rollout(logits, instance, dm, g, mode, derive_seed(seed, k)));
  }
  return out;
}

std::vector<Trajectory> batch_rollouts(const Policy& policy, const Instance& instance,
                                       const DistanceMatrix& dm, const GraphInput& g,
                                       std::size_t count, DecodeMode mode, std::uint64_t seed,
                                       NormMode norm) {
  return batch_rollouts(policy_logits(policy, g, norm), instance, dm, g, count, mode, seed);
}

std::size_t best_of(const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) throw std::invalid_argument("best_of of nothing");
  std::size_t best = 0;
  for (std::size_t k = 1; k < trajectories.size(); ++k) {
    if (trajectories[k].solution.total_cost < trajectories[best].solution.total_cost) best = k;
  }
  return best;
}

Trajectory trajectory_from_solution(const Solution& solution) {
  Trajectory traj;
  traj.solution = solution;
  for (const Route& r : solution.routes) {
    traj.actions.insert(traj.actions.end(), r.customers.begin(), r.customers.end());
    traj.actions.push_back(0);
  }
  return traj;
}

std::optional<Trajectory> replay_solution(const Matrix& logits, const Instance& instance,
                                          const GraphInput& g, const Solution& solution) {
  const auto fits = [&](const std::vector<int>& route) {
    int prev = 0;
    for (int c : route) {
      if (g.arc(prev, c) < 0) return false;
      prev = c;
    }
    return g.arc(prev, 0) >= 0;
  };
  Trajectory traj;
  RolloutState state = initial_state(instance);
  for (const Route& r : solution.routes) {
    std::vector<int> route = r.customers;
    if (!fits(route)) {
      std::reverse(route.begin(), route.end());
      if (!fits(route)) return std::nullopt;
    }
    route.push_back(0);
    for (int node : route) {
      const std::vector<int> valid = valid_arcs(instance, g, state);
      const int chosen = g.arc(state.current, node);
      if (std::find(valid.begin(), valid.end(), chosen) == valid.end()) return std::nullopt;
      const std::vector<double> p = masked_softmax(logits, valid);
      const auto k = std::find(valid.begin(), valid.end(), chosen) - valid.begin();
      traj.actions.push_back(node);
      traj.choices.push_back({valid, chosen});
      apply_action(instance, state, node, std::log(p[k]));
    }
  }
  if (!is_terminal(instance, state)) return std::nullopt;
  traj.log_pf = state.log_pf;
  traj.solution = solution;
  return traj;
}

double route_order_log_pb(const Solution& solution) {
  double out = -std::lgamma(static_cast<double>(solution.num_routes()) + 1.0);
  for (const Route& r : solution.routes) {
    if (r.customers.size() > 1) out -= std::log(2.0);
  }
  return out;
}

double disc_score(const EdgeProbMatrix& matrix, const Trajectory& trajectory) {
  double score = 0.0;
  for (const auto& [i, j] : trajectory.arcs()) score += matrix.log_prob(i, j);
  return score;
}

}  // namespace vrpflow::nn
