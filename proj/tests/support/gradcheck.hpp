#pragma once

// Finite-difference checks of the full TB and discriminator losses on a
// random instance, shared by the unit and acceptance suites.

#include <algorithm>
#include <numeric>

#include "naive_nets.hpp"
#include "vrpflow/io.hpp"
#include "vrpflow/rng.hpp"
#include "vrpflow/sparse_graph.hpp"
#include "vrpflow/training.hpp"

namespace vrpflow::testing {

struct GradProblem {
  Instance inst;
  DistanceMatrix dm;
  nn::GraphInput g;

  training::Problem problem() const { return {&inst, &dm, &g}; }
};

inline GradProblem grad_problem(std::size_t n, std::uint64_t seed) {
  Instance inst = io::generate_uniform(n, seed);
  DistanceMatrix dm = build_distance_matrix(inst);
  nn::GraphInput g = nn::build_graph_input(inst, dm, knn_sparsify(dm, default_knn(inst.num_nodes())));
  return {std::move(inst), std::move(dm), std::move(g)};
}

// A random giant tour cut greedily at capacity; usually leaves the k-NN graph.
inline Solution random_solution(const Instance& inst, const DistanceMatrix& dm, std::uint64_t seed) {
  std::vector<int> tour(inst.num_customers());
  std::iota(tour.begin(), tour.end(), 1);
  Rng rng(seed);
  for (std::size_t k = tour.size(); k > 1; --k) std::swap(tour[k - 1], tour[rng.index(k)]);
  std::vector<std::vector<int>> routes(1);
  int load = 0;
  for (int c : tour) {
    if (load + inst.demand(c) > inst.capacity()) {
      routes.emplace_back();
      load = 0;
    }
    routes.back().push_back(c);
    load += inst.demand(c);
  }
  return make_solution(inst, dm, routes);
}

// log P_F of each trajectory under the training-mode forward.
inline std::vector<double> training_log_pf(const nn::Policy& policy, const nn::GraphInput& g,
                                           const std::vector<nn::Trajectory>& trajs) {
  nn::Tape t;
  const auto v = nn::policy_leaves(t, policy.params, false);
  nn::Var logits = nn::decoder_logits(
      t, v.decoder, nn::gat_forward(t, v.gat, g, policy.bn, nn::NormMode::kTraining, policy.dims),
      g);
  std::vector<double> out;
  for (const auto& traj : trajs) out.push_back(t.scalar(nn::log_softmax_picks(t, logits, traj.choices)));
  return out;
}

// log Z sits 0.5 above the value that balances the batch on average, so the
// loss is of the order of the residual spread; finite-difference rounding
// noise grows with the loss magnitude.
inline FdReport tb_gradient_check(std::uint64_t seed, const nn::Dims& dims, double step = 1e-5) {
  const GradProblem p = grad_problem(12, seed);
  nn::Policy policy = nn::init_policy(dims, derive_seed(seed, 1));
  const nn::EdgeProbMatrix m = nn::disc_forward(nn::init_discriminator(dims, derive_seed(seed, 2)),
                                                p.inst, p.dm, p.g, nn::NormMode::kInference);
  const auto trajs = nn::batch_rollouts(policy, p.inst, p.dm, p.g, 4, nn::DecodeMode::sample(),
                                        derive_seed(seed, 3));
  std::vector<double> scores;
  for (const auto& t : trajs) scores.push_back(nn::disc_score(m, t));
  const std::vector<double> lp = training_log_pf(policy, p.g, trajs);
  double balance = 0.0;
  for (std::size_t k = 0; k < trajs.size(); ++k) balance += (scores[k] - lp[k]) / trajs.size();
  policy.params.log_z(0, 0) = balance + 0.5;
  const training::Problem pr = p.problem();
  nn::PolicyParamsT<Matrix> grads;
  training::tb_objective(policy, pr, trajs, scores, &grads);
  const std::function<double(const nn::PolicyParamsT<Matrix>&)> loss =
      [&](const nn::PolicyParamsT<Matrix>& params) {
        nn::Policy q = policy;
        q.params = params;
        return training::tb_objective(q, pr, trajs, scores);
      };
  const std::function<std::vector<char>(const nn::PolicyParamsT<Matrix>&)> sides =
      [&](const nn::PolicyParamsT<Matrix>& params) {
        return policy_kink_sides(params, p.g, policy.bn);
      };
  return finite_difference_check(policy.params, grads, PolicyTensors{}, loss, step, 1e-4, 1e-8,
                                 sides);
}

// The oracle differentiates the loss minus its constant term; see
// shifted_disc_loss.
inline FdReport disc_gradient_check(std::uint64_t seed, const nn::Dims& dims, double step = 1e-5) {
  const GradProblem p = grad_problem(12, seed);
  const nn::Discriminator d = nn::init_discriminator(dims, derive_seed(seed, 4));
  training::TrainingPair pair;
  pair.negatives = nn::batch_rollouts(nn::init_policy(dims, derive_seed(seed, 5)), p.inst, p.dm,
                                      p.g, 3, nn::DecodeMode::sample(), derive_seed(seed, 6));
  pair.positives.push_back(
      nn::trajectory_from_solution(random_solution(p.inst, p.dm, derive_seed(seed, 7))));
  nn::DiscParamsT<Matrix> grads;
  training::disc_objective(d, p.problem(), pair, &grads);
  const std::function<double(const nn::DiscParamsT<Matrix>&)> loss =
      [&](const nn::DiscParamsT<Matrix>& params) {
        nn::Discriminator q = d;
        q.params = params;
        return shifted_disc_loss(q, p.inst, p.dm, p.g, pair.negatives, pair.positives);
      };
  const auto extra = arcs_outside(p.g, {&pair.negatives, &pair.positives});
  const double scale = nn::normalization_scale(p.inst);
  const std::function<std::vector<char>(const nn::DiscParamsT<Matrix>&)> sides =
      [&](const nn::DiscParamsT<Matrix>& params) {
        return disc_kink_sides(params, p.g, d.bn, extra, p.dm, scale);
      };
  return finite_difference_check(d.params, grads, DiscTensors{}, loss, step, 1e-4, 1e-8, sides);
}

}  // namespace vrpflow::testing
