#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrpflow/decomposition.hpp"
#include "vrpflow/policy.hpp"
#include "vrpflow/rollout.hpp"

namespace vrpflow::training {

using nn::Discriminator;
using nn::EdgeProbMatrix;
using nn::GraphInput;
using nn::Matrix;
using nn::Policy;
using nn::Trajectory;

// Backward policy of the TB loss. kTree: every state has one parent, so a
// solution's sampling mass grows with the number of route orders and
// orientations that build it. kRouteOrder: those trajectories share
// P_B(tau | x) = 1 / (r! 2^r') and mass follows R(x).
enum class BackwardPolicy { kTree, kRouteOrder };

struct TrainConfig {
  std::size_t n = 20;  // customers per synthetic instance
  std::size_t instances_per_epoch = 200;
  std::size_t batch_size = 8;  // instances per step
  std::size_t rollouts = 20;   // N-hat
  double epsilon = 0.05;
  std::size_t generator_updates = 4;  // per discriminator update
  double lr_generator = 1e-3;
  double lr_discriminator = 1e-3;
  double lr_log_z = 1e-2;
  std::size_t epochs = 10;
  expert::HgsConfig expert = default_expert();
  std::size_t subproblem_size = expert::kDefaultSubproblemSize;
  std::size_t knn = 0;  // 0 selects default_knn
  nn::Dims dims;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 1;  // epochs
  std::filesystem::path output_dir;  // empty: no files written
  double clip_norm = 10.0;
  // Adds the expert-refined trajectories of each instance to its TB batch,
  // scored like the rollouts. Off: positives only train the discriminator.
  bool positive_tb = false;
  BackwardPolicy backward = BackwardPolicy::kTree;

  static expert::HgsConfig default_expert() {
    expert::HgsConfig c;
    c.population_size = 10;
    c.max_iterations = 500;
    c.max_iterations_without_improvement = 200;
    c.time_budget_s = 1.0;
    return c;
  }
};

// Throws std::invalid_argument for zero sizes, a ratio below one, or
// non-positive rates.
void validate(const TrainConfig& cfg);

template <class P>
struct Adam {
  P m;
  P v;
  std::uint64_t t = 0;
};

struct StepRecord {
  std::size_t step = 0;
  double tb_loss = 0.0;  // mean over the generator updates of the step
  double disc_loss = 0.0;
  double mean_reward = 0.0;  // R of the discriminator's negatives
  double mean_greedy_cost = 0.0;
};

struct TrainState {
  Policy policy;
  Discriminator disc;
  Adam<nn::PolicyParamsT<Matrix>> gen_opt;
  Adam<nn::DiscParamsT<Matrix>> disc_opt;
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // completed steps
  std::vector<StepRecord> history;
};

TrainState init_state(const TrainConfig& cfg);

// Raised on a non-finite loss; what() carries a snapshot of the offending
// quantities.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// mean over trajectories of (log Z + log P_F - log P_B - D)^2.
double tb_loss(double log_z, const std::vector<double>& log_pf,
               const std::vector<double>& log_pb, const std::vector<double>& scores);
double tb_loss(double log_z, const std::vector<Trajectory>& trajectories,
               const std::vector<double>& scores);
// mean(R_neg^2) + mean((1 - R_pos)^2).
double disc_loss(const std::vector<double>& neg_rewards, const std::vector<double>& pos_rewards);

// Tape versions used for training.
nn::Var tb_loss(nn::Tape& t, nn::Var log_z, const std::vector<nn::Var>& log_pf,
                const std::vector<double>& scores);
nn::Var disc_loss(nn::Tape& t, const std::vector<nn::Var>& neg_rewards,
                  const std::vector<nn::Var>& pos_rewards);

// One instance ready for the networks.
struct Problem {
  const Instance* instance = nullptr;
  const DistanceMatrix* dm = nullptr;
  const GraphInput* graph = nullptr;
};

struct PreparedInstance {
  Instance instance;
  DistanceMatrix dm;
  GraphInput graph;

  PreparedInstance(Instance inst, std::size_t knn);
  Problem problem() const { return {&instance, &dm, &graph}; }
};

// A problem paired with the frozen arc scores that define its reward.
struct RewardedProblem {
  Problem problem;
  const EdgeProbMatrix* rewards = nullptr;
  // Off-policy solutions added to the TB batch; replayed on the candidate
  // graph under the differentiated logits, skipped when they leave it.
  const std::vector<Solution>* positives = nullptr;
};

struct GeneratorUpdate {
  double loss = 0.0;
  double mean_log_reward = 0.0;
  double grad_norm = 0.0;  // before clipping
};

// One Adam step on the TB loss. Each problem gets cfg.rollouts epsilon-greedy
// rollouts (seed derive_seed(seed, index)) drawn from the training-mode
// logits of the same forward pass that is differentiated. The loss is the
// mean over problems; running batch-norm statistics advance once per
// problem in order.
GeneratorUpdate generator_update(Policy& policy, Adam<nn::PolicyParamsT<Matrix>>& opt,
                                 const std::vector<RewardedProblem>& problems,
                                 const TrainConfig& cfg, std::uint64_t seed);

struct TrainingPair {
  std::vector<Trajectory> negatives;
  std::vector<Trajectory> positives;
};

// Negatives: cfg.rollouts epsilon-greedy rollouts of the policy in inference
// mode. Positive: expert_refine of the cheapest negative, linearized.
TrainingPair make_training_pair(const Policy& policy, const Problem& problem,
                                const TrainConfig& cfg, std::uint64_t seed);

// TB loss of fixed trajectories under the policy's training-mode forward,
// with optional gradients and batch statistics.
double tb_objective(const Policy& policy, const Problem& problem,
                    const std::vector<Trajectory>& trajectories, const std::vector<double>& scores,
                    nn::PolicyParamsT<Matrix>* grads = nullptr,
                    nn::RunningStats* stats = nullptr);

// Least-squares loss of one training pair with rewards R = exp(D) from the
// discriminator's training-mode forward. Arcs outside the candidate set are
// scored as extra arcs.
double disc_objective(const Discriminator& disc, const Problem& problem,
                      const TrainingPair& pair, nn::DiscParamsT<Matrix>* grads = nullptr,
                      nn::RunningStats* stats = nullptr, double* mean_neg = nullptr,
                      double* mean_pos = nullptr);

struct DiscriminatorUpdate {
  double loss = 0.0;
  double mean_neg_reward = 0.0;
  double mean_pos_reward = 0.0;
};

// One Adam step on the least-squares loss for the given pairs.
DiscriminatorUpdate discriminator_update(Discriminator& disc, Adam<nn::DiscParamsT<Matrix>>& opt,
                                         const std::vector<Problem>& problems,
                                         const std::vector<TrainingPair>& pairs,
                                         const TrainConfig& cfg);

// generator_updates TB steps against the frozen discriminator, then one
// discriminator step with the generator frozen. Appends one history record.
// With positive_tb, an expert refinement of the pre-update policy's rollouts
// supplies the positives of every generator update of the step.
StepRecord train_step(TrainState& state, const std::vector<Problem>& batch,
                      const TrainConfig& cfg, std::uint64_t seed);

// Runs from state.epoch to cfg.epochs. With an output directory, writes
// checkpoint-<epoch>.json every checkpoint_every epochs and at the end
// (epoch 0 when starting fresh) plus train_log.json. Resuming from a
// checkpoint reproduces the uninterrupted run bit for bit.
TrainState train(const TrainConfig& cfg, std::optional<TrainState> resume = std::nullopt);

// The synthetic training set for a configuration.
std::vector<Instance> training_instances(const TrainConfig& cfg);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
// Throws std::runtime_error on unreadable files or on dimension mismatches
// when `expected` is given.
TrainState load_checkpoint(const std::filesystem::path& path,
                           const std::optional<nn::Dims>& expected = std::nullopt);
std::string checkpoint_name(std::size_t epoch);

void write_training_log(const std::vector<StepRecord>& history, const std::filesystem::path& path);

// Order-sensitive FNV-1a digest of every tensor's bytes.
std::uint64_t parameter_hash(const Policy& policy);
std::uint64_t parameter_hash(const Discriminator& disc);
std::uint64_t state_hash(const TrainState& state);

}  // namespace vrpflow::training
