#include "vrpflow/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <fmt/format.h>

#include "tensor_json.hpp"
#include "vrpflow/decomposition.hpp"
#include "vrpflow/io.hpp"
#include "vrpflow/parallel.hpp"
#include "vrpflow/rng.hpp"
#include "vrpflow/sparse_graph.hpp"

namespace vrpflow::training {
namespace {

using nn::DiscParamsT;
using nn::PolicyParamsT;
using nn::Tape;
using nn::Var;
using nlohmann::json;

constexpr std::uint64_t kPolicyStream = 1;
constexpr std::uint64_t kDiscStream = 2;
constexpr std::uint64_t kInstanceStream = 3;
constexpr std::uint64_t kShuffleStream = 4;
constexpr std::uint64_t kStepStream = 5;

Matrix zeros_like(const Matrix& m) { return Matrix::Zero(m.rows(), m.cols()); }

template <class P, class Visit>
double squared_norm(Visit visit, P& grads) {
  double s = 0.0;
  visit([&](Matrix& g) { s += g.squaredNorm(); }, grads);
  return s;
}

template <class P, class Visit>
void scale_all(Visit visit, P& grads, double factor) {
  visit([&](Matrix& g) { g *= factor; }, grads);
}

template <class P, class Visit>
void accumulate_into(Visit visit, P& total, P& part) {
  visit([&](Matrix& a, Matrix& b) { a += b; }, total, part);
}

// Adam with bias correction. `lr_for` picks the rate per tensor.
template <class P, class Visit, class Rate>
void adam_step(Visit visit, P& params, Adam<P>& opt, P& grads, Rate lr_for) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ++opt.t;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(opt.t));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(opt.t));
  visit(
      [&](Matrix& p, Matrix& m, Matrix& v, Matrix& g) {
        const double lr = lr_for(p);
        m = kBeta1 * m + (1.0 - kBeta1) * g;
        v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
        if (lr == 0.0) return;
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
      },
      params, opt.m, opt.v, grads);
}

template <class P, class Visit>
double clip(Visit visit, P& grads, double max_norm) {
  const double norm = std::sqrt(squared_norm(visit, grads));
  if (max_norm > 0.0 && norm > max_norm) scale_all(visit, grads, max_norm / norm);
  return norm;
}

std::string summarize(const std::vector<double>& v) {
  if (v.empty()) return "[]";
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return fmt::format("[min {}, max {}, n {}]", *lo, *hi, v.size());
}

// Rows of the candidate arcs of `g`, followed by the extra arcs, for every
// arc of a trajectory.
std::vector<int> arc_rows(const GraphInput& g, const std::vector<std::pair<int, int>>& extra,
                          const Trajectory& traj) {
  std::vector<int> rows;
  for (const auto& [i, j] : traj.arcs()) {
    int k = g.arc(i, j);
    if (k < 0) {
      const auto it = std::find(extra.begin(), extra.end(), std::pair<int, int>{i, j});
      if (it == extra.end()) throw std::out_of_range("arc without a discriminator score");
      k = static_cast<int>(g.cand_src.size() + (it - extra.begin()));
    }
    rows.push_back(k);
  }
  return rows;
}

void hash_bytes(std::uint64_t& h, const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < size; ++k) {
    h ^= p[k];
    h *= 0x100000001b3ULL;
  }
}

void hash_matrix(std::uint64_t& h, const Matrix& m) {
  const Eigen::Index shape[2] = {m.rows(), m.cols()};
  hash_bytes(h, shape, sizeof(shape));
  hash_bytes(h, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

void hash_running(std::uint64_t& h, const nn::RunningStats& rs) {
  for (const auto& s : rs) {
    hash_matrix(h, s.mean);
    hash_matrix(h, s.var);
  }
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

template <class P, class Visit>
json adam_to_json(const Adam<P>& opt, Visit visit) {
  Adam<P> copy = opt;
  return json{{"t", opt.t},
              {"m", nn::detail::tensors_to_json(visit, copy.m)},
              {"v", nn::detail::tensors_to_json(visit, copy.v)}};
}

template <class P, class Visit>
void adam_from_json(const json& j, Adam<P>& opt, Visit visit, const std::string& what) {
  opt.t = j.at("t").get<std::uint64_t>();
  nn::detail::tensors_from_json(visit, opt.m, j.at("m"), what + " first moment");
  nn::detail::tensors_from_json(visit, opt.v, j.at("v"), what + " second moment");
}

}  // namespace

void validate(const TrainConfig& cfg) {
  nn::validate(cfg.dims);
  if (cfg.n < 1 || cfg.instances_per_epoch < 1 || cfg.batch_size < 1 || cfg.rollouts < 1) {
    throw std::invalid_argument("instance, batch and rollout counts must be positive");
  }
  if (cfg.generator_updates < 1) throw std::invalid_argument("update ratio must be at least 1");
  if (!(cfg.lr_generator > 0) || !(cfg.lr_discriminator > 0) || !(cfg.lr_log_z > 0)) {
    throw std::invalid_argument("learning rates must be positive");
  }
  if (cfg.epsilon < 0.0 || cfg.epsilon > 1.0) throw std::invalid_argument("epsilon outside [0, 1]");
  if (cfg.subproblem_size < 1) throw std::invalid_argument("subproblem size must be positive");
  if (cfg.checkpoint_every < 1) throw std::invalid_argument("checkpoint cadence must be positive");
}

TrainState init_state(const TrainConfig& cfg) {
  TrainState s;
  s.policy = nn::init_policy(cfg.dims, derive_seed(cfg.seed, kPolicyStream));
  s.disc = nn::init_discriminator(cfg.dims, derive_seed(cfg.seed, kDiscStream));
  s.gen_opt.m = nn::map_policy<Matrix>(s.policy.params, zeros_like);
  s.gen_opt.v = s.gen_opt.m;
  s.disc_opt.m = nn::map_disc<Matrix>(s.disc.params, zeros_like);
  s.disc_opt.v = s.disc_opt.m;
  return s;
}

double tb_loss(double log_z, const std::vector<double>& log_pf,
               const std::vector<double>& log_pb, const std::vector<double>& scores) {
  if (log_pf.size() != scores.size() || log_pb.size() != scores.size() || scores.empty()) {
    throw std::invalid_argument("tb_loss needs aligned, non-empty inputs");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const double r = log_z + log_pf[k] - log_pb[k] - scores[k];
    s += r * r;
  }
  return s / static_cast<double>(scores.size());
}

double tb_loss(double log_z, const std::vector<Trajectory>& trajectories,
               const std::vector<double>& scores) {
  std::vector<double> pf, pb;
  for (const Trajectory& t : trajectories) {
    pf.push_back(t.log_pf);
    pb.push_back(t.log_pb);
  }
  return tb_loss(log_z, pf, pb, scores);
}

double disc_loss(const std::vector<double>& neg_rewards, const std::vector<double>& pos_rewards) {
  if (neg_rewards.empty() || pos_rewards.empty()) {
    throw std::invalid_argument("disc_loss needs negatives and positives");
  }
  double neg = 0.0, pos = 0.0;
  for (double r : neg_rewards) neg += r * r;
  for (double r : pos_rewards) pos += (1.0 - r) * (1.0 - r);
  return neg / static_cast<double>(neg_rewards.size()) +
         pos / static_cast<double>(pos_rewards.size());
}

Var tb_loss(Tape& t, Var log_z, const std::vector<Var>& log_pf,
            const std::vector<double>& scores) {
  if (log_pf.size() != scores.size() || scores.empty()) {
    throw std::invalid_argument("tb_loss needs aligned, non-empty inputs");
  }
  std::vector<Var> residuals;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    residuals.push_back(nn::add_scalar(t, nn::add(t, log_z, log_pf[k]), -scores[k]));
  }
  return nn::mean(t, nn::square(t, nn::concat_rows(t, residuals)));
}

Var disc_loss(Tape& t, const std::vector<Var>& neg_rewards, const std::vector<Var>& pos_rewards) {
  if (neg_rewards.empty() || pos_rewards.empty()) {
    throw std::invalid_argument("disc_loss needs negatives and positives");
  }
  Var neg = nn::mean(t, nn::square(t, nn::concat_rows(t, neg_rewards)));
  Var pos = nn::mean(
      t, nn::square(t, nn::add_scalar(t, nn::scale(t, nn::concat_rows(t, pos_rewards), -1.0), 1.0)));
  return nn::add(t, neg, pos);
}

PreparedInstance::PreparedInstance(Instance inst, std::size_t knn)
    : instance(std::move(inst)), dm(build_distance_matrix(instance)) {
  const std::size_t k = knn == 0 ? default_knn(instance.num_nodes()) : knn;
  graph = nn::build_graph_input(instance, dm, knn_sparsify(dm, k));
}

GeneratorUpdate generator_update(Policy& policy, Adam<PolicyParamsT<Matrix>>& opt,
                                 const std::vector<RewardedProblem>& problems,
                                 const TrainConfig& cfg, std::uint64_t seed) {
  if (problems.empty()) throw std::invalid_argument("generator_update needs problems");
  struct Part {
    PolicyParamsT<Matrix> grads;
    nn::RunningStats stats;
    double loss = 0.0;
    double mean_score = 0.0;
    std::vector<double> scores, log_pf;
  };
  std::vector<Part> parts(problems.size());
  const nn::DecodeMode mode = nn::DecodeMode::epsilon_greedy(cfg.epsilon);

  parallel_for(problems.size(), [&](std::size_t i) {
    const Problem& pr = problems[i].problem;
    Part& part = parts[i];
    Tape t;
    const PolicyParamsT<Var> v = nn::policy_leaves(t, policy.params, true);
    Var h = nn::gat_forward(t, v.gat, *pr.graph, policy.bn, nn::NormMode::kTraining,
                            policy.dims, &part.stats);
    Var logits = nn::decoder_logits(t, v.decoder, h, *pr.graph);
    const std::vector<Trajectory> trajs =
        nn::batch_rollouts(t.value(logits), *pr.instance, *pr.dm, *pr.graph, cfg.rollouts, mode,
                           derive_seed(seed, i));
    std::vector<Var> log_pf;
    double total_score = 0.0;
    // The target of log Z + log P_F: the reward plus log P_B.
    std::vector<double> targets;
    const auto add = [&](const Trajectory& traj) {
      const double score = nn::disc_score(*problems[i].rewards, traj);
      part.scores.push_back(score);
      targets.push_back(cfg.backward == BackwardPolicy::kRouteOrder
                            ? score + nn::route_order_log_pb(traj.solution)
                            : score);
      log_pf.push_back(nn::log_softmax_picks(t, logits, traj.choices));
      part.log_pf.push_back(traj.log_pf);
    };
    for (const Trajectory& traj : trajs) {
      add(traj);
      total_score += part.scores.back();
    }
    part.mean_score = total_score / static_cast<double>(trajs.size());
    if (problems[i].positives) {
      for (const Solution& sol : *problems[i].positives) {
        const auto traj = nn::replay_solution(t.value(logits), *pr.instance, *pr.graph, sol);
        if (traj) add(*traj);
      }
    }
    Var loss = tb_loss(t, v.log_z, log_pf, targets);
    part.loss = t.scalar(loss);
    if (!std::isfinite(part.loss)) return;
    t.backward(loss);
    part.grads = nn::map_policy<Matrix>(v, [&](Var x) { return t.grad(x); });
  });

  GeneratorUpdate out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!std::isfinite(parts[i].loss)) {
      throw DivergenceError(fmt::format(
          "non-finite TB loss on problem {} (log Z {}, log P_F {}, scores {})", i,
          policy.params.log_z(0, 0), summarize(parts[i].log_pf), summarize(parts[i].scores)));
    }
  }
  PolicyParamsT<Matrix> grads = std::move(parts[0].grads);
  auto visit = nn::detail::PolicyVisit{};
  for (std::size_t i = 1; i < parts.size(); ++i) accumulate_into(visit, grads, parts[i].grads);
  const double inv = 1.0 / static_cast<double>(parts.size());
  scale_all(visit, grads, inv);
  for (const Part& part : parts) {
    out.loss += part.loss * inv;
    out.mean_log_reward += part.mean_score * inv;
    nn::update_running(policy.bn, part.stats);
  }
  out.grad_norm = clip(visit, grads, cfg.clip_norm);
  const Matrix* log_z = &policy.params.log_z;
  adam_step(visit, policy.params, opt, grads, [&](const Matrix& p) {
    return &p == log_z ? cfg.lr_log_z : cfg.lr_generator;
  });
  return out;
}

TrainingPair make_training_pair(const Policy& policy, const Problem& problem,
                                const TrainConfig& cfg, std::uint64_t seed) {
  TrainingPair pair;
  const Matrix logits = nn::policy_logits(policy, *problem.graph, nn::NormMode::kInference);
  pair.negatives = nn::batch_rollouts(logits, *problem.instance, *problem.dm, *problem.graph,
                                      cfg.rollouts, nn::DecodeMode::epsilon_greedy(cfg.epsilon),
                                      derive_seed(seed, 0));
  const Trajectory& best = pair.negatives[nn::best_of(pair.negatives)];
  expert::HgsConfig ec = cfg.expert;
  ec.seed = derive_seed(seed, 1);
  const Solution refined = expert::expert_refine(*problem.instance, *problem.dm, best.solution,
                                                 cfg.subproblem_size, ec);
  pair.positives.push_back(nn::trajectory_from_solution(refined));
  return pair;
}

double tb_objective(const Policy& policy, const Problem& problem,
                    const std::vector<Trajectory>& trajectories, const std::vector<double>& scores,
                    PolicyParamsT<Matrix>* grads, nn::RunningStats* stats) {
  Tape t;
  const PolicyParamsT<Var> v = nn::policy_leaves(t, policy.params, grads != nullptr);
  Var h = nn::gat_forward(t, v.gat, *problem.graph, policy.bn, nn::NormMode::kTraining,
                          policy.dims, stats);
  Var logits = nn::decoder_logits(t, v.decoder, h, *problem.graph);
  std::vector<Var> log_pf;
  for (const Trajectory& traj : trajectories) {
    log_pf.push_back(nn::log_softmax_picks(t, logits, traj.choices));
  }
  Var loss = tb_loss(t, v.log_z, log_pf, scores);
  if (grads) {
    t.backward(loss);
    *grads = nn::map_policy<Matrix>(v, [&](Var x) { return t.grad(x); });
  }
  return t.scalar(loss);
}

double disc_objective(const Discriminator& disc, const Problem& problem,
                      const TrainingPair& pair, DiscParamsT<Matrix>* grads,
                      nn::RunningStats* stats, double* mean_neg, double* mean_pos) {
  const GraphInput& g = *problem.graph;
  std::vector<std::pair<int, int>> extra;
  auto collect = [&](const std::vector<Trajectory>& trajs) {
    for (const Trajectory& traj : trajs) {
      for (const auto& arc : traj.arcs()) {
        if (g.arc(arc.first, arc.second) < 0 &&
            std::find(extra.begin(), extra.end(), arc) == extra.end()) {
          extra.push_back(arc);
        }
      }
    }
  };
  collect(pair.negatives);
  collect(pair.positives);

  Tape t;
  const DiscParamsT<Var> v = nn::disc_leaves(t, disc.params, grads != nullptr);
  Var h = nn::gat_forward(t, v.gat, g, disc.bn, nn::NormMode::kTraining, disc.dims, stats);
  Var logm = nn::log_sigmoid(
      t, nn::disc_logits(t, v, h, g, extra, *problem.dm,
                         nn::normalization_scale(*problem.instance)));
  auto rewards = [&](const std::vector<Trajectory>& trajs, double* mean_out) {
    std::vector<Var> out;
    double total = 0.0;
    for (const Trajectory& traj : trajs) {
      out.push_back(nn::exp(t, nn::sum(t, nn::gather_rows(t, logm, arc_rows(g, extra, traj)))));
      total += t.scalar(out.back());
    }
    if (mean_out) *mean_out = total / static_cast<double>(trajs.size());
    return out;
  };
  const std::vector<Var> neg = rewards(pair.negatives, mean_neg);
  const std::vector<Var> pos = rewards(pair.positives, mean_pos);
  Var loss = disc_loss(t, neg, pos);
  const double value = t.scalar(loss);
  if (grads && std::isfinite(value)) {
    t.backward(loss);
    *grads = nn::map_disc<Matrix>(v, [&](Var x) { return t.grad(x); });
  }
  return value;
}

DiscriminatorUpdate discriminator_update(Discriminator& disc, Adam<DiscParamsT<Matrix>>& opt,
                                         const std::vector<Problem>& problems,
                                         const std::vector<TrainingPair>& pairs,
                                         const TrainConfig& cfg) {
  if (problems.empty() || problems.size() != pairs.size()) {
    throw std::invalid_argument("one training pair per problem expected");
  }
  struct Part {
    DiscParamsT<Matrix> grads;
    nn::RunningStats stats;
    double loss = 0.0, neg = 0.0, pos = 0.0;
  };
  std::vector<Part> parts(problems.size());
  parallel_for(problems.size(), [&](std::size_t i) {
    Part& part = parts[i];
    part.loss = disc_objective(disc, problems[i], pairs[i], &part.grads, &part.stats, &part.neg,
                               &part.pos);
  });

  DiscriminatorUpdate out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!std::isfinite(parts[i].loss)) {
      throw DivergenceError(fmt::format("non-finite discriminator loss on problem {} (R_neg {}, R_pos {})",
                                        i, parts[i].neg, parts[i].pos));
    }
  }
  DiscParamsT<Matrix> grads = std::move(parts[0].grads);
  auto visit = nn::detail::DiscVisit{};
  for (std::size_t i = 1; i < parts.size(); ++i) accumulate_into(visit, grads, parts[i].grads);
  const double inv = 1.0 / static_cast<double>(parts.size());
  scale_all(visit, grads, inv);
  for (const Part& part : parts) {
    out.loss += part.loss * inv;
    out.mean_neg_reward += part.neg * inv;
    out.mean_pos_reward += part.pos * inv;
    nn::update_running(disc.bn, part.stats);
  }
  clip(visit, grads, cfg.clip_norm);
  adam_step(visit, disc.params, opt, grads, [&](const Matrix&) { return cfg.lr_discriminator; });
  return out;
}

StepRecord train_step(TrainState& state, const std::vector<Problem>& batch,
                      const TrainConfig& cfg, std::uint64_t seed) {
  if (batch.empty()) throw std::invalid_argument("train_step needs a batch");
  StepRecord rec;
  rec.step = state.step;

  std::vector<EdgeProbMatrix> scores(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    scores[i] = nn::disc_forward(state.disc, *batch[i].instance, *batch[i].dm, *batch[i].graph,
                                 nn::NormMode::kInference);
  });
  std::vector<std::vector<Solution>> positives(batch.size());
  if (cfg.positive_tb) {
    parallel_for(batch.size(), [&](std::size_t i) {
      for (const Trajectory& traj :
           make_training_pair(state.policy, batch[i], cfg, derive_seed(seed, 2, i)).positives) {
        positives[i].push_back(traj.solution);
      }
    });
  }
  std::vector<RewardedProblem> rewarded;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    rewarded.push_back({batch[i], &scores[i], cfg.positive_tb ? &positives[i] : nullptr});
  }
  for (std::size_t u = 0; u < cfg.generator_updates; ++u) {
    const GeneratorUpdate g =
        generator_update(state.policy, state.gen_opt, rewarded, cfg, derive_seed(seed, 0, u));
    rec.tb_loss += g.loss / static_cast<double>(cfg.generator_updates);
  }

  std::vector<TrainingPair> pairs(batch.size());
  std::vector<double> greedy(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    pairs[i] = make_training_pair(state.policy, batch[i], cfg, derive_seed(seed, 1, i));
    greedy[i] = nn::rollout(state.policy, *batch[i].instance, *batch[i].dm, *batch[i].graph,
                            nn::DecodeMode::greedy(), 0)
                    .solution.total_cost;
  });
  const DiscriminatorUpdate d = discriminator_update(state.disc, state.disc_opt, batch, pairs, cfg);
  rec.disc_loss = d.loss;
  rec.mean_reward = d.mean_neg_reward;
  rec.mean_greedy_cost =
      std::accumulate(greedy.begin(), greedy.end(), 0.0) / static_cast<double>(greedy.size());

  state.history.push_back(rec);
  ++state.step;
  return rec;
}

std::vector<Instance> training_instances(const TrainConfig& cfg) {
  return io::generate_batch(cfg.n, cfg.instances_per_epoch, derive_seed(cfg.seed, kInstanceStream));
}

std::string checkpoint_name(std::size_t epoch) { return fmt::format("checkpoint-{:04d}.json", epoch); }

TrainState train(const TrainConfig& cfg, std::optional<TrainState> resume) {
  validate(cfg);
  TrainState state = resume ? std::move(*resume) : init_state(cfg);
  if (state.policy.dims != cfg.dims || state.disc.dims != cfg.dims) {
    throw std::invalid_argument("checkpoint dimensions differ from the configuration");
  }
  std::vector<PreparedInstance> data;
  for (Instance& inst : training_instances(cfg)) data.emplace_back(std::move(inst), cfg.knn);

  const bool write = !cfg.output_dir.empty();
  auto checkpoint = [&] {
    if (!write) return;
    std::filesystem::create_directories(cfg.output_dir);
    save_checkpoint(state, cfg.output_dir / checkpoint_name(state.epoch));
    write_training_log(state.history, cfg.output_dir / "train_log.json");
  };
  if (!resume) checkpoint();

  const std::size_t steps_per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  while (state.epoch < cfg.epochs) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, kShuffleStream, state.epoch));
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.index(k)]);

    std::size_t done = state.step - state.epoch * steps_per_epoch;
    for (std::size_t s = done; s < steps_per_epoch; ++s) {
      std::vector<Problem> batch;
      for (std::size_t k = s * cfg.batch_size; k < std::min(order.size(), (s + 1) * cfg.batch_size);
           ++k) {
        batch.push_back(data[order[k]].problem());
      }
      train_step(state, batch, cfg, derive_seed(cfg.seed, kStepStream, state.step));
    }
    ++state.epoch;
    if (state.epoch % cfg.checkpoint_every == 0 || state.epoch == cfg.epochs) checkpoint();
  }
  return state;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  json hist = json::array();
  for (const StepRecord& r : state.history) {
    hist.push_back({{"step", r.step}, {"tb_loss", r.tb_loss}, {"disc_loss", r.disc_loss},
                    {"mean_reward", r.mean_reward}, {"mean_greedy_cost", r.mean_greedy_cost}});
  }
  const json j{{"format", "vrpflow-checkpoint"},
               {"version", 1},
               {"epoch", state.epoch},
               {"step", state.step},
               {"policy", nn::detail::policy_to_json(state.policy)},
               {"discriminator", nn::detail::disc_to_json(state.disc)},
               {"generator_optimizer", adam_to_json(state.gen_opt, nn::detail::PolicyVisit{})},
               {"discriminator_optimizer", adam_to_json(state.disc_opt, nn::detail::DiscVisit{})},
               {"history", std::move(hist)}};
  io::write_text(path, j.dump());
}

TrainState load_checkpoint(const std::filesystem::path& path,
                           const std::optional<nn::Dims>& expected) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw std::runtime_error(fmt::format("{}: not a checkpoint ({})", path.string(), e.what()));
  }
  try {
    if (j.value("format", "") != "vrpflow-checkpoint") {
      throw std::runtime_error("missing checkpoint marker");
    }
    const nn::Dims pd = nn::detail::dims_from_json(j.at("policy").at("dims"));
    const nn::Dims dd = nn::detail::dims_from_json(j.at("discriminator").at("dims"));
    if (expected && (pd != *expected || dd != *expected)) {
      throw std::runtime_error(fmt::format(
          "dimension mismatch: stored L={} H={} D={} hidden={}, expected L={} H={} D={} hidden={}",
          pd.layers, pd.heads, pd.units, pd.mlp_hidden, expected->layers, expected->heads,
          expected->units, expected->mlp_hidden));
    }
    TrainState s;
    s.policy = nn::detail::policy_from_json(j.at("policy"));
    s.disc = nn::detail::disc_from_json(j.at("discriminator"));
    s.gen_opt.m = nn::map_policy<Matrix>(s.policy.params, zeros_like);
    s.gen_opt.v = s.gen_opt.m;
    s.disc_opt.m = nn::map_disc<Matrix>(s.disc.params, zeros_like);
    s.disc_opt.v = s.disc_opt.m;
    adam_from_json(j.at("generator_optimizer"), s.gen_opt, nn::detail::PolicyVisit{}, "generator");
    adam_from_json(j.at("discriminator_optimizer"), s.disc_opt, nn::detail::DiscVisit{},
                   "discriminator");
    s.epoch = j.at("epoch").get<std::size_t>();
    s.step = j.at("step").get<std::size_t>();
    for (const json& r : j.at("history")) {
      s.history.push_back({r.at("step").get<std::size_t>(), r.at("tb_loss").get<double>(),
                           r.at("disc_loss").get<double>(), r.at("mean_reward").get<double>(),
                           r.at("mean_greedy_cost").get<double>()});
    }
    return s;
  } catch (const json::exception& e) {
    throw std::runtime_error(fmt::format("{}: malformed checkpoint ({})", path.string(), e.what()));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_training_log(const std::vector<StepRecord>& history, const std::filesystem::path& path) {
  json arr = json::array();
  for (const StepRecord& r : history) {
    arr.push_back({{"step", r.step}, {"tb_loss", r.tb_loss}, {"disc_loss", r.disc_loss},
                   {"mean_reward", r.mean_reward}, {"mean_greedy_cost", r.mean_greedy_cost}});
  }
  io::write_text(path, arr.dump(1));
}

std::uint64_t parameter_hash(const Policy& policy) {
  std::uint64_t h = kFnvOffset;
  Policy copy = policy;
  nn::for_each_policy_tensor([&](Matrix& m) { hash_matrix(h, m); }, copy.params);
  hash_running(h, policy.bn);
  return h;
}

std::uint64_t parameter_hash(const Discriminator& disc) {
  std::uint64_t h = kFnvOffset;
  Discriminator copy = disc;
  nn::for_each_disc_tensor([&](Matrix& m) { hash_matrix(h, m); }, copy.params);
  hash_running(h, disc.bn);
  return h;
}

std::uint64_t state_hash(const TrainState& state) {
  std::uint64_t h = kFnvOffset;
  const std::uint64_t parts[2] = {parameter_hash(state.policy), parameter_hash(state.disc)};
  hash_bytes(h, parts, sizeof(parts));
  TrainState copy = state;
  nn::for_each_policy_tensor([&](Matrix& m) { hash_matrix(h, m); }, copy.gen_opt.m);
  nn::for_each_policy_tensor([&](Matrix& m) { hash_matrix(h, m); }, copy.gen_opt.v);
  nn::for_each_disc_tensor([&](Matrix& m) { hash_matrix(h, m); }, copy.disc_opt.m);
  nn::for_each_disc_tensor([&](Matrix& m) { hash_matrix(h, m); }, copy.disc_opt.v);
  const std::uint64_t counters[4] = {state.gen_opt.t, state.disc_opt.t, state.epoch, state.step};
  hash_bytes(h, counters, sizeof(counters));
  for (const StepRecord& r : state.history) {
    const double vals[4] = {r.tb_loss, r.disc_loss, r.mean_reward, r.mean_greedy_cost};
    hash_bytes(h, vals, sizeof(vals));
  }
  return h;
}

}  // namespace vrpflow::training
