#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "vrpflow/bench.hpp"
#include "vrpflow/feasibility.hpp"
#include "vrpflow/io.hpp"
#include "vrpflow/training.hpp"

namespace {

using namespace vrpflow;

constexpr int kSpecExit = 2;
constexpr int kArtifactExit = 3;

struct BenchOverrides {
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string output;
  std::string checkpoint;
  double time_budget = 0.0;
};

void add_overrides(CLI::App* cmd, BenchOverrides& o) {
  cmd->add_option("--seed", o.seed, "Override the spec seed")->each([&](const std::string&) {
    o.has_seed = true;
  });
  cmd->add_option("--out", o.output, "Override the output CSV path");
  cmd->add_option("--checkpoint", o.checkpoint, "Override the policy checkpoint");
  cmd->add_option("--time-budget", o.time_budget, "Override the per-instance time budget (s)")
      ->check(CLI::PositiveNumber);
}

bench::BenchSpec apply(bench::BenchSpec spec, const BenchOverrides& o) {
  if (o.has_seed) spec.seed = o.seed;
  if (!o.output.empty()) spec.output_csv = o.output;
  if (!o.checkpoint.empty()) spec.checkpoint = o.checkpoint;
  if (o.time_budget > 0) spec.time_budget_s = o.time_budget;
  return spec;
}

int run_gen(std::size_t n, std::size_t count, std::uint64_t seed, const std::string& out) {
  std::filesystem::create_directories(out);
  for (const Instance& inst : io::generate_batch(n, count, seed)) {
    const auto path = std::filesystem::path(out) / (inst.name() + ".vrp");
    io::write_text(path, io::write_vrplib(inst));
    fmt::print("{}\n", path.string());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vrpflow: CVRP solvers, adversarial GFlowNet training and benchmarks"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Write synthetic uniform instances as VRPLIB files");
  std::size_t gen_n = 20, gen_count = 10;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "instances";
  gen->add_option("--n", gen_n, "Customers per instance")->check(CLI::PositiveNumber);
  gen->add_option("--count", gen_count, "Number of instances")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Master seed");
  gen->add_option("--out", gen_out, "Output directory");

  // train
  auto* train = app.add_subcommand("train", "Adversarial training on synthetic instances");
  training::TrainConfig tc;
  std::string resume;
  train->add_option("--n", tc.n, "Customers per training instance");
  train->add_option("--instances", tc.instances_per_epoch, "Instances per epoch");
  train->add_option("--epochs", tc.epochs, "Epochs");
  train->add_option("--batch", tc.batch_size, "Instances per step");
  train->add_option("--rollouts", tc.rollouts, "Rollouts per instance (N-hat)");
  train->add_option("--epsilon", tc.epsilon, "Epsilon-greedy exploration rate");
  train->add_option("--ratio", tc.generator_updates, "Generator updates per discriminator update");
  train->add_option("--lr", tc.lr_generator, "Generator learning rate");
  train->add_option("--lr-disc", tc.lr_discriminator, "Discriminator learning rate");
  train->add_option("--lr-logz", tc.lr_log_z, "log Z learning rate");
  train->add_option("--layers", tc.dims.layers, "GAT layers");
  train->add_option("--heads", tc.dims.heads, "Attention heads");
  train->add_option("--units", tc.dims.units, "Embedding width");
  train->add_option("--hidden", tc.dims.mlp_hidden, "Edge MLP hidden width");
  train->add_option("--knn", tc.knn, "k-NN size (0: default)");
  train->add_option("--m", tc.subproblem_size, "Expert subproblem size");
  train->add_option("--expert-time", tc.expert.time_budget_s, "Expert budget per instance (s)");
  train->add_option("--expert-iterations", tc.expert.max_iterations, "Expert generations");
  train->add_option("--checkpoint-every", tc.checkpoint_every, "Epochs between checkpoints");
  train->add_option("--seed", tc.seed, "Master seed");
  train->add_flag("--positive-tb", tc.positive_tb, "Add expert positives to the TB loss");
  train->add_option("--backward", tc.backward, "Backward policy: tree | route-order")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, training::BackwardPolicy>{
              {"tree", training::BackwardPolicy::kTree},
              {"route-order", training::BackwardPolicy::kRouteOrder}},
          CLI::ignore_case));
  std::string train_out = "run";
  train->add_option("--out", train_out, "Output directory for checkpoints and the log");
  train->add_option("--resume", resume, "Checkpoint to continue from");

  // solve
  auto* solve = app.add_subcommand("solve", "Solve one instance with one method");
  std::string solve_instance, solve_method = "hgs", solve_out;
  bench::BenchSpec solve_settings;
  solve->add_option("instance", solve_instance, "VRPLIB/TSPLIB file")->required();
  solve->add_option("--method", solve_method,
                    "neural-greedy | neural-best-of(N) | hgs | expert-refine(m) | exact");
  solve->add_option("--checkpoint", solve_settings.checkpoint, "Policy checkpoint");
  solve->add_option("--time-budget", solve_settings.time_budget_s, "Time budget (s)")
      ->check(CLI::PositiveNumber);
  solve->add_option("--knn", solve_settings.knn, "k-NN size (0: default)");
  solve->add_option("--seed", solve_settings.seed, "Seed");
  solve->add_option("--out", solve_out, "Write the solution in .sol format");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Run a benchmark spec (JSON)");
  std::string bench_config;
  BenchOverrides bench_over;
  bench_cmd->add_option("config", bench_config, "Spec file")->required();
  add_overrides(bench_cmd, bench_over);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Repeat a benchmark over one parameter");
  std::string sweep_config, sweep_param = "rollouts";
  std::vector<std::size_t> sweep_values;
  BenchOverrides sweep_over;
  sweep_cmd->add_option("config", sweep_config, "Spec file")->required();
  sweep_cmd->add_option("--param", sweep_param, "rollouts | knn | m");
  sweep_cmd->add_option("--values", sweep_values, "Comma-separated values")
      ->required()
      ->delimiter(',');
  add_overrides(sweep_cmd, sweep_over);

  // report
  auto* report = app.add_subcommand("report", "Merge result CSVs into a method x size table");
  std::vector<std::string> report_files;
  report->add_option("csv", report_files, "Result CSV files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kSpecExit;
  }

  try {
    if (*gen) return run_gen(gen_n, gen_count, gen_seed, gen_out);

    if (*train) {
      tc.output_dir = train_out;
      std::optional<training::TrainState> start;
      if (!resume.empty()) {
        if (!std::filesystem::is_regular_file(resume)) {
          fmt::print(stderr, "error: checkpoint {} not found\n", resume);
          return kArtifactExit;
        }
        start = training::load_checkpoint(resume, tc.dims);
      }
      const auto t0 = std::chrono::steady_clock::now();
      const training::TrainState s = training::train(tc, std::move(start));
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (!s.history.empty()) {
        const auto& last = s.history.back();
        fmt::print("epochs {} steps {} | last step: tb {:.4f} disc {:.4f} reward {:.4g} greedy {:.4f}\n",
                   s.epoch, s.step, last.tb_loss, last.disc_loss, last.mean_reward,
                   last.mean_greedy_cost);
      }
      fmt::print("trained in {:.1f}s, checkpoints in {}\n", secs, train_out);
      return 0;
    }

    if (*solve) {
      Instance inst = [&] {
        try {
          return io::load_instance(solve_instance);
        } catch (const std::exception& e) {
          throw bench::MissingArtifact(e.what());
        }
      }();
      const bench::Method method = bench::parse_method(solve_method);
      const auto t0 = std::chrono::steady_clock::now();
      const Solution sol = bench::solve_one(solve_settings, method, inst, solve_settings.seed);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const bool ok = check_feasible(inst, sol).feasible();
      fmt::print("{} {} obj {:.6f} routes {} time {:.3f}s {}\n", inst.name(), method.name(),
                 sol.total_cost, sol.num_routes(), secs, ok ? "feasible" : "INFEASIBLE");
      if (!solve_out.empty()) io::write_text(solve_out, io::write_solution(sol));
      return ok ? 0 : 1;
    }

    if (*bench_cmd) {
      const bench::BenchSpec spec = apply(bench::load_spec(bench_config), bench_over);
      const bench::BenchResult r = bench::run_bench(spec);
      fmt::print("{}", bench::report_table(r.all()));
      if (!spec.output_csv.empty()) fmt::print("results in {}\n", spec.output_csv.string());
      return 0;
    }

    if (*sweep_cmd) {
      const bench::BenchSpec spec = apply(bench::load_spec(sweep_config), sweep_over);
      const auto records =
          bench::sweep(spec, bench::parse_sweep_parameter(sweep_param), sweep_values);
      if (spec.output_csv.empty()) fmt::print("{}", bench::format_sweep_csv(records));
      else fmt::print("results in {}\n", spec.output_csv.string());
      return 0;
    }

    if (*report) {
      std::vector<std::filesystem::path> paths(report_files.begin(), report_files.end());
      fmt::print("{}", bench::report_table(paths));
      return 0;
    }
  } catch (const bench::SpecError& e) {
    fmt::print(stderr, "spec error: {}\n", e.what());
    return kSpecExit;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "spec error: {}\n", e.what());
    return kSpecExit;
  } catch (const bench::MissingArtifact& e) {
    fmt::print(stderr, "missing artifact: {}\n", e.what());
    return kArtifactExit;
  } catch (const io::ParseError& e) {
    fmt::print(stderr, "parse error: {}\n", e.what());
    return kSpecExit;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
