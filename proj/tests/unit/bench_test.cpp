#include <cmath>
#include <filesystem>
#include <map>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "vrpflow/bench.hpp"
#include "vrpflow/io.hpp"
#include "vrpflow/training.hpp"

namespace vrpflow {
namespace {

using bench::BenchSpec;
using bench::Method;

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("vrpflow_bench_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// An untrained checkpoint with small networks.
std::filesystem::path small_checkpoint() {
  static const std::filesystem::path path = [] {
    training::TrainConfig cfg;
    cfg.dims = nn::Dims{2, 2, 8, 16};
    cfg.epochs = 0;
    cfg.instances_per_epoch = 1;
    cfg.output_dir = scratch_dir("checkpoint");
    training::train(cfg);
    return cfg.output_dir / training::checkpoint_name(0);
  }();
  return path;
}

BenchSpec synthetic_spec(std::size_t n, std::size_t count, std::vector<std::string> methods) {
  BenchSpec s;
  s.synthetic = bench::SyntheticSet{n, count, 5};
  for (const auto& m : methods) s.methods.push_back(bench::parse_method(m));
  s.time_budget_s = 5.0;
  return s;
}

std::map<std::string, double> objectives(const std::vector<io::RunRecord>& runs,
                                         const std::string& method) {
  std::map<std::string, double> out;
  for (const auto& r : runs) {
    if (r.method == method) out[r.instance] = r.objective;
  }
  return out;
}

TEST(Gap, Values) {
  EXPECT_DOUBLE_EQ(bench::gap_percent(3.5, 3.5), 0.0);
  EXPECT_DOUBLE_EQ(bench::gap_percent(8.0, 4.0), 100.0);
  EXPECT_DOUBLE_EQ(std::round(bench::gap_percent(128.135544, 131.771685) * 100.0) / 100.0, -2.76);
  EXPECT_THROW(bench::gap_percent(1.0, 0.0), bench::SpecError);
  EXPECT_THROW(bench::gap_percent(1.0, -2.0), bench::SpecError);
}

TEST(Method, NamesRoundTrip) {
  for (const std::string name : {"neural-greedy", "neural-best-of(100)", "hgs", "expert-refine(50)",
                                 "exact"}) {
    EXPECT_EQ(bench::parse_method(name).name(), name);
  }
  EXPECT_EQ(bench::parse_method("neural-best-of").rollouts, 100u);
  EXPECT_EQ(bench::parse_method("expert-refine").subproblem_size, 100u);
  EXPECT_THROW(bench::parse_method("lkh3"), bench::SpecError);
  EXPECT_THROW(bench::parse_method("neural-best-of(x)"), bench::SpecError);
  EXPECT_THROW(bench::parse_method("neural-best-of(0)"), bench::SpecError);
  EXPECT_THROW(bench::parse_method("hgs(3)"), bench::SpecError);
}

TEST(Spec, ParsesAllFields) {
  const BenchSpec s = bench::parse_spec(R"js({
    "instances": {"n": 20, "count": 3, "seed": 9},
    "methods": ["hgs", "neural-best-of(10)"],
    "reference": {"n20": 4.5, "uniform-n20-s1": 4.0},
    "time_budget_s": 2.5, "checkpoint": "c.json", "knn": 7, "seed": 4, "output": "o.csv"})js");
  ASSERT_TRUE(s.synthetic);
  EXPECT_EQ(s.synthetic->n, 20u);
  EXPECT_EQ(s.synthetic->count, 3u);
  EXPECT_EQ(s.synthetic->seed, 9u);
  ASSERT_EQ(s.methods.size(), 2u);
  EXPECT_EQ(s.methods[1].rollouts, 10u);
  EXPECT_TRUE(s.gaps);
  EXPECT_EQ(s.reference_by_size.at(20), 4.5);
  EXPECT_EQ(s.reference_by_instance.at("uniform-n20-s1"), 4.0);
  EXPECT_EQ(s.time_budget_s, 2.5);
  EXPECT_EQ(s.checkpoint, "c.json");
  EXPECT_EQ(s.knn, 7u);
  EXPECT_EQ(s.seed, 4u);
  EXPECT_EQ(s.output_csv, "o.csv");

  const BenchSpec g = bench::parse_spec(R"({"instances": "data/*.vrp", "methods": ["exact"],
                                            "reference": "exact"})");
  EXPECT_EQ(g.glob, "data/*.vrp");
  ASSERT_TRUE(g.reference_method);
  EXPECT_EQ(g.reference_method->kind, Method::kExact);
}

TEST(Spec, Rejections) {
  EXPECT_THROW(bench::parse_spec("not json"), bench::SpecError);
  EXPECT_THROW(bench::parse_spec(R"({"instances": {"n": 5}, "methods": []})"), bench::SpecError);
  EXPECT_THROW(bench::parse_spec(R"({"methods": ["hgs"]})"), bench::SpecError);
  EXPECT_THROW(bench::parse_spec(R"({"instances": {"n": 5}, "methods": ["hgs"], "gaps": true})"),
               bench::SpecError);
  EXPECT_THROW(bench::parse_spec(R"({"instances": {"n": 5}, "methods": ["hgs"], "colour": 1})"),
               bench::SpecError);
  EXPECT_THROW(bench::parse_spec(R"({"instances": {"n": 5}, "methods": ["hgs"], "reference": {"n5": -1}})"),
               bench::SpecError);
  BenchSpec both = synthetic_spec(5, 1, {"hgs"});
  both.glob = "x/*.vrp";
  EXPECT_THROW(bench::validate(both), bench::SpecError);
}

TEST(RunBench, ExactAgainstItselfHasZeroGap) {
  BenchSpec s = synthetic_spec(6, 4, {"exact", "hgs"});
  s.gaps = true;
  s.reference_method = bench::parse_method("exact");
  const auto r = bench::run_bench(s);
  ASSERT_EQ(r.runs.size(), 8u);
  for (const auto& rec : r.runs) {
    ASSERT_TRUE(rec.gap_pct);
    if (rec.method == "exact") EXPECT_EQ(*rec.gap_pct, 0.0);
    if (rec.method == "hgs") EXPECT_GE(*rec.gap_pct, -1e-9);
    EXPECT_GE(rec.time_s, 0.0);
  }
  ASSERT_EQ(r.aggregates.size(), 2u);
  EXPECT_EQ(r.aggregates[0].instance, "mean-n6");
  EXPECT_EQ(*r.aggregates[0].gap_pct, 0.0);
}

TEST(RunBench, FixedReferenceTable) {
  BenchSpec s = synthetic_spec(6, 2, {"exact"});
  s.gaps = true;
  s.reference_by_size[6] = 1.0;
  const auto r = bench::run_bench(s);
  for (const auto& rec : r.runs) EXPECT_DOUBLE_EQ(*rec.gap_pct, 100.0 * (rec.objective - 1.0));
  s.reference_by_size = {{7, 1.0}};
  EXPECT_THROW(bench::run_bench(s), bench::SpecError);
}

TEST(RunBench, ExactRefusesLargeInstances) {
  EXPECT_THROW(bench::run_bench(synthetic_spec(12, 1, {"exact"})), bench::SpecError);
}

TEST(RunBench, BestOfNeverWorseThanGreedy) {
  BenchSpec s = synthetic_spec(20, 10, {"neural-greedy", "neural-best-of(100)"});
  s.checkpoint = small_checkpoint();
  const auto r = bench::run_bench(s);
  const auto greedy = objectives(r.runs, "neural-greedy");
  const auto best = objectives(r.runs, "neural-best-of(100)");
  ASSERT_EQ(greedy.size(), 10u);
  for (const auto& [inst, g] : greedy) EXPECT_LE(best.at(inst), g) << inst;
  EXPECT_LE(r.aggregates[1].objective, r.aggregates[0].objective);
}

TEST(RunBench, ObjectivesReproduce) {
  BenchSpec s = synthetic_spec(15, 3, {"neural-best-of(20)", "hgs", "expert-refine(5)"});
  s.checkpoint = small_checkpoint();
  s.time_budget_s = 100.0;
  const auto a = bench::run_bench(s), b = bench::run_bench(s);
  ASSERT_EQ(a.runs.size(), b.runs.size());
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    EXPECT_EQ(a.runs[i].objective, b.runs[i].objective);
    EXPECT_EQ(a.runs[i].seed, b.runs[i].seed);
  }
}

TEST(RunBench, ExpertRefineWithoutCheckpointUsesSweep) {
  const auto r = bench::run_bench(synthetic_spec(30, 2, {"expert-refine(10)", "hgs"}));
  EXPECT_EQ(r.runs.size(), 4u);
}

TEST(RunBench, MissingArtifacts) {
  BenchSpec s = synthetic_spec(10, 1, {"neural-greedy"});
  EXPECT_THROW(bench::run_bench(s), bench::MissingArtifact);
  s.checkpoint = "/nonexistent/c.json";
  EXPECT_THROW(bench::run_bench(s), bench::MissingArtifact);
  BenchSpec g;
  g.glob = scratch_dir("empty").string() + "/*.vrp";
  g.methods = {bench::parse_method("hgs")};
  EXPECT_THROW(bench::run_bench(g), bench::MissingArtifact);
  EXPECT_THROW(bench::load_spec("/nonexistent/spec.json"), bench::MissingArtifact);
}

TEST(RunBench, GlobSourceAndCsvOutput) {
  const auto dir = scratch_dir("glob");
  for (std::uint64_t seed : {1, 2}) {
    io::write_text(dir / fmt::format("i{}.vrp", seed), io::write_vrplib(io::generate_uniform(6, seed)));
  }
  io::write_text(dir / "notes.txt", "ignored");
  BenchSpec s;
  s.glob = (dir / "*.vrp").string();
  s.methods = {bench::parse_method("exact")};
  s.output_csv = dir / "out.csv";
  const auto r = bench::run_bench(s);
  EXPECT_EQ(r.runs.size(), 2u);
  const auto back = io::read_results_csv(s.output_csv);
  EXPECT_EQ(back.size(), 3u);
}

TEST(Sweep, SingleValueMatchesRunBench) {
  BenchSpec s = synthetic_spec(12, 3, {"neural-best-of(10)"});
  s.checkpoint = small_checkpoint();
  const auto direct = bench::run_bench(s);
  const auto sw = bench::sweep(s, bench::SweepParameter::kRollouts, {10});
  ASSERT_EQ(sw.size(), direct.runs.size() + direct.aggregates.size());
  for (std::size_t i = 0; i < direct.runs.size(); ++i) {
    EXPECT_EQ(sw[i].record.objective, direct.runs[i].objective);
    EXPECT_FALSE(sw[i].aggregate);
  }
  EXPECT_TRUE(sw.back().aggregate);
}

TEST(Sweep, RolloutsNonIncreasing) {
  BenchSpec s = synthetic_spec(20, 6, {"neural-best-of"});
  s.checkpoint = small_checkpoint();
  const auto sw = bench::sweep(s, bench::SweepParameter::kRollouts, {10, 30, 100});
  std::map<std::size_t, std::map<std::string, double>> by_value;
  for (const auto& rec : sw) by_value[rec.value][rec.record.instance] = rec.record.objective;
  for (const auto& [inst, v] : by_value[10]) {
    EXPECT_LE(by_value[30][inst], v);
    EXPECT_LE(by_value[100][inst], by_value[30][inst]);
  }
}

TEST(Sweep, KnnAggregateRowCount) {
  BenchSpec s = synthetic_spec(200, 1, {"neural-greedy", "neural-best-of(2)"});
  s.checkpoint = small_checkpoint();
  const auto sw = bench::sweep(s, bench::SweepParameter::kKnn, {20, 40});
  std::size_t aggregates = 0;
  for (const auto& rec : sw) aggregates += rec.aggregate;
  EXPECT_EQ(aggregates, 2u * s.methods.size());
  const std::string csv = bench::format_sweep_csv(sw);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), bench::kSweepHeader);
  EXPECT_NE(csv.find("knn,40,mean-n200,neural-greedy,"), std::string::npos);
}

TEST(Sweep, RejectsBadValues) {
  const BenchSpec s = synthetic_spec(6, 1, {"hgs"});
  EXPECT_THROW(bench::sweep(s, bench::SweepParameter::kKnn, {}), bench::SpecError);
  EXPECT_THROW(bench::sweep(s, bench::SweepParameter::kKnn, {0}), bench::SpecError);
  EXPECT_THROW(bench::parse_sweep_parameter("lr"), bench::SpecError);
  EXPECT_EQ(bench::parse_sweep_parameter("m"), bench::SweepParameter::kSubproblemSize);
}

io::RunRecord agg(std::size_t n, const std::string& method, double obj, std::optional<double> gap) {
  return {bench::aggregate_name(n), method, obj, gap, 0.25, 1};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    out.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  return out;
}

TEST(Report, OneMethodOneSize) {
  const auto t = lines(bench::report_table(std::vector<io::RunRecord>{
      agg(20, "hgs", 6.1234567, -1.234), {"uniform-n20-s1", "hgs", 9.0, std::nullopt, 1.0, 1}}));
  ASSERT_EQ(t.size(), 3u);  // header, rule, one row
  EXPECT_NE(t[0].find("N=20 Obj"), std::string::npos);
  EXPECT_NE(t[2].find("6.123457"), std::string::npos);
  EXPECT_NE(t[2].find("-1.23"), std::string::npos);
  EXPECT_NE(t[2].find("0.250"), std::string::npos);
}

TEST(Report, MissingCellsAndOrder) {
  const auto t = lines(bench::report_table(std::vector<io::RunRecord>{
      agg(50, "exact", 5.0, 0.0), agg(20, "hgs", 4.0, std::nullopt), agg(20, "neural-greedy", 4.5, 2.0),
      agg(50, "neural-best-of(100)", 5.2, 1.0), agg(20, "neural-best-of(10)", 4.4, 1.5)}));
  ASSERT_EQ(t.size(), 7u);
  EXPECT_LT(t[0].find("N=20"), t[0].find("N=50"));
  EXPECT_EQ(t[2].rfind("neural-greedy", 0), 0u);
  EXPECT_EQ(t[3].rfind("neural-best-of(10)", 0), 0u);
  EXPECT_EQ(t[4].rfind("neural-best-of(100)", 0), 0u);
  EXPECT_EQ(t[5].rfind("hgs", 0), 0u);
  EXPECT_EQ(t[6].rfind("exact", 0), 0u);
  EXPECT_NE(t[5].find("−"), std::string::npos);  // hgs has no gap and no N=50 cell
}

TEST(Report, FromFilesAndDeterministic) {
  const auto dir = scratch_dir("report");
  io::write_results_csv({agg(20, "hgs", 4.0, 0.0)}, dir / "a.csv");
  io::write_results_csv({agg(50, "hgs", 6.0, 0.0)}, dir / "b.csv");
  const std::string t = bench::report_table(std::vector<std::filesystem::path>{dir / "a.csv", dir / "b.csv"});
  EXPECT_EQ(t, bench::report_table(std::vector<std::filesystem::path>{dir / "a.csv", dir / "b.csv"}));
  EXPECT_EQ(lines(t).size(), 3u);
  io::write_text(dir / "bad.csv", "nonsense\n");
  EXPECT_THROW(bench::report_table(std::vector<std::filesystem::path>{dir / "bad.csv"}), io::ParseError);
  EXPECT_THROW(bench::report_table(std::vector<std::filesystem::path>{dir / "none.csv"}),
               bench::MissingArtifact);
}

}  // namespace
}  // namespace vrpflow
