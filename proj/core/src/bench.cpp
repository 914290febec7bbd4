#include "vrpflow/bench.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <chrono>
#include <charconv>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "vrpflow/exact.hpp"
#include "vrpflow/hgs.hpp"
#include "vrpflow/decomposition.hpp"
#include "vrpflow/rng.hpp"
#include "vrpflow/rollout.hpp"
#include "vrpflow/sparse_graph.hpp"
#include "vrpflow/training.hpp"

namespace vrpflow::bench {

using json = nlohmann::json;

namespace {

constexpr std::string_view kAggregatePrefix = "mean-";

std::optional<std::size_t> parse_count(std::string_view s) {
  std::size_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

// "name" or "name(count)".
std::pair<std::string_view, std::optional<std::size_t>> split_call(std::string_view text) {
  const auto open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')') return {text, std::nullopt};
  const auto inner = text.substr(open + 1, text.size() - open - 2);
  const auto count = parse_count(inner);
  if (!count) throw SpecError(fmt::format("bad count in method '{}'", text));
  return {text.substr(0, open), count};
}

std::vector<std::filesystem::path> expand_glob(const std::string& pattern) {
  const std::filesystem::path p(pattern);
  const std::filesystem::path dir = p.has_parent_path() ? p.parent_path() : ".";
  const std::string name = p.filename().string();
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw MissingArtifact(fmt::format("no directory {} for '{}'", dir.string(), pattern));
  }
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    if (fnmatch(name.c_str(), e.path().filename().c_str(), 0) == 0) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw MissingArtifact(fmt::format("no instance files match '{}'", pattern));
  return out;
}

std::vector<Instance> load_instances(const BenchSpec& spec) {
  if (spec.synthetic) {
    return io::generate_batch(spec.synthetic->n, spec.synthetic->count, spec.synthetic->seed);
  }
  std::vector<Instance> out;
  for (const auto& path : expand_glob(spec.glob)) {
    try {
      out.push_back(io::load_instance(path));
    } catch (const io::ParseError& e) {
      throw MissingArtifact(fmt::format("{}: {}", path.string(), e.what()));
    } catch (const std::runtime_error& e) {
      throw MissingArtifact(e.what());
    }
  }
  return out;
}

nn::Policy load_policy(const std::filesystem::path& path) {
  std::error_code ec;
  if (path.empty()) throw MissingArtifact("neural methods need a checkpoint");
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw MissingArtifact(fmt::format("checkpoint {} not found", path.string()));
  }
  try {
    return training::load_checkpoint(path).policy;
  } catch (const std::runtime_error& e) {
    throw MissingArtifact(e.what());
  }
}

struct Solver {
  const BenchSpec& spec;
  const std::optional<nn::Policy>& policy;

  nn::GraphInput graph(const Instance& inst, const DistanceMatrix& dm) const {
    const std::size_t k = spec.knn == 0 ? default_knn(inst.num_nodes())
                                        : std::min(spec.knn, inst.num_nodes() - 1);
    return nn::build_graph_input(inst, dm, knn_sparsify(dm, k));
  }

  Solution greedy(const Instance& inst, const DistanceMatrix& dm, std::uint64_t seed) const {
    return nn::rollout(*policy, inst, dm, graph(inst, dm), nn::DecodeMode::greedy(), seed)
        .solution;
  }

  expert::HgsConfig hgs_config(std::uint64_t seed) const {
    expert::HgsConfig c;
    c.time_budget_s = spec.time_budget_s;
    c.seed = seed;
    return c;
  }

  Solution solve(const Method& m, const Instance& inst, std::uint64_t seed) const {
    const DistanceMatrix dm = build_distance_matrix(inst);
    switch (m.kind) {
      case Method::kNeuralGreedy:
        return greedy(inst, dm, seed);
      case Method::kNeuralBestOf: {
        const nn::GraphInput g = graph(inst, dm);
        const nn::Matrix logits = nn::policy_logits(*policy, g, nn::NormMode::kInference);
        std::vector<nn::Trajectory> all;
        all.push_back(nn::rollout(logits, inst, dm, g, nn::DecodeMode::greedy(), seed));
        auto sampled =
            nn::batch_rollouts(logits, inst, dm, g, m.rollouts, nn::DecodeMode::sample(), seed);
        std::move(sampled.begin(), sampled.end(), std::back_inserter(all));
        return all[nn::best_of(all)].solution;
      }
      case Method::kHgs:
        return expert::hgs_solve(inst, dm, std::nullopt, hgs_config(seed));
      case Method::kExpertRefine: {
        const Solution start =
            policy ? greedy(inst, dm, seed) : expert::initial_solution(inst, dm, seed);
        return expert::expert_refine(inst, dm, start, m.subproblem_size, hgs_config(seed));
      }
      case Method::kExact:
        if (inst.num_customers() > kExactMaxCustomers) {
          throw SpecError(fmt::format("exact needs at most {} customers, {} has {}",
                                      kExactMaxCustomers, inst.name(), inst.num_customers()));
        }
        return exact_solve_small(inst, dm);
    }
    throw SpecError("unknown method");
  }
};

std::string format_number(double v) { return fmt::format("{}", v); }

}  // namespace

double gap_percent(double obj, double ref) {
  if (!(ref > 0.0)) throw SpecError(fmt::format("reference objective {} is not positive", ref));
  return 100.0 * (obj - ref) / ref;
}

std::string Method::name() const {
  switch (kind) {
    case kNeuralGreedy:
      return "neural-greedy";
    case kNeuralBestOf:
      return fmt::format("neural-best-of({})", rollouts);
    case kHgs:
      return "hgs";
    case kExpertRefine:
      return fmt::format("expert-refine({})", subproblem_size);
    case kExact:
      return "exact";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  const auto [base, count] = split_call(text);
  Method m;
  if (base == "neural-greedy" || base == "hgs" || base == "exact") {
    if (count) throw SpecError(fmt::format("method '{}' takes no count", base));
    m.kind = base == "hgs" ? Method::kHgs : base == "exact" ? Method::kExact : Method::kNeuralGreedy;
  } else if (base == "neural-best-of") {
    m.kind = Method::kNeuralBestOf;
    if (count) m.rollouts = *count;
  } else if (base == "expert-refine") {
    m.kind = Method::kExpertRefine;
    if (count) m.subproblem_size = *count;
  } else {
    throw SpecError(fmt::format("unknown method '{}'", text));
  }
  if (m.rollouts == 0 || m.subproblem_size == 0) {
    throw SpecError(fmt::format("method '{}' needs a positive count", text));
  }
  return m;
}

void validate(const BenchSpec& spec) {
  if (spec.synthetic.has_value() == !spec.glob.empty()) {
    throw SpecError("exactly one instance source (synthetic set or file glob) is required");
  }
  if (spec.synthetic && (spec.synthetic->n == 0 || spec.synthetic->count == 0)) {
    throw SpecError("synthetic sets need positive n and count");
  }
  if (spec.methods.empty()) throw SpecError("at least one method is required");
  if (spec.gaps && !spec.reference_method && spec.reference_by_instance.empty() &&
      spec.reference_by_size.empty()) {
    throw SpecError("gaps requested without a reference");
  }
  if (spec.reference_method &&
      (!spec.reference_by_instance.empty() || !spec.reference_by_size.empty())) {
    throw SpecError("reference is either a method or a table, not both");
  }
  for (const auto& [name, v] : spec.reference_by_instance) {
    if (!(v > 0)) throw SpecError(fmt::format("reference for {} is not positive", name));
  }
  for (const auto& [n, v] : spec.reference_by_size) {
    if (!(v > 0)) throw SpecError(fmt::format("reference for n={} is not positive", n));
  }
  if (!(spec.time_budget_s > 0)) throw SpecError("time budget must be positive");
}

BenchSpec parse_spec(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw SpecError(fmt::format("spec is not JSON: {}", e.what()));
  }
  BenchSpec s;
  try {
    if (!j.is_object()) throw SpecError("spec must be a JSON object");
    static const std::set<std::string> known{"instances", "methods", "gaps", "reference",
                                             "time_budget_s", "checkpoint", "knn", "seed",
                                             "output"};
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) throw SpecError(fmt::format("unknown spec field '{}'", key));
    }
    const json& inst = j.at("instances");
    if (inst.is_string()) {
      s.glob = inst.get<std::string>();
    } else {
      SyntheticSet set;
      set.n = inst.at("n").get<std::size_t>();
      set.count = inst.value("count", set.count);
      set.seed = inst.value("seed", set.seed);
      s.synthetic = set;
    }
    for (const json& m : j.at("methods")) s.methods.push_back(parse_method(m.get<std::string>()));
    s.gaps = j.value("gaps", j.contains("reference"));
    if (j.contains("reference")) {
      const json& r = j.at("reference");
      if (r.is_string()) {
        s.reference_method = parse_method(r.get<std::string>());
      } else {
        for (const auto& [key, value] : r.items()) {
          const auto size = key.size() > 1 && key[0] == 'n' ? parse_count(key.substr(1)) : std::nullopt;
          if (size) {
            s.reference_by_size[*size] = value.get<double>();
          } else {
            s.reference_by_instance[key] = value.get<double>();
          }
        }
      }
    }
    s.time_budget_s = j.value("time_budget_s", s.time_budget_s);
    s.checkpoint = j.value("checkpoint", std::string{});
    s.knn = j.value("knn", s.knn);
    s.seed = j.value("seed", s.seed);
    s.output_csv = j.value("output", std::string{});
  } catch (const json::exception& e) {
    throw SpecError(fmt::format("malformed spec: {}", e.what()));
  }
  validate(s);
  return s;
}

BenchSpec load_spec(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const std::runtime_error& e) {
    throw MissingArtifact(e.what());
  }
  return parse_spec(text);
}

std::string aggregate_name(std::optional<std::size_t> n) {
  return n ? fmt::format("{}n{}", kAggregatePrefix, *n) : std::string(kAggregatePrefix) + "mixed";
}

std::vector<io::RunRecord> BenchResult::all() const {
  std::vector<io::RunRecord> out = runs;
  out.insert(out.end(), aggregates.begin(), aggregates.end());
  return out;
}

BenchResult run_bench(const BenchSpec& spec) {
  validate(spec);
  const std::vector<Instance> instances = load_instances(spec);
  bool needs_policy = false;
  for (const Method& m : spec.methods) needs_policy = needs_policy || m.neural();
  if (spec.reference_method) needs_policy = needs_policy || spec.reference_method->neural();
  std::optional<nn::Policy> policy;
  if (needs_policy || !spec.checkpoint.empty()) policy = load_policy(spec.checkpoint);
  const Solver solver{spec, policy};

  using Clock = std::chrono::steady_clock;
  BenchResult result;
  std::vector<std::vector<double>> objectives(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const std::uint64_t seed = derive_seed(spec.seed, i);
    for (const Method& m : spec.methods) {
      const auto t0 = Clock::now();
      const Solution sol = solver.solve(m, instances[i], seed);
      const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
      result.runs.push_back({instances[i].name(), m.name(), sol.total_cost, std::nullopt, secs, seed});
    }
  }

  if (spec.gaps) {
    std::map<std::string, double> refs;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const Instance& inst = instances[i];
      if (spec.reference_method) {
        const std::string name = spec.reference_method->name();
        const auto it = std::find_if(result.runs.begin(), result.runs.end(), [&](const auto& r) {
          return r.instance == inst.name() && r.method == name;
        });
        refs[inst.name()] = it != result.runs.end()
                                ? it->objective
                                : solver.solve(*spec.reference_method, inst, derive_seed(spec.seed, i))
                                      .total_cost;
      } else if (const auto it = spec.reference_by_instance.find(inst.name());
                 it != spec.reference_by_instance.end()) {
        refs[inst.name()] = it->second;
      } else if (const auto jt = spec.reference_by_size.find(inst.num_customers());
                 jt != spec.reference_by_size.end()) {
        refs[inst.name()] = jt->second;
      } else {
        throw SpecError(fmt::format("no reference objective for {}", inst.name()));
      }
    }
    for (io::RunRecord& r : result.runs) r.gap_pct = gap_percent(r.objective, refs.at(r.instance));
  }

  std::optional<std::size_t> size;
  if (!instances.empty()) size = instances.front().num_customers();
  for (const Instance& inst : instances) {
    if (size && inst.num_customers() != *size) size.reset();
  }
  for (const Method& m : spec.methods) {
    io::RunRecord agg{aggregate_name(size), m.name(), 0.0, std::nullopt, 0.0, spec.seed};
    double gap = 0.0;
    std::size_t count = 0;
    for (const io::RunRecord& r : result.runs) {
      if (r.method != agg.method) continue;
      agg.objective += r.objective;
      agg.time_s += r.time_s;
      if (r.gap_pct) gap += *r.gap_pct;
      ++count;
    }
    if (count > 0) {
      agg.objective /= static_cast<double>(count);
      agg.time_s /= static_cast<double>(count);
      if (spec.gaps) agg.gap_pct = gap / static_cast<double>(count);
    }
    result.aggregates.push_back(agg);
  }
  if (!spec.output_csv.empty()) io::write_results_csv(result.all(), spec.output_csv);
  return result;
}

Solution solve_one(const BenchSpec& settings, const Method& method, const Instance& instance,
                   std::uint64_t seed) {
  std::optional<nn::Policy> policy;
  if (method.neural() || !settings.checkpoint.empty()) policy = load_policy(settings.checkpoint);
  return Solver{settings, policy}.solve(method, instance, seed);
}

SweepParameter parse_sweep_parameter(std::string_view text) {
  if (text == "rollouts" || text == "n-hat") return SweepParameter::kRollouts;
  if (text == "knn") return SweepParameter::kKnn;
  if (text == "m") return SweepParameter::kSubproblemSize;
  throw SpecError(fmt::format("unknown sweep parameter '{}' (rollouts, knn, m)", text));
}

std::string to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::kRollouts:
      return "rollouts";
    case SweepParameter::kKnn:
      return "knn";
    case SweepParameter::kSubproblemSize:
      return "m";
  }
  return "?";
}

std::vector<SweepRecord> sweep(const BenchSpec& spec, SweepParameter parameter,
                               const std::vector<std::size_t>& values) {
  if (values.empty()) throw SpecError("sweep needs at least one value");
  std::vector<SweepRecord> out;
  for (std::size_t v : values) {
    if (v == 0) throw SpecError("sweep values must be positive");
    BenchSpec s = spec;
    s.output_csv.clear();
    switch (parameter) {
      case SweepParameter::kRollouts:
        for (Method& m : s.methods) {
          if (m.kind == Method::kNeuralBestOf) m.rollouts = v;
        }
        break;
      case SweepParameter::kKnn:
        s.knn = v;
        break;
      case SweepParameter::kSubproblemSize:
        for (Method& m : s.methods) {
          if (m.kind == Method::kExpertRefine) m.subproblem_size = v;
        }
        break;
    }
    const BenchResult r = run_bench(s);
    for (const auto& rec : r.runs) out.push_back({parameter, v, rec, false});
    for (const auto& rec : r.aggregates) out.push_back({parameter, v, rec, true});
  }
  if (!spec.output_csv.empty()) io::write_text(spec.output_csv, format_sweep_csv(out));
  return out;
}

std::string format_sweep_csv(const std::vector<SweepRecord>& records) {
  std::string out(kSweepHeader);
  out += '\n';
  for (const SweepRecord& s : records) {
    const io::RunRecord& r = s.record;
    out += fmt::format("{},{},{},{},{},{},{},{}\n", to_string(s.parameter), s.value, r.instance,
                       r.method, format_number(r.objective),
                       r.gap_pct ? format_number(*r.gap_pct) : std::string{},
                       format_number(r.time_s), r.seed);
  }
  return out;
}

std::string report_table(const std::vector<std::filesystem::path>& csv_paths) {
  std::vector<io::RunRecord> all;
  for (const auto& path : csv_paths) {
    std::string text;
    try {
      text = io::read_text(path);
    } catch (const std::runtime_error& e) {
      throw MissingArtifact(e.what());
    }
    auto recs = io::parse_results_csv(text);
    all.insert(all.end(), recs.begin(), recs.end());
  }
  return report_table(all);
}

std::string report_table(const std::vector<io::RunRecord>& records) {
  // Column label and sort key per aggregate size.
  std::map<std::size_t, std::string> sizes;
  std::vector<std::pair<std::string, std::pair<int, std::size_t>>> methods;
  std::map<std::pair<std::string, std::string>, const io::RunRecord*> cells;
  constexpr std::size_t kMixed = static_cast<std::size_t>(-1);
  for (const io::RunRecord& r : records) {
    if (!r.instance.starts_with(kAggregatePrefix)) continue;
    const std::string_view tag = std::string_view(r.instance).substr(kAggregatePrefix.size());
    std::size_t key = kMixed;
    std::string label = "mixed";
    if (tag.size() > 1 && tag[0] == 'n') {
      if (const auto n = parse_count(tag.substr(1))) {
        key = *n;
        label = fmt::format("N={}", *n);
      }
    }
    sizes.emplace(key, label);
    if (std::none_of(methods.begin(), methods.end(), [&](const auto& m) { return m.first == r.method; })) {
      std::pair<int, std::size_t> order{99, 0};
      try {
        const Method m = parse_method(r.method);
        order = {static_cast<int>(m.kind),
                 m.kind == Method::kExpertRefine ? m.subproblem_size : m.rollouts};
      } catch (const SpecError&) {
      }
      methods.push_back({r.method, order});
    }
    cells[{r.method, label}] = &r;
  }
  std::stable_sort(methods.begin(), methods.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Method"};
  for (const auto& [key, label] : sizes) {
    header.push_back(label + " Obj");
    header.push_back("Gap(%)");
    header.push_back("Time(s)");
  }
  rows.push_back(header);
  const std::string missing = "−";
  for (const auto& [method, order] : methods) {
    std::vector<std::string> row{method};
    for (const auto& [key, label] : sizes) {
      const auto it = cells.find({method, label});
      if (it == cells.end()) {
        row.insert(row.end(), {missing, missing, missing});
        continue;
      }
      const io::RunRecord& r = *it->second;
      row.push_back(fmt::format("{:.6f}", r.objective));
      row.push_back(r.gap_pct ? fmt::format("{:.2f}", *r.gap_pct) : missing);
      row.push_back(fmt::format("{:.3f}", r.time_s));
    }
    rows.push_back(row);
  }

  // Display width: count code points, not bytes.
  auto width = [](const std::string& s) {
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
  };
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width(row[c]));
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const std::string pad(widths[c] - width(rows[r][c]), ' ');
      out += c == 0 ? rows[r][c] + pad : "  " + pad + rows[r][c];
    }
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : widths) total += w + 2;
      out += std::string(total - 2, '-') + '\n';
    }
  }
  return out;
}

}  // namespace vrpflow::bench
