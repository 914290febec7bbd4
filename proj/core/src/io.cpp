#include "vrpflow/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include <fmt/format.h>

#include "vrpflow/rng.hpp"

namespace vrpflow::io {
namespace {

constexpr std::string_view kContinuousTag = "distance_mode=continuous";

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

long parse_long(std::string_view token, int line, std::string_view what) {
  long value = 0;
  const auto [ptr, ec] =
      std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError(line, fmt::format("malformed {} '{}'", what, token));
  }
  return value;
}

std::uint64_t parse_u64(std::string_view token, int line, std::string_view what) {
  std::uint64_t value = 0;
  const auto [ptr, ec] =
      std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError(line, fmt::format("malformed {} '{}'", what, token));
  }
  return value;
}

double parse_double(std::string_view token, int line, std::string_view what) {
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError(line, fmt::format("malformed {} '{}'", what, token));
  }
  return value;
}

struct Field {
  std::string value;
  int line = 0;
};

struct NodeCoord {
  Point p;
  int line = 0;
};

struct RawProblem {
  std::map<std::string, Field> fields;
  std::map<long, NodeCoord> coords;
  std::map<long, long> demands;
  std::vector<long> depots;
  bool saw_coords = false, saw_demands = false, saw_depots = false;
  int coord_line = 0, demand_line = 0, depot_line = 0;
  int last_line = 0;

  const Field* field(const std::string& key) const {
    auto it = fields.find(key);
    return it == fields.end() ? nullptr : &it->second;
  }
};

RawProblem scan(std::string_view text) {
  RawProblem raw;
  enum class Section { kNone, kCoords, kDemands, kDepots, kIgnored };
  Section section = Section::kNone;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    raw.last_line = line_no;
    if (line == "EOF") break;

    const auto colon = line.find(':');
    const bool is_section_header = line.ends_with("_SECTION");
    if (is_section_header) {
      if (line == "NODE_COORD_SECTION") {
        section = Section::kCoords;
        raw.saw_coords = true;
        raw.coord_line = line_no;
      } else if (line == "DEMAND_SECTION") {
        section = Section::kDemands;
        raw.saw_demands = true;
        raw.demand_line = line_no;
      } else if (line == "DEPOT_SECTION") {
        section = Section::kDepots;
        raw.saw_depots = true;
        raw.depot_line = line_no;
      } else if (line == "EDGE_WEIGHT_SECTION") {
        throw ParseError(line_no, "explicit edge weights are not supported");
      } else {
        section = Section::kIgnored;
      }
      continue;
    }
    if (colon != std::string_view::npos &&
        (std::isalpha(static_cast<unsigned char>(line.front())) != 0)) {
      const std::string key(trim(line.substr(0, colon)));
      const std::string value(trim(line.substr(colon + 1)));
      raw.fields[key] = Field{value, line_no};
      section = Section::kNone;
      continue;
    }

    const auto tokens = split_ws(line);
    switch (section) {
      case Section::kCoords: {
        if (tokens.size() != 3) {
          throw ParseError(line_no, "expected 'id x y' in NODE_COORD_SECTION");
        }
        const long id = parse_long(tokens[0], line_no, "node id");
        const Point p{parse_double(tokens[1], line_no, "x coordinate"),
                      parse_double(tokens[2], line_no, "y coordinate")};
        if (!raw.coords.emplace(id, NodeCoord{p, line_no}).second) {
          throw ParseError(line_no, fmt::format("duplicate node {}", id));
        }
        break;
      }
      case Section::kDemands: {
        if (tokens.size() != 2) {
          throw ParseError(line_no, "expected 'id demand' in DEMAND_SECTION");
        }
        const long id = parse_long(tokens[0], line_no, "node id");
        const long d = parse_long(tokens[1], line_no, "demand");
        if (!raw.demands.emplace(id, d).second) {
          throw ParseError(line_no, fmt::format("duplicate demand for node {}", id));
        }
        break;
      }
      case Section::kDepots: {
        for (auto token : tokens) {
          const long id = parse_long(token, line_no, "depot id");
          if (id == -1) {
            section = Section::kNone;
            break;
          }
          raw.depots.push_back(id);
        }
        break;
      }
      case Section::kIgnored:
        break;
      case Section::kNone:
        throw ParseError(line_no, fmt::format("unexpected line '{}'", line));
    }
  }
  return raw;
}

const Field& require(const RawProblem& raw, const std::string& key) {
  const Field* f = raw.field(key);
  if (f == nullptr) {
    throw ParseError(raw.last_line, fmt::format("missing {} field", key));
  }
  return *f;
}

void require_euc_2d(const RawProblem& raw) {
  const Field& f = require(raw, "EDGE_WEIGHT_TYPE");
  if (f.value != "EUC_2D") {
    throw ParseError(f.line,
                     fmt::format("unsupported EDGE_WEIGHT_TYPE '{}'", f.value));
  }
}

long dimension_of(const RawProblem& raw) {
  const Field& f = require(raw, "DIMENSION");
  const long dim = parse_long(f.value, f.line, "DIMENSION");
  if (dim < 2) throw ParseError(f.line, "DIMENSION must be at least 2");
  if (!raw.saw_coords) {
    throw ParseError(raw.last_line, "missing NODE_COORD_SECTION");
  }
  for (long id = 1; id <= dim; ++id) {
    if (!raw.coords.contains(id)) {
      throw ParseError(raw.coord_line,
                       fmt::format("NODE_COORD_SECTION missing node {}", id));
    }
  }
  if (static_cast<long>(raw.coords.size()) != dim) {
    throw ParseError(raw.coord_line,
                     fmt::format("NODE_COORD_SECTION has {} nodes, DIMENSION is {}",
                                 raw.coords.size(), dim));
  }
  return dim;
}

std::optional<int> fleet_limit_of(const RawProblem& raw, const std::string& name) {
  if (const Field* f = raw.field("VEHICLES")) {
    return static_cast<int>(parse_long(f->value, f->line, "VEHICLES"));
  }
  static const std::regex kTrucks(R"(-k(\d+)$)");
  std::smatch m;
  if (std::regex_search(name, m, kTrucks)) return std::stoi(m[1].str());
  return std::nullopt;
}

std::string name_of(const RawProblem& raw) {
  const Field* f = raw.field("NAME");
  return f ? f->value : std::string{};
}

}  // namespace

ParseError::ParseError(int line, const std::string& message)
    : std::runtime_error(line > 0 ? fmt::format("line {}: {}", line, message)
                                  : message),
      line_(line) {}

Instance parse_vrplib(std::string_view text) {
  const RawProblem raw = scan(text);
  require_euc_2d(raw);
  const long dim = dimension_of(raw);
  const Field& cap_field = require(raw, "CAPACITY");
  const long capacity = parse_long(cap_field.value, cap_field.line, "CAPACITY");
  if (capacity <= 0) throw ParseError(cap_field.line, "CAPACITY must be positive");

  if (!raw.saw_demands) throw ParseError(raw.last_line, "missing DEMAND_SECTION");
  for (long id = 1; id <= dim; ++id) {
    if (!raw.demands.contains(id)) {
      throw ParseError(raw.demand_line,
                       fmt::format("DEMAND_SECTION missing node {}", id));
    }
  }
  if (!raw.saw_depots) throw ParseError(raw.last_line, "missing DEPOT_SECTION");
  if (raw.depots.size() != 1) {
    throw ParseError(raw.depot_line,
                     fmt::format("expected exactly one depot, found {}",
                                 raw.depots.size()));
  }
  const long depot_id = raw.depots.front();
  if (!raw.coords.contains(depot_id)) {
    throw ParseError(raw.depot_line, fmt::format("unknown depot node {}", depot_id));
  }

  std::vector<Customer> customers;
  customers.reserve(static_cast<std::size_t>(dim - 1));
  for (const auto& [id, coord] : raw.coords) {
    if (id == depot_id) continue;
    const long d = raw.demands.at(id);
    if (d <= 0 || d > capacity) {
      throw ParseError(coord.line,
                       fmt::format("node {} demand {} outside (0, {}]", id, d, capacity));
    }
    customers.push_back(Customer{coord.p, static_cast<int>(d)});
  }

  const std::string name = name_of(raw);
  const Field* comment = raw.field("COMMENT");
  const bool continuous =
      comment != nullptr && comment->value.find(kContinuousTag) != std::string::npos;
  return Instance(name, raw.coords.at(depot_id).p, std::move(customers),
                  static_cast<int>(capacity), fleet_limit_of(raw, name),
                  continuous ? DistanceMode::kContinuous : DistanceMode::kRounded);
}

Instance parse_tsplib(std::string_view text) {
  const RawProblem raw = scan(text);
  require_euc_2d(raw);
  const long dim = dimension_of(raw);
  std::vector<Customer> customers;
  for (long id = 2; id <= dim; ++id) {
    customers.push_back(Customer{raw.coords.at(id).p, 1});
  }
  const int count = static_cast<int>(customers.size());
  return Instance(name_of(raw), raw.coords.at(1).p, std::move(customers), count, 1,
                  DistanceMode::kRounded);
}

Instance parse_instance(std::string_view text) {
  const RawProblem raw = scan(text);
  const Field* type = raw.field("TYPE");
  if (type != nullptr && type->value == "TSP") return parse_tsplib(text);
  if (type != nullptr && type->value != "CVRP") {
    throw ParseError(type->line, fmt::format("unsupported TYPE '{}'", type->value));
  }
  return parse_vrplib(text);
}

Instance load_instance(const std::filesystem::path& path) {
  return parse_instance(read_text(path));
}

std::string write_vrplib(const Instance& instance) {
  std::string out;
  auto append = [&out](std::string_view s) { out.append(s); };
  append(fmt::format("NAME : {}\n", instance.name()));
  append(fmt::format("COMMENT : distance_mode={}\n",
                     instance.distance_mode() == DistanceMode::kContinuous
                         ? "continuous"
                         : "rounded"));
  append("TYPE : CVRP\n");
  append(fmt::format("DIMENSION : {}\n", instance.num_nodes()));
  append("EDGE_WEIGHT_TYPE : EUC_2D\n");
  append(fmt::format("CAPACITY : {}\n", instance.capacity()));
  if (instance.fleet_limit()) {
    append(fmt::format("VEHICLES : {}\n", *instance.fleet_limit()));
  }
  append("NODE_COORD_SECTION\n");
  // fmt's default float formatting is the shortest round-trip representation.
  for (std::size_t i = 0; i < instance.num_nodes(); ++i) {
    const Point& p = instance.location(i);
    append(fmt::format("{} {} {}\n", i + 1, p.x, p.y));
  }
  append("DEMAND_SECTION\n");
  for (std::size_t i = 0; i < instance.num_nodes(); ++i) {
    append(fmt::format("{} {}\n", i + 1, instance.demand(i)));
  }
  append("DEPOT_SECTION\n1\n-1\nEOF\n");
  return out;
}

std::vector<std::vector<int>> parse_solution(std::string_view text) {
  std::vector<std::vector<int>> routes;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (!line.starts_with("Route")) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError(line_no, "route line without ':'");
    }
    std::vector<int> route;
    for (auto token : split_ws(line.substr(colon + 1))) {
      route.push_back(static_cast<int>(parse_long(token, line_no, "customer id")));
    }
    routes.push_back(std::move(route));
  }
  return routes;
}

std::string write_solution(const Solution& solution) {
  std::string out;
  for (std::size_t r = 0; r < solution.routes.size(); ++r) {
    out += fmt::format("Route #{}:", r + 1);
    for (int c : solution.routes[r].customers) out += fmt::format(" {}", c);
    out += '\n';
  }
  out += fmt::format("Cost {}\n", solution.total_cost);
  return out;
}

Instance generate_uniform(std::size_t num_customers, std::uint64_t seed) {
  Rng rng(seed);
  const Point depot{rng.uniform(), rng.uniform()};
  std::vector<Customer> customers;
  customers.reserve(num_customers);
  for (std::size_t i = 0; i < num_customers; ++i) {
    const double x = rng.uniform();
    const double y = rng.uniform();
    customers.push_back(Customer{{x, y}, static_cast<int>(rng.uniform_int(1, 9))});
  }
  return Instance(fmt::format("uniform-n{}-s{}", num_customers, seed), depot,
                  std::move(customers), 50, std::nullopt, DistanceMode::kContinuous);
}

std::vector<Instance> generate_batch(std::size_t num_customers, std::size_t count,
                                     std::uint64_t master_seed) {
  std::vector<Instance> batch;
  batch.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    batch.push_back(generate_uniform(num_customers, derive_seed(master_seed, i)));
  }
  return batch;
}

std::string format_results_csv(std::vector<RunRecord> records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const RunRecord& a, const RunRecord& b) {
                     if (a.instance != b.instance) return a.instance < b.instance;
                     return a.method < b.method;
                   });
  std::string out(kResultsHeader);
  out += '\n';
  for (const RunRecord& r : records) {
    out += fmt::format("{},{},{},{},{},{}\n", r.instance, r.method, r.objective,
                       r.gap_pct ? fmt::format("{}", *r.gap_pct) : std::string{},
                       r.time_s, r.seed);
  }
  return out;
}

void write_results_csv(std::vector<RunRecord> records,
                       const std::filesystem::path& path) {
  write_text(path, format_results_csv(std::move(records)));
}

std::vector<RunRecord> parse_results_csv(std::string_view text) {
  std::vector<RunRecord> records;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line_no == 1) {
      if (line != kResultsHeader) throw ParseError(1, "unexpected CSV header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string_view::npos
                                             ? std::string_view::npos
                                             : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cells.size() != 6) {
      throw ParseError(line_no, fmt::format("expected 6 columns, got {}", cells.size()));
    }
    RunRecord r;
    r.instance = std::string(cells[0]);
    r.method = std::string(cells[1]);
    r.objective = parse_double(cells[2], line_no, "obj");
    if (!cells[3].empty()) r.gap_pct = parse_double(cells[3], line_no, "gap_pct");
    r.time_s = parse_double(cells[4], line_no, "time_s");
    r.seed = parse_u64(cells[5], line_no, "seed");
    records.push_back(std::move(r));
  }
  if (line_no == 0) throw ParseError(0, "empty CSV");
  return records;
}

std::vector<RunRecord> read_results_csv(const std::filesystem::path& path) {
  return parse_results_csv(read_text(path));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot read {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error(fmt::format("write failed for {}", path.string()));
}

}  // namespace vrpflow::io
