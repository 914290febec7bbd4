#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "vrpflow/feasibility.hpp"
#include "vrpflow/io.hpp"

namespace vrpflow::io {
namespace {

const std::filesystem::path kData = VRPFLOW_TEST_DATA;

TEST(ParseVrplib, AugeratA32) {
  const Instance inst = load_instance(kData / "A-n32-k5.vrp");
  EXPECT_EQ(inst.name(), "A-n32-k5");
  EXPECT_EQ(inst.num_customers(), 31u);
  EXPECT_EQ(inst.capacity(), 100);
  ASSERT_TRUE(inst.fleet_limit().has_value());
  EXPECT_EQ(*inst.fleet_limit(), 5);
  EXPECT_EQ(inst.distance_mode(), DistanceMode::kRounded);
  EXPECT_EQ(inst.depot(), (Point{82, 76}));
  EXPECT_EQ(inst.demand(1), 19);
  EXPECT_EQ(inst.location(31), (Point{98, 5}));
  EXPECT_EQ(inst.total_demand(), 410);
}

TEST(ParseVrplib, PublishedOptimumCosts784) {
  const Instance inst = load_instance(kData / "A-n32-k5.vrp");
  const DistanceMatrix dm = build_distance_matrix(inst);
  const auto routes = parse_solution(read_text(kData / "A-n32-k5.sol"));
  ASSERT_EQ(routes.size(), 5u);
  const Solution s = make_solution(inst, dm, routes);
  EXPECT_EQ(s.total_cost, 784.0);
  EXPECT_TRUE(check_feasible(inst, dm, s).feasible());
}

TEST(ParseVrplib, MinimalTwoNode) {
  const Instance inst = parse_vrplib(
      "NAME : tiny\nTYPE : CVRP\nDIMENSION : 2\nEDGE_WEIGHT_TYPE : EUC_2D\n"
      "CAPACITY : 10\nNODE_COORD_SECTION\n1 0 0\n2 3 4\nDEMAND_SECTION\n1 0\n2 7\n"
      "DEPOT_SECTION\n1\n-1\nEOF\n");
  ASSERT_EQ(inst.num_customers(), 1u);
  EXPECT_EQ(inst.demand(1), 7);
  EXPECT_FALSE(inst.fleet_limit().has_value());
}

TEST(ParseVrplib, DepotNotFirst) {
  const Instance inst = parse_vrplib(
      "NAME : d2\nTYPE : CVRP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\n"
      "CAPACITY : 10\nNODE_COORD_SECTION\n1 5 5\n2 1 1\n3 2 2\nDEMAND_SECTION\n"
      "1 4\n2 0\n3 6\nDEPOT_SECTION\n2\n-1\nEOF\n");
  EXPECT_EQ(inst.depot(), (Point{1, 1}));
  EXPECT_EQ(inst.location(1), (Point{5, 5}));
  EXPECT_EQ(inst.demand(2), 6);
}

TEST(ParseVrplib, MissingDemandNamesNode) {
  try {
    parse_vrplib(
        "NAME : bad\nTYPE : CVRP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\n"
        "CAPACITY : 10\nNODE_COORD_SECTION\n1 0 0\n2 1 1\n3 2 2\nDEMAND_SECTION\n"
        "1 0\n2 3\nDEPOT_SECTION\n1\n-1\nEOF\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("node 3"), std::string::npos) << e.what();
  }
}

TEST(ParseVrplib, ErrorsCarryLineNumbers) {
  try {
    parse_vrplib(
        "NAME : bad\nTYPE : CVRP\nDIMENSION : 2\nEDGE_WEIGHT_TYPE : EUC_2D\n"
        "CAPACITY : 10\nNODE_COORD_SECTION\n1 0 0\n2 x 1\nDEMAND_SECTION\n1 0\n2 1\n"
        "DEPOT_SECTION\n1\n-1\nEOF\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 8);
  }
  EXPECT_THROW(parse_vrplib("NAME : e\nTYPE : CVRP\nDIMENSION : 2\n"
                            "EDGE_WEIGHT_TYPE : EXPLICIT\nCAPACITY : 3\nEOF\n"),
               ParseError);
  EXPECT_THROW(parse_vrplib("NAME : e\nTYPE : CVRP\nDIMENSION : 2\n"
                            "EDGE_WEIGHT_TYPE : EUC_2D\nCAPACITY : 3\n"
                            "DEMAND_SECTION\n1 0\n2 1\nEOF\n"),
               ParseError);
}

TEST(ParseTsplib, SquarePerimeter) {
  const Instance inst = load_instance(kData / "square4.tsp");
  EXPECT_EQ(inst.num_customers(), 3u);
  EXPECT_EQ(inst.capacity(), 3);
  EXPECT_EQ(inst.demand(2), 1);
  const DistanceMatrix dm = build_distance_matrix(inst);
  EXPECT_EQ(route_cost(dm, std::vector<int>{1, 2, 3}), 40.0);
}

TEST(ParseTsplib, CountMatchesDimension) {
  std::string text = "NAME : eil51\nTYPE : TSP\nDIMENSION : 51\nEDGE_WEIGHT_TYPE : EUC_2D\n"
                     "NODE_COORD_SECTION\n";
  for (int i = 1; i <= 51; ++i) {
    text += std::to_string(i) + " " + std::to_string(i * 7 % 61) + " " +
            std::to_string(i * 13 % 67) + "\n";
  }
  text += "EOF\n";
  const Instance inst = parse_tsplib(text);
  EXPECT_EQ(inst.num_nodes(), 51u);
  EXPECT_EQ(inst.num_customers(), 50u);
  EXPECT_EQ(inst.depot(), (Point{7, 13}));
  EXPECT_THROW(parse_tsplib("NAME : x\nTYPE : TSP\nDIMENSION : 2\n"
                            "EDGE_WEIGHT_TYPE : EXPLICIT\nEOF\n"),
               ParseError);
}

TEST(Generate, ReproducibleAndInRange) {
  EXPECT_EQ(generate_uniform(50, 9), generate_uniform(50, 9));
  EXPECT_FALSE(generate_uniform(50, 9) == generate_uniform(50, 10));
  const Instance big = generate_uniform(1000, 4);
  EXPECT_EQ(big.capacity(), 50);
  EXPECT_FALSE(big.fleet_limit().has_value());
  EXPECT_EQ(big.distance_mode(), DistanceMode::kContinuous);
  std::set<int> seen;
  for (std::size_t i = 0; i <= big.num_customers(); ++i) {
    const Point& p = big.location(i);
    EXPECT_GE(p.x, 0.0);
    EXPECT_LT(p.x, 1.0);
    EXPECT_GE(p.y, 0.0);
    EXPECT_LT(p.y, 1.0);
    if (i > 0) {
      EXPECT_GE(big.demand(i), 1);
      EXPECT_LE(big.demand(i), 9);
      seen.insert(big.demand(i));
    }
  }
  EXPECT_EQ(seen.size(), 9u);
}

TEST(Generate, BatchIsDistinct) {
  const auto batch = generate_batch(200, 128, 2024);
  ASSERT_EQ(batch.size(), 128u);
  std::set<std::pair<double, double>> depots;
  for (const Instance& inst : batch) depots.insert({inst.depot().x, inst.depot().y});
  EXPECT_EQ(depots.size(), 128u);
  EXPECT_EQ(batch[5], generate_batch(200, 6, 2024)[5]);
}

TEST(WriteVrplib, RoundTripsBitExact) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance inst = generate_uniform(25, seed);
    EXPECT_EQ(parse_vrplib(write_vrplib(inst)), inst);
  }
  const Instance a32 = load_instance(kData / "A-n32-k5.vrp");
  EXPECT_EQ(parse_vrplib(write_vrplib(a32)), a32);
}

TEST(Solution, TextRoundTrip) {
  const Instance inst = load_instance(kData / "A-n32-k5.vrp");
  const DistanceMatrix dm = build_distance_matrix(inst);
  const auto routes = parse_solution(read_text(kData / "A-n32-k5.sol"));
  const Solution s = make_solution(inst, dm, routes);
  EXPECT_EQ(parse_solution(write_solution(s)), routes);
}

TEST(ResultsCsv, HeaderOnlyAndSingleRow) {
  EXPECT_EQ(format_results_csv({}), std::string(kResultsHeader) + "\n");
  const std::string one = format_results_csv({RunRecord{"a", "hgs", 1.5, 0.25, 0.1, 3}});
  EXPECT_EQ(std::count(one.begin(), one.end(), '\n'), 2);
}

TEST(ResultsCsv, SortedByInstanceThenMethod) {
  std::vector<RunRecord> records;
  const char* instances[] = {"b", "a", "c", "a", "b", "c", "a", "b", "a", "c"};
  const char* methods[] = {"hgs", "exact", "hgs", "hgs", "exact",
                           "neural-greedy", "neural-greedy", "hgs", "exact", "exact"};
  for (int i = 0; i < 10; ++i) {
    records.push_back(RunRecord{instances[i], methods[i], 10.0 + i,
                                i % 3 ? std::optional<double>(i * 0.5) : std::nullopt,
                                0.01 * i, static_cast<std::uint64_t>(i)});
  }
  std::vector<RunRecord> expected = records;
  std::stable_sort(expected.begin(), expected.end(), [](const auto& x, const auto& y) {
    return std::tie(x.instance, x.method) < std::tie(y.instance, y.method);
  });
  const auto path = std::filesystem::temp_directory_path() / "vrpflow_io_test.csv";
  write_results_csv(records, path);
  EXPECT_EQ(read_results_csv(path), expected);
  std::filesystem::remove(path);
  EXPECT_THROW(write_results_csv(records, "/nonexistent-dir/x.csv"), std::runtime_error);
}

TEST(ResultsCsv, FullWidthSeedsRoundTrip) {
  const RunRecord r{"a", "hgs", 1.0 / 3.0, -2.5, 0.125, 0xE9FD2F5A1C0B7E4Dull};
  EXPECT_EQ(parse_results_csv(format_results_csv({r})), std::vector<RunRecord>{r});
}

}  // namespace
}  // namespace vrpflow::io
