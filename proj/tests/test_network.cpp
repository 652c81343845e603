#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace gridreconf;
using namespace testing_support;

namespace {

NetworkPtr path5_with_tie() {
  return make_network(5, {{1, 2, 0.01, 0.01}, {2, 3, 0.01, 0.01}, {3, 4, 0.01, 0.01}, {4, 5, 0.01, 0.01},
                          {1, 5, 0.01, 0.01}},
                      {});
}

}  // namespace

TEST(LinePair, CanonicalizesEndpoints) {
  LinePair a(10, 11), b(11, 10);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.lo, 10);
  EXPECT_EQ(a.hi, 11);
  EXPECT_EQ(b.str(), "(10, 11)");
  LineSet s{a, b};
  EXPECT_EQ(s.size(), 1u);
}

TEST(Network, RejectsGapsAndBadIds) {
  std::vector<Bus> buses{{1, {}, true}, {3, {}, false}};
  EXPECT_THROW(Network(buses, {{LinePair(1, 3), 0.1, 0.1, true, {}}}, 1.0), InvalidNetwork);
}

TEST(Network, RequiresExactlyOneSubstation) {
  std::vector<Bus> none{{1, {}, false}, {2, {}, false}};
  std::vector<Bus> two{{1, {}, true}, {2, {}, true}};
  std::vector<Line> l{{LinePair(1, 2), 0.1, 0.1, true, {}}};
  EXPECT_THROW(Network(none, l, 1.0), InvalidNetwork);
  EXPECT_THROW(Network(two, l, 1.0), InvalidNetwork);
}

TEST(Network, RejectsSelfLoopsDuplicatesAndNegativeImpedance) {
  std::vector<Bus> b{{1, {}, true}, {2, {}, false}};
  EXPECT_THROW(Network(b, {{LinePair(1, 1), 0.1, 0.1, true, {}}}, 1.0), InvalidNetwork);
  EXPECT_THROW(Network(b, {{LinePair(1, 2), 0.1, 0.1, true, {}}, {LinePair(2, 1), 0.2, 0.2, true, {}}}, 1.0),
               InvalidNetwork);
  EXPECT_THROW(Network(b, {{LinePair(1, 2), -0.1, 0.1, true, {}}}, 1.0), InvalidNetwork);
  EXPECT_THROW(Network(b, {{LinePair(1, 2), 0.1, -0.1, true, {}}}, 1.0), InvalidNetwork);
  EXPECT_THROW(Network(b, {{LinePair(1, 3), 0.1, 0.1, true, {}}}, 1.0), InvalidNetwork);
}

TEST(Network, RejectsDisconnectedGraph) {
  std::vector<Bus> b{{1, {}, true}, {2, {}, false}, {3, {}, false}};
  EXPECT_THROW(Network(b, {{LinePair(1, 2), 0.1, 0.1, true, {}}}, 1.0), InvalidNetwork);
}

TEST(Configuration, FlagsUnknownAndFixedLines) {
  std::vector<Bus> b{{1, {}, true}, {2, {}, false}, {3, {}, false}};
  std::vector<Line> l{{LinePair(1, 2), 0.1, 0.1, false, {}}, {LinePair(2, 3), 0.1, 0.1, true, {}},
                      {LinePair(1, 3), 0.1, 0.1, true, {}}};
  auto net = std::make_shared<const Network>(b, l, 1.0);
  Configuration ok(net, {LinePair(1, 3)});
  EXPECT_TRUE(ok.is_valid());
  Configuration fixed(net, {LinePair(1, 2)});
  EXPECT_FALSE(fixed.is_valid());
  EXPECT_EQ(fixed.fixed_lines_opened().size(), 1u);
  Configuration unknown(net, {LinePair(2, 5)});
  EXPECT_FALSE(unknown.is_valid());
  EXPECT_EQ(unknown.open_lines().size(), 1u);  // kept, not repaired
  EXPECT_THROW(closed_graph(unknown), InvalidLine);
}

TEST(ClosedGraph, ReferenceConfigurationHas32Edges) {
  auto net = feeders::ieee33_ptr();
  auto open = reference_open_lines();
  Configuration cfg(net, LineSet(open.begin(), open.end()));
  Graph g = closed_graph(cfg);
  EXPECT_EQ(g.edges.size(), 32u);
  EXPECT_EQ(count_components(g), 1);
  EXPECT_EQ(count_cycles(g), 0);
  EXPECT_TRUE(is_radial(cfg));
}

TEST(ClosedGraph, EmptyOpenSetIsFullNetwork) {
  auto net = feeders::ieee33_ptr();
  Graph g = closed_graph(Configuration(net, {}));
  EXPECT_EQ(g.edges, net->line_pairs());
  EXPECT_FALSE(is_radial(Configuration(net, {})));
}

TEST(ClosedGraph, PathWithTieOpened) {
  auto net = path5_with_tie();
  Graph g = closed_graph(Configuration(net, {LinePair(1, 5)}));
  EXPECT_EQ(g.edges.size(), 4u);
  EXPECT_TRUE(is_radial(g));
}

TEST(Components, BasicCounts) {
  EXPECT_EQ(count_components(Graph{7, {}}), 7);
  EXPECT_EQ(count_components(Graph{6, {{1, 2}, {2, 3}, {4, 5}}}), 3);
  EXPECT_EQ(count_cycles(Graph{3, {{1, 2}, {2, 3}, {1, 3}}}), 1);
}

TEST(Cycles, TwoExtraEdgesOn33Buses) {
  auto net = feeders::ieee33_ptr();
  auto open = reference_open_lines();
  LineSet keep_open(open.begin(), open.end());
  keep_open.erase(LinePair(7, 8));
  keep_open.erase(LinePair(9, 10));
  Graph g = closed_graph(Configuration(net, keep_open));
  ASSERT_EQ(g.edges.size(), 34u);
  EXPECT_EQ(count_components(g), 1);
  EXPECT_EQ(count_cycles(g), 2);
  EXPECT_EQ(cycle_space_dimension_gf2(33, g.edges), 2);
}

TEST(Radial, IsolatedBusIsNotRadial) {
  // bus 6 hangs on two switchable lines; opening both isolates it
  auto net = make_network(6, {{1, 2, .01, .01}, {2, 3, .01, .01}, {3, 4, .01, .01}, {4, 5, .01, .01},
                              {5, 6, .01, .01}, {3, 6, .01, .01}, {1, 5, .01, .01}},
                          {});
  Configuration cfg(net, {LinePair(5, 6), LinePair(3, 6)});
  Graph g = closed_graph(cfg);
  EXPECT_EQ(count_components(g), bfs_components(6, g.edges));
  EXPECT_EQ(count_components(g), 2);
  EXPECT_FALSE(is_radial(cfg));
}

TEST(Radial, DefaultOpenLinesFormTree) {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    auto net = random_network_ptr(rng);
    Configuration cfg(net, default_open_lines(*net));
    EXPECT_TRUE(is_radial(cfg));
  }
  EXPECT_EQ(default_open_lines(*feeders::ieee33_ptr()).size(), 5u);
}

TEST(Properties, PredicatesAgreeOnRandomSubgraphs) {
  Rng rng(2024);
  for (int t = 0; t < 300; ++t) {
    Network net = random_network(rng, {3, 12, 6});
    const auto pairs = net.line_pairs();
    Graph g{net.bus_count(), {}};
    for (const auto& p : pairs)
      if (rng.coin(0.7)) g.edges.push_back(p);
    const int k = count_components(g);
    const int c = count_cycles(g);
    ASSERT_EQ(k, bfs_components(g.bus_count, g.edges));
    ASSERT_EQ(c, cycle_space_dimension_gf2(g.bus_count, g.edges));
    ASSERT_EQ(c == 0 && k == 1, is_radial(g));
    if (static_cast<int>(g.edges.size()) == g.bus_count - 1) {
      ASSERT_EQ(c == 0, k == 1);
    }
  }
}

TEST(NetworkIo, JsonRoundTrip) {
  auto net = feeders::ieee33_ptr();
  Network back = network_from_json(network_to_json(*net));
  EXPECT_EQ(network_to_json(back), network_to_json(*net));
  EXPECT_EQ(back.normally_open(), net->normally_open());
}

TEST(NetworkIo, BundledDataFileMatchesFeeder) {
  Network file = load_network_json(std::string(GRIDRECONF_DATA_DIR) + "/ieee33.json");
  EXPECT_EQ(network_to_json(file), network_to_json(*feeders::ieee33_ptr()));
}

TEST(NetworkIo, MalformedDocumentThrowsFormatError) {
  EXPECT_THROW(network_from_json(Json::parse(R"({"buses": 3})")), FormatError);
  EXPECT_THROW(pair_from_json(Json::parse("[1]")), FormatError);
}

TEST(Feeder, ImpedancesMatchPerUnitReference) {
  auto net = feeders::ieee33_ptr();
  EXPECT_EQ(net->bus_count(), 33);
  EXPECT_EQ(net->lines().size(), 37u);
  EXPECT_NEAR(std::abs(net->line({1, 2}).impedance()), 0.00064569, 5e-9);
  EXPECT_NEAR(std::abs(net->line({2, 3}).impedance()), 0.00345195, 5e-9);
  EXPECT_NEAR(std::abs(net->line({25, 29}).impedance()), 0.00441182, 5e-9);
  EXPECT_NEAR(net->bus(2).load.real(), 0.1, 1e-15);
}
