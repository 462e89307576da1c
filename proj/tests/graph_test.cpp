// Copyright 2026 The CGE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "support.hpp"

namespace cge {
namespace {

using testing::random_graph;
using testing::RandomGraphSpec;
using testing::TempDir;

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

TEST(Graph, BuildDropsSelfLoopsAndDuplicatePairs) {
  std::vector<std::pair<NodeIndex, NodeIndex>> pairs{{0, 1}, {1, 0}, {0, 1}, {2, 2}, {1, 2}};
  Graph g = Graph::build({0, 1, 2}, pairs, {}, RowMatrix::Zero(3, 2), {0, 1, 0}, 2);
  EXPECT_EQ(g.edge_count(), 2u);
  for (NodeIndex i = 0; i < g.node_count(); ++i)
    for (NodeIndex j : g.neighbors(i)) EXPECT_NE(i, j);
}

TEST(Graph, AdjacencyIsSymmetricWithEqualWeights) {
  RandomGraphSpec s;
  s.weighted = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Graph g = random_graph(s, seed);
    const auto a = testing::dense_adjacency(g);
    EXPECT_TRUE(a.isApprox(a.transpose(), 0.0));
    for (NodeIndex i = 0; i < g.node_count(); ++i) {
      auto nb = g.neighbors(i);
      auto w = g.neighbor_weights(i);
      for (std::size_t k = 0; k < nb.size(); ++k)
        EXPECT_EQ(w[k], a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(nb[k])));
    }
  }
}

TEST(Graph, DegreeSumIsTwiceEdgeCount) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    Graph g = random_graph({}, seed);
    std::size_t sum = 0;
    for (NodeIndex i = 0; i < g.node_count(); ++i) sum += g.neighbors(i).size();
    EXPECT_EQ(sum, 2 * g.edge_count());
    std::vector<NodeId> victims{g.id(0), g.id(5), g.id(7)};
    Graph h = remove_nodes(g, victims);
    sum = 0;
    for (NodeIndex i = 0; i < h.node_count(); ++i) sum += h.neighbors(i).size();
    EXPECT_EQ(sum, 2 * h.edge_count());
  }
}

TEST(Graph, BuildRejectsInconsistentInputs) {
  std::vector<std::pair<NodeIndex, NodeIndex>> none;
  EXPECT_THROW(Graph::build({0, 1}, none, {}, RowMatrix::Zero(3, 1), {0, 0}, 1), IngestError);
  EXPECT_THROW(Graph::build({0, 1}, none, {}, RowMatrix::Zero(2, 1), {0}, 1), IngestError);
  EXPECT_THROW(Graph::build({0, 1}, none, {}, RowMatrix::Zero(2, 1), {0, 3}, 2), IngestError);
  RowMatrix bad = RowMatrix::Zero(2, 1);
  bad(1, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(Graph::build({0, 1}, none, {}, bad, {0, 0}, 1), IngestError);
  EXPECT_THROW(Graph::build({1, 0}, none, {}, RowMatrix::Zero(2, 1), {0, 0}, 1), ParameterError);
}

TEST(LoadGraph, DuplicateAndReversedLinesCollapse) {
  TempDir dir("load");
  write_text(dir / "e.txt", "0 1\n1 0\n0 1\n");
  write_text(dir / "f.csv", "1,2\n3,4\n");
  write_text(dir / "l.txt", "0\n1\n");
  Graph g = load_graph(dir / "e.txt", dir / "f.csv", dir / "l.txt");
  EXPECT_EQ(g.node_count(), 2u);
  EXPECT_EQ(g.edge_count(), 1u);
  EXPECT_EQ(g.num_classes(), 2);
  EXPECT_EQ(g.features()(1, 0), 3.0);
}

TEST(LoadGraph, EmptyEdgeFileGivesIsolatedNode) {
  TempDir dir("load");
  write_text(dir / "e.txt", "");
  write_text(dir / "f.csv", "0.5,0.25\n");
  write_text(dir / "l.txt", "0\n");
  Graph g = load_graph(dir / "e.txt", dir / "f.csv", dir / "l.txt");
  EXPECT_EQ(g.node_count(), 1u);
  EXPECT_EQ(g.edge_count(), 0u);
}

TEST(LoadGraph, ErrorsNameTheOffendingLine) {
  TempDir dir("load");
  write_text(dir / "e.txt", "0 1\n");
  write_text(dir / "f.csv", "1,2\n3\n");
  write_text(dir / "l.txt", "0\n1\n");
  try {
    load_graph(dir / "e.txt", dir / "f.csv", dir / "l.txt");
    FAIL() << "expected an ingestion error";
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("f.csv:2"), std::string::npos) << e.what();
  }
  write_text(dir / "f.csv", "1,2\n3,nan\n");
  EXPECT_THROW(load_graph(dir / "e.txt", dir / "f.csv", dir / "l.txt"), IngestError);
  write_text(dir / "f.csv", "1,2\n3,4\n");
  write_text(dir / "l.txt", "0\n");
  EXPECT_THROW(load_graph(dir / "e.txt", dir / "f.csv", dir / "l.txt"), IngestError);
  write_text(dir / "l.txt", "0\n1\n");
  write_text(dir / "e.txt", "0 7\n");
  try {
    load_graph(dir / "e.txt", dir / "f.csv", dir / "l.txt");
    FAIL() << "expected an ingestion error";
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("e.txt:1"), std::string::npos) << e.what();
  }
}

TEST(RemoveNodes, EmptyVictimSetIsIdentity) {
  Graph g = random_graph({}, 3);
  EXPECT_TRUE(remove_nodes(g, std::vector<NodeId>{}) == g);
}

TEST(RemoveNodes, CutVertexOfPath) {
  Graph g = testing::small_graph(3, {{0, 1}, {1, 2}});
  Graph h = remove_nodes(g, std::vector<NodeId>{1});
  EXPECT_EQ(h.node_count(), 2u);
  EXPECT_EQ(h.edge_count(), 0u);
  EXPECT_EQ(h.id(0), 0);
  EXPECT_EQ(h.id(1), 2);
}

TEST(RemoveNodes, MatchesBruteForceEdgeFilter) {
  RandomGraphSpec s;
  s.id_stride = 3;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Graph g = random_graph(s, seed);
    std::mt19937_64 rng(seed);
    std::vector<NodeId> ids(g.ids().begin(), g.ids().end());
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<NodeId> victims(ids.begin(), ids.begin() + 3);
    std::set<NodeId> vs(victims.begin(), victims.end());

    std::set<std::pair<NodeId, NodeId>> expect;
    for (const auto& e : g.edges())
      if (!vs.contains(g.id(e.u)) && !vs.contains(g.id(e.v))) expect.emplace(g.id(e.u), g.id(e.v));

    Graph h = remove_nodes(g, victims);
    std::set<std::pair<NodeId, NodeId>> got;
    for (const auto& e : h.edges()) got.emplace(h.id(e.u), h.id(e.v));
    EXPECT_EQ(got, expect);
    EXPECT_EQ(h.node_count(), g.node_count() - 3);
    for (NodeId v : h.ids()) {
      EXPECT_FALSE(vs.contains(v));
      EXPECT_EQ(h.features().row(static_cast<Eigen::Index>(*h.index_of(v))),
                g.features().row(static_cast<Eigen::Index>(*g.index_of(v))));
      EXPECT_EQ(h.label(*h.index_of(v)), g.label(*g.index_of(v)));
    }
  }
}

TEST(RemoveNodes, UnknownIdsAreListed) {
  Graph g = random_graph({}, 1);
  try {
    remove_nodes(g, std::vector<NodeId>{1000, 2000});
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("1000"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("2000"), std::string::npos);
  }
}

TEST(SplitNodes, ExactFractionAndDisjointness) {
  RandomGraphSpec s;
  s.nodes = 100;
  Graph g = random_graph(s, 9);
  Split sp = split_nodes(g, 0.8, 4);
  EXPECT_EQ(sp.train.size(), 80u);
  EXPECT_EQ(sp.test.size(), 20u);
  std::set<NodeId> tr(sp.train.begin(), sp.train.end());
  for (NodeId v : sp.test) EXPECT_FALSE(tr.contains(v));
}

TEST(SplitNodes, DeterministicForSeed) {
  Graph g = random_graph({}, 9);
  EXPECT_EQ(split_nodes(g, 0.7, 11).train, split_nodes(g, 0.7, 11).train);
  EXPECT_NE(split_nodes(g, 0.7, 11).train, split_nodes(g, 0.7, 12).train);
}

TEST(SplitNodes, StratifiedPerClassCounts) {
  std::vector<NodeId> ids(100);
  std::vector<int> labels(100);
  for (int i = 0; i < 100; ++i) {
    ids[static_cast<std::size_t>(i)] = i;
    labels[static_cast<std::size_t>(i)] = i % 10;
  }
  std::vector<std::pair<NodeIndex, NodeIndex>> none;
  Graph g = Graph::build(ids, none, {}, RowMatrix::Zero(100, 1), labels, 10);
  Split sp = split_nodes(g, 0.8, 1);
  std::vector<int> per(10, 0);
  for (NodeId v : sp.train) ++per[static_cast<std::size_t>(g.label(*g.index_of(v)))];
  for (int c : per) EXPECT_EQ(c, 8);
}

TEST(SplitNodes, RejectsBadFraction) {
  Graph g = random_graph({}, 1);
  EXPECT_THROW(split_nodes(g, 0.0, 1), ParameterError);
  EXPECT_THROW(split_nodes(g, 1.0, 1), ParameterError);
}

TEST(SplitNodes, UnlabeledNodesNeverReachTest) {
  RandomGraphSpec s;
  s.unlabeled_p = 0.3;
  Graph g = random_graph(s, 5);
  Split sp = split_nodes(g, 0.5, 2);
  for (NodeId v : sp.test) EXPECT_NE(g.label(*g.index_of(v)), kUnlabeled);
  EXPECT_EQ(sp.train.size() + sp.test.size(), g.node_count());
}

TEST(Serialization, RoundTripRandomGraphs) {
  RandomGraphSpec s;
  s.weighted = true;
  s.unlabeled_p = 0.1;
  s.id_stride = 7;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    s.nodes = 1 + seed % 25;
    Graph g = random_graph(s, seed);
    ASSERT_TRUE(deserialize_graph(serialize_graph(g)) == g) << "seed " << seed;
  }
}

TEST(Serialization, ByteStable) {
  Graph g = random_graph({}, 4);
  EXPECT_EQ(serialize_graph(g), serialize_graph(deserialize_graph(serialize_graph(g))));
}

TEST(Serialization, FileRoundTripAndCorruption) {
  TempDir dir("ser");
  Graph g = random_graph({}, 2);
  save_graph(g, dir / "g.bin");
  EXPECT_TRUE(load_saved(dir / "g.bin") == g);

  std::string bytes = serialize_graph(g);
  EXPECT_THROW(deserialize_graph(bytes.substr(0, bytes.size() / 2)), FormatError);
  EXPECT_THROW(deserialize_graph(bytes.substr(0, 3)), FormatError);

  std::string wrong_version = bytes;
  wrong_version[4] = static_cast<char>(99);
  try {
    deserialize_graph(wrong_version);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  EXPECT_THROW(deserialize_graph(wrong_magic), FormatError);
}

TEST(Serialization, SplitFileRoundTrip) {
  TempDir dir("split");
  Graph g = random_graph({}, 8);
  Split sp = split_nodes(g, 0.6, 3);
  write_split(sp, dir / "split.txt");
  Split back = read_split(dir / "split.txt");
  EXPECT_EQ(back.train, sp.train);
  EXPECT_EQ(back.test, sp.test);
  EXPECT_EQ(back.seed, sp.seed);
}

}  // namespace
}  // namespace cge
