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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

namespace cge {
namespace {

using testing::random_graph;
using testing::RandomGraphSpec;

Topology topology(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                  const std::vector<double>& w = {}) {
  Topology t;
  t.n = n;
  t.adj.resize(n);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const double wk = w.empty() ? 1.0 : w[k];
    t.adj[edges[k].first].emplace_back(edges[k].second, wk);
    t.adj[edges[k].second].emplace_back(edges[k].first, wk);
  }
  for (auto& row : t.adj) std::sort(row.begin(), row.end());
  return t;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
  return m;
}

constexpr Backbone kAll[] = {Backbone::gcn, Backbone::gat, Backbone::sage};

// --- gradients --------------------------------------------------------------

TEST(LossAndGrad, MatchesCentralDifferences) {
  // 5-node graphs (a path plus one random chord), one unlabeled row.
  for (Backbone kind : kAll)
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      std::mt19937_64 rng(seed);
      std::vector<std::pair<std::size_t, std::size_t>> edges{{0, 1}, {1, 2}, {2, 3}, {3, 4}};
      edges.emplace_back(rng() % 2, 2 + rng() % 3);
      if (edges.back().second == edges.back().first + 1) edges.pop_back();
      std::vector<double> w;
      for (std::size_t k = 0; k < edges.size(); ++k) w.push_back(0.5 + static_cast<double>(rng() % 100) / 50.0);
      const Operators ops(topology(5, edges, w), kind);
      const Features x(RowMatrix(random_matrix(5, 4, rng)));
      const std::vector<int> y{0, 2, kUnlabeled, 1, 2};
      Params p = init_params(kind, 4, 6, 3, seed);

      Params g;
      loss_and_grad(ops, x, y, p, &g);
      auto ps = p.all();
      auto gs = g.all();
      ASSERT_EQ(ps.size(), kind == Backbone::gat ? 4u : 2u);
      const double h = 1e-5;
      for (std::size_t k = 0; k < ps.size(); ++k)
        for (Eigen::Index i = 0; i < ps[k]->size(); ++i) {
          double& theta = ps[k]->data()[i];
          const double keep = theta;
          theta = keep + h;
          const double up = loss_and_grad(ops, x, y, p, nullptr);
          theta = keep - h;
          const double down = loss_and_grad(ops, x, y, p, nullptr);
          theta = keep;
          const double numeric = (up - down) / (2 * h);
          const double analytic = gs[k]->data()[i];
          const double rel = std::abs(numeric - analytic) / std::max(1.0, std::abs(numeric) + std::abs(analytic));
          ASSERT_LT(rel, 1e-4) << backbone_name(kind) << " seed " << seed << " param " << k << " entry " << i;
        }
    }
}

TEST(LossAndGrad, SparseAndDenseFeaturesAgree) {
  std::mt19937_64 rng(3);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(6, 40);
  for (int i = 0; i < 6; ++i) x(i, static_cast<Eigen::Index>(rng() % 40)) = 1.0;
  const Features sparse(RowMatrix(x), 0.5), dense(RowMatrix(x), 0.0);
  ASSERT_TRUE(sparse.sparse());
  ASSERT_FALSE(dense.sparse());
  const Operators ops(topology(6, {{0, 1}, {1, 2}, {3, 4}, {4, 5}, {2, 3}}), Backbone::gcn);
  const Params p = init_params(Backbone::gcn, 40, 5, 2, 1);
  const std::vector<int> y{0, 0, 0, 1, 1, 1};
  Params ga, gb;
  EXPECT_NEAR(loss_and_grad(ops, sparse, y, p, &ga), loss_and_grad(ops, dense, y, p, &gb), 1e-12);
  EXPECT_LT((ga.w1 - gb.w1).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LossAndGrad, Errors) {
  const Operators ops(topology(3, {{0, 1}}), Backbone::gcn);
  const Features x(RowMatrix(RowMatrix::Ones(3, 2)));
  const Params p = init_params(Backbone::gcn, 2, 4, 2, 1);
  EXPECT_THROW(loss_and_grad(ops, x, std::vector<int>{kUnlabeled, kUnlabeled, kUnlabeled}, p, nullptr), ParameterError);
  EXPECT_THROW(loss_and_grad(ops, x, std::vector<int>{0, 5, 1}, p, nullptr), ParameterError);
  EXPECT_THROW(loss_and_grad(ops, x, std::vector<int>{0, 1}, p, nullptr), ParameterError);
  const Features wide(RowMatrix(RowMatrix::Ones(3, 3)));
  EXPECT_THROW(loss_and_grad(ops, wide, std::vector<int>{0, 1, 0}, p, nullptr), ParameterError);
}

// --- layer oracles ----------------------------------------------------------

TEST(Propagate, GcnMatchesDenseFormulaOnPath) {
  // Path 0-1-2-3 with weights 1, 2, 3.
  const Operators ops(topology(4, {{0, 1}, {1, 2}, {2, 3}}, {1.0, 2.0, 3.0}), Backbone::gcn);
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(4, 4);
  a(0, 1) = a(1, 0) = 1.0;
  a(1, 2) = a(2, 1) = 2.0;
  a(2, 3) = a(3, 2) = 3.0;
  const Eigen::VectorXd dinv = a.rowwise().sum().array().rsqrt();
  const Eigen::MatrixXd s = dinv.asDiagonal() * a * dinv.asDiagonal();
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd p = random_matrix(4, 3, rng);
  EXPECT_LT((detail::propagate(ops, p, {}, nullptr) - s * p).cwiseAbs().maxCoeff(), 1e-14);
  // Hand value: degree of node 0 is 2, of node 1 is 4.
  EXPECT_NEAR(Eigen::MatrixXd(ops.prop)(0, 1), 1.0 / std::sqrt(8.0), 1e-15);
}

TEST(Propagate, SingleNodeForwardIsReluChain) {
  // No neighbours: every backbone reduces to relu(x W1) W2.
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd x = random_matrix(1, 3, rng);
  for (Backbone kind : kAll) {
    const Operators ops(topology(1, {}), kind);
    const Params p = init_params(kind, 3, 5, 2, 9);
    const Eigen::MatrixXd out = forward(ops, Features(RowMatrix(x)), p);
    const Eigen::MatrixXd expect = (x * p.w1).cwiseMax(0.0) * p.w2;
    EXPECT_LT((out - expect).cwiseAbs().maxCoeff(), 1e-14) << backbone_name(kind);
  }
}

TEST(Propagate, GatAttentionMatchesSoftmaxOracle) {
  // Star: centre 0 with leaves 1, 2, 3.
  const Operators ops(topology(4, {{0, 1}, {0, 2}, {0, 3}}), Backbone::gat);
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd p = random_matrix(4, 3, rng);
  const Eigen::MatrixXd a = random_matrix(2, 3, rng);
  detail::LayerCache cache;
  const Eigen::MatrixXd z = detail::propagate(ops, p, a, &cache);

  auto leaky = [](double s) { return s > 0 ? s : 0.2 * s; };
  const std::vector<std::vector<std::size_t>> hood{{0, 1, 2, 3}, {0, 1}, {0, 2}, {0, 3}};
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> e;
    for (std::size_t j : hood[i]) e.push_back(leaky(a.row(0).dot(p.row(i)) + a.row(1).dot(p.row(j))));
    double total = 0.0;
    for (double v : e) total += std::exp(v);
    Eigen::RowVectorXd expect = Eigen::RowVectorXd::Zero(3);
    double alpha_sum = 0.0;
    for (std::size_t k = 0; k < hood[i].size(); ++k) {
      const double alpha = std::exp(e[k]) / total;
      EXPECT_NEAR(cache.alpha[ops.offsets[i] + k], alpha, 1e-14);
      alpha_sum += cache.alpha[ops.offsets[i] + k];
      expect += alpha * p.row(static_cast<Eigen::Index>(hood[i][k]));
    }
    EXPECT_NEAR(alpha_sum, 1.0, 1e-14);
    EXPECT_LT((z.row(static_cast<Eigen::Index>(i)) - expect).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Propagate, GatSingletonAttendsOnlyToItself) {
  const Operators ops(topology(3, {{0, 1}}), Backbone::gat);
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd p = random_matrix(3, 2, rng);
  detail::LayerCache cache;
  const Eigen::MatrixXd z = detail::propagate(ops, p, random_matrix(2, 2, rng), &cache);
  ASSERT_EQ(ops.offsets[3] - ops.offsets[2], 1u);
  EXPECT_DOUBLE_EQ(cache.alpha[ops.offsets[2]], 1.0);
  EXPECT_LT((z.row(2) - p.row(2)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Propagate, SageIsMeanOverNeighbourhoodAndSelf) {
  // 4-cycle: each node averages itself and its two neighbours.
  const Operators ops(topology(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}), Backbone::sage);
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd p = random_matrix(4, 2, rng);
  const Eigen::MatrixXd z = detail::propagate(ops, p, {}, nullptr);
  for (int i = 0; i < 4; ++i) {
    const Eigen::RowVectorXd expect = (p.row(i) + p.row((i + 1) % 4) + p.row((i + 3) % 4)) / 3.0;
    EXPECT_LT((z.row(i) - expect).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Propagate, RowMismatchThrows) {
  const Operators ops(topology(3, {{0, 1}}), Backbone::gcn);
  EXPECT_THROW(detail::propagate(ops, Eigen::MatrixXd::Zero(2, 2), {}, nullptr), ParameterError);
}

TEST(SoftmaxRows, RowsSumToOneAndSurviveLargeLogits) {
  Eigen::MatrixXd z(2, 3);
  z << 1000, 1001, 999, -5, 0, 5;
  const auto s = detail::softmax_rows(z);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(s.row(i).sum(), 1.0, 1e-15);
  EXPECT_TRUE(s.allFinite());
  EXPECT_NEAR(s(0, 1), std::exp(1.0) / (1 + std::exp(1.0) + std::exp(-1.0)), 1e-15);
}

TEST(Backbone, NamesRoundTrip) {
  for (Backbone k : kAll) EXPECT_EQ(parse_backbone(backbone_name(k)), k);
  EXPECT_THROW(parse_backbone("gin"), ParameterError);
}

// --- training ---------------------------------------------------------------

struct Pipeline {
  Graph g;
  MappedGraph mg;
  MappingTables tables;
};

Pipeline sbm_pipeline(std::uint64_t seed) {
  Pipeline p;
  p.g = synth::sbm({.block_sizes = {30, 30, 30}, .p_in = 0.3, .p_out = 0.02, .feature_dim = 9}, seed);
  const auto part = louvain(p.g, seed);
  std::tie(p.mg, p.tables) = build_mapped_graph(p.g, part, {});
  return p;
}

TEST(Train, LossDecreasesOnEveryBackbone) {
  const auto g = synth::sbm({.block_sizes = {20, 20, 20}, .feature_dim = 6}, 3);
  const Split split = split_nodes(g, 0.8, 1);
  for (Backbone kind : kAll) {
    const auto m = train_scratch(g, split, kind, {.hidden = 16, .epochs = 100}, 1);
    ASSERT_EQ(m.loss_trace.size(), 100u);
    EXPECT_LT(m.loss_trace.back(), 0.5 * m.loss_trace.front()) << backbone_name(kind);
    const auto prob = predict_graph(m, g);
    int right = 0;
    for (NodeIndex i = 0; i < g.node_count(); ++i) {
      Eigen::Index arg;
      prob.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
      right += arg == g.label(i);
    }
    EXPECT_GT(right, 50) << backbone_name(kind);
  }
}

TEST(Train, SameSeedGivesIdenticalWeights) {
  const auto p = sbm_pipeline(2);
  for (Backbone kind : kAll) {
    const auto a = train(p.mg, kind, {.epochs = 30}, 7);
    const auto b = train(p.mg, kind, {.epochs = 30}, 7);
    EXPECT_EQ(serialize_model(a), serialize_model(b));
    const auto c = train(p.mg, kind, {.epochs = 30}, 8);
    EXPECT_NE(serialize_model(a), serialize_model(c));
  }
}

TEST(Train, ScratchIsDeterministic) {
  const auto g = random_graph({.nodes = 40, .edge_p = 0.1}, 1);
  const Split split = split_nodes(g, 0.7, 2);
  EXPECT_EQ(serialize_model(train_scratch(g, split, Backbone::sage, {.epochs = 20}, 3)),
            serialize_model(train_scratch(g, split, Backbone::sage, {.epochs = 20}, 3)));
}

TEST(Train, DegenerateLabelsAndBadHyperparametersThrow) {
  MappedGraph mg;
  mg.feature_dim = 2;
  mg.num_classes = 2;
  for (CommunityId c = 0; c < 3; ++c) mg.nodes.push_back({c, Eigen::VectorXd::Ones(2), 0});
  EXPECT_THROW(train(mg, Backbone::gcn, {}, 1), ParameterError);  // one class only
  mg.nodes[1].label = 1;
  EXPECT_NO_THROW(train(mg, Backbone::gcn, {.epochs = 2}, 1));
  EXPECT_THROW(train(mg, Backbone::gcn, {.hidden = 0}, 1), ParameterError);
  EXPECT_THROW(train(mg, Backbone::gcn, {.lr = 0.0}, 1), ParameterError);
  EXPECT_THROW(train(mg, Backbone::gcn, {.weight_decay = -1.0}, 1), ParameterError);
}

TEST(LossAndGrad, UnlabeledRowsStayOutOfTheMean) {
  // The loss is the mean cross-entropy over labelled rows only, computed
  // here from the forward logits; the unlabeled row still shapes those logits.
  const Operators ops(topology(4, {{0, 1}, {1, 2}, {2, 3}}), Backbone::gcn);
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd x = random_matrix(4, 3, rng);
  const Params p = init_params(Backbone::gcn, 3, 4, 2, 1);
  const std::vector<int> y{0, kUnlabeled, 1, 1};
  const Eigen::MatrixXd prob = detail::softmax_rows(forward(ops, Features(RowMatrix(x)), p));
  const double expect = -(std::log(prob(0, 0)) + std::log(prob(2, 1)) + std::log(prob(3, 1))) / 3.0;
  EXPECT_NEAR(loss_and_grad(ops, Features(RowMatrix(x)), y, p, nullptr), expect, 1e-14);
  Eigen::MatrixXd moved = x;
  moved.row(1) *= 3.0;
  EXPECT_NE(loss_and_grad(ops, Features(RowMatrix(moved)), y, p, nullptr), expect);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  const auto p = sbm_pipeline(5);
  testing::TempDir dir("gnn");
  for (Backbone kind : kAll) {
    const auto m = train(p.mg, kind, {.hidden = 8, .epochs = 10}, 3);
    save_model(m, dir / "w.bin");
    const auto back = load_model(dir / "w.bin");
    EXPECT_EQ(serialize_model(back), serialize_model(m));
    EXPECT_EQ(back.kind, kind);
    EXPECT_EQ(back.hyper, m.hyper);
    EXPECT_EQ(back.loss_trace, m.loss_trace);
    auto bytes = serialize_model(m);
    EXPECT_THROW(deserialize_model(bytes.substr(0, bytes.size() / 2)), FormatError);
  }
  const auto m = train(p.mg, Backbone::gcn, {.epochs = 3}, 1);
  const auto csv = loss_csv(m);
  EXPECT_EQ(csv.rfind("epoch,loss\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

// --- prediction -------------------------------------------------------------

TEST(Predictor, DestinationIsNeighbourMajority) {
  // Node 4 has three neighbours in community 0 and one in community 1.
  auto g = testing::small_graph(8, {{0, 1}, {1, 2}, {0, 2}, {4, 0}, {4, 1}, {4, 2}, {4, 5}, {5, 6}, {6, 7}, {5, 7}, {3, 0}},
                                2, {0, 0, 0, 0, 0, 1, 1, 1});
  const std::vector<CommunityId> a{0, 0, 0, 0, 2, 1, 1, 1};
  auto [mg, t] = build_mapped_graph(g, a, {});
  const auto model = train(mg, Backbone::gcn, {.epochs = 1}, 1);
  const Predictor pred(g, mg, t, model);
  EXPECT_EQ(pred.destination(4), 0);
  // Node 5: two neighbours in community 1 beat one in community 2.
  EXPECT_EQ(pred.destination(5), 1);
  EXPECT_THROW(pred.destination(42), ParameterError);
}

TEST(Predictor, ScoresAreDistributionsAndStateIsRestored) {
  auto p = sbm_pipeline(6);
  const auto model = train(p.mg, Backbone::gat, {.hidden = 16, .epochs = 40}, 1);
  const auto mg_before = p.mg;
  Predictor pred(p.g, p.mg, p.tables, model);
  std::vector<NodeId> ids(p.g.ids().begin(), p.g.ids().end());
  ids.resize(100 > ids.size() ? ids.size() : 100);
  const auto batch = pred.predict_many(ids);
  ASSERT_EQ(batch.size(), ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    double s = 0.0;
    for (double v : batch[i].scores) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    // One at a time, in a fresh predictor and in reverse order, gives the same answer.
    const auto single = predict_original(p.g, p.mg, p.tables, model, ids[i]);
    EXPECT_EQ(single.scores, batch[i].scores);
    EXPECT_EQ(single.community, batch[i].community);
  }
  for (std::size_t i = ids.size(); i-- > 0;) EXPECT_EQ(pred.predict(ids[i]).scores, batch[i].scores);
  EXPECT_EQ(p.mg, mg_before);
}

TEST(Predictor, FusingTheCentroidItselfIsANoOp) {
  // A node whose feature equals its destination's centroid leaves the fused
  // feature unchanged, so its scores equal the mapped node's plain output.
  auto g = testing::small_graph(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}, {2, 3}}, 2, {0, 0, 0, 1, 1, 1});
  RowMatrix x(6, 2);
  x << 1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1;
  std::vector<NodeId> ids{0, 1, 2, 3, 4, 5};
  std::vector<std::pair<NodeIndex, NodeIndex>> pairs;
  for (const auto& e : g.edges()) pairs.emplace_back(e.u, e.v);
  g = Graph::build(ids, pairs, {}, x, {0, 0, 0, 1, 1, 1}, 2);
  auto [mg, t] = build_mapped_graph(g, std::vector<CommunityId>{0, 0, 0, 1, 1, 1}, {});
  const auto model = train(mg, Backbone::sage, {.hidden = 8, .epochs = 50}, 2);
  const Operators ops(Topology::from_mapped(mg), Backbone::sage);
  const Eigen::MatrixXd plain = detail::softmax_rows(forward(ops, Features(mapped_features(mg)), model.params));
  const auto out = predict_original(g, mg, t, model, 1);
  EXPECT_EQ(out.community, 0);
  for (int c = 0; c < 2; ++c) EXPECT_NEAR(out.scores[static_cast<std::size_t>(c)], plain(0, c), 1e-14);
  EXPECT_EQ(out.label, 0);
}

TEST(Predictor, IsolatedNodeFallsBackToNearestCentroid) {
  auto g = testing::small_graph(5, {{0, 1}, {2, 3}}, 1, {0, 0, 1, 1, 1});
  RowMatrix x(5, 1);
  x << 0, 0, 10, 10, 9;
  std::vector<std::pair<NodeIndex, NodeIndex>> pairs{{0, 1}, {2, 3}};
  g = Graph::build({0, 1, 2, 3, 4}, pairs, {}, x, {0, 0, 1, 1, 1}, 2);
  auto [mg, t] = build_mapped_graph(g, std::vector<CommunityId>{0, 0, 1, 1, 1}, {});
  // Drop node 4 from the tables to mimic an unseen test node with no edges.
  t.membership.erase(4);
  const auto model = train(mg, Backbone::gcn, {.epochs = 1}, 1);
  EXPECT_EQ(Predictor(g, mg, t, model).destination(4), 1);
}

TEST(Predictor, RejectsMismatchedModel) {
  auto p = sbm_pipeline(7);
  auto model = train(p.mg, Backbone::gcn, {.epochs = 1}, 1);
  model.in_dim += 1;
  EXPECT_THROW(Predictor(p.g, p.mg, p.tables, model), ParameterError);
  MappedGraph empty;
  EXPECT_THROW(Predictor(p.g, empty, p.tables, model), ParameterError);
}

}  // namespace
}  // namespace cge
