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

// Metrics and the end-to-end experiment harness.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cge/common.hpp"
#include "cge/community.hpp"
#include "cge/gnn.hpp"
#include "cge/graph.hpp"
#include "cge/mapping.hpp"
#include "cge/unlearning.hpp"

namespace cge {

/// Unweighted mean of per-class F1 over the classes present in `truths`.
/// A class with no true and no predicted positives scores 0.
inline double macro_f1(std::span<const int> predictions, std::span<const int> truths, int num_classes) {
  if (predictions.size() != truths.size()) throw ParameterError("prediction/truth length mismatch");
  if (truths.empty()) throw ParameterError("macro F1 of an empty set");
  if (num_classes < 1) throw ParameterError("num_classes must be positive");
  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<double> tp(k, 0.0), fp(k, 0.0), fn(k, 0.0);
  std::vector<char> present(k, 0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int y = truths[i], p = predictions[i];
    if (y < 0 || y >= num_classes || p < 0 || p >= num_classes) throw ParameterError("class id out of range");
    present[static_cast<std::size_t>(y)] = 1;
    if (y == p) {
      tp[static_cast<std::size_t>(y)] += 1.0;
    } else {
      fn[static_cast<std::size_t>(y)] += 1.0;
      fp[static_cast<std::size_t>(p)] += 1.0;
    }
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (!present[c]) continue;
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    sum += denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
    ++count;
  }
  return sum / static_cast<double>(count);
}

/// Attack score of one softmax row: mean of max confidence and one minus
/// entropy normalised by log(C).
inline double mia_score(std::span<const double> probs) {
  if (probs.empty()) throw ParameterError("empty score vector");
  double mx = 0.0, h = 0.0;
  for (double p : probs) {
    mx = std::max(mx, p);
    if (p > 0.0) h -= p * std::log(p);
  }
  const double norm = probs.size() > 1 ? h / std::log(static_cast<double>(probs.size())) : 0.0;
  return 0.5 * (mx + (1.0 - norm));
}

/// Probability that a member outscores a non-member; ties count one half.
inline double mia_auc(std::span<const double> members, std::span<const double> nonmembers) {
  if (members.empty() || nonmembers.empty()) throw ParameterError("membership AUC needs both sets non-empty");
  struct Item {
    double s;
    bool member;
  };
  std::vector<Item> all;
  all.reserve(members.size() + nonmembers.size());
  for (double s : members) all.push_back({s, true});
  for (double s : nonmembers) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.s < b.s; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].s == all[i].s) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k)
      if (all[k].member) rank_sum += mid;
    i = j;
  }
  const double m = static_cast<double>(members.size()), n = static_cast<double>(nonmembers.size());
  return (rank_sum - m * (m + 1.0) / 2.0) / (m * n);
}

// ---------------------------------------------------------------------------
// Information retention

struct AutoencoderConfig {
  /// 0 selects min(64, d).
  int hidden = 0;
  int epochs = 200;
  double lr = 0.01;
  double weight_decay = 0.001;
};

/// x_hat = x * encoder * decoder.
struct LinearAutoencoder {
  Eigen::MatrixXd encoder;  // d x h
  Eigen::MatrixXd decoder;  // h x d
  std::vector<double> loss_trace;

  Eigen::RowVectorXd reconstruct(const Eigen::RowVectorXd& x) const { return (x * encoder) * decoder; }
};

/// Trains on squared reconstruction error. The loss and gradients only
/// need X^T X applied to thin matrices, so X is never reconstructed in full.
inline LinearAutoencoder train_autoencoder(const RowMatrix& x, const AutoencoderConfig& cfg, std::uint64_t seed) {
  if (x.rows() == 0 || x.cols() == 0) throw ParameterError("autoencoder needs non-empty features");
  const Eigen::Index d = x.cols();
  const Eigen::Index h = cfg.hidden > 0 ? cfg.hidden : std::min<Eigen::Index>(64, d);
  const Features fx(x);
  auto gram = [&](const Eigen::MatrixXd& b) { return fx.transpose_times(fx.times(b)); };
  const double trace = x.squaredNorm();
  // Squared error summed over features, averaged over rows. Averaging over
  // features as well shrinks the gradient below the weight decay on wide
  // sparse inputs and the decoder collapses to the mean direction.
  const double scale = 1.0 / static_cast<double>(x.rows());

  std::mt19937_64 rng(seed);
  LinearAutoencoder ae;
  ae.encoder = detail::glorot(d, h, rng);
  ae.decoder = detail::glorot(h, d, rng);
  Eigen::MatrixXd m_e = Eigen::MatrixXd::Zero(d, h), v_e = m_e;
  Eigen::MatrixXd m_d = Eigen::MatrixXd::Zero(h, d), v_d = m_d;
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto& e = ae.encoder;
    auto& dd = ae.decoder;
    const Eigen::MatrixXd ge = gram(e);                    // G E
    const Eigen::MatrixXd gdt = gram(dd.transpose());      // G D^T
    const Eigen::MatrixXd ege = e.transpose() * ge;        // E^T G E
    // ||X - X E D||^2 = tr G - 2 tr(D^T E^T G) + tr(D^T E^T G E D)
    const double loss = trace - 2.0 * (dd.array() * ge.transpose().array()).sum() +
                        (dd.array() * (ege * dd).array()).sum();
    ae.loss_trace.push_back(loss * scale);
    Eigen::MatrixXd grad_e = scale * (-2.0 * gdt + 2.0 * ge * (dd * dd.transpose())) + cfg.weight_decay * e;
    Eigen::MatrixXd grad_d = scale * (-2.0 * ge.transpose() + 2.0 * ege * dd) + cfg.weight_decay * dd;
    const double c1 = 1.0 - std::pow(b1, epoch), c2 = 1.0 - std::pow(b2, epoch);
    auto step = [&](Eigen::MatrixXd& p, Eigen::MatrixXd& m, Eigen::MatrixXd& v, const Eigen::MatrixXd& g) {
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
      p.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    step(e, m_e, v_e, grad_e);
    step(dd, m_d, v_d, grad_d);
    if (!e.allFinite() || !dd.allFinite()) throw ConsistencyError("autoencoder diverged");
  }
  return ae;
}

inline double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw ParameterError("degenerate cosine");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

/// Mean over subgraphs of cos(reconstructed mean of g, reconstructed mean of the subgraph).
inline double info_retention(const Graph& g, const LinearAutoencoder& ae, const std::vector<std::vector<NodeId>>& parts) {
  if (parts.empty()) throw ParameterError("info retention needs at least one subgraph");
  const Eigen::RowVectorXd whole = ae.reconstruct(g.features().colwise().mean());
  double sum = 0.0;
  for (const auto& part : parts) {
    if (part.empty()) throw ParameterError("empty subgraph");
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(g.feature_dim()));
    for (NodeId v : part) {
      auto i = g.index_of(v);
      if (!i) throw ParameterError("unknown node id " + std::to_string(v));
      mean += g.feature(*i);
    }
    mean /= static_cast<double>(part.size());
    sum += cosine(whole, ae.reconstruct(mean));
  }
  return sum / static_cast<double>(parts.size());
}

inline double info_retention(const Graph& g, const std::vector<std::vector<NodeId>>& parts,
                             const AutoencoderConfig& cfg, std::uint64_t seed) {
  return info_retention(g, train_autoencoder(g.features(), cfg, seed), parts);
}

inline std::vector<std::vector<NodeId>> partition_node_sets(const Graph& g, const CommunityPartition& p) {
  std::vector<std::vector<NodeId>> out(p.community_count());
  for (std::size_t c = 0; c < p.community_count(); ++c)
    for (NodeIndex v : p.members(static_cast<CommunityId>(c))) out[c].push_back(g.id(v));
  return out;
}

// ---------------------------------------------------------------------------
// Experiment

struct ExperimentConfig {
  std::uint64_t seed = 1;
  double train_fraction = 0.8;
  RefineOptions refine;
  MappingConfig mapping;
  Backbone backbone = Backbone::gcn;
  Hyper hyper;
  double unlearn_fraction = 0.005;
  bool strict = false;
  bool skip_retrain = false;
  bool compute_info_retention = true;
  AutoencoderConfig autoencoder;
};

struct EvalReport {
  std::uint64_t seed = 0;
  std::string backbone;
  std::size_t nodes = 0;
  std::size_t train_nodes = 0;
  std::size_t communities = 0;
  std::size_t mapped_edges = 0;
  std::size_t victims = 0;
  std::size_t recomputed_nodes = 0;
  double macro_f1 = 0.0;
  double macro_f1_after = 0.0;
  double mia_auc = 0.5;
  double info_retention = 0.0;
  double mean_conductance = 0.0;
  double deploy_seconds = 0.0;
  double unlearn_seconds = 0.0;
  bool retrained = true;
};

inline std::string report_csv_header() {
  return "seed,backbone,nodes,train_nodes,communities,mapped_edges,victims,recomputed_nodes,macro_f1,"
         "macro_f1_after,mia_auc,info_retention,mean_conductance,deploy_seconds,unlearn_seconds,retrained";
}

inline std::string report_csv_row(const EvalReport& r) {
  std::ostringstream out;
  out.precision(10);
  out << r.seed << ',' << r.backbone << ',' << r.nodes << ',' << r.train_nodes << ',' << r.communities << ','
      << r.mapped_edges << ',' << r.victims << ',' << r.recomputed_nodes << ',' << r.macro_f1 << ','
      << r.macro_f1_after << ',' << r.mia_auc << ',' << r.info_retention << ',' << r.mean_conductance << ','
      << r.deploy_seconds << ',' << r.unlearn_seconds << ',' << (r.retrained ? 1 : 0);
  return out.str();
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// round(fraction * n) ids drawn from `pool`, at least one.
inline std::vector<NodeId> sample_victims(std::span<const NodeId> pool, std::size_t total_nodes, double fraction,
                                          std::uint64_t seed) {
  const auto want = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total_nodes))));
  std::vector<NodeId> v(pool.begin(), pool.end());
  std::mt19937_64 rng(seed);
  std::shuffle(v.begin(), v.end(), rng);
  v.resize(std::min(want, v.size()));
  std::sort(v.begin(), v.end());
  return v;
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error(std::string("stage=") + name + " " + e.what());
  }
}

}  // namespace detail

/// Split, detect, map, train, evaluate, unlearn a victim batch, retrain,
/// re-evaluate. `g` is never modified.
inline EvalReport run_experiment(const Graph& g, const ExperimentConfig& cfg) {
  EvalReport r;
  r.seed = cfg.seed;
  r.backbone = backbone_name(cfg.backbone);
  r.nodes = g.node_count();

  const Split split = detail::stage("split", [&] { return split_nodes(g, cfg.train_fraction, cfg.seed); });
  const Graph train_g = detail::stage("split", [&] { return induced_subgraph(g, split.train); });
  r.train_nodes = train_g.node_count();

  auto t0 = detail::Clock::now();
  RefineOptions ropt = cfg.refine;
  ropt.seed = cfg.seed;
  const CommunityPartition part = detail::stage("partition", [&] { return refine(train_g, louvain(train_g, cfg.seed), ropt); });
  auto [mg, tables] = detail::stage("map", [&] { return build_mapped_graph(train_g, part, cfg.mapping); });
  TrainedModel model = detail::stage("train", [&] { return train(mg, cfg.backbone, cfg.hyper, cfg.seed); });
  r.deploy_seconds = detail::seconds_since(t0);
  r.communities = mg.nodes.size();
  r.mapped_edges = mg.edges.size();

  std::vector<NodeId> test_ids;
  std::vector<int> truths;
  for (NodeId v : split.test) {
    const int y = g.label(*g.index_of(v));
    if (y == kUnlabeled) continue;
    test_ids.push_back(v);
    truths.push_back(y);
  }
  auto evaluate = [&](const MappedGraph& m, const MappingTables& t, const TrainedModel& mod) {
    Predictor pred(g, m, t, mod);
    std::vector<int> out;
    for (NodeId v : test_ids) out.push_back(pred.predict(v).label);
    return macro_f1(out, truths, g.num_classes());
  };
  if (!test_ids.empty()) r.macro_f1 = detail::stage("eval", [&] { return evaluate(mg, tables, model); });

  UnlearnRequest req;
  req.victims = detail::sample_victims(split.train, g.node_count(), cfg.unlearn_fraction, cfg.seed + 1);
  req.strict_feature_update = cfg.strict;
  r.victims = req.victims.size();

  t0 = detail::Clock::now();
  UnlearnResult res = detail::stage("unlearn", [&] { return unlearn(train_g, mg, tables, req); });
  r.retrained = !cfg.skip_retrain && !(res.mapped == mg);
  TrainedModel after = r.retrained
                           ? detail::stage("retrain", [&] { return train(res.mapped, cfg.backbone, cfg.hyper, cfg.seed); })
                           : model;
  r.unlearn_seconds = detail::seconds_since(t0);
  r.recomputed_nodes = res.influence.nodes.size();

  if (!test_ids.empty()) {
    r.macro_f1_after = detail::stage("eval", [&] { return evaluate(res.mapped, res.tables, after); });
    detail::stage("mia", [&] {
      Predictor pred(g, res.mapped, res.tables, after);
      std::vector<double> member, nonmember;
      for (NodeId v : req.victims) member.push_back(mia_score(pred.predict(v).scores));
      for (NodeId v : test_ids) nonmember.push_back(mia_score(pred.predict(v).scores));
      r.mia_auc = mia_auc(member, nonmember);
      return 0;
    });
  }

  r.mean_conductance = detail::stage("eval", [&] { return mean_conductance(train_g, part); });
  if (cfg.compute_info_retention)
    r.info_retention = detail::stage(
        "eval", [&] { return info_retention(train_g, partition_node_sets(train_g, part), cfg.autoencoder, cfg.seed); });
  return r;
}

}  // namespace cge
