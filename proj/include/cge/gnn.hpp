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

// Two-layer GCN / GAT / GraphSAGE with hand-written backprop and Adam,
// plus the prediction path for original nodes through the mapped graph.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "cge/common.hpp"
#include "cge/graph.hpp"
#include "cge/mapping.hpp"
#include "cge/serialize.hpp"

namespace cge {

enum class Backbone : std::uint8_t { gcn = 0, gat = 1, sage = 2 };

inline std::string backbone_name(Backbone b) {
  switch (b) {
    case Backbone::gcn: return "gcn";
    case Backbone::gat: return "gat";
    case Backbone::sage: return "sage";
  }
  return "?";
}

inline Backbone parse_backbone(std::string_view s) {
  if (s == "gcn") return Backbone::gcn;
  if (s == "gat") return Backbone::gat;
  if (s == "sage") return Backbone::sage;
  throw ParameterError("unknown backbone '" + std::string(s) + "' (expected gcn|gat|sage)");
}

struct Hyper {
  int hidden = 64;
  double lr = 0.01;
  double weight_decay = 0.001;
  int epochs = 200;

  friend bool operator==(const Hyper&, const Hyper&) = default;
};

using SparseRow = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Node features, stored sparse when fewer than `sparse_below` of entries are non-zero.
class Features {
 public:
  Features() = default;
  explicit Features(const RowMatrix& x, double sparse_below = 0.10) {
    const double nnz = static_cast<double>((x.array() != 0.0).count());
    const double total = static_cast<double>(x.size());
    sparse_ = total > 0 && nnz < sparse_below * total;
    if (sparse_)
      sp_ = x.sparseView();
    else
      dense_ = x;
  }

  Eigen::Index rows() const { return sparse_ ? sp_.rows() : dense_.rows(); }
  Eigen::Index cols() const { return sparse_ ? sp_.cols() : dense_.cols(); }
  bool sparse() const { return sparse_; }

  Eigen::MatrixXd times(const Eigen::MatrixXd& w) const {
    if (sparse_) return sp_ * w;
    return dense_ * w;
  }
  Eigen::MatrixXd transpose_times(const Eigen::MatrixXd& g) const {
    if (sparse_) return sp_.transpose() * g;
    return dense_.transpose() * g;
  }

 private:
  bool sparse_ = false;
  Eigen::MatrixXd dense_;
  SparseRow sp_;
};

/// Symmetric weighted adjacency without self loops.
struct Topology {
  std::size_t n = 0;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;

  static Topology from_mapped(const MappedGraph& mg) {
    Topology t;
    t.n = mg.nodes.size();
    t.adj.resize(t.n);
    for (const auto& e : mg.edges) {
      auto a = mg.index_of(e.a), b = mg.index_of(e.b);
      if (!a || !b) throw ConsistencyError("mapped edge references a missing node");
      t.adj[*a].emplace_back(*b, e.weight);
      t.adj[*b].emplace_back(*a, e.weight);
    }
    for (auto& row : t.adj) std::sort(row.begin(), row.end());
    return t;
  }

  static Topology from_graph(const Graph& g) {
    Topology t;
    t.n = g.node_count();
    t.adj.resize(t.n);
    for (NodeIndex i = 0; i < t.n; ++i) {
      auto nb = g.neighbors(i);
      auto w = g.neighbor_weights(i);
      for (std::size_t k = 0; k < nb.size(); ++k) t.adj[i].emplace_back(nb[k], w[k]);
    }
    return t;
  }
};

/// Propagation operators derived from a topology for one backbone.
struct Operators {
  Backbone kind = Backbone::gcn;
  std::size_t n = 0;
  /// GCN: D^-1/2 (A + I) D^-1/2 with edge weights; SAGE: row mean over N(v) and v.
  SparseRow prop;
  /// GAT attention neighbourhoods (CSR, self included, ascending).
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> cols;

  Operators() = default;
  Operators(const Topology& t, Backbone k) : kind(k), n(t.n) {
    if (k == Backbone::gat) {
      offsets.push_back(0);
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> row{i};
        for (auto [j, w] : t.adj[i]) row.push_back(j);
        std::sort(row.begin(), row.end());
        row.erase(std::unique(row.begin(), row.end()), row.end());
        cols.insert(cols.end(), row.begin(), row.end());
        offsets.push_back(cols.size());
      }
      return;
    }
    std::vector<Eigen::Triplet<double>> trip;
    if (k == Backbone::gcn) {
      std::vector<double> deg(n, 1.0);
      for (std::size_t i = 0; i < n; ++i)
        for (auto [j, w] : t.adj[i]) deg[i] += w;
      for (std::size_t i = 0; i < n; ++i) {
        trip.emplace_back(i, i, 1.0 / deg[i]);
        for (auto [j, w] : t.adj[i]) trip.emplace_back(i, j, w / std::sqrt(deg[i] * deg[j]));
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const double inv = 1.0 / static_cast<double>(t.adj[i].size() + 1);
        trip.emplace_back(i, i, inv);
        for (auto [j, w] : t.adj[i]) trip.emplace_back(i, j, inv);
      }
    }
    prop.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    prop.setFromTriplets(trip.begin(), trip.end());
  }
};

/// Layer weights W1 (d x h), W2 (h x c); GAT adds a1 (2 x h), a2 (2 x c)
/// whose rows score the receiving and the sending node.
struct Params {
  Eigen::MatrixXd w1, w2, a1, a2;

  std::vector<Eigen::MatrixXd*> all() {
    std::vector<Eigen::MatrixXd*> out{&w1, &w2};
    if (a1.size() > 0) out.push_back(&a1);
    if (a2.size() > 0) out.push_back(&a2);
    return out;
  }

  Params zeros_like() const {
    Params z;
    z.w1 = Eigen::MatrixXd::Zero(w1.rows(), w1.cols());
    z.w2 = Eigen::MatrixXd::Zero(w2.rows(), w2.cols());
    z.a1 = Eigen::MatrixXd::Zero(a1.rows(), a1.cols());
    z.a2 = Eigen::MatrixXd::Zero(a2.rows(), a2.cols());
    return z;
  }
};

namespace detail {

/// Uniform in [0, 1) from the top 53 bits, identical on every platform.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline Eigen::MatrixXd glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = (2.0 * unit_uniform(rng) - 1.0) * limit;
  return m;
}

inline constexpr double kLeakySlope = 0.2;

struct LayerCache {
  Eigen::MatrixXd p;
  std::vector<double> alpha;
  std::vector<double> score;
};

/// Z = propagate(P); GAT scores with a, otherwise uses the fixed operator.
inline Eigen::MatrixXd propagate(const Operators& ops, const Eigen::MatrixXd& p, const Eigen::MatrixXd& a,
                                 LayerCache* cache) {
  if (static_cast<std::size_t>(p.rows()) != ops.n) throw ParameterError("feature rows do not match graph size");
  if (ops.kind != Backbone::gat) return ops.prop * p;
  if (a.rows() != 2 || a.cols() != p.cols()) throw ParameterError("attention vector dimension mismatch");
  const Eigen::VectorXd src = p * a.row(0).transpose();
  const Eigen::VectorXd dst = p * a.row(1).transpose();
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(p.rows(), p.cols());
  std::vector<double> alpha(ops.cols.size()), score(ops.cols.size());
  for (std::size_t i = 0; i < ops.n; ++i) {
    const std::size_t b = ops.offsets[i], e = ops.offsets[i + 1];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = b; k < e; ++k) {
      const double s = src[static_cast<Eigen::Index>(i)] + dst[static_cast<Eigen::Index>(ops.cols[k])];
      score[k] = s;
      alpha[k] = s > 0.0 ? s : kLeakySlope * s;
      mx = std::max(mx, alpha[k]);
    }
    double sum = 0.0;
    for (std::size_t k = b; k < e; ++k) {
      alpha[k] = std::exp(alpha[k] - mx);
      sum += alpha[k];
    }
    for (std::size_t k = b; k < e; ++k) {
      alpha[k] /= sum;
      z.row(static_cast<Eigen::Index>(i)) += alpha[k] * p.row(static_cast<Eigen::Index>(ops.cols[k]));
    }
  }
  if (cache) {
    cache->alpha = std::move(alpha);
    cache->score = std::move(score);
  }
  return z;
}

/// Backward of propagate: returns dP and accumulates dA.
inline Eigen::MatrixXd propagate_backward(const Operators& ops, const Eigen::MatrixXd& dz, const Eigen::MatrixXd& a,
                                          const LayerCache& cache, Eigen::MatrixXd* da) {
  if (ops.kind != Backbone::gat) return ops.prop.transpose() * dz;
  const auto& p = cache.p;
  Eigen::MatrixXd dp = Eigen::MatrixXd::Zero(p.rows(), p.cols());
  Eigen::VectorXd dsrc = Eigen::VectorXd::Zero(p.rows());
  Eigen::VectorXd ddst = Eigen::VectorXd::Zero(p.rows());
  std::vector<double> dal;
  for (std::size_t i = 0; i < ops.n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const std::size_t b = ops.offsets[i], e = ops.offsets[i + 1];
    dal.assign(e - b, 0.0);
    double dot = 0.0;
    for (std::size_t k = b; k < e; ++k) {
      const auto j = static_cast<Eigen::Index>(ops.cols[k]);
      dp.row(j) += cache.alpha[k] * dz.row(ii);
      dal[k - b] = dz.row(ii).dot(p.row(j));
      dot += cache.alpha[k] * dal[k - b];
    }
    for (std::size_t k = b; k < e; ++k) {
      const double de = cache.alpha[k] * (dal[k - b] - dot);
      const double ds = de * (cache.score[k] > 0.0 ? 1.0 : kLeakySlope);
      dsrc[ii] += ds;
      ddst[static_cast<Eigen::Index>(ops.cols[k])] += ds;
    }
  }
  dp += dsrc * a.row(0) + ddst * a.row(1);
  da->row(0) += (p.transpose() * dsrc).transpose();
  da->row(1) += (p.transpose() * ddst).transpose();
  return dp;
}

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    out.row(i) = (z.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

/// Logits from a precomputed first-layer projection P1 = X W1.
inline Eigen::MatrixXd forward_from_projection(const Operators& ops, const Eigen::MatrixXd& p1, const Params& w) {
  Eigen::MatrixXd h1 = propagate(ops, p1, w.a1, nullptr).cwiseMax(0.0);
  return propagate(ops, h1 * w.w2, w.a2, nullptr);
}

}  // namespace detail

inline Eigen::MatrixXd forward(const Operators& ops, const Features& x, const Params& w) {
  if (x.cols() != w.w1.rows()) throw ParameterError("feature dimension does not match W1");
  return detail::forward_from_projection(ops, x.times(w.w1), w);
}

/// Mean cross-entropy over rows with a label; fills `grad` when given.
inline double loss_and_grad(const Operators& ops, const Features& x, std::span<const int> labels, const Params& w,
                            Params* grad) {
  if (x.cols() != w.w1.rows() || w.w1.cols() != w.w2.rows()) throw ParameterError("layer dimensions do not chain");
  if (labels.size() != ops.n) throw ParameterError("label count does not match graph size");
  detail::LayerCache c1, c2;
  c1.p = x.times(w.w1);
  const Eigen::MatrixXd z1 = detail::propagate(ops, c1.p, w.a1, &c1);
  const Eigen::MatrixXd h1 = z1.cwiseMax(0.0);
  c2.p = h1 * w.w2;
  const Eigen::MatrixXd z2 = detail::propagate(ops, c2.p, w.a2, &c2);
  const Eigen::MatrixXd prob = detail::softmax_rows(z2);

  std::size_t count = 0;
  for (int y : labels) count += y != kUnlabeled;
  if (count == 0) throw ParameterError("no labeled rows");
  double loss = 0.0;
  Eigen::MatrixXd dz2 = Eigen::MatrixXd::Zero(z2.rows(), z2.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kUnlabeled) continue;
    const auto ii = static_cast<Eigen::Index>(i);
    if (labels[i] < 0 || labels[i] >= z2.cols()) throw ParameterError("label out of range");
    const double mx = z2.row(ii).maxCoeff();
    const double lse = mx + std::log((z2.row(ii).array() - mx).exp().sum());
    loss += lse - z2(ii, labels[i]);
    dz2.row(ii) = prob.row(ii);
    dz2(ii, labels[i]) -= 1.0;
  }
  const double inv = 1.0 / static_cast<double>(count);
  loss *= inv;
  if (!grad) return loss;
  dz2 *= inv;

  *grad = w.zeros_like();
  const Eigen::MatrixXd dp2 = detail::propagate_backward(ops, dz2, w.a2, c2, &grad->a2);
  grad->w2 = h1.transpose() * dp2;
  Eigen::MatrixXd dz1 = dp2 * w.w2.transpose();
  dz1 = (z1.array() > 0.0).select(dz1, 0.0);
  const Eigen::MatrixXd dp1 = detail::propagate_backward(ops, dz1, w.a1, c1, &grad->a1);
  grad->w1 = x.transpose_times(dp1);
  return loss;
}

inline Params init_params(Backbone kind, Eigen::Index in_dim, int hidden, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Params p;
  p.w1 = detail::glorot(in_dim, hidden, rng);
  p.w2 = detail::glorot(hidden, classes, rng);
  if (kind == Backbone::gat) {
    p.a1 = detail::glorot(2, hidden, rng);
    p.a2 = detail::glorot(2, classes, rng);
  }
  return p;
}

struct TrainedModel {
  Backbone kind = Backbone::gcn;
  Hyper hyper;
  std::uint64_t seed = 0;
  Eigen::Index in_dim = 0;
  int num_classes = 0;
  Params params;
  /// Adam first and second moments, same shapes as params.
  Params m, v;
  std::int64_t step = 0;
  std::vector<double> loss_trace;
};

/// Full-batch training with Adam (beta 0.9 / 0.999, eps 1e-8); weight decay
/// is added to the gradient. Rows labelled kUnlabeled pass messages only.
inline TrainedModel train_on(const Topology& topo, const Features& x, std::span<const int> labels, int num_classes,
                             Backbone kind, const Hyper& hyper, std::uint64_t seed) {
  if (hyper.hidden < 1 || hyper.epochs < 0 || !(hyper.lr > 0.0) || !(hyper.weight_decay >= 0.0))
    throw ParameterError("invalid hyperparameters");
  std::map<int, std::size_t> seen;
  for (int y : labels)
    if (y != kUnlabeled) ++seen[y];
  std::size_t labeled = 0;
  for (auto [y, c] : seen) labeled += c;
  if (labeled < 2 || seen.size() < 2) throw ParameterError("degenerate label set");
  if (num_classes < 2) throw ParameterError("degenerate label set");

  const Operators ops(topo, kind);
  TrainedModel model;
  model.kind = kind;
  model.hyper = hyper;
  model.seed = seed;
  model.in_dim = x.cols();
  model.num_classes = num_classes;
  model.params = init_params(kind, x.cols(), hyper.hidden, num_classes, seed);
  model.m = model.params.zeros_like();
  model.v = model.params.zeros_like();

  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Params grad;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const double loss = loss_and_grad(ops, x, labels, model.params, &grad);
    model.loss_trace.push_back(loss);
    ++model.step;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(model.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(model.step));
    auto ps = model.params.all();
    auto gs = grad.all();
    auto ms = model.m.all();
    auto vs = model.v.all();
    for (std::size_t k = 0; k < ps.size(); ++k) {
      Eigen::MatrixXd gk = *gs[k] + hyper.weight_decay * *ps[k];
      *ms[k] = b1 * *ms[k] + (1.0 - b1) * gk;
      *vs[k] = b2 * *vs[k] + (1.0 - b2) * gk.cwiseProduct(gk);
      ps[k]->array() -= hyper.lr * (ms[k]->array() / c1) / ((vs[k]->array() / c2).sqrt() + eps);
      if (!ps[k]->allFinite()) throw ConsistencyError("non-finite weights at epoch " + std::to_string(epoch));
    }
  }
  return model;
}

inline RowMatrix mapped_features(const MappedGraph& mg) {
  RowMatrix x(static_cast<Eigen::Index>(mg.nodes.size()), static_cast<Eigen::Index>(mg.feature_dim));
  for (std::size_t i = 0; i < mg.nodes.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = mg.nodes[i].feature.transpose();
  return x;
}

/// Trains on the mapped graph; unlabeled mapped nodes are excluded from the loss.
inline TrainedModel train(const MappedGraph& mg, Backbone kind, const Hyper& hyper, std::uint64_t seed) {
  std::vector<int> labels;
  for (const auto& n : mg.nodes) labels.push_back(n.label);
  return train_on(Topology::from_mapped(mg), Features(mapped_features(mg)), labels, mg.num_classes, kind, hyper, seed);
}

/// Baseline: the same loop on the original graph induced by the training nodes.
inline TrainedModel train_scratch(const Graph& g, const Split& split, Backbone kind, const Hyper& hyper,
                                  std::uint64_t seed) {
  const Graph sub = induced_subgraph(g, split.train);
  return train_on(Topology::from_graph(sub), Features(sub.features()), sub.labels(), g.num_classes(), kind, hyper,
                  seed);
}

/// Softmax rows for every node of g under a model trained on a graph of the same feature space.
inline Eigen::MatrixXd predict_graph(const TrainedModel& model, const Graph& g) {
  const Operators ops(Topology::from_graph(g), model.kind);
  return detail::softmax_rows(forward(ops, Features(g.features()), model.params));
}

struct Prediction {
  std::vector<double> scores;
  int label = 0;
  CommunityId community = 0;
};

/// Routes original nodes into the mapped graph: pick a destination
/// community, fuse the node's feature into it for one forward pass, read
/// that mapped node's output row.
class Predictor {
 public:
  Predictor(const Graph& g, const MappedGraph& mg, const MappingTables& tables, const TrainedModel& model)
      : g_(g), mg_(mg), tables_(tables), model_(model), ops_(Topology::from_mapped(mg), model.kind) {
    if (mg.nodes.empty()) throw ParameterError("empty mapped graph");
    if (static_cast<Eigen::Index>(mg.feature_dim) != model.in_dim) throw ParameterError("model/mapping dimension mismatch");
    proj_ = Features(mapped_features(mg)).times(model.params.w1);
  }

  /// Mode of neighbour communities; ties by connecting weight, then lowest
  /// id; no mapped neighbour falls back to the nearest centroid.
  CommunityId destination(NodeId v) const {
    auto vi = g_.index_of(v);
    if (!vi) throw ParameterError("unknown node id " + std::to_string(v));
    std::map<CommunityId, std::pair<std::size_t, double>> tally;
    auto nb = g_.neighbors(*vi);
    auto w = g_.neighbor_weights(*vi);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      auto it = tables_.membership.find(g_.id(nb[k]));
      if (it == tables_.membership.end() || !mg_.index_of(it->second)) continue;
      auto& t = tally[it->second];
      ++t.first;
      t.second += w[k];
    }
    if (!tally.empty()) {
      auto best = tally.begin();
      for (auto it = std::next(tally.begin()); it != tally.end(); ++it)
        if (it->second.first > best->second.first ||
            (it->second.first == best->second.first && it->second.second > best->second.second))
          best = it;
      return best->first;
    }
    const Eigen::VectorXd x = g_.feature(*vi).transpose();
    CommunityId best = mg_.nodes.front().community;
    double bd = std::numeric_limits<double>::infinity();
    for (const auto& n : mg_.nodes) {
      const double d = (n.feature - x).squaredNorm();
      if (d < bd) {
        bd = d;
        best = n.community;
      }
    }
    return best;
  }

  Prediction predict(NodeId v) {
    const CommunityId c = destination(v);
    const auto idx = static_cast<Eigen::Index>(*mg_.index_of(c));
    const auto rec = tables_.communities.find(c);
    const double n = rec == tables_.communities.end() ? 1.0 : static_cast<double>(rec->second.members.size());
    const Eigen::VectorXd fused = (n * mg_.nodes[static_cast<std::size_t>(idx)].feature +
                                   g_.feature(*g_.index_of(v)).transpose()) / (n + 1.0);
    const Eigen::RowVectorXd saved = proj_.row(idx);
    proj_.row(idx) = fused.transpose() * model_.params.w1;
    const Eigen::MatrixXd logits = detail::forward_from_projection(ops_, proj_, model_.params);
    proj_.row(idx) = saved;

    Prediction out;
    out.community = c;
    const Eigen::MatrixXd row = detail::softmax_rows(logits.row(idx));
    out.scores.assign(row.data(), row.data() + row.size());
    out.label = static_cast<int>(std::max_element(out.scores.begin(), out.scores.end()) - out.scores.begin());
    return out;
  }

  std::vector<Prediction> predict_many(std::span<const NodeId> ids) {
    std::vector<Prediction> out;
    out.reserve(ids.size());
    for (NodeId v : ids) out.push_back(predict(v));
    return out;
  }

 private:
  const Graph& g_;
  const MappedGraph& mg_;
  const MappingTables& tables_;
  const TrainedModel& model_;
  Operators ops_;
  Eigen::MatrixXd proj_;
};

inline Prediction predict_original(const Graph& g, const MappedGraph& mg, const MappingTables& tables,
                                   const TrainedModel& model, NodeId v) {
  Predictor p(g, mg, tables, model);
  return p.predict(v);
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr io::Tag kModelMagic = io::make_tag("CGEW");
inline constexpr std::uint32_t kModelFormatVersion = 1;

inline std::string serialize_model(const TrainedModel& m) {
  io::ContainerWriter c(kModelMagic, kModelFormatVersion);
  io::ByteWriter head;
  head.put<std::uint8_t>(static_cast<std::uint8_t>(m.kind));
  head.put<std::int64_t>(m.in_dim);
  head.put<std::int32_t>(m.hyper.hidden);
  head.put<std::int32_t>(m.num_classes);
  head.put<double>(m.hyper.lr);
  head.put<double>(m.hyper.weight_decay);
  head.put<std::int32_t>(m.hyper.epochs);
  head.put<std::uint64_t>(m.seed);
  head.put<std::int64_t>(m.step);
  c.add_section(io::make_tag("HEAD"), head.bytes());
  auto put_params = [&](const char (&tag)[5], const Params& p) {
    io::ByteWriter w;
    w.put_matrix(p.w1);
    w.put_matrix(p.w2);
    w.put_matrix(p.a1);
    w.put_matrix(p.a2);
    c.add_section(io::make_tag(tag), w.bytes());
  };
  put_params("WGHT", m.params);
  put_params("ADM1", m.m);
  put_params("ADM2", m.v);
  io::ByteWriter loss;
  loss.put_span<double>(m.loss_trace);
  c.add_section(io::make_tag("LOSS"), loss.bytes());
  return c.take();
}

inline TrainedModel deserialize_model(std::string bytes) {
  io::Container c(std::move(bytes), kModelMagic, kModelFormatVersion, "model");
  TrainedModel m;
  auto head = c.section(io::make_tag("HEAD"));
  const auto kind = head.get<std::uint8_t>();
  if (kind > 2) head.fail("unknown backbone tag");
  m.kind = static_cast<Backbone>(kind);
  m.in_dim = head.get<std::int64_t>();
  m.hyper.hidden = head.get<std::int32_t>();
  m.num_classes = head.get<std::int32_t>();
  m.hyper.lr = head.get<double>();
  m.hyper.weight_decay = head.get<double>();
  m.hyper.epochs = head.get<std::int32_t>();
  m.seed = head.get<std::uint64_t>();
  m.step = head.get<std::int64_t>();
  auto get_params = [&](const char (&tag)[5]) {
    auto r = c.section(io::make_tag(tag));
    Params p;
    p.w1 = r.get_matrix();
    p.w2 = r.get_matrix();
    p.a1 = r.get_matrix();
    p.a2 = r.get_matrix();
    return p;
  };
  m.params = get_params("WGHT");
  m.m = get_params("ADM1");
  m.v = get_params("ADM2");
  if (m.params.w1.rows() != m.in_dim || m.params.w1.cols() != m.hyper.hidden || m.params.w2.rows() != m.hyper.hidden ||
      m.params.w2.cols() != m.num_classes)
    throw FormatError("model: weight shapes do not match header");
  m.loss_trace = c.section(io::make_tag("LOSS")).get_vector<double>();
  return m;
}

inline void save_model(const TrainedModel& m, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_model(m));
}

inline TrainedModel load_model(const std::filesystem::path& path) { return deserialize_model(io::read_file(path)); }

inline std::string loss_csv(const TrainedModel& m) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < m.loss_trace.size(); ++i) out << i << ',' << m.loss_trace[i] << '\n';
  return out.str();
}

}  // namespace cge
