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

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cge/common.hpp"
#include "cge/serialize.hpp"

namespace cge {

/// Undirected edge in canonical orientation (u < v), dense indices.
struct Edge {
  NodeIndex u;
  NodeIndex v;
  double weight;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Immutable undirected attributed graph in CSR form.
///
/// Every node has a stable external id. Dense indices follow ascending id
/// order, so removing nodes never reorders the survivors.
class Graph {
 public:
  Graph() = default;

  /// Builds a graph over `ids.size()` nodes. Self-loops are dropped and
  /// duplicate pairs (in either orientation) collapse to the first weight seen.
  static Graph build(std::vector<NodeId> ids, std::span<const std::pair<NodeIndex, NodeIndex>> pairs,
                     std::span<const double> weights, RowMatrix features, std::vector<int> labels,
                     int num_classes) {
    const std::size_t n = ids.size();
    if (static_cast<std::size_t>(features.rows()) != n)
      throw IngestError("feature rows (" + std::to_string(features.rows()) +
                        ") != node count (" + std::to_string(n) + ")");
    if (labels.size() != n)
      throw IngestError("label count (" + std::to_string(labels.size()) + ") != node count (" +
                        std::to_string(n) + ")");
    if (!weights.empty() && weights.size() != pairs.size())
      throw ParameterError("edge weight count does not match edge count");
    if (!features.allFinite()) throw IngestError("non-finite feature value");
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] != kUnlabeled && (labels[i] < 0 || labels[i] >= num_classes))
        throw IngestError("label " + std::to_string(labels[i]) + " of node " +
                          std::to_string(ids[i]) + " outside [0, " + std::to_string(num_classes) +
                          ")");
    }
    if (!std::is_sorted(ids.begin(), ids.end()) ||
        std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw ParameterError("node ids must be strictly increasing");

    std::vector<Edge> edges;
    edges.reserve(pairs.size());
    for (std::size_t e = 0; e < pairs.size(); ++e) {
      auto [a, b] = pairs[e];
      if (a >= n || b >= n) throw ParameterError("edge endpoint out of range");
      if (a == b) continue;
      const double w = weights.empty() ? 1.0 : weights[e];
      if (!(w > 0.0) || !std::isfinite(w)) throw IngestError("edge weight must be positive");
      edges.push_back({std::min(a, b), std::max(a, b), w});
    }
    std::stable_sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
      return x.u != y.u ? x.u < y.u : x.v < y.v;
    });
    edges.erase(std::unique(edges.begin(), edges.end(),
                            [](const Edge& x, const Edge& y) { return x.u == y.u && x.v == y.v; }),
                edges.end());

    Graph g;
    g.ids_ = std::move(ids);
    g.features_ = std::move(features);
    g.labels_ = std::move(labels);
    g.num_classes_ = num_classes;
    g.edges_ = std::move(edges);
    g.finish();
    return g;
  }

  std::size_t node_count() const { return ids_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features_.cols()); }
  int num_classes() const { return num_classes_; }

  /// Sum of edge weights (m in the modularity formula).
  double total_weight() const { return total_weight_; }

  std::span<const NodeIndex> neighbors(NodeIndex i) const {
    return {adj_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::span<const double> neighbor_weights(NodeIndex i) const {
    return {adj_w_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  /// Weighted degree.
  double degree(NodeIndex i) const { return degree_[i]; }

  NodeId id(NodeIndex i) const { return ids_[i]; }
  std::span<const NodeId> ids() const { return ids_; }
  std::optional<NodeIndex> index_of(NodeId id) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) return std::nullopt;
    return static_cast<NodeIndex>(it - ids_.begin());
  }
  bool contains(NodeId id) const { return index_of(id).has_value(); }

  const RowMatrix& features() const { return features_; }
  auto feature(NodeIndex i) const { return features_.row(static_cast<Eigen::Index>(i)); }
  std::span<const int> labels() const { return labels_; }
  int label(NodeIndex i) const { return labels_[i]; }

  /// Canonical edge list, sorted by (u, v).
  std::span<const Edge> edges() const { return edges_; }

  /// Bitwise equality on every field, including floating-point payloads.
  friend bool operator==(const Graph& a, const Graph& b) {
    auto same_bits = [](const RowMatrix& x, const RowMatrix& y) {
      return x.rows() == y.rows() && x.cols() == y.cols() &&
             (x.size() == 0 ||
              std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0);
    };
    if (a.ids_ != b.ids_ || a.labels_ != b.labels_ || a.num_classes_ != b.num_classes_) return false;
    if (a.edges_.size() != b.edges_.size()) return false;
    for (std::size_t e = 0; e < a.edges_.size(); ++e) {
      const auto& x = a.edges_[e];
      const auto& y = b.edges_[e];
      if (x.u != y.u || x.v != y.v || std::memcmp(&x.weight, &y.weight, sizeof(double)) != 0)
        return false;
    }
    return same_bits(a.features_, b.features_);
  }

 private:
  void finish() {
    const std::size_t n = ids_.size();
    offsets_.assign(n + 1, 0);
    for (const auto& e : edges_) {
      ++offsets_[e.u + 1];
      ++offsets_[e.v + 1];
    }
    std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
    adj_.resize(offsets_[n]);
    adj_w_.resize(offsets_[n]);
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (const auto& e : edges_) {
      adj_[fill[e.u]] = e.v;
      adj_w_[fill[e.u]++] = e.weight;
      adj_[fill[e.v]] = e.u;
      adj_w_[fill[e.v]++] = e.weight;
    }
    // edges_ is sorted by (u, v), so each neighbor run is already ascending
    // for the u side; sort to make both sides canonical.
    for (std::size_t i = 0; i < n; ++i) {
      const auto b = offsets_[i], e = offsets_[i + 1];
      std::vector<std::pair<NodeIndex, double>> tmp;
      tmp.reserve(e - b);
      for (auto k = b; k < e; ++k) tmp.emplace_back(adj_[k], adj_w_[k]);
      std::sort(tmp.begin(), tmp.end());
      for (auto k = b; k < e; ++k) {
        adj_[k] = tmp[k - b].first;
        adj_w_[k] = tmp[k - b].second;
      }
    }
    degree_.assign(n, 0.0);
    total_weight_ = 0.0;
    for (const auto& e : edges_) {
      degree_[e.u] += e.weight;
      degree_[e.v] += e.weight;
      total_weight_ += e.weight;
    }
  }

  std::vector<NodeId> ids_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_;
  std::vector<NodeIndex> adj_;
  std::vector<double> adj_w_;
  std::vector<double> degree_;
  double total_weight_ = 0.0;
  RowMatrix features_;
  std::vector<int> labels_;
  int num_classes_ = 0;
};

/// Train/test node split (external ids, sorted).
struct Split {
  std::vector<NodeId> train;
  std::vector<NodeId> test;
  std::uint64_t seed = 0;

  friend bool operator==(const Split&, const Split&) = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = std::string_view(s.data(), s.size());
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace detail

/// Loads an edge list (`u v` per line), a CSV feature file (row i = node i)
/// and a label file (one class id per line, -1 for unlabeled).
inline Graph load_graph(const std::filesystem::path& edge_path,
                        const std::filesystem::path& feature_path,
                        const std::filesystem::path& label_path) {
  auto open = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw IngestError("cannot open '" + p.string() + "'");
    return in;
  };

  std::vector<std::vector<double>> rows;
  {
    auto in = open(feature_path);
    std::string line;
    std::size_t lineno = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (detail::trim(line).empty()) continue;
      std::vector<double> row;
      std::size_t start = 0;
      while (true) {
        auto comma = line.find(',', start);
        auto field = std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        double v;
        if (!detail::parse_number(field, v))
          throw IngestError(feature_path.string() + ":" + std::to_string(lineno) +
                            ": bad feature value '" + std::string(field) + "'");
        if (!std::isfinite(v))
          throw IngestError(feature_path.string() + ":" + std::to_string(lineno) +
                            ": non-finite feature value");
        row.push_back(v);
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      if (rows.empty()) dim = row.size();
      if (row.size() != dim)
        throw IngestError(feature_path.string() + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(dim) + " features, got " + std::to_string(row.size()));
      rows.push_back(std::move(row));
    }
  }
  const std::size_t n = rows.size();
  const std::size_t d = n ? rows[0].size() : 0;

  std::vector<int> labels;
  int max_label = -1;
  {
    auto in = open(label_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto t = detail::trim(line);
      if (t.empty()) continue;
      int y;
      if (!detail::parse_number(std::string_view(t), y) || y < kUnlabeled)
        throw IngestError(label_path.string() + ":" + std::to_string(lineno) + ": bad label '" + t + "'");
      if (labels.size() == n)
        throw IngestError(label_path.string() + ":" + std::to_string(lineno) +
                          ": more labels than feature rows (" + std::to_string(n) + ")");
      labels.push_back(y);
      max_label = std::max(max_label, y);
    }
    if (labels.size() != n)
      throw IngestError(label_path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(n) + " labels, got " + std::to_string(labels.size()));
  }

  std::vector<std::pair<NodeIndex, NodeIndex>> pairs;
  {
    auto in = open(edge_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      auto sep = t.find_first_of(" \t");
      long long a = -1, b = -1;
      bool ok = sep != std::string::npos &&
                detail::parse_number(std::string_view(t).substr(0, sep), a) &&
                detail::parse_number(detail::trim(std::string_view(t).substr(sep)), b);
      if (!ok)
        throw IngestError(edge_path.string() + ":" + std::to_string(lineno) + ": bad edge line '" + t + "'");
      if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n || static_cast<std::size_t>(b) >= n)
        throw IngestError(edge_path.string() + ":" + std::to_string(lineno) + ": node id out of range [0, " +
                          std::to_string(n) + ")");
      pairs.emplace_back(static_cast<NodeIndex>(a), static_cast<NodeIndex>(b));
    }
  }

  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  std::vector<NodeId> ids(n);
  std::iota(ids.begin(), ids.end(), NodeId{0});
  return Graph::build(std::move(ids), pairs, {}, std::move(x), std::move(labels), max_label + 1);
}

/// Returns g without `victims` and without any edge incident to them.
inline Graph remove_nodes(const Graph& g, std::span<const NodeId> victims) {
  std::vector<char> drop(g.node_count(), 0);
  std::vector<NodeId> unknown;
  for (NodeId v : victims) {
    if (auto i = g.index_of(v)) drop[*i] = 1;
    else unknown.push_back(v);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown node ids:";
    for (NodeId v : unknown) msg += " " + std::to_string(v);
    throw ParameterError(msg);
  }
  std::vector<NodeIndex> remap(g.node_count(), 0);
  std::vector<NodeId> ids;
  std::vector<int> labels;
  for (NodeIndex i = 0; i < g.node_count(); ++i) {
    if (drop[i]) continue;
    remap[i] = ids.size();
    ids.push_back(g.id(i));
    labels.push_back(g.label(i));
  }
  RowMatrix x(static_cast<Eigen::Index>(ids.size()), g.features().cols());
  for (NodeIndex i = 0, r = 0; i < g.node_count(); ++i)
    if (!drop[i]) x.row(static_cast<Eigen::Index>(r++)) = g.feature(i);
  std::vector<std::pair<NodeIndex, NodeIndex>> pairs;
  std::vector<double> weights;
  for (const auto& e : g.edges()) {
    if (drop[e.u] || drop[e.v]) continue;
    pairs.emplace_back(remap[e.u], remap[e.v]);
    weights.push_back(e.weight);
  }
  return Graph::build(std::move(ids), pairs, weights, std::move(x), std::move(labels), g.num_classes());
}

/// Keeps only `keep` (external ids); convenience over remove_nodes.
inline Graph induced_subgraph(const Graph& g, std::span<const NodeId> keep) {
  std::set<NodeId> k(keep.begin(), keep.end());
  std::vector<NodeId> drop;
  for (NodeId id : g.ids())
    if (!k.contains(id)) drop.push_back(id);
  return remove_nodes(g, drop);
}

/// Stratified, seeded split of the labeled nodes. Unlabeled nodes go to
/// `train` (they still contribute structure) and never to `test`.
///
/// The train size is round(fraction * labeled); per-class quotas use the
/// largest-remainder rule so classes receive floor or ceil of their share.
inline Split split_nodes(const Graph& g, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ParameterError("train_fraction must lie in (0, 1), got " + std::to_string(train_fraction));
  const int k = g.num_classes();
  std::vector<std::vector<NodeId>> by_class(static_cast<std::size_t>(std::max(k, 0)));
  std::vector<NodeId> unlabeled;
  std::size_t labeled = 0;
  for (NodeIndex i = 0; i < g.node_count(); ++i) {
    if (g.label(i) == kUnlabeled) {
      unlabeled.push_back(g.id(i));
    } else {
      by_class[static_cast<std::size_t>(g.label(i))].push_back(g.id(i));
      ++labeled;
    }
  }
  if (labeled < 2) throw ParameterError("split requires at least 2 labeled nodes");

  const auto target = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(labeled)));
  std::vector<std::size_t> quota(by_class.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const double share = train_fraction * static_cast<double>(by_class[c].size());
    quota[c] = static_cast<std::size_t>(std::floor(share));
    assigned += quota[c];
    remainders.emplace_back(share - std::floor(share), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < target && r < remainders.size(); ++r) {
    const auto c = remainders[r].second;
    if (quota[c] < by_class[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }

  std::mt19937_64 rng(seed);
  Split s;
  s.seed = seed;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto members = by_class[c];
    std::shuffle(members.begin(), members.end(), rng);
    s.train.insert(s.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    s.test.insert(s.test.end(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]), members.end());
  }
  s.train.insert(s.train.end(), unlabeled.begin(), unlabeled.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr io::Tag kGraphMagic = io::make_tag("CGEG");
inline constexpr std::uint32_t kGraphFormatVersion = 1;

namespace detail {

inline void write_graph_sections(io::ContainerWriter& c, const Graph& g) {
  io::ByteWriter head;
  head.put<std::uint64_t>(g.node_count());
  head.put<std::uint64_t>(g.edge_count());
  head.put<std::uint64_t>(g.feature_dim());
  head.put<std::int32_t>(g.num_classes());
  head.put_span<NodeId>(g.ids());
  c.add_section(io::make_tag("HEAD"), head.bytes());

  io::ByteWriter edges;
  edges.put<std::uint64_t>(g.edge_count());
  for (const auto& e : g.edges()) {
    edges.put<std::uint64_t>(e.u);
    edges.put<std::uint64_t>(e.v);
    edges.put<double>(e.weight);
  }
  c.add_section(io::make_tag("EDGE"), edges.bytes());

  io::ByteWriter feats;
  feats.put_span<double>(std::span<const double>(g.features().data(), static_cast<std::size_t>(g.features().size())));
  c.add_section(io::make_tag("FEAT"), feats.bytes());

  io::ByteWriter labels;
  labels.put_span<int>(g.labels());
  c.add_section(io::make_tag("LABL"), labels.bytes());
}

inline Graph read_graph_sections(const io::Container& c) {
  auto head = c.section(io::make_tag("HEAD"));
  const auto n = head.get<std::uint64_t>();
  const auto m = head.get<std::uint64_t>();
  const auto d = head.get<std::uint64_t>();
  const auto k = head.get<std::int32_t>();
  auto ids = head.get_vector<NodeId>();
  if (ids.size() != n) head.fail("id table size mismatch");

  auto er = c.section(io::make_tag("EDGE"));
  if (er.get<std::uint64_t>() != m) er.fail("edge count mismatch");
  std::vector<std::pair<NodeIndex, NodeIndex>> pairs(m);
  std::vector<double> weights(m);
  for (std::uint64_t e = 0; e < m; ++e) {
    pairs[e].first = er.get<std::uint64_t>();
    pairs[e].second = er.get<std::uint64_t>();
    weights[e] = er.get<double>();
    if (pairs[e].first >= n || pairs[e].second >= n) er.fail("edge endpoint out of range");
  }

  auto fr = c.section(io::make_tag("FEAT"));
  auto flat = fr.get_vector<double>();
  if (flat.size() != n * d) fr.fail("feature payload size mismatch");
  RowMatrix x = Eigen::Map<RowMatrix>(flat.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));

  auto lr = c.section(io::make_tag("LABL"));
  auto labels = lr.get_vector<int>();
  if (labels.size() != n) lr.fail("label count mismatch");
  Graph g = Graph::build(std::move(ids), pairs, weights, std::move(x), std::move(labels), k);
  if (g.edge_count() != m) er.fail("edge list not canonical");
  return g;
}

}  // namespace detail

inline std::string serialize_graph(const Graph& g) {
  io::ContainerWriter c(kGraphMagic, kGraphFormatVersion);
  detail::write_graph_sections(c, g);
  return c.take();
}

inline Graph deserialize_graph(std::string bytes) {
  io::Container c(std::move(bytes), kGraphMagic, kGraphFormatVersion, "graph");
  return detail::read_graph_sections(c);
}

inline void save_graph(const Graph& g, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_graph(g));
}

inline Graph load_saved(const std::filesystem::path& path) {
  return deserialize_graph(io::read_file(path));
}

/// Text form of a split: `train <id>` / `test <id>` lines after a `seed <s>` line.
inline void write_split(const Split& s, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "seed " << s.seed << '\n';
  for (NodeId v : s.train) out << "train " << v << '\n';
  for (NodeId v : s.test) out << "test " << v << '\n';
  io::write_file_atomic(path, out.str());
}

inline Split read_split(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  Split s;
  std::string kind;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::istringstream ls(line);
    std::int64_t v;
    if (!(ls >> kind >> v)) throw IngestError(path.string() + ":" + std::to_string(lineno) + ": bad split line");
    if (kind == "seed") s.seed = static_cast<std::uint64_t>(v);
    else if (kind == "train") s.train.push_back(v);
    else if (kind == "test") s.test.push_back(v);
    else throw IngestError(path.string() + ":" + std::to_string(lineno) + ": unknown split kind '" + kind + "'");
  }
  return s;
}

}  // namespace cge
