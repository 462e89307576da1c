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

// Community-to-node mapping: every community becomes one mapped node with a
// fused feature and a voted label; every community pair joined by original
// edges becomes a weighted mapped edge.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "cge/common.hpp"
#include "cge/community.hpp"
#include "cge/graph.hpp"
#include "cge/serialize.hpp"

namespace cge {

struct MappingConfig {
  /// Cumulative explained-variance target used to pick the PCA rank.
  double variance_ratio = 0.95;
  double lambda = 1.0;
  double eta = 0.0;
  /// Mapped edges need weight >= sigma.
  double sigma = 0.0;
  /// Use lambda * (1 - exp(-R)) + eta so stronger connections weigh more.
  bool invert_edge_weight = false;

  friend bool operator==(const MappingConfig&, const MappingConfig&) = default;
};

struct FusedFeatures {
  Eigen::VectorXd centroid;
  /// d x k, orthonormal columns.
  Eigen::MatrixXd basis;
  double explained_ratio = 1.0;
  /// Distance of each member to the centroid inside the retained subspace.
  Eigen::VectorXd distances;
};

namespace detail {

/// Two passes of modified Gram-Schmidt; the Gram route loses orthogonality
/// on small eigenvalues.
inline void orthonormalize_columns(Eigen::MatrixXd& v) {
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      for (Eigen::Index i = 0; i < j; ++i) v.col(j) -= v.col(i).dot(v.col(j)) * v.col(i);
      const double nrm = v.col(j).norm();
      if (nrm > 0.0) v.col(j) /= nrm;
    }
  }
}

}  // namespace detail

/// Centroid, PCA basis and per-member subspace distances of one community.
///
/// The rank k is the smallest count whose cumulative explained variance
/// reaches `variance_ratio` (k >= 1). Eigenvalues at or below 1e-12 * trace
/// are dropped first. The covariance (d x d) is decomposed when d <= 4n,
/// otherwise the Gram matrix (n x n).
inline FusedFeatures fuse_features(const RowMatrix& x, double variance_ratio) {
  if (x.rows() == 0) throw ParameterError("empty community");
  if (!(variance_ratio > 0.0 && variance_ratio <= 1.0)) throw ParameterError("variance_ratio must lie in (0, 1]");
  if (!x.allFinite()) throw ParameterError("non-finite member feature");
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  FusedFeatures out;
  out.centroid = x.colwise().mean().transpose();
  Eigen::MatrixXd y = x.rowwise() - out.centroid.transpose();
  const double trace = y.squaredNorm();

  auto unit_basis = [&] {
    out.basis = Eigen::MatrixXd::Zero(d, 1);
    if (d > 0) out.basis(0, 0) = 1.0;
    out.explained_ratio = 1.0;
    out.distances = Eigen::VectorXd::Zero(n);
  };
  if (n == 1 || !(trace > 0.0)) {
    unit_basis();
    return out;
  }

  Eigen::VectorXd evals;
  Eigen::MatrixXd evecs;
  const bool covariance_route = d <= 4 * n;
  if (covariance_route) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(y.transpose() * y);
    evals = es.eigenvalues().reverse();
    evecs = es.eigenvectors().rowwise().reverse();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(y * y.transpose());
    evals = es.eigenvalues().reverse();
    evecs = es.eigenvectors().rowwise().reverse();
  }

  Eigen::Index kept = 0;
  while (kept < evals.size() && evals[kept] > 1e-12 * trace) ++kept;
  if (kept == 0) {
    unit_basis();
    return out;
  }
  Eigen::Index k = kept;
  double cum = 0.0;
  for (Eigen::Index i = 0; i < kept; ++i) {
    cum += evals[i];
    if (cum >= variance_ratio * trace * (1.0 - 1e-12)) {
      k = i + 1;
      break;
    }
  }
  cum = evals.head(k).sum();
  out.explained_ratio = std::min(1.0, cum / trace);
  if (covariance_route) {
    out.basis = evecs.leftCols(k);
  } else {
    out.basis = y.transpose() * evecs.leftCols(k);
    for (Eigen::Index j = 0; j < k; ++j) out.basis.col(j) /= std::sqrt(evals[j]);
    detail::orthonormalize_columns(out.basis);
  }
  out.distances = (y * out.basis).rowwise().norm();
  return out;
}

/// Largest-gap threshold over sorted distances: the distance on the near
/// side of the widest consecutive gap. A single value, or all-equal values,
/// give the maximum distance.
inline double gap_threshold(std::span<const double> distances) {
  if (distances.empty()) throw ParameterError("gap threshold of an empty set");
  std::vector<double> d(distances.begin(), distances.end());
  std::sort(d.begin(), d.end());
  std::size_t at = d.size() - 1;
  double widest = 0.0;
  for (std::size_t i = 0; i + 1 < d.size(); ++i) {
    const double g = d[i + 1] - d[i];
    if (g > widest) {
      widest = g;
      at = i;
    }
  }
  return d[at];
}

struct Vote {
  int label = kUnlabeled;
  double threshold = 0.0;
};

/// Majority label among members at or below the gap threshold; ties go to
/// the smallest class id.
inline Vote vote_label(std::span<const double> distances, std::span<const int> labels) {
  if (distances.empty()) throw ParameterError("vote over an empty community");
  if (distances.size() != labels.size()) throw ParameterError("distance/label length mismatch");
  for (double v : distances)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("distances must be finite and non-negative");
  Vote out;
  out.threshold = gap_threshold(distances);
  std::map<int, std::size_t> counts;
  for (std::size_t i = 0; i < distances.size(); ++i)
    if (distances[i] <= out.threshold) ++counts[labels[i]];
  std::size_t best = 0;
  for (auto [label, c] : counts)
    if (c > best) {
      best = c;
      out.label = label;
    }
  return out;
}

/// Robustness of the connection between two communities:
/// (s / sqrt(vol_i)) * (s / sqrt(vol_j)) + s / |C_i u C_j|.
inline double edge_score(double tally, double vol_i, double vol_j, std::size_t union_size) {
  if (tally < 0.0) throw ParameterError("negative tally");
  if (tally == 0.0) return 0.0;
  if (!(vol_i > 0.0) || !(vol_j > 0.0)) throw ConsistencyError("zero community volume with cross edges");
  if (union_size == 0) throw ParameterError("empty community union");
  return (tally / std::sqrt(vol_i)) * (tally / std::sqrt(vol_j)) + tally / static_cast<double>(union_size);
}

/// w = lambda * exp(-R) + eta.
inline double edge_weight(double score, double lambda, double eta, bool invert = false) {
  if (!(lambda > 0.0)) throw ParameterError("lambda must be positive");
  if (!(eta >= 0.0)) throw ParameterError("eta must be non-negative");
  return invert ? lambda * (1.0 - std::exp(-score)) + eta : lambda * std::exp(-score) + eta;
}

// ---------------------------------------------------------------------------

struct MappedNode {
  CommunityId community = 0;
  Eigen::VectorXd feature;
  int label = kUnlabeled;
};

struct MappedEdge {
  CommunityId a = 0;  // a < b
  CommunityId b = 0;
  double score = 0.0;
  double weight = 0.0;
};

/// One node per community (ascending community id), weighted edges sorted by (a, b).
struct MappedGraph {
  std::vector<MappedNode> nodes;
  std::vector<MappedEdge> edges;
  std::size_t feature_dim = 0;
  int num_classes = 0;

  std::optional<std::size_t> index_of(CommunityId c) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), c,
                               [](const MappedNode& n, CommunityId v) { return n.community < v; });
    if (it == nodes.end() || it->community != c) return std::nullopt;
    return static_cast<std::size_t>(it - nodes.begin());
  }

  std::size_t labeled_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(),
                                                  [](const MappedNode& n) { return n.label != kUnlabeled; }));
  }

  friend bool operator==(const MappedGraph& x, const MappedGraph& y) {
    auto same = [](double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; };
    if (x.feature_dim != y.feature_dim || x.num_classes != y.num_classes) return false;
    if (x.nodes.size() != y.nodes.size() || x.edges.size() != y.edges.size()) return false;
    for (std::size_t i = 0; i < x.nodes.size(); ++i) {
      const auto &p = x.nodes[i], &q = y.nodes[i];
      if (p.community != q.community || p.label != q.label || p.feature.size() != q.feature.size()) return false;
      for (Eigen::Index j = 0; j < p.feature.size(); ++j)
        if (!same(p.feature[j], q.feature[j])) return false;
    }
    for (std::size_t e = 0; e < x.edges.size(); ++e) {
      const auto &p = x.edges[e], &q = y.edges[e];
      if (p.a != q.a || p.b != q.b || !same(p.score, q.score) || !same(p.weight, q.weight)) return false;
    }
    return true;
  }
};

/// Everything needed to recompute one mapped node without the rest of the graph.
struct CommunityRecord {
  std::vector<NodeId> members;      // ascending
  std::vector<double> distances;    // aligned with members
  std::vector<NodeId> retained;     // members with distance <= threshold
  Eigen::VectorXd centroid;
  Eigen::MatrixXd basis;
  double explained_ratio = 1.0;
  double threshold = 0.0;
  int label = kUnlabeled;
  std::size_t labeled_count = 0;
  double volume = 0.0;
};

struct CrossEdge {
  NodeId u = 0;
  NodeId v = 0;
  double weight = 1.0;
};

/// s_ij with the original edges that produced it.
struct PairTally {
  double tally = 0.0;
  std::vector<CrossEdge> edges;
};

using CommunityPair = std::pair<CommunityId, CommunityId>;

struct MappingTables {
  std::map<NodeId, CommunityId> membership;
  std::map<CommunityId, CommunityRecord> communities;
  /// Only pairs with at least one cross edge are stored.
  std::map<CommunityPair, PairTally> tallies;
  MappingConfig config;
};

namespace detail {

inline CommunityRecord compute_record(const Graph& g, std::span<const NodeIndex> members, const MappingConfig& cfg) {
  RowMatrix x(static_cast<Eigen::Index>(members.size()), g.features().cols());
  for (std::size_t r = 0; r < members.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = g.feature(members[r]);
  auto fused = fuse_features(x, cfg.variance_ratio);

  CommunityRecord rec;
  rec.members.reserve(members.size());
  for (NodeIndex v : members) rec.members.push_back(g.id(v));
  rec.distances.assign(fused.distances.data(), fused.distances.data() + fused.distances.size());
  rec.centroid = std::move(fused.centroid);
  rec.basis = std::move(fused.basis);
  rec.explained_ratio = fused.explained_ratio;

  std::vector<double> labeled_d;
  std::vector<int> labeled_y;
  for (std::size_t r = 0; r < members.size(); ++r) {
    if (g.label(members[r]) == kUnlabeled) continue;
    labeled_d.push_back(rec.distances[r]);
    labeled_y.push_back(g.label(members[r]));
  }
  rec.labeled_count = labeled_d.size();
  if (labeled_d.empty()) {
    rec.threshold = gap_threshold(rec.distances);
  } else {
    auto vote = vote_label(labeled_d, labeled_y);
    rec.label = vote.label;
    rec.threshold = vote.threshold;
  }
  for (std::size_t r = 0; r < members.size(); ++r)
    if (rec.distances[r] <= rec.threshold) rec.retained.push_back(rec.members[r]);
  for (NodeIndex v : members) rec.volume += g.degree(v);
  return rec;
}

/// Score and weight for one tallied pair; nullopt when filtered by sigma.
inline std::optional<MappedEdge> evaluate_pair(CommunityPair key, const PairTally& t, const CommunityRecord& a,
                                               const CommunityRecord& b, const MappingConfig& cfg) {
  MappedEdge e;
  e.a = key.first;
  e.b = key.second;
  e.score = edge_score(t.tally, a.volume, b.volume, a.members.size() + b.members.size());
  e.weight = edge_weight(e.score, cfg.lambda, cfg.eta, cfg.invert_edge_weight);
  if (e.weight < cfg.sigma) return std::nullopt;
  return e;
}

inline MappedNode node_from_record(CommunityId c, const CommunityRecord& rec) {
  return MappedNode{c, rec.centroid, rec.label};
}

}  // namespace detail

/// Builds the mapped graph from an explicit per-node community assignment
/// (indexed like g). Community ids are used verbatim.
inline std::pair<MappedGraph, MappingTables> build_mapped_graph(const Graph& g, std::span<const CommunityId> assignment,
                                                                const MappingConfig& cfg) {
  if (assignment.size() != g.node_count()) throw ParameterError("assignment does not match graph");
  if (!(cfg.variance_ratio > 0.0 && cfg.variance_ratio <= 1.0)) throw ParameterError("variance_ratio must lie in (0, 1]");
  edge_weight(0.0, cfg.lambda, cfg.eta);  // validates lambda / eta

  MappingTables tables;
  tables.config = cfg;
  std::map<CommunityId, std::vector<NodeIndex>> groups;
  for (NodeIndex i = 0; i < g.node_count(); ++i) {
    if (assignment[i] < 0) throw ParameterError("negative community id");
    groups[assignment[i]].push_back(i);
    tables.membership.emplace(g.id(i), assignment[i]);
  }
  for (const auto& [c, members] : groups) tables.communities.emplace(c, detail::compute_record(g, members, cfg));

  for (const auto& e : g.edges()) {
    auto ca = assignment[e.u], cb = assignment[e.v];
    if (ca == cb) continue;
    CrossEdge ce{g.id(e.u), g.id(e.v), e.weight};
    if (ca > cb) std::swap(ca, cb);
    auto& t = tables.tallies[{ca, cb}];
    t.tally += e.weight;
    t.edges.push_back(ce);
  }

  MappedGraph mg;
  mg.feature_dim = g.feature_dim();
  mg.num_classes = g.num_classes();
  for (const auto& [c, rec] : tables.communities) mg.nodes.push_back(detail::node_from_record(c, rec));
  for (const auto& [key, t] : tables.tallies) {
    if (auto e = detail::evaluate_pair(key, t, tables.communities.at(key.first), tables.communities.at(key.second), cfg))
      mg.edges.push_back(*e);
  }
  return {std::move(mg), std::move(tables)};
}

inline std::pair<MappedGraph, MappingTables> build_mapped_graph(const Graph& g, const CommunityPartition& p,
                                                                const MappingConfig& cfg) {
  return build_mapped_graph(g, p.assignment(), cfg);
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr io::Tag kMappedMagic = io::make_tag("CGEM");
inline constexpr std::uint32_t kMappedFormatVersion = 1;

inline std::string serialize_mapping(const MappedGraph& mg, const MappingTables& t) {
  io::ContainerWriter c(kMappedMagic, kMappedFormatVersion);
  {
    io::ByteWriter w;
    w.put<double>(t.config.variance_ratio);
    w.put<double>(t.config.lambda);
    w.put<double>(t.config.eta);
    w.put<double>(t.config.sigma);
    w.put<std::uint8_t>(t.config.invert_edge_weight ? 1 : 0);
    w.put<std::uint64_t>(mg.feature_dim);
    w.put<std::int32_t>(mg.num_classes);
    c.add_section(io::make_tag("MCFG"), w.bytes());
  }
  {
    io::ByteWriter w;
    w.put<std::uint64_t>(mg.nodes.size());
    for (const auto& n : mg.nodes) {
      w.put<CommunityId>(n.community);
      w.put<std::int32_t>(n.label);
      w.put_vector(n.feature);
    }
    c.add_section(io::make_tag("MNOD"), w.bytes());
  }
  {
    io::ByteWriter w;
    w.put<std::uint64_t>(mg.edges.size());
    for (const auto& e : mg.edges) {
      w.put<CommunityId>(e.a);
      w.put<CommunityId>(e.b);
      w.put<double>(e.score);
      w.put<double>(e.weight);
    }
    c.add_section(io::make_tag("MEDG"), w.bytes());
  }
  {
    io::ByteWriter w;
    w.put<std::uint64_t>(t.communities.size());
    for (const auto& [id, r] : t.communities) {
      w.put<CommunityId>(id);
      w.put_span<NodeId>(r.members);
      w.put_span<double>(r.distances);
      w.put_span<NodeId>(r.retained);
      w.put_vector(r.centroid);
      w.put_matrix(r.basis);
      w.put<double>(r.explained_ratio);
      w.put<double>(r.threshold);
      w.put<std::int32_t>(r.label);
      w.put<std::uint64_t>(r.labeled_count);
      w.put<double>(r.volume);
    }
    c.add_section(io::make_tag("MTAB"), w.bytes());
  }
  {
    io::ByteWriter w;
    w.put<std::uint64_t>(t.tallies.size());
    for (const auto& [key, tal] : t.tallies) {
      w.put<CommunityId>(key.first);
      w.put<CommunityId>(key.second);
      w.put<double>(tal.tally);
      w.put<std::uint64_t>(tal.edges.size());
      for (const auto& e : tal.edges) {
        w.put<NodeId>(e.u);
        w.put<NodeId>(e.v);
        w.put<double>(e.weight);
      }
    }
    c.add_section(io::make_tag("MTAL"), w.bytes());
  }
  return c.take();
}

inline std::pair<MappedGraph, MappingTables> deserialize_mapping(std::string bytes) {
  io::Container c(std::move(bytes), kMappedMagic, kMappedFormatVersion, "mapping");
  MappedGraph mg;
  MappingTables t;
  {
    auto r = c.section(io::make_tag("MCFG"));
    t.config.variance_ratio = r.get<double>();
    t.config.lambda = r.get<double>();
    t.config.eta = r.get<double>();
    t.config.sigma = r.get<double>();
    t.config.invert_edge_weight = r.get<std::uint8_t>() != 0;
    mg.feature_dim = r.get<std::uint64_t>();
    mg.num_classes = r.get<std::int32_t>();
  }
  {
    auto r = c.section(io::make_tag("MNOD"));
    const auto n = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      MappedNode node;
      node.community = r.get<CommunityId>();
      node.label = r.get<std::int32_t>();
      node.feature = r.get_eigen_vector();
      mg.nodes.push_back(std::move(node));
    }
  }
  {
    auto r = c.section(io::make_tag("MEDG"));
    const auto n = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      MappedEdge e;
      e.a = r.get<CommunityId>();
      e.b = r.get<CommunityId>();
      e.score = r.get<double>();
      e.weight = r.get<double>();
      mg.edges.push_back(e);
    }
  }
  {
    auto r = c.section(io::make_tag("MTAB"));
    const auto n = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto id = r.get<CommunityId>();
      CommunityRecord rec;
      rec.members = r.get_vector<NodeId>();
      rec.distances = r.get_vector<double>();
      rec.retained = r.get_vector<NodeId>();
      rec.centroid = r.get_eigen_vector();
      rec.basis = r.get_matrix();
      rec.explained_ratio = r.get<double>();
      rec.threshold = r.get<double>();
      rec.label = r.get<std::int32_t>();
      rec.labeled_count = r.get<std::uint64_t>();
      rec.volume = r.get<double>();
      if (rec.distances.size() != rec.members.size()) r.fail("distance table misaligned");
      for (NodeId m : rec.members) t.membership.emplace(m, id);
      t.communities.emplace(id, std::move(rec));
    }
  }
  {
    auto r = c.section(io::make_tag("MTAL"));
    const auto n = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      CommunityPair key;
      key.first = r.get<CommunityId>();
      key.second = r.get<CommunityId>();
      PairTally tal;
      tal.tally = r.get<double>();
      const auto m = r.get<std::uint64_t>();
      for (std::uint64_t k = 0; k < m; ++k) {
        CrossEdge e;
        e.u = r.get<NodeId>();
        e.v = r.get<NodeId>();
        e.weight = r.get<double>();
        tal.edges.push_back(e);
      }
      t.tallies.emplace(key, std::move(tal));
    }
  }
  return {std::move(mg), std::move(t)};
}

inline void save_mapping(const MappedGraph& mg, const MappingTables& t, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_mapping(mg, t));
}

inline std::pair<MappedGraph, MappingTables> load_mapping(const std::filesystem::path& path) {
  return deserialize_mapping(io::read_file(path));
}

/// Human-readable summary: one `node` row per community, one `edge` row per mapped edge.
inline std::string mapping_summary_csv(const MappedGraph& mg, const MappingTables& t) {
  std::ostringstream out;
  out.precision(17);
  out << "kind,community_a,community_b,size,label,threshold,retained,volume,score,weight\n";
  for (const auto& [id, r] : t.communities)
    out << "node," << id << ",," << r.members.size() << ',' << r.label << ',' << r.threshold << ','
        << r.retained.size() << ',' << r.volume << ",,\n";
  for (const auto& e : mg.edges) out << "edge," << e.a << ',' << e.b << ",,,,,," << e.score << ',' << e.weight << '\n';
  return out.str();
}

}  // namespace cge
