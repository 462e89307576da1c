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

// Community detection: modularity, Louvain, binomial significance,
// conductance, significance-guided refinement and balanced k-means.

#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cge/common.hpp"
#include "cge/graph.hpp"

namespace cge {

struct CommunityStats {
  std::size_t size = 0;
  /// t_C: number of edges with both endpoints inside.
  std::int64_t internal_edges = 0;
  /// T_C = |C|(|C|-1)/2.
  std::int64_t possible_pairs = 0;
  double internal_weight = 0.0;
  /// Sum of member degrees.
  double volume = 0.0;
  /// Weight of edges leaving the community.
  double cut = 0.0;
};

/// Total assignment of a graph's nodes (by dense index) to communities.
///
/// Community ids are compact and ordered by their smallest member index, so
/// two partitions with the same blocks compare equal.
class CommunityPartition {
 public:
  CommunityPartition() = default;

  /// `raw` may use arbitrary non-negative labels. `raw_unresolvable`, when
  /// given, is indexed by raw label.
  static CommunityPartition from_assignment(const Graph& g, std::span<const CommunityId> raw,
                                            std::span<const char> raw_unresolvable = {}) {
    if (raw.size() != g.node_count())
      throw ParameterError("assignment size " + std::to_string(raw.size()) + " != node count " +
                           std::to_string(g.node_count()));
    CommunityPartition p;
    std::unordered_map<CommunityId, CommunityId> compact;
    p.assignment_.resize(raw.size());
    for (NodeIndex i = 0; i < raw.size(); ++i) {
      if (raw[i] < 0) throw ParameterError("negative community id");
      auto [it, fresh] = compact.try_emplace(raw[i], static_cast<CommunityId>(compact.size()));
      p.assignment_[i] = it->second;
      if (fresh) {
        p.members_.emplace_back();
        const bool flag = static_cast<std::size_t>(raw[i]) < raw_unresolvable.size() &&
                          raw_unresolvable[static_cast<std::size_t>(raw[i])];
        p.unresolvable_.push_back(flag ? 1 : 0);
      }
      p.members_[static_cast<std::size_t>(it->second)].push_back(i);
    }
    p.compute_stats(g);
    return p;
  }

  static CommunityPartition singletons(const Graph& g) {
    std::vector<CommunityId> raw(g.node_count());
    std::iota(raw.begin(), raw.end(), 0);
    return from_assignment(g, raw);
  }

  std::size_t community_count() const { return members_.size(); }
  std::size_t node_count() const { return assignment_.size(); }
  std::span<const CommunityId> assignment() const { return assignment_; }
  CommunityId community_of(NodeIndex i) const { return assignment_[i]; }
  std::span<const NodeIndex> members(CommunityId c) const { return members_[static_cast<std::size_t>(c)]; }
  const CommunityStats& stats(CommunityId c) const { return stats_[static_cast<std::size_t>(c)]; }
  bool unresolvable(CommunityId c) const { return unresolvable_[static_cast<std::size_t>(c)] != 0; }

  /// Set by louvain() when the input had no edges.
  bool edgeless_warning() const { return edgeless_warning_; }
  void set_edgeless_warning(bool v) { edgeless_warning_ = v; }

  friend bool operator==(const CommunityPartition& a, const CommunityPartition& b) {
    return a.assignment_ == b.assignment_ && a.unresolvable_ == b.unresolvable_;
  }

 private:
  void compute_stats(const Graph& g) {
    stats_.assign(members_.size(), {});
    for (std::size_t c = 0; c < members_.size(); ++c) {
      auto& s = stats_[c];
      s.size = members_[c].size();
      const auto sz = static_cast<std::int64_t>(s.size);
      s.possible_pairs = sz * (sz - 1) / 2;
      for (NodeIndex v : members_[c]) s.volume += g.degree(v);
    }
    for (const auto& e : g.edges()) {
      const auto cu = static_cast<std::size_t>(assignment_[e.u]);
      const auto cv = static_cast<std::size_t>(assignment_[e.v]);
      if (cu == cv) {
        ++stats_[cu].internal_edges;
        stats_[cu].internal_weight += e.weight;
      } else {
        stats_[cu].cut += e.weight;
        stats_[cv].cut += e.weight;
      }
    }
  }

  std::vector<CommunityId> assignment_;
  std::vector<std::vector<NodeIndex>> members_;
  std::vector<CommunityStats> stats_;
  std::vector<char> unresolvable_;
  bool edgeless_warning_ = false;
};

// ---------------------------------------------------------------------------
// Modularity

/// Q = (1/2m) sum_ij [A_ij - k_i k_j / 2m] delta(c_i, c_j), evaluated per
/// community as sum_C [2 w_in(C) / 2m - (vol(C) / 2m)^2].
inline double modularity(const Graph& g, const CommunityPartition& p) {
  const double m = g.total_weight();
  if (!(m > 0.0)) throw ParameterError("empty graph has undefined modularity");
  if (p.node_count() != g.node_count()) throw ParameterError("partition does not match graph");
  const double two_m = 2.0 * m;
  double q = 0.0;
  for (CommunityId c = 0; c < static_cast<CommunityId>(p.community_count()); ++c) {
    const auto& s = p.stats(c);
    const double share = s.volume / two_m;
    q += 2.0 * s.internal_weight / two_m - share * share;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Louvain

namespace detail {

/// Weighted CSR with explicit self-loop weights; the working graph of one
/// Louvain level.
struct LouvainLevel {
  std::size_t n = 0;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> nbr;
  std::vector<double> w;
  std::vector<double> loop;      // internal weight folded into the node
  std::vector<double> strength;  // sum_j A_ij including 2 * loop
  double two_m = 0.0;
};

inline LouvainLevel level_from_graph(const Graph& g, std::span<const NodeIndex> subset) {
  LouvainLevel L;
  std::vector<std::size_t> local(g.node_count(), std::numeric_limits<std::size_t>::max());
  for (std::size_t k = 0; k < subset.size(); ++k) local[subset[k]] = k;
  L.n = subset.size();
  L.offsets.assign(L.n + 1, 0);
  for (std::size_t k = 0; k < L.n; ++k) {
    for (NodeIndex j : g.neighbors(subset[k]))
      if (local[j] != std::numeric_limits<std::size_t>::max()) ++L.offsets[k + 1];
  }
  std::partial_sum(L.offsets.begin(), L.offsets.end(), L.offsets.begin());
  L.nbr.resize(L.offsets[L.n]);
  L.w.resize(L.offsets[L.n]);
  L.loop.assign(L.n, 0.0);
  L.strength.assign(L.n, 0.0);
  for (std::size_t k = 0; k < L.n; ++k) {
    auto pos = L.offsets[k];
    auto nb = g.neighbors(subset[k]);
    auto wt = g.neighbor_weights(subset[k]);
    for (std::size_t e = 0; e < nb.size(); ++e) {
      const auto j = local[nb[e]];
      if (j == std::numeric_limits<std::size_t>::max()) continue;
      L.nbr[pos] = j;
      L.w[pos++] = wt[e];
      L.strength[k] += wt[e];
    }
    L.two_m += L.strength[k];
  }
  return L;
}

/// One round of local moves. Returns per-node community (ids are node ids of
/// this level) and whether anything moved.
inline bool local_moves(const LouvainLevel& L, std::vector<std::size_t>& comm, std::mt19937_64& rng) {
  const std::size_t n = L.n;
  comm.resize(n);
  std::iota(comm.begin(), comm.end(), std::size_t{0});
  std::vector<double> tot(L.strength);
  std::vector<double> links(n, 0.0);
  std::vector<std::size_t> touched;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  bool any = false;
  for (int sweep = 0; sweep < 1000; ++sweep) {
    std::size_t moves = 0;
    for (std::size_t i : order) {
      const std::size_t ci = comm[i];
      const double ki = L.strength[i];
      touched.clear();
      for (auto e = L.offsets[i]; e < L.offsets[i + 1]; ++e) {
        const auto c = comm[L.nbr[e]];
        if (links[c] == 0.0) touched.push_back(c);
        links[c] += L.w[e];
      }
      tot[ci] -= ki;
      std::size_t best = ci;
      double best_gain = links[ci] - tot[ci] * ki / L.two_m;
      std::sort(touched.begin(), touched.end());
      const double eps = 1e-12 * std::max(1.0, ki);
      for (auto c : touched) {
        if (c == ci) continue;
        const double gain = links[c] - tot[c] * ki / L.two_m;
        // strict improvement; ascending scan keeps the lowest id on ties
        if (gain > best_gain + eps) {
          best = c;
          best_gain = gain;
        }
      }
      tot[best] += ki;
      if (best != ci) {
        comm[i] = best;
        ++moves;
      }
      for (auto c : touched) links[c] = 0.0;
      links[ci] = 0.0;
    }
    if (moves == 0) break;
    any = true;
  }
  return any;
}

inline LouvainLevel aggregate(const LouvainLevel& L, std::vector<std::size_t>& comm) {
  // compact in order of first appearance by node index
  std::vector<std::size_t> remap(L.n, std::numeric_limits<std::size_t>::max());
  std::size_t k = 0;
  for (std::size_t i = 0; i < L.n; ++i) {
    if (remap[comm[i]] == std::numeric_limits<std::size_t>::max()) remap[comm[i]] = k++;
    comm[i] = remap[comm[i]];
  }
  LouvainLevel A;
  A.n = k;
  A.loop.assign(k, 0.0);
  A.strength.assign(k, 0.0);
  A.two_m = L.two_m;
  std::vector<std::map<std::size_t, double>> rows(k);
  for (std::size_t i = 0; i < L.n; ++i) {
    const auto ci = comm[i];
    A.loop[ci] += L.loop[i];
    A.strength[ci] += L.strength[i];
    for (auto e = L.offsets[i]; e < L.offsets[i + 1]; ++e) {
      const auto cj = comm[L.nbr[e]];
      if (cj == ci) A.loop[ci] += 0.5 * L.w[e];  // each undirected edge is seen twice
      else rows[ci][cj] += L.w[e];
    }
  }
  A.offsets.assign(k + 1, 0);
  for (std::size_t c = 0; c < k; ++c) A.offsets[c + 1] = A.offsets[c] + rows[c].size();
  A.nbr.reserve(A.offsets[k]);
  A.w.reserve(A.offsets[k]);
  for (std::size_t c = 0; c < k; ++c)
    for (auto [j, w] : rows[c]) {
      A.nbr.push_back(j);
      A.w.push_back(w);
    }
  return A;
}

/// Multi-level Louvain on a level graph; returns a community per input node.
inline std::vector<std::size_t> louvain_level_graph(LouvainLevel L, std::uint64_t seed, std::size_t max_passes) {
  std::vector<std::size_t> assignment(L.n);
  std::iota(assignment.begin(), assignment.end(), std::size_t{0});
  if (L.two_m <= 0.0) return assignment;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> comm;
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    const bool moved = local_moves(L, comm, rng);
    if (!moved) break;
    L = aggregate(L, comm);
    for (auto& a : assignment) a = comm[a];
  }
  return assignment;
}

}  // namespace detail

/// Louvain modularity optimisation from the singleton partition.
///
/// Visit order is shuffled by `seed`; a node moves only for a strictly
/// positive modularity gain, ties go to the lowest community id.
inline CommunityPartition louvain(const Graph& g, std::uint64_t seed, std::size_t max_passes = 100) {
  std::vector<NodeIndex> all(g.node_count());
  std::iota(all.begin(), all.end(), NodeIndex{0});
  auto level = detail::level_from_graph(g, all);
  if (level.two_m <= 0.0) {
    auto p = CommunityPartition::singletons(g);
    p.set_edgeless_warning(true);
    return p;
  }
  auto a = detail::louvain_level_graph(std::move(level), seed, max_passes);
  std::vector<CommunityId> raw(a.begin(), a.end());
  return CommunityPartition::from_assignment(g, raw);
}

// ---------------------------------------------------------------------------
// Significance

/// log of P[Bin(T, p) >= t]. Sums log-space terms outward from t and stops
/// once the remaining terms cannot change the result at double precision.
inline double log_binomial_tail(std::int64_t total, std::int64_t t, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ParameterError("null probability must lie in (0, 1)");
  if (total < 0 || t < 0) throw ParameterError("negative count");
  if (t == 0) return 0.0;
  if (t > total) return -std::numeric_limits<double>::infinity();
  const double lp = std::log(p), lq = std::log1p(-p);
  const double lg_total = std::lgamma(static_cast<double>(total) + 1.0);
  auto log_term = [&](std::int64_t s) {
    const auto sd = static_cast<double>(s);
    return lg_total - std::lgamma(sd + 1.0) - std::lgamma(static_cast<double>(total - s) + 1.0) + sd * lp +
           static_cast<double>(total - s) * lq;
  };
  auto log_add = [](double a, double b) {
    if (a < b) std::swap(a, b);
    if (b == -std::numeric_limits<double>::infinity()) return a;
    return a + std::log1p(std::exp(b - a));
  };
  const double mean = static_cast<double>(total) * p;
  const double mode = std::floor(static_cast<double>(total + 1) * p);
  constexpr double kNegligible = 40.0;  // e^-40 ~ 4e-18

  if (static_cast<double>(t) > mean) {
    // upper tail directly; terms decrease past the mode
    double acc = -std::numeric_limits<double>::infinity();
    for (std::int64_t s = t; s <= total; ++s) {
      const double lt = log_term(s);
      acc = log_add(acc, lt);
      if (static_cast<double>(s) > mode && lt < acc - kNegligible) break;
    }
    return acc;
  }
  // 1 - lower tail, lower tail summed downward from t-1
  double acc = -std::numeric_limits<double>::infinity();
  for (std::int64_t s = t - 1; s >= 0; --s) {
    const double lt = log_term(s);
    acc = log_add(acc, lt);
    if (static_cast<double>(s) < mode && lt < acc - kNegligible) break;
  }
  const double lower = std::exp(acc);
  return lower >= 1.0 ? -std::numeric_limits<double>::infinity() : std::log1p(-lower);
}

/// P[Bin(T, p) >= t], the significance of a community with t internal edges
/// out of T possible pairs.
inline double binomial_tail(std::int64_t total, std::int64_t t, double p) {
  return std::exp(log_binomial_tail(total, t, p));
}

namespace detail {

inline std::int64_t count_internal_edges(const Graph& g, std::span<const NodeIndex> community) {
  std::vector<char> in(g.node_count(), 0);
  for (NodeIndex v : community) {
    if (v >= g.node_count()) throw ParameterError("community node out of range");
    in[v] = 1;
  }
  std::int64_t t = 0;
  for (NodeIndex v : community)
    for (NodeIndex u : g.neighbors(v))
      if (in[u] && u > v) ++t;
  return t;
}

inline double log_significance(std::size_t size, std::int64_t internal_edges, double null_p) {
  if (size <= 1) return 0.0;
  const auto sz = static_cast<std::int64_t>(size);
  return log_binomial_tail(sz * (sz - 1) / 2, internal_edges, null_p);
}

}  // namespace detail

/// Significance p(C) of `community` under a uniform connection probability.
/// Size-1 communities are exempt and return 1.
inline double significance(const Graph& g, std::span<const NodeIndex> community, double null_p) {
  if (!(null_p > 0.0 && null_p < 1.0)) throw ParameterError("null_p must lie in (0, 1)");
  if (community.empty()) throw ParameterError("empty community");
  if (community.size() == 1) return 1.0;
  const auto t = detail::count_internal_edges(g, community);
  return std::exp(detail::log_significance(community.size(), t, null_p));
}

/// Global edge density 2m / (n (n - 1)), the default null probability.
inline double edge_density(const Graph& g) {
  const auto n = static_cast<double>(g.node_count());
  if (n < 2) return 0.0;
  return 2.0 * static_cast<double>(g.edge_count()) / (n * (n - 1.0));
}

// ---------------------------------------------------------------------------
// Conductance

/// cut(C, ~C) / min(vol(C), vol(~C)); zero when nothing is cut.
inline double conductance(const Graph& g, std::span<const NodeIndex> community) {
  if (community.empty()) throw ParameterError("conductance of an empty community");
  std::vector<char> in(g.node_count(), 0);
  for (NodeIndex v : community) {
    if (v >= g.node_count()) throw ParameterError("community node out of range");
    in[v] = 1;
  }
  double vol = 0.0, cut = 0.0;
  for (NodeIndex v : community) {
    if (!in[v]) continue;  // duplicate entry already counted
    in[v] = 2;
    vol += g.degree(v);
    auto nb = g.neighbors(v);
    auto wt = g.neighbor_weights(v);
    for (std::size_t e = 0; e < nb.size(); ++e)
      if (!in[nb[e]]) cut += wt[e];
  }
  if (cut == 0.0) return 0.0;
  const double denom = std::min(vol, 2.0 * g.total_weight() - vol);
  return cut / denom;
}

inline double mean_conductance(const Graph& g, const CommunityPartition& p) {
  if (p.community_count() == 0) return 0.0;
  double acc = 0.0;
  for (CommunityId c = 0; c < static_cast<CommunityId>(p.community_count()); ++c)
    acc += conductance(g, p.members(c));
  return acc / static_cast<double>(p.community_count());
}

// ---------------------------------------------------------------------------
// Refinement

struct RefineOptions {
  double alpha = 0.05;
  double conductance_quantile = 0.75;
  /// Defaults to edge_density(g).
  std::optional<double> null_p;
  std::uint64_t seed = 0;
  std::size_t max_sweeps = 20;
  std::size_t louvain_passes = 100;
};

namespace detail {

/// Linear-interpolation quantile of a non-empty sample.
inline double quantile(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline std::vector<std::vector<NodeIndex>> connected_components(const Graph& g, std::span<const NodeIndex> nodes) {
  std::unordered_map<NodeIndex, std::size_t> local;
  for (std::size_t k = 0; k < nodes.size(); ++k) local.emplace(nodes[k], k);
  std::vector<char> seen(nodes.size(), 0);
  std::vector<std::vector<NodeIndex>> comps;
  for (std::size_t s = 0; s < nodes.size(); ++s) {
    if (seen[s]) continue;
    comps.emplace_back();
    std::vector<std::size_t> stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      auto k = stack.back();
      stack.pop_back();
      comps.back().push_back(nodes[k]);
      for (NodeIndex u : g.neighbors(nodes[k])) {
        auto it = local.find(u);
        if (it != local.end() && !seen[it->second]) {
          seen[it->second] = 1;
          stack.push_back(it->second);
        }
      }
    }
    std::sort(comps.back().begin(), comps.back().end());
  }
  return comps;
}

}  // namespace detail

/// Significance-guided refinement of an initial partition.
///
/// Communities in the worst conductance quantile, or with p(C) > alpha, are
/// re-split with Louvain on their induced subgraph (for significant ones the
/// split is kept only if every part stays significant). Boundary nodes of the
/// re-processed communities then move to an adjacent community when neither
/// side's significance gets worse and at least one strictly improves.
/// Multi-node communities still above alpha come back flagged unresolvable.
inline CommunityPartition refine(const Graph& g, const CommunityPartition& p, const RefineOptions& opt = {}) {
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
  if (!(opt.conductance_quantile >= 0.0 && opt.conductance_quantile <= 1.0))
    throw ParameterError("conductance_quantile must lie in [0, 1]");
  if (p.node_count() != g.node_count()) throw ParameterError("partition does not match graph");
  const double null_p = opt.null_p.value_or(edge_density(g));
  if (!(null_p > 0.0 && null_p < 1.0)) return p;  // edgeless or complete graph: nothing to test
  const double log_alpha = std::log(opt.alpha);

  std::vector<std::vector<NodeIndex>> comms;
  for (CommunityId c = 0; c < static_cast<CommunityId>(p.community_count()); ++c) {
    auto m = p.members(c);
    comms.emplace_back(m.begin(), m.end());
  }
  std::vector<char> unresolvable(comms.size(), 0);
  std::vector<char> touched(comms.size(), 0);
  auto log_sig = [&](const std::vector<NodeIndex>& c) {
    return detail::log_significance(c.size(), detail::count_internal_edges(g, c), null_p);
  };

  // (a) select and split
  std::vector<double> phis;
  for (const auto& c : comms)
    if (c.size() > 1) phis.push_back(conductance(g, c));
  const double phi_cut = phis.empty() ? std::numeric_limits<double>::infinity()
                                      : detail::quantile(phis, opt.conductance_quantile);
  std::deque<std::size_t> queue;
  for (std::size_t c = 0; c < comms.size(); ++c) {
    if (comms[c].size() < 2) continue;
    if (conductance(g, comms[c]) > phi_cut || log_sig(comms[c]) > log_alpha) queue.push_back(c);
  }
  while (!queue.empty()) {
    const auto c = queue.front();
    queue.pop_front();
    touched[c] = 1;
    const bool insignificant = log_sig(comms[c]) > log_alpha;
    auto level = detail::level_from_graph(g, comms[c]);
    auto local = detail::louvain_level_graph(std::move(level), opt.seed + c, opt.louvain_passes);
    std::map<std::size_t, std::vector<NodeIndex>> groups;
    for (std::size_t k = 0; k < local.size(); ++k) groups[local[k]].push_back(comms[c][k]);
    std::vector<std::vector<NodeIndex>> parts;
    for (auto& [_, v] : groups) parts.push_back(std::move(v));
    std::sort(parts.begin(), parts.end());

    bool accept = parts.size() >= 2;
    if (accept && !insignificant) {
      for (const auto& part : parts)
        if (part.size() > 1 && log_sig(part) > log_alpha) accept = false;
    }
    if (!accept && insignificant) {
      parts = detail::connected_components(g, comms[c]);
      std::sort(parts.begin(), parts.end());
      accept = parts.size() >= 2;
      if (!accept) unresolvable[c] = 1;
    }
    if (!accept) continue;
    comms[c] = std::move(parts[0]);
    unresolvable[c] = 0;
    if (comms[c].size() > 1 && log_sig(comms[c]) > log_alpha) queue.push_back(c);
    for (std::size_t k = 1; k < parts.size(); ++k) {
      comms.push_back(std::move(parts[k]));
      unresolvable.push_back(0);
      touched.push_back(1);
      const auto id = comms.size() - 1;
      if (comms[id].size() > 1 && log_sig(comms[id]) > log_alpha) queue.push_back(id);
    }
  }

  // (b) boundary moves touching re-processed communities
  std::vector<std::size_t> assign(g.node_count());
  for (std::size_t c = 0; c < comms.size(); ++c)
    for (NodeIndex v : comms[c]) assign[v] = c;
  std::vector<std::size_t> size(comms.size());
  std::vector<std::int64_t> t_in(comms.size());
  std::vector<double> lsig(comms.size());
  for (std::size_t c = 0; c < comms.size(); ++c) {
    size[c] = comms[c].size();
    t_in[c] = detail::count_internal_edges(g, comms[c]);
    lsig[c] = detail::log_significance(size[c], t_in[c], null_p);
  }
  auto lsig_of = [&](std::size_t sz, std::int64_t t) {
    return sz == 0 ? -std::numeric_limits<double>::infinity() : detail::log_significance(sz, t, null_p);
  };
  std::map<std::size_t, std::int64_t> links;
  for (std::size_t sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    std::size_t moves = 0;
    for (NodeIndex v = 0; v < g.node_count(); ++v) {
      const auto from = assign[v];
      links.clear();
      for (NodeIndex u : g.neighbors(v)) ++links[assign[u]];
      if (links.empty() || (links.size() == 1 && links.begin()->first == from)) continue;
      const std::int64_t own = links.contains(from) ? links[from] : 0;
      const double from_new = lsig_of(size[from] - 1, t_in[from] - own);
      if (from_new > lsig[from]) continue;
      std::size_t best = from;
      double best_delta = 0.0;
      double best_to_new = 0.0;
      for (auto [to, e] : links) {
        if (to == from || !(touched[from] || touched[to])) continue;
        const double to_new = lsig_of(size[to] + 1, t_in[to] + e);
        if (to_new > lsig[to]) continue;
        const double d_from = from_new - lsig[from];
        const double d_to = to_new - lsig[to];
        const bool strict = d_from < -1e-12 || d_to < -1e-12 || (size[from] == 1);
        if (!strict) continue;
        // an emptied community contributes -inf; rank by the receiving side then
        const double delta = std::isfinite(d_from) ? d_from + d_to : d_to - 1e300;
        if (best == from || delta < best_delta) {
          best = to;
          best_delta = delta;
          best_to_new = to_new;
        }
      }
      if (best == from) continue;
      t_in[from] -= own;
      --size[from];
      lsig[from] = from_new;
      t_in[best] += links[best];
      ++size[best];
      lsig[best] = best_to_new;
      assign[v] = best;
      ++moves;
    }
    if (moves == 0) break;
  }

  std::vector<CommunityId> raw(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) raw[v] = static_cast<CommunityId>(assign[v]);
  std::vector<char> flags(comms.size(), 0);
  for (std::size_t c = 0; c < comms.size(); ++c)
    flags[c] = size[c] > 1 && lsig[c] > log_alpha ? 1 : 0;
  return CommunityPartition::from_assignment(g, raw, flags);
}

// ---------------------------------------------------------------------------
// Balanced k-means

/// Balanced k-means over node features: every cluster ends with floor(n/k)
/// or ceil(n/k) members. Assignment is a greedy capacity-constrained pass over
/// all (node, centre) pairs by ascending distance; centres start from a
/// seeded k-means++ draw.
inline CommunityPartition bekm(const Graph& g, std::size_t k, std::uint64_t seed, std::size_t max_iter = 30) {
  const std::size_t n = g.node_count();
  if (k < 1 || k > n) throw ParameterError("bekm requires 1 <= k <= n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
  const auto& x = g.features();
  const auto d = x.cols();
  std::mt19937_64 rng(seed);

  RowMatrix centers(static_cast<Eigen::Index>(k), d);
  {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    centers.row(0) = x.row(static_cast<Eigen::Index>(pick(rng)));
    Eigen::VectorXd dist2(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) dist2[static_cast<Eigen::Index>(i)] = (x.row(static_cast<Eigen::Index>(i)) - centers.row(0)).squaredNorm();
    for (std::size_t c = 1; c < k; ++c) {
      const double total = dist2.sum();
      std::size_t chosen = 0;
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double r = u(rng);
        for (chosen = 0; chosen + 1 < n; ++chosen) {
          r -= dist2[static_cast<Eigen::Index>(chosen)];
          if (r <= 0.0) break;
        }
      } else {
        chosen = pick(rng);
      }
      centers.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(chosen));
      for (std::size_t i = 0; i < n; ++i)
        dist2[static_cast<Eigen::Index>(i)] = std::min(dist2[static_cast<Eigen::Index>(i)],
                                 (x.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm());
    }
  }

  const std::size_t lo = n / k;
  const std::size_t big = n % k;  // clusters allowed to hold lo + 1
  std::vector<std::size_t> assign(n, k), prev;
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs(n * k);
  for (std::size_t it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c)
        pairs[i * k + c] = {(x.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm(), i, c};
    std::sort(pairs.begin(), pairs.end());
    std::vector<std::size_t> size(k, 0);
    std::size_t big_used = 0;
    std::fill(assign.begin(), assign.end(), k);
    std::size_t placed = 0;
    for (const auto& [dist, i, c] : pairs) {
      if (assign[i] != k) continue;
      bool room = size[c] < lo || (size[c] == lo && big_used < big);
      if (!room) continue;
      if (size[c] == lo) ++big_used;
      ++size[c];
      assign[i] = c;
      if (++placed == n) break;
    }
    if (assign == prev) break;
    prev = assign;
    centers.setZero();
    for (std::size_t i = 0; i < n; ++i) centers.row(static_cast<Eigen::Index>(assign[i])) += x.row(static_cast<Eigen::Index>(i));
    for (std::size_t c = 0; c < k; ++c) centers.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(size[c]);
  }
  std::vector<CommunityId> raw(assign.begin(), assign.end());
  return CommunityPartition::from_assignment(g, raw);
}

// ---------------------------------------------------------------------------
// Text export: one `node_id community_id` pair per line.

inline void write_partition(const Graph& g, const CommunityPartition& p, const std::filesystem::path& path) {
  std::ostringstream out;
  for (NodeIndex i = 0; i < g.node_count(); ++i) out << g.id(i) << ' ' << p.community_of(i) << '\n';
  io::write_file_atomic(path, out.str());
}

inline CommunityPartition read_partition(const Graph& g, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open '" + path.string() + "'");
  std::vector<CommunityId> raw(g.node_count(), -1);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    NodeId id;
    CommunityId c;
    if (!(ls >> id >> c)) {
      if (detail::trim(line).empty()) continue;
      throw IngestError(path.string() + ":" + std::to_string(lineno) + ": bad partition line");
    }
    auto i = g.index_of(id);
    if (!i || c < 0) throw IngestError(path.string() + ":" + std::to_string(lineno) + ": unknown node or bad community");
    raw[*i] = c;
  }
  for (NodeIndex i = 0; i < raw.size(); ++i)
    if (raw[i] < 0) throw IngestError(path.string() + ": node " + std::to_string(g.id(i)) + " has no community");
  return CommunityPartition::from_assignment(g, raw);
}

}  // namespace cge
