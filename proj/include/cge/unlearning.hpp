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

// Node deletion against a built mapping. Only communities touched by the
// victims are recomputed; community assignments stay frozen.

#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cge/common.hpp"
#include "cge/graph.hpp"
#include "cge/mapping.hpp"

namespace cge {

struct UnlearnRequest {
  std::vector<NodeId> victims;
  /// Recompute the fused feature for every removal, not only retained members.
  bool strict_feature_update = false;
  /// Skip ids that are not (or no longer) in the mapping instead of failing.
  bool ignore_missing = false;
};

enum class Verdict { principal, filtered };

inline const char* verdict_name(Verdict v) { return v == Verdict::principal ? "principal" : "filtered"; }

struct InfluenceSet {
  /// Communities that lose at least one member.
  std::vector<CommunityId> communities;
  /// Communities whose mapped node is recomputed (contain a principal victim).
  std::vector<CommunityId> nodes;
  /// Communities whose degree volume changes.
  std::vector<CommunityId> volumes;
  /// Tallied pairs whose edge is re-evaluated.
  std::vector<CommunityPair> pairs;
  std::vector<std::pair<NodeId, Verdict>> verdicts;
  /// Requested ids skipped because they were absent (ignore_missing only).
  std::vector<NodeId> skipped;

  bool empty() const { return nodes.empty() && volumes.empty() && pairs.empty(); }
};

namespace detail {

inline bool contains_sorted(const std::vector<NodeId>& v, NodeId id) { return std::binary_search(v.begin(), v.end(), id); }

}  // namespace detail

inline InfluenceSet influence(const MappingTables& t, const UnlearnRequest& req) {
  InfluenceSet out;
  {
    std::set<NodeId> seen;
    for (NodeId v : req.victims)
      if (!seen.insert(v).second) throw ParameterError("duplicate victim " + std::to_string(v));
  }
  std::set<NodeId> present;
  std::set<CommunityId> comms, nodes;
  for (NodeId v : req.victims) {
    auto it = t.membership.find(v);
    if (it == t.membership.end()) {
      if (req.ignore_missing) {
        out.skipped.push_back(v);
        continue;
      }
      throw Error("victim " + std::to_string(v) + " is not a training node of this mapping");
    }
    present.insert(v);
    const auto& rec = t.communities.at(it->second);
    const bool principal = req.strict_feature_update || detail::contains_sorted(rec.retained, v);
    out.verdicts.emplace_back(v, principal ? Verdict::principal : Verdict::filtered);
    comms.insert(it->second);
    if (principal) nodes.insert(it->second);
  }

  // Volumes move for the victim's own community and for every community on
  // the far side of one of its edges. Intra-community edges only touch the
  // victim's community; cross edges are read from tally provenance.
  std::set<CommunityId> vols;
  for (const auto& [v, verdict] : out.verdicts) {
    const CommunityId c = t.membership.at(v);
    bool has_edge = verdict == Verdict::principal;
    for (auto it = t.tallies.begin(); it != t.tallies.end(); ++it) {
      const auto& [key, tal] = *it;
      if (key.first != c && key.second != c) continue;
      for (const auto& e : tal.edges)
        if (e.u == v || e.v == v) {
          has_edge = true;
          vols.insert(key.first == c ? key.second : key.first);
        }
    }
    if (has_edge) vols.insert(c);
  }
  // A filtered victim with no cross edge leaves the stored volume as is, so
  // the mapped graph does not move at all.
  for (const auto& [key, tal] : t.tallies)
    if (vols.contains(key.first) || vols.contains(key.second)) out.pairs.push_back(key);

  out.communities.assign(comms.begin(), comms.end());
  out.nodes.assign(nodes.begin(), nodes.end());
  out.volumes.assign(vols.begin(), vols.end());
  return out;
}

struct UnlearnResult {
  MappedGraph mapped;
  MappingTables tables;
  Graph graph;
  InfluenceSet influence;
  /// Communities whose last member was removed.
  std::vector<CommunityId> deleted;
  std::string warning;
};

/// Applies a deletion batch. Inputs are not modified.
inline UnlearnResult unlearn(const Graph& g, const MappedGraph& mg, const MappingTables& tables,
                             const UnlearnRequest& req) {
  UnlearnResult res;
  res.influence = influence(tables, req);
  const auto& inf = res.influence;

  std::vector<NodeId> victims;
  for (const auto& [v, verdict] : inf.verdicts) victims.push_back(v);
  std::sort(victims.begin(), victims.end());
  auto is_victim = [&](NodeId id) { return std::binary_search(victims.begin(), victims.end(), id); };

  res.graph = remove_nodes(g, victims);
  const Graph& g2 = res.graph;
  res.tables = tables;
  auto& t2 = res.tables;
  const auto& cfg = t2.config;

  for (NodeId v : victims) t2.membership.erase(v);

  std::set<CommunityId> recompute(inf.nodes.begin(), inf.nodes.end());
  for (CommunityId c : inf.communities) {
    auto& rec = t2.communities.at(c);
    if (recompute.contains(c)) {
      std::vector<NodeIndex> survivors;
      for (NodeId m : rec.members)
        if (!is_victim(m)) survivors.push_back(*g2.index_of(m));
      if (survivors.empty()) {
        t2.communities.erase(c);
        res.deleted.push_back(c);
      } else {
        rec = detail::compute_record(g2, survivors, cfg);
      }
      continue;
    }
    // Filtered only: drop the victims from the member tables but keep the
    // fused feature, basis and threshold as they were.
    CommunityRecord next = rec;
    next.members.clear();
    next.distances.clear();
    for (std::size_t i = 0; i < rec.members.size(); ++i) {
      if (is_victim(rec.members[i])) {
        if (g.label(*g.index_of(rec.members[i])) != kUnlabeled) --next.labeled_count;
        continue;
      }
      next.members.push_back(rec.members[i]);
      next.distances.push_back(rec.distances[i]);
    }
    rec = std::move(next);
  }

  // Volumes are summed in member order, exactly as a fresh build would.
  for (CommunityId c : inf.volumes) {
    auto it = t2.communities.find(c);
    if (it == t2.communities.end() || recompute.contains(c)) continue;
    double vol = 0.0;
    for (NodeId m : it->second.members) vol += g2.degree(*g2.index_of(m));
    it->second.volume = vol;
  }

  // Tallies: strip victim endpoints from provenance and recount.
  std::set<CommunityId> touched(inf.communities.begin(), inf.communities.end());
  for (auto it = t2.tallies.begin(); it != t2.tallies.end();) {
    if (!touched.contains(it->first.first) && !touched.contains(it->first.second)) {
      ++it;
      continue;
    }
    auto& tal = it->second;
    std::vector<CrossEdge> kept;
    double s = 0.0;
    for (const auto& e : tal.edges)
      if (!is_victim(e.u) && !is_victim(e.v)) {
        kept.push_back(e);
        s += e.weight;
      }
    if (kept.size() != tal.edges.size()) {
      tal.edges = std::move(kept);
      tal.tally = s;
    }
    if (tal.edges.empty())
      it = t2.tallies.erase(it);
    else
      ++it;
  }

  // Mapped graph: patch nodes, then re-evaluate affected pairs.
  res.mapped = mg;
  auto& m2 = res.mapped;
  for (CommunityId c : inf.nodes) {
    auto idx = m2.index_of(c);
    if (!idx) throw ConsistencyError("mapped node missing for community " + std::to_string(c));
    auto rit = t2.communities.find(c);
    if (rit == t2.communities.end())
      m2.nodes.erase(m2.nodes.begin() + static_cast<std::ptrdiff_t>(*idx));
    else
      m2.nodes[*idx] = detail::node_from_record(c, rit->second);
  }
  std::set<CommunityPair> pairs(inf.pairs.begin(), inf.pairs.end());
  std::set<CommunityId> gone(res.deleted.begin(), res.deleted.end());
  std::vector<MappedEdge> edges;
  edges.reserve(m2.edges.size());
  for (const auto& e : m2.edges)
    if (!pairs.contains({e.a, e.b}) && !gone.contains(e.a) && !gone.contains(e.b)) edges.push_back(e);
  for (const auto& key : pairs) {
    auto tit = t2.tallies.find(key);
    if (tit == t2.tallies.end()) continue;
    if (auto e = detail::evaluate_pair(key, tit->second, t2.communities.at(key.first), t2.communities.at(key.second), cfg))
      edges.push_back(*e);
  }
  std::sort(edges.begin(), edges.end(), [](const MappedEdge& x, const MappedEdge& y) {
    return std::pair(x.a, x.b) < std::pair(y.a, y.b);
  });
  m2.edges = std::move(edges);

  if (t2.communities.empty()) res.warning = "all communities removed; mapped graph is empty";
  return res;
}

/// True iff no victim id survives in any member list, retained set or tally provenance.
inline bool verify_unlearned(const MappingTables& t, std::span<const NodeId> victims) {
  std::set<NodeId> bad(victims.begin(), victims.end());
  if (bad.empty()) return true;
  for (NodeId v : bad)
    if (t.membership.contains(v)) return false;
  for (const auto& [c, rec] : t.communities) {
    for (NodeId m : rec.members)
      if (bad.contains(m)) return false;
    for (NodeId m : rec.retained)
      if (bad.contains(m)) return false;
  }
  for (const auto& [key, tal] : t.tallies)
    for (const auto& e : tal.edges)
      if (bad.contains(e.u) || bad.contains(e.v)) return false;
  return true;
}

/// Machine-readable key=value report of one unlearning call.
inline std::string influence_report(const InfluenceSet& inf, const std::vector<CommunityId>& deleted, double seconds) {
  std::ostringstream out;
  std::size_t principal = 0;
  for (const auto& [v, verdict] : inf.verdicts) principal += verdict == Verdict::principal;
  out << "victims=" << inf.verdicts.size() << '\n'
      << "skipped=" << inf.skipped.size() << '\n'
      << "principal=" << principal << '\n'
      << "filtered=" << inf.verdicts.size() - principal << '\n'
      << "affected_communities=" << inf.communities.size() << '\n'
      << "affected_nodes=" << inf.nodes.size() << '\n'
      << "affected_pairs=" << inf.pairs.size() << '\n'
      << "deleted_nodes=" << deleted.size() << '\n'
      << "seconds=" << seconds << '\n';
  for (const auto& [v, verdict] : inf.verdicts) out << "verdict " << v << ' ' << verdict_name(verdict) << '\n';
  return out.str();
}

}  // namespace cge
