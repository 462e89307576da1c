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

// Seeded graph generators: a stochastic block model with Gaussian block
// features, and a citation-network surrogate with Cora's node, class and
// edge counts and sparse binary bag-of-words features.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "cge/common.hpp"
#include "cge/graph.hpp"

namespace cge::synth {

struct SbmConfig {
  std::vector<std::size_t> block_sizes{20, 20};
  double p_in = 0.3;
  double p_out = 0.02;
  std::size_t feature_dim = 8;
  /// Per-entry Gaussian noise around the block mean.
  double feature_noise = 0.5;
};

namespace detail {

inline double uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Node i is labelled with its block; ids are 0..n-1.
inline Graph sbm(const SbmConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, cfg.feature_noise);
  const std::size_t k = cfg.block_sizes.size();
  const std::size_t n = std::accumulate(cfg.block_sizes.begin(), cfg.block_sizes.end(), std::size_t{0});
  std::vector<int> labels;
  for (std::size_t b = 0; b < k; ++b) labels.insert(labels.end(), cfg.block_sizes[b], static_cast<int>(b));

  // Block b owns the dimensions j with j % k == b.
  RowMatrix means = RowMatrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(cfg.feature_dim));
  for (Eigen::Index j = 0; j < means.cols(); ++j) means(j % static_cast<Eigen::Index>(k), j) = 1.0;
  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.feature_dim));
  for (std::size_t i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      x(static_cast<Eigen::Index>(i), j) = means(labels[i], j) + noise(rng);

  std::vector<std::pair<NodeIndex, NodeIndex>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = labels[i] == labels[j] ? cfg.p_in : cfg.p_out;
      if (detail::uniform(rng) < p) pairs.emplace_back(i, j);
    }
  std::vector<NodeId> ids(n);
  std::iota(ids.begin(), ids.end(), NodeId{0});
  return Graph::build(std::move(ids), pairs, {}, std::move(x), std::move(labels), static_cast<int>(k));
}

struct CitationConfig {
  std::vector<std::size_t> class_sizes{351, 217, 418, 818, 426, 298, 180};
  std::size_t edges = 5278;
  std::size_t vocabulary = 1433;
  /// Mean probability that an edge stays inside the source's class.
  double homophily = 0.81;
  /// Beta concentration of the per-node homophily; small values give a
  /// mix of fully homophilous nodes and nodes that mostly link elsewhere.
  double homophily_concentration = 0.2;
  /// Off-class edges that go to the source group's related class.
  double related_class_share = 0.9;
  /// Within-class edges that also stay inside the source's topic group.
  double group_affinity = 0.6;
  std::size_t group_size = 40;
  /// Pareto tail index of the per-node attachment propensity.
  double degree_tail = 2.2;
  std::size_t words_per_node = 18;
  double class_word_share = 0.15;
  double group_word_share = 0.1;
  std::size_t class_vocabulary = 120;
  std::size_t group_vocabulary = 30;
};

/// Citation-like graph: classes split into topic groups, heavy-tailed
/// degrees, every node with at least one edge, binary word features.
inline Graph citation_surrogate(const CitationConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t k = cfg.class_sizes.size();
  const std::size_t n = std::accumulate(cfg.class_sizes.begin(), cfg.class_sizes.end(), std::size_t{0});

  // Nodes are shuffled so ids carry no class information.
  std::vector<int> labels;
  for (std::size_t c = 0; c < k; ++c) labels.insert(labels.end(), cfg.class_sizes[c], static_cast<int>(c));
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  std::vector<std::size_t> group(n);
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t count = std::max<std::size_t>(1, (by_class[c].size() + cfg.group_size / 2) / cfg.group_size);
    const std::size_t first = groups.size();
    groups.resize(first + count);
    for (std::size_t r = 0; r < by_class[c].size(); ++r) {
      const std::size_t gi = first + r % count;
      group[by_class[c][r]] = gi;
      groups[gi].push_back(by_class[c][r]);
    }
  }

  std::vector<double> h(n);
  {
    std::gamma_distribution<double> ga(cfg.homophily * cfg.homophily_concentration, 1.0);
    std::gamma_distribution<double> gb((1.0 - cfg.homophily) * cfg.homophily_concentration, 1.0);
    for (auto& v : h) {
      const double a = ga(rng), b = gb(rng);
      v = a + b > 0.0 ? a / (a + b) : cfg.homophily;
    }
  }
  std::vector<std::size_t> related(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto own = static_cast<std::size_t>(labels[groups[gi].front()]);
    related[gi] = (own + 1 + static_cast<std::size_t>(detail::uniform(rng) * static_cast<double>(k - 1))) % k;
  }
  std::vector<double> theta(n);
  for (auto& t : theta) t = std::pow(1.0 - detail::uniform(rng), -1.0 / cfg.degree_tail);
  auto pick = [&](const std::vector<std::size_t>& pool) {
    double total = 0.0;
    for (std::size_t v : pool) total += theta[v];
    double r = detail::uniform(rng) * total;
    for (std::size_t v : pool) {
      r -= theta[v];
      if (r < 0.0) return v;
    }
    return pool.back();
  };
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  auto partner = [&](std::size_t u) {
    if (detail::uniform(rng) < h[u]) {
      if (detail::uniform(rng) < cfg.group_affinity && groups[group[u]].size() > 1) return pick(groups[group[u]]);
      return pick(by_class[static_cast<std::size_t>(labels[u])]);
    }
    if (k > 1 && detail::uniform(rng) < cfg.related_class_share) return pick(by_class[related[group[u]]]);
    return pick(all);
  };

  std::set<std::pair<std::size_t, std::size_t>> edges;
  auto add = [&](std::size_t u, std::size_t v) {
    if (u == v) return;
    edges.emplace(std::min(u, v), std::max(u, v));
  };
  for (std::size_t u = 0; u < n; ++u) add(u, partner(u));
  for (std::size_t guard = 0; edges.size() < cfg.edges && guard < 100 * cfg.edges; ++guard) {
    const std::size_t u = pick(all);
    add(u, partner(u));
  }

  // Vocabulary: a Zipf-weighted background plus per-class and per-group word sets.
  std::vector<std::size_t> vocab(cfg.vocabulary);
  std::iota(vocab.begin(), vocab.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> class_words(k), group_words(groups.size());
  for (auto& w : class_words) {
    std::shuffle(vocab.begin(), vocab.end(), rng);
    w.assign(vocab.begin(), vocab.begin() + static_cast<std::ptrdiff_t>(std::min(cfg.class_vocabulary, vocab.size())));
  }
  for (auto& w : group_words) {
    std::shuffle(vocab.begin(), vocab.end(), rng);
    w.assign(vocab.begin(), vocab.begin() + static_cast<std::ptrdiff_t>(std::min(cfg.group_vocabulary, vocab.size())));
  }
  std::vector<double> zipf(cfg.vocabulary);
  for (std::size_t i = 0; i < zipf.size(); ++i) zipf[i] = 1.0 / static_cast<double>(i + 1);
  std::discrete_distribution<std::size_t> background(zipf.begin(), zipf.end());

  RowMatrix x = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.vocabulary));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cw = class_words[static_cast<std::size_t>(labels[i])];
    const auto& gw = group_words[group[i]];
    for (std::size_t w = 0; w < cfg.words_per_node; ++w) {
      const double r = detail::uniform(rng);
      std::size_t word;
      if (r < cfg.class_word_share)
        word = cw[static_cast<std::size_t>(detail::uniform(rng) * static_cast<double>(cw.size()))];
      else if (r < cfg.class_word_share + cfg.group_word_share)
        word = gw[static_cast<std::size_t>(detail::uniform(rng) * static_cast<double>(gw.size()))];
      else
        word = background(rng);
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(word)) = 1.0;
    }
  }

  std::vector<std::pair<NodeIndex, NodeIndex>> pairs(edges.begin(), edges.end());
  std::vector<NodeId> ids(n);
  std::iota(ids.begin(), ids.end(), NodeId{0});
  return Graph::build(std::move(ids), pairs, {}, std::move(x), std::move(labels), static_cast<int>(k));
}

/// Fraction of edges whose endpoints share a label.
inline double edge_homophily(const Graph& g) {
  if (g.edge_count() == 0) return 0.0;
  std::size_t same = 0;
  for (const auto& e : g.edges()) same += g.label(e.u) == g.label(e.v);
  return static_cast<double>(same) / static_cast<double>(g.edge_count());
}

}  // namespace cge::synth
