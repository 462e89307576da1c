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

// Shared fixtures and brute-force reference implementations for the tests.

#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cge/cge.hpp"

namespace cge::testing {

struct RandomGraphSpec {
  std::size_t nodes = 20;
  double edge_p = 0.2;
  std::size_t dim = 4;
  int classes = 3;
  double unlabeled_p = 0.0;
  /// Node ids are spread out (0, stride, 2*stride, ...) so id != index bugs surface.
  NodeId id_stride = 1;
  bool weighted = false;
};

inline Graph random_graph(const RandomGraphSpec& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<NodeId> ids(s.nodes);
  for (std::size_t i = 0; i < s.nodes; ++i) ids[i] = static_cast<NodeId>(i) * s.id_stride;
  std::vector<std::pair<NodeIndex, NodeIndex>> pairs;
  std::vector<double> weights;
  for (std::size_t i = 0; i < s.nodes; ++i)
    for (std::size_t j = i + 1; j < s.nodes; ++j)
      if (u(rng) < s.edge_p) {
        pairs.emplace_back(i, j);
        weights.push_back(s.weighted ? 0.25 + 2.0 * u(rng) : 1.0);
      }
  RowMatrix x(static_cast<Eigen::Index>(s.nodes), static_cast<Eigen::Index>(s.dim));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = z(rng);
  std::vector<int> labels(s.nodes);
  std::uniform_int_distribution<int> cls(0, s.classes - 1);
  for (auto& y : labels) y = u(rng) < s.unlabeled_p ? kUnlabeled : cls(rng);
  return Graph::build(std::move(ids), pairs, weights, std::move(x), std::move(labels), s.classes);
}

/// Graph from explicit edges over nodes 0..n-1, zero features of width `dim`.
inline Graph small_graph(std::size_t n, const std::vector<std::pair<NodeIndex, NodeIndex>>& edges,
                         std::size_t dim = 1, std::vector<int> labels = {}) {
  std::vector<NodeId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<NodeId>(i);
  if (labels.empty()) labels.assign(n, 0);
  return Graph::build(std::move(ids), edges, {}, RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim)),
                      std::move(labels), 2);
}

/// Triangles {0,1,2} and {3,4,5} joined by the bridge 2-3.
inline Graph bridge_graph() { return small_graph(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}, {2, 3}}); }

/// Dense adjacency, written out from the edge list.
inline Eigen::MatrixXd dense_adjacency(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : g.edges()) {
    a(static_cast<Eigen::Index>(e.u), static_cast<Eigen::Index>(e.v)) = e.weight;
    a(static_cast<Eigen::Index>(e.v), static_cast<Eigen::Index>(e.u)) = e.weight;
  }
  return a;
}

/// Double sum over all node pairs: (1/2m) sum_ij [A_ij - k_i k_j / 2m] [c_i == c_j].
inline double brute_modularity(const Graph& g, const std::vector<int>& comm) {
  const Eigen::MatrixXd a = dense_adjacency(g);
  const Eigen::VectorXd k = a.rowwise().sum();
  const double two_m = a.sum();
  double q = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (comm[static_cast<std::size_t>(i)] == comm[static_cast<std::size_t>(j)]) q += a(i, j) - k[i] * k[j] / two_m;
  return q / two_m;
}

/// Every set partition of {0..n-1} as restricted-growth strings.
inline std::vector<std::vector<int>> all_set_partitions(int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> a(static_cast<std::size_t>(n), 0);
  auto rec = [&](auto&& self, int i, int max_used) -> void {
    if (i == n) {
      out.push_back(a);
      return;
    }
    for (int c = 0; c <= max_used + 1; ++c) {
      a[static_cast<std::size_t>(i)] = c;
      self(self, i + 1, std::max(max_used, c));
    }
  };
  if (n == 0) return {{}};
  rec(rec, 0, -1);
  return out;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("cge_test_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace cge::testing
