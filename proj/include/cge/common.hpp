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

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cge {

/// Stable external node identifier. Survives node removal.
using NodeId = std::int64_t;
/// Dense position of a node inside one Graph value.
using NodeIndex = std::size_t;
using CommunityId = std::int32_t;

inline constexpr int kUnlabeled = -1;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input files.
class IngestError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its documented range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Corrupt, truncated or unsupported serialized artifact.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Internal invariant broken.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace cge
