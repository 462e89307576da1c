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

// Versioned binary container shared by every persisted artifact.
//
// Layout (little-endian host order):
//   magic[4] | u32 version | { tag[4] | u64 length | payload[length] }*
//
// Sections are written in a fixed order so identical values produce
// identical bytes.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "cge/common.hpp"

namespace cge::io {

static_assert(std::endian::native == std::endian::little,
              "artifact format assumes a little-endian host");

using Tag = std::array<char, 4>;

constexpr Tag make_tag(const char (&s)[5]) { return {s[0], s[1], s[2], s[3]}; }

inline std::string tag_string(const Tag& t) { return std::string(t.data(), 4); }

class ByteWriter {
 public:
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put_span(std::span<const T> values) {
    put<std::uint64_t>(values.size());
    buf_.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
  }

  void put_string(std::string_view s) {
    put<std::uint64_t>(s.size());
    buf_.append(s.data(), s.size());
  }

  void put_matrix(const Eigen::MatrixXd& m) {
    put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    // row-major on disk regardless of in-memory order
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(m(r, c));
  }

  void put_vector(const Eigen::VectorXd& v) {
    put_span(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
  }

  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string context)
      : data_(data), context_(std::move(context)) {}

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  std::vector<T> get_vector() {
    const auto n = get<std::uint64_t>();
    if (n > remaining() / (sizeof(T) == 0 ? 1 : sizeof(T))) fail("vector length exceeds payload");
    std::vector<T> out(n);
    std::memcpy(out.data(), data_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return out;
  }

  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  Eigen::MatrixXd get_matrix() {
    const auto rows = get<std::uint64_t>();
    const auto cols = get<std::uint64_t>();
    if (cols != 0 && rows > remaining() / sizeof(double) / cols) fail("matrix exceeds payload");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<double>();
    return m;
  }

  Eigen::VectorXd get_eigen_vector() {
    auto v = get_vector<double>();
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(context_ + ": " + what);
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) fail("truncated data");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
  std::string context_;
};

/// Assembles magic, version and tagged sections.
class ContainerWriter {
 public:
  ContainerWriter(Tag magic, std::uint32_t version) {
    out_.append(magic.data(), 4);
    out_.append(reinterpret_cast<const char*>(&version), sizeof(version));
  }

  void add_section(Tag tag, const std::string& payload) {
    out_.append(tag.data(), 4);
    const std::uint64_t n = payload.size();
    out_.append(reinterpret_cast<const char*>(&n), sizeof(n));
    out_.append(payload);
  }

  const std::string& bytes() const { return out_; }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

/// Parsed container. Keeps a copy of the raw bytes; sections are views into it.
class Container {
 public:
  Container(std::string bytes, Tag magic, std::uint32_t supported_version, std::string context)
      : raw_(std::move(bytes)), context_(std::move(context)) {
    if (raw_.size() < 8) throw FormatError(context_ + ": truncated header");
    if (std::memcmp(raw_.data(), magic.data(), 4) != 0)
      throw FormatError(context_ + ": bad magic, expected '" + tag_string(magic) + "'");
    std::memcpy(&version_, raw_.data() + 4, sizeof(version_));
    if (version_ != supported_version)
      throw FormatError(context_ + ": unsupported version " + std::to_string(version_) +
                        " (supported: " + std::to_string(supported_version) + ")");
    std::size_t pos = 8;
    while (pos < raw_.size()) {
      if (raw_.size() - pos < 12) throw FormatError(context_ + ": truncated section header");
      Tag tag;
      std::memcpy(tag.data(), raw_.data() + pos, 4);
      std::uint64_t n;
      std::memcpy(&n, raw_.data() + pos + 4, sizeof(n));
      pos += 12;
      if (raw_.size() - pos < n)
        throw FormatError(context_ + ": truncated section '" + tag_string(tag) + "'");
      sections_[tag_string(tag)] = std::string_view(raw_).substr(pos, n);
      pos += n;
    }
  }

  Container(const Container&) = delete;
  Container& operator=(const Container&) = delete;

  bool has(Tag tag) const { return sections_.contains(tag_string(tag)); }

  ByteReader section(Tag tag) const {
    auto it = sections_.find(tag_string(tag));
    if (it == sections_.end())
      throw FormatError(context_ + ": missing section '" + tag_string(tag) + "'");
    return ByteReader(it->second, context_ + "/" + tag_string(tag));
  }

  std::uint32_t version() const { return version_; }

 private:
  std::string raw_;
  std::string context_;
  std::uint32_t version_ = 0;
  std::map<std::string, std::string_view> sections_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary sibling and renames, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

/// FNV-1a 64-bit; provenance fingerprint, not a security hash.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
  return s;
}

}  // namespace cge::io
