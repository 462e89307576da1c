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

// Run configuration: flat `key = value` text, `#` starts a comment.

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "cge/common.hpp"
#include "cge/eval.hpp"
#include "cge/graph.hpp"

namespace cge {

struct RunConfig {
  std::string edges;
  std::string features;
  std::string labels;
  std::string out = "run";
  ExperimentConfig experiment;
  bool ignore_missing = false;

  /// Applies one setting; unknown keys and out-of-range values throw.
  void set(const std::string& key, const std::string& value) {
    auto num = [&] {
      double v;
      if (!detail::parse_number(value, v)) throw ParameterError("config: '" + key + "' expects a number, got '" + value + "'");
      return v;
    };
    auto integer = [&] {
      std::int64_t v;
      if (!detail::parse_number(value, v)) throw ParameterError("config: '" + key + "' expects an integer, got '" + value + "'");
      return v;
    };
    auto flag = [&] {
      if (value == "true" || value == "1" || value == "yes") return true;
      if (value == "false" || value == "0" || value == "no") return false;
      throw ParameterError("config: '" + key + "' expects true/false, got '" + value + "'");
    };
    auto in = [&](double v, double lo, double hi, bool lo_open, bool hi_open) {
      if ((lo_open ? v <= lo : v < lo) || (hi_open ? v >= hi : v > hi))
        throw ParameterError("config: '" + key + "' = " + value + " out of range");
      return v;
    };
    auto& e = experiment;
    if (key == "edges") edges = value;
    else if (key == "features") features = value;
    else if (key == "labels") labels = value;
    else if (key == "out") out = value;
    else if (key == "seed") {
      const auto v = integer();
      if (v < 0) throw ParameterError("config: 'seed' must be non-negative");
      e.seed = static_cast<std::uint64_t>(v);
    }
    else if (key == "train_fraction") e.train_fraction = in(num(), 0.0, 1.0, false, false);
    else if (key == "alpha") e.refine.alpha = in(num(), 0.0, 1.0, true, true);
    else if (key == "null_p") e.refine.null_p = in(num(), 0.0, 1.0, true, true);
    else if (key == "conductance_quantile") e.refine.conductance_quantile = in(num(), 0.0, 1.0, false, false);
    else if (key == "variance_ratio") e.mapping.variance_ratio = in(num(), 0.0, 1.0, true, false);
    else if (key == "lambda") e.mapping.lambda = in(num(), 0.0, 1e300, true, false);
    else if (key == "eta") e.mapping.eta = in(num(), 0.0, 1e300, false, false);
    else if (key == "sigma") e.mapping.sigma = in(num(), 0.0, 1e300, false, false);
    else if (key == "invert_edge_weight") e.mapping.invert_edge_weight = flag();
    else if (key == "backbone") e.backbone = parse_backbone(value);
    else if (key == "hidden") e.hyper.hidden = static_cast<int>(in(static_cast<double>(integer()), 1, 1 << 20, false, false));
    else if (key == "lr") e.hyper.lr = in(num(), 0.0, 1e3, true, false);
    else if (key == "weight_decay") e.hyper.weight_decay = in(num(), 0.0, 1e3, false, false);
    else if (key == "epochs") e.hyper.epochs = static_cast<int>(in(static_cast<double>(integer()), 0, 1 << 24, false, false));
    else if (key == "unlearn_fraction") e.unlearn_fraction = in(num(), 0.0, 1.0, true, false);
    else if (key == "strict") e.strict = flag();
    else if (key == "skip_retrain") e.skip_retrain = flag();
    else if (key == "ignore_missing") ignore_missing = flag();
    else if (key == "info_retention") e.compute_info_retention = flag();
    else if (key == "autoencoder_hidden") e.autoencoder.hidden = static_cast<int>(in(static_cast<double>(integer()), 0, 1 << 20, false, false));
    else if (key == "autoencoder_epochs") e.autoencoder.epochs = static_cast<int>(in(static_cast<double>(integer()), 0, 1 << 24, false, false));
    else throw ParameterError("config: unknown key '" + key + "'");
  }

  /// Parses `key = value` lines. Paths are resolved against `base`.
  static RunConfig parse(std::string_view text, const std::filesystem::path& base = {}) {
    RunConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      const std::string t = detail::trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ParameterError("config line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = detail::trim(t.substr(0, eq));
      std::string value = detail::trim(t.substr(eq + 1));
      if ((key == "edges" || key == "features" || key == "labels") && !base.empty() && !value.empty() &&
          std::filesystem::path(value).is_relative())
        value = (base / value).lexically_normal().string();
      try {
        cfg.set(key, value);
      } catch (const ParameterError& e) {
        throw ParameterError("config line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    return cfg;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path.parent_path());
  }

  /// Canonical text form; round-trips through parse.
  std::string to_text() const {
    std::ostringstream o;
    o.precision(17);
    const auto& e = experiment;
    o << "edges = " << edges << "\nfeatures = " << features << "\nlabels = " << labels << "\nout = " << out
      << "\nseed = " << e.seed << "\ntrain_fraction = " << e.train_fraction << "\nalpha = " << e.refine.alpha;
    if (e.refine.null_p) o << "\nnull_p = " << *e.refine.null_p;
    o << "\nconductance_quantile = " << e.refine.conductance_quantile << "\nvariance_ratio = " << e.mapping.variance_ratio
      << "\nlambda = " << e.mapping.lambda << "\neta = " << e.mapping.eta << "\nsigma = " << e.mapping.sigma
      << "\ninvert_edge_weight = " << (e.mapping.invert_edge_weight ? "true" : "false")
      << "\nbackbone = " << backbone_name(e.backbone) << "\nhidden = " << e.hyper.hidden << "\nlr = " << e.hyper.lr
      << "\nweight_decay = " << e.hyper.weight_decay << "\nepochs = " << e.hyper.epochs
      << "\nunlearn_fraction = " << e.unlearn_fraction << "\nstrict = " << (e.strict ? "true" : "false")
      << "\nskip_retrain = " << (e.skip_retrain ? "true" : "false")
      << "\nignore_missing = " << (ignore_missing ? "true" : "false")
      << "\ninfo_retention = " << (e.compute_info_retention ? "true" : "false")
      << "\nautoencoder_hidden = " << e.autoencoder.hidden << "\nautoencoder_epochs = " << e.autoencoder.epochs << '\n';
    return o.str();
  }
};

}  // namespace cge
