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

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "support.hpp"

namespace cge {
namespace {

namespace fs = std::filesystem;

struct Run {
  int status = -1;
  std::string output;
};

/// Runs the cge binary with `args`, capturing stdout and stderr together.
Run cge(const std::string& args, const testing::TempDir& scratch) {
  const fs::path log = scratch / "cli.log";
  const std::string cmd = std::string("\"") + CGE_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.output = io::read_file(log);
  return r;
}

std::string slurp(const fs::path& p) { return io::read_file(p); }

/// Config pointing at the toy dataset with a short training schedule.
fs::path toy_config(const testing::TempDir& dir, const std::string& extra = "") {
  const fs::path toy = CGE_TOY_DIR;
  std::ofstream f(dir / "config.txt");
  f << "edges = " << (toy / "edges.txt").string() << "\nfeatures = " << (toy / "features.csv").string()
    << "\nlabels = " << (toy / "labels.txt").string() << "\nepochs = 60\nhidden = 16\nunlearn_fraction = 0.05\n"
    << "autoencoder_epochs = 30\n"
    << extra;
  return dir / "config.txt";
}

std::string common(const testing::TempDir& dir, const fs::path& out) {
  return "--config \"" + toy_config(dir).string() + "\" --out \"" + out.string() + "\" --seed 3";
}

TEST(Cli, FullPipelineOnToyData) {
  testing::TempDir dir("cli_full");
  const fs::path out = dir / "run";
  const std::string base = common(dir, out);
  for (const char* stage : {"ingest", "partition", "map", "train", "unlearn", "predict", "eval", "report"}) {
    const auto r = cge(std::string(stage) + " " + base, dir);
    ASSERT_EQ(r.status, 0) << stage << ": " << r.output;
  }
  const auto after = cge("predict --after " + base, dir);
  ASSERT_EQ(after.status, 0) << after.output;

  for (const char* artifact : {"graph.bin", "train_graph.bin", "split.txt", "partition.txt", "mapping.bin",
                               "mapping_summary.csv", "model.bin", "loss.csv", "unlearned/mapping.bin",
                               "unlearned/report.txt", "predictions.csv", "predictions_after.csv", "eval.csv",
                               "report.md", "manifest.tsv"})
    EXPECT_TRUE(fs::exists(out / artifact)) << artifact;

  // eval.csv holds the header plus exactly one row with a value per column.
  std::istringstream csv(slurp(out / "eval.csv"));
  std::string header, row, extra;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_FALSE(std::getline(csv, extra) && !extra.empty());
  EXPECT_EQ(header, report_csv_header());
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
  EXPECT_EQ(row.rfind("3,gcn,40,32,", 0), 0u) << row;

  // Two victims from 40 nodes at 5%; the report lists both verdicts.
  const auto report = slurp(out / "unlearned/report.txt");
  EXPECT_NE(report.find("victims=2\n"), std::string::npos) << report;
  const auto victims = slurp(out / "unlearned/victims.txt");
  EXPECT_EQ(std::count(victims.begin(), victims.end(), '\n'), 2);

  // One predictions row per test node (8 of 40).
  const auto preds = slurp(out / "predictions.csv");
  EXPECT_EQ(std::count(preds.begin(), preds.end(), '\n'), 9);
  EXPECT_FALSE(fs::exists(out / ".lock"));
}

TEST(Cli, PartitionIsReproducible) {
  testing::TempDir dir("cli_repro");
  const fs::path a = dir / "a", b = dir / "b";
  for (const auto& out : {a, b}) {
    const std::string base = common(dir, out);
    ASSERT_EQ(cge("ingest " + base, dir).status, 0);
    ASSERT_EQ(cge("partition " + base, dir).status, 0);
  }
  EXPECT_EQ(slurp(a / "partition.txt"), slurp(b / "partition.txt"));
  // The manifest records the same input hash for the same inputs.
  auto hash_of = [](const fs::path& m, const std::string& stage) {
    std::istringstream in(io::read_file(m));
    for (std::string line; std::getline(in, line);)
      if (line.rfind(stage + "\t", 0) == 0) return line.substr(stage.size() + 1, 16);
    return std::string();
  };
  EXPECT_FALSE(hash_of(a / "manifest.tsv", "partition").empty());
  EXPECT_EQ(hash_of(a / "manifest.tsv", "partition"), hash_of(b / "manifest.tsv", "partition"));
}

TEST(Cli, EmptyVictimFileIsANoOp) {
  testing::TempDir dir("cli_empty");
  const fs::path out = dir / "run";
  const std::string base = common(dir, out);
  for (const char* stage : {"ingest", "partition", "map", "train"}) ASSERT_EQ(cge(std::string(stage) + " " + base, dir).status, 0);
  std::ofstream(dir / "victims.txt") << "# nothing to remove\n";
  const auto r = cge("unlearn " + base + " --victims \"" + (dir / "victims.txt").string() + "\"", dir);
  ASSERT_EQ(r.status, 0) << r.output;
  const auto report = slurp(out / "unlearned/report.txt");
  EXPECT_NE(report.find("victims=0\n"), std::string::npos);
  EXPECT_NE(report.find("affected_communities=0\n"), std::string::npos);
  EXPECT_NE(report.find("affected_nodes=0\n"), std::string::npos);
  EXPECT_NE(report.find("retrained=0\n"), std::string::npos);
  EXPECT_EQ(slurp(out / "unlearned/mapping.bin"), slurp(out / "mapping.bin"));
}

TEST(Cli, MissingArtifactNamesStageAndFile) {
  testing::TempDir dir("cli_missing");
  const auto r = cge("map " + common(dir, dir / "run"), dir);
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("stage map requires artifact train_graph.bin"), std::string::npos) << r.output;

  const auto t = cge("train " + common(dir, dir / "run"), dir);
  EXPECT_NE(t.status, 0);
  EXPECT_NE(t.output.find("stage train requires artifact mapping.bin"), std::string::npos) << t.output;
}

TEST(Cli, UnknownVictimIsReportedUnlessIgnored) {
  testing::TempDir dir("cli_victim");
  const fs::path out = dir / "run";
  const std::string base = common(dir, out);
  for (const char* stage : {"ingest", "partition", "map", "train"}) ASSERT_EQ(cge(std::string(stage) + " " + base, dir).status, 0);
  std::ofstream(dir / "victims.txt") << "99999\n";
  const std::string vic = " --victims \"" + (dir / "victims.txt").string() + "\"";
  const auto r = cge("unlearn " + base + vic, dir);
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("stage=unlearn"), std::string::npos);
  EXPECT_NE(r.output.find("99999"), std::string::npos);

  const std::string lenient = "--config \"" + toy_config(dir, "ignore_missing = true\n").string() + "\" --out \"" +
                              out.string() + "\" --seed 3";
  const auto ok = cge("unlearn " + lenient + vic, dir);
  EXPECT_EQ(ok.status, 0) << ok.output;
  EXPECT_NE(slurp(out / "unlearned/report.txt").find("skipped=1\n"), std::string::npos);
}

TEST(Cli, BadConfigAndArguments) {
  testing::TempDir dir("cli_bad");
  std::ofstream(dir / "bad.txt") << "seed = 1\nwarp_factor = 9\n";
  const auto r = cge("ingest --config \"" + (dir / "bad.txt").string() + "\" --out \"" + (dir / "run").string() + "\"", dir);
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("unknown key 'warp_factor'"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("line 2"), std::string::npos);

  EXPECT_NE(cge("train --backbone gin", dir).status, 0);
  EXPECT_NE(cge("", dir).status, 0);
}

TEST(Cli, GenerateWritesLoadableDataset) {
  testing::TempDir dir("cli_gen");
  const auto r = cge("generate --kind toy --seed 1 --out \"" + (dir / "toy").string() + "\"", dir);
  ASSERT_EQ(r.status, 0) << r.output;
  const auto g = load_graph(dir / "toy/edges.txt", dir / "toy/features.csv", dir / "toy/labels.txt");
  EXPECT_EQ(g.node_count(), 40u);
  // The checked-in toy data comes from this exact command.
  EXPECT_EQ(slurp(dir / "toy/edges.txt"), slurp(fs::path(CGE_TOY_DIR) / "edges.txt"));
  EXPECT_NE(cge("generate --kind nope --out \"" + (dir / "x").string() + "\"", dir).status, 0);
}

// --- configuration ----------------------------------------------------------

TEST(RunConfig, ParseAndRoundTrip) {
  const auto cfg = RunConfig::parse(
      "# comment\nseed = 9\nalpha = 0.01\nnull_p = 0.2\nbackbone = gat\nlambda = 2\ninvert_edge_weight = yes\n"
      "edges = e.txt\n",
      "/data");
  EXPECT_EQ(cfg.experiment.seed, 9u);
  EXPECT_EQ(cfg.experiment.refine.alpha, 0.01);
  EXPECT_EQ(cfg.experiment.refine.null_p, 0.2);
  EXPECT_EQ(cfg.experiment.backbone, Backbone::gat);
  EXPECT_TRUE(cfg.experiment.mapping.invert_edge_weight);
  EXPECT_EQ(cfg.edges, "/data/e.txt");
  const auto again = RunConfig::parse(cfg.to_text());
  EXPECT_EQ(again.to_text(), cfg.to_text());
  EXPECT_EQ(again.experiment.mapping, cfg.experiment.mapping);
  EXPECT_EQ(again.experiment.hyper, cfg.experiment.hyper);
  EXPECT_EQ(RunConfig{}.to_text(), RunConfig::parse(RunConfig{}.to_text()).to_text());
}

TEST(RunConfig, Defaults) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.experiment.hyper.hidden, 64);
  EXPECT_EQ(cfg.experiment.hyper.lr, 0.01);
  EXPECT_EQ(cfg.experiment.hyper.weight_decay, 0.001);
  EXPECT_EQ(cfg.experiment.hyper.epochs, 200);
  EXPECT_EQ(cfg.experiment.unlearn_fraction, 0.005);
  EXPECT_EQ(cfg.experiment.mapping.variance_ratio, 0.95);
  EXPECT_EQ(cfg.experiment.refine.alpha, 0.05);
}

TEST(RunConfig, Errors) {
  auto msg = [](const std::string& text) {
    try {
      RunConfig::parse(text);
    } catch (const ParameterError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(msg("bogus = 1").find("unknown key 'bogus'"), std::string::npos);
  EXPECT_NE(msg("alpha = 1.5").find("out of range"), std::string::npos);
  EXPECT_NE(msg("epochs = many").find("expects an integer"), std::string::npos);
  EXPECT_NE(msg("strict = maybe").find("true/false"), std::string::npos);
  EXPECT_NE(msg("\n\njust words").find("config line 3"), std::string::npos);
  EXPECT_NE(msg("backbone = gin").find("gin"), std::string::npos);
  EXPECT_THROW(RunConfig::load("/nonexistent/config.txt"), Error);
}

}  // namespace
}  // namespace cge
