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

// Command-line driver. Each subcommand reads the artifacts of earlier stages
// from the run directory and writes its own, plus one manifest line.

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cge/cge.hpp"

namespace fs = std::filesystem;
using namespace cge;

namespace {

struct StageError : Error {
  using Error::Error;
};

/// Exclusive lock on a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) throw Error("run directory '" + dir.string() + "' is locked by another stage (" + path_.string() + ")");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
  }
  ~RunLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string backbone;
  std::string victims;
  bool strict = false;
  bool after = false;
  std::string nodes;
  // generate
  std::string kind = "toy";
};

struct Context {
  RunConfig cfg;
  fs::path dir;
  std::string config_text;
  unsigned threads = 1;
};

Context make_context(const Options& o) {
  Context c;
  c.cfg = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  if (o.seed) c.cfg.experiment.seed = *o.seed;
  if (!o.out.empty()) c.cfg.out = o.out;
  if (!o.backbone.empty()) c.cfg.experiment.backbone = parse_backbone(o.backbone);
  if (o.strict) c.cfg.experiment.strict = true;
  c.dir = c.cfg.out;
  c.config_text = c.cfg.to_text();
  if (const char* env = std::getenv("CGE_THREADS")) {
    std::int64_t t = 0;
    if (!detail::parse_number(std::string_view(env), t) || t < 1) throw ParameterError("CGE_THREADS must be a positive integer");
    c.threads = static_cast<unsigned>(t);
  }
  Eigen::setNbThreads(static_cast<int>(c.threads));
  return c;
}

fs::path require(const Context& c, const char* stage, const std::string& name) {
  const fs::path p = c.dir / name;
  if (!fs::exists(p)) throw StageError(std::string("stage ") + stage + " requires artifact " + name);
  return p;
}

/// Hash of the settings and input files; the run directory itself is left out.
std::string inputs_hash(const Context& c, const std::vector<fs::path>& inputs) {
  RunConfig settings = c.cfg;
  settings.out.clear();
  std::uint64_t h = io::fnv1a(settings.to_text());
  for (const auto& p : inputs) h = io::fnv1a(io::read_file(p), h);
  return io::hex64(h);
}

void manifest(const Context& c, const std::string& stage, const std::string& hash, double seconds) {
  std::ofstream m(c.dir / "manifest.tsv", std::ios::app);
  m << stage << '\t' << hash << '\t' << c.cfg.experiment.seed << '\t' << seconds << '\t' << c.threads << '\n';
}

/// Latest wall time recorded for a stage, 0 when absent.
double manifest_seconds(const Context& c, const std::string& stage) {
  std::ifstream m(c.dir / "manifest.tsv");
  double out = 0.0;
  for (std::string line; std::getline(m, line);) {
    std::istringstream ls(line);
    std::string s, h;
    std::uint64_t seed;
    double sec;
    if (ls >> s >> h >> seed >> sec && s == stage) out = sec;
  }
  return out;
}

std::vector<NodeId> read_ids(const fs::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<NodeId> ids;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    NodeId v;
    if (!detail::parse_number(std::string_view(t), v))
      throw IngestError(path.string() + ":" + std::to_string(lineno) + ": bad node id '" + t + "'");
    ids.push_back(v);
  }
  return ids;
}

template <typename Fn>
void timed(Context& c, const std::string& stage, const std::vector<fs::path>& inputs, Fn&& fn) {
  fs::create_directories(c.dir);
  RunLock lock(c.dir);
  const std::string hash = inputs_hash(c, inputs);
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest(c, stage, hash, sec);
}

// ---------------------------------------------------------------------------

void cmd_ingest(Context& c) {
  const auto& cfg = c.cfg;
  if (cfg.edges.empty() || cfg.features.empty() || cfg.labels.empty())
    throw StageError("stage ingest requires dataset paths edges, features and labels in the config");
  timed(c, "ingest", {cfg.edges, cfg.features, cfg.labels}, [&] {
    const Graph g = load_graph(cfg.edges, cfg.features, cfg.labels);
    const Split s = split_nodes(g, cfg.experiment.train_fraction, cfg.experiment.seed);
    save_graph(g, c.dir / "graph.bin");
    write_split(s, c.dir / "split.txt");
    save_graph(induced_subgraph(g, s.train), c.dir / "train_graph.bin");
    io::write_file_atomic(c.dir / "config.txt", c.config_text);
    std::cout << "nodes=" << g.node_count() << " edges=" << g.edge_count() << " train=" << s.train.size()
              << " test=" << s.test.size() << '\n';
  });
}

void cmd_partition(Context& c) {
  const auto in = require(c, "partition", "train_graph.bin");
  timed(c, "partition", {in}, [&] {
    const Graph g = load_saved(in);
    RefineOptions ro = c.cfg.experiment.refine;
    ro.seed = c.cfg.experiment.seed;
    const auto initial = louvain(g, c.cfg.experiment.seed);
    if (initial.edgeless_warning()) std::cerr << "warning: edgeless graph, singleton partition\n";
    const auto p = refine(g, initial, ro);
    write_partition(g, initial, c.dir / "partition_louvain.txt");
    write_partition(g, p, c.dir / "partition.txt");
    std::cout << "louvain=" << initial.community_count() << " refined=" << p.community_count()
              << " modularity=" << (g.edge_count() ? modularity(g, p) : 0.0)
              << " mean_conductance=" << mean_conductance(g, p) << '\n';
  });
}

void cmd_map(Context& c) {
  const auto gin = require(c, "map", "train_graph.bin");
  const auto pin = require(c, "map", "partition.txt");
  timed(c, "map", {gin, pin}, [&] {
    const Graph g = load_saved(gin);
    const auto p = read_partition(g, pin);
    const auto [mg, t] = build_mapped_graph(g, p, c.cfg.experiment.mapping);
    save_mapping(mg, t, c.dir / "mapping.bin");
    io::write_file_atomic(c.dir / "mapping_summary.csv", mapping_summary_csv(mg, t));
    std::cout << "mapped_nodes=" << mg.nodes.size() << " mapped_edges=" << mg.edges.size()
              << " unlabeled=" << mg.nodes.size() - mg.labeled_count() << '\n';
  });
}

void cmd_train(Context& c) {
  const auto min = require(c, "train", "mapping.bin");
  timed(c, "train", {min}, [&] {
    const auto [mg, t] = load_mapping(min);
    const auto& e = c.cfg.experiment;
    const auto model = train(mg, e.backbone, e.hyper, e.seed);
    save_model(model, c.dir / "model.bin");
    io::write_file_atomic(c.dir / "loss.csv", loss_csv(model));
    std::cout << "backbone=" << backbone_name(model.kind) << " loss_first=" << model.loss_trace.front()
              << " loss_last=" << model.loss_trace.back() << '\n';
  });
}

void cmd_unlearn(Context& c, const Options& o) {
  const auto gin = require(c, "unlearn", "train_graph.bin");
  const auto min = require(c, "unlearn", "mapping.bin");
  const auto win = require(c, "unlearn", "model.bin");
  std::vector<fs::path> inputs{gin, min, win};
  if (!o.victims.empty()) inputs.push_back(o.victims);
  timed(c, "unlearn", inputs, [&] {
    const Graph g = load_saved(gin);
    const auto [mg, t] = load_mapping(min);
    const auto& e = c.cfg.experiment;
    UnlearnRequest req;
    req.strict_feature_update = e.strict;
    req.ignore_missing = c.cfg.ignore_missing;
    if (!o.victims.empty()) {
      req.victims = read_ids(o.victims);
    } else {
      const Split s = read_split(require(c, "unlearn", "split.txt"));
      req.victims = detail::sample_victims(s.train, load_saved(require(c, "unlearn", "graph.bin")).node_count(),
                                           e.unlearn_fraction, e.seed + 1);
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto res = unlearn(g, mg, t, req);
    const bool retrain = !e.skip_retrain && !(res.mapped == mg);
    TrainedModel model = retrain ? train(res.mapped, e.backbone, e.hyper, e.seed) : load_model(win);
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!verify_unlearned(res.tables, req.victims)) throw ConsistencyError("victims still referenced after unlearning");

    const fs::path u = c.dir / "unlearned";
    fs::create_directories(u);
    save_graph(res.graph, u / "train_graph.bin");
    save_mapping(res.mapped, res.tables, u / "mapping.bin");
    save_model(model, u / "model.bin");
    std::ostringstream victims;
    for (const auto& [v, verdict] : res.influence.verdicts) victims << v << '\n';
    io::write_file_atomic(u / "victims.txt", victims.str());
    std::string report = influence_report(res.influence, res.deleted, sec);
    report += "retrained=" + std::string(retrain ? "1" : "0") + '\n';
    if (!res.warning.empty()) {
      report += "warning=" + res.warning + '\n';
      std::cerr << "warning: " << res.warning << '\n';
    }
    io::write_file_atomic(u / "report.txt", report);
    std::cout << report;
  });
}

void cmd_predict(Context& c, const Options& o) {
  const std::string prefix = o.after ? "unlearned/" : "";
  const auto gin = require(c, "predict", "graph.bin");
  const auto min = require(c, "predict", prefix + "mapping.bin");
  const auto win = require(c, "predict", prefix + "model.bin");
  std::vector<fs::path> inputs{gin, min, win};
  if (!o.nodes.empty()) inputs.push_back(o.nodes);
  timed(c, o.after ? "predict_after" : "predict", inputs, [&] {
    const Graph g = load_saved(gin);
    const auto [mg, t] = load_mapping(min);
    const auto model = load_model(win);
    const auto ids = o.nodes.empty() ? read_split(require(c, "predict", "split.txt")).test : read_ids(o.nodes);
    Predictor pred(g, mg, t, model);
    std::ostringstream out;
    out.precision(17);
    out << "node_id,label,truth,community";
    for (int k = 0; k < model.num_classes; ++k) out << ",p" << k;
    out << '\n';
    for (NodeId v : ids) {
      const auto p = pred.predict(v);
      out << v << ',' << p.label << ',' << g.label(*g.index_of(v)) << ',' << p.community;
      for (double s : p.scores) out << ',' << s;
      out << '\n';
    }
    io::write_file_atomic(c.dir / (o.after ? "predictions_after.csv" : "predictions.csv"), out.str());
    std::cout << "predicted=" << ids.size() << '\n';
  });
}

void cmd_eval(Context& c) {
  const auto gin = require(c, "eval", "graph.bin");
  const auto tin = require(c, "eval", "train_graph.bin");
  const auto sin = require(c, "eval", "split.txt");
  const auto pin = require(c, "eval", "partition.txt");
  const auto min = require(c, "eval", "mapping.bin");
  const auto win = require(c, "eval", "model.bin");
  timed(c, "eval", {gin, tin, sin, pin, min, win}, [&] {
    const Graph g = load_saved(gin);
    const Graph tg = load_saved(tin);
    const Split split = read_split(sin);
    const auto part = read_partition(tg, pin);
    const auto& e = c.cfg.experiment;

    std::vector<NodeId> test;
    std::vector<int> truths;
    for (NodeId v : split.test)
      if (int y = g.label(*g.index_of(v)); y != kUnlabeled) {
        test.push_back(v);
        truths.push_back(y);
      }
    auto f1 = [&](const MappedGraph& mg, const MappingTables& t, const TrainedModel& m) {
      Predictor pred(g, mg, t, m);
      std::vector<int> out;
      for (NodeId v : test) out.push_back(pred.predict(v).label);
      return test.empty() ? 0.0 : macro_f1(out, truths, g.num_classes());
    };

    EvalReport r;
    r.seed = e.seed;
    r.backbone = backbone_name(e.backbone);
    r.nodes = g.node_count();
    r.train_nodes = tg.node_count();
    const auto [mg, t] = load_mapping(min);
    const auto model = load_model(win);
    r.communities = mg.nodes.size();
    r.mapped_edges = mg.edges.size();
    r.macro_f1 = f1(mg, t, model);
    // Nothing unlearned yet: the after state is the current one.
    r.macro_f1_after = r.macro_f1;
    r.deploy_seconds = manifest_seconds(c, "partition") + manifest_seconds(c, "map") + manifest_seconds(c, "train");
    const fs::path u = c.dir / "unlearned";
    if (fs::exists(u / "mapping.bin") && fs::exists(u / "model.bin") && fs::exists(u / "victims.txt")) {
      const auto [mg2, t2] = load_mapping(u / "mapping.bin");
      const auto model2 = load_model(u / "model.bin");
      const auto victims = read_ids(u / "victims.txt");
      r.victims = victims.size();
      r.macro_f1_after = f1(mg2, t2, model2);
      if (!victims.empty() && !test.empty() && !mg2.nodes.empty()) {
        Predictor pred(g, mg2, t2, model2);
        std::vector<double> member, nonmember;
        for (NodeId v : victims) member.push_back(mia_score(pred.predict(v).scores));
        for (NodeId v : test) nonmember.push_back(mia_score(pred.predict(v).scores));
        r.mia_auc = mia_auc(member, nonmember);
      }
      r.unlearn_seconds = manifest_seconds(c, "unlearn");
    }
    r.mean_conductance = mean_conductance(tg, part);
    if (e.compute_info_retention)
      r.info_retention = info_retention(tg, partition_node_sets(tg, part), e.autoencoder, e.seed);
    io::write_file_atomic(c.dir / "eval.csv", report_csv_header() + "\n" + report_csv_row(r) + "\n");
    std::cout << report_csv_header() << '\n' << report_csv_row(r) << '\n';
  });
}

void cmd_report(Context& c) {
  const auto ein = require(c, "report", "eval.csv");
  timed(c, "report", {ein}, [&] {
    std::istringstream in(io::read_file(ein));
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    std::vector<std::string> keys, values;
    for (std::istringstream hs(header); std::getline(hs, keys.emplace_back(), ',');) {}
    for (std::istringstream rs(row); std::getline(rs, values.emplace_back(), ',');) {}
    std::ostringstream out;
    out << "# run report\n\n| metric | value |\n|---|---|\n";
    for (std::size_t i = 0; i < keys.size() && i < values.size(); ++i)
      if (!keys[i].empty()) out << "| " << keys[i] << " | " << values[i] << " |\n";
    out << "\n## manifest\n\n```\n" << (fs::exists(c.dir / "manifest.tsv") ? io::read_file(c.dir / "manifest.tsv") : "")
        << "```\n";
    io::write_file_atomic(c.dir / "report.md", out.str());
    io::write_file_atomic(c.dir / "plot_report.py",
                          "# Bar chart of the numeric metrics in eval.csv.\n"
                          "import csv, sys\nimport matplotlib.pyplot as plt\n"
                          "rows = list(csv.DictReader(open(sys.argv[1] if len(sys.argv) > 1 else 'eval.csv')))\n"
                          "keys = ['macro_f1', 'macro_f1_after', 'mia_auc', 'info_retention', 'mean_conductance']\n"
                          "vals = [float(rows[0][k]) for k in keys]\n"
                          "plt.bar(keys, vals)\nplt.xticks(rotation=30)\nplt.tight_layout()\nplt.savefig('report.png')\n");
    std::cout << out.str();
  });
}

void cmd_generate(const Options& o) {
  const fs::path dir = o.out.empty() ? fs::path("data") : fs::path(o.out);
  fs::create_directories(dir);
  const std::uint64_t seed = o.seed.value_or(1);
  Graph g;
  if (o.kind == "toy") {
    synth::SbmConfig cfg;
    cfg.p_in = 0.3;
    cfg.p_out = 0.02;
    g = synth::sbm(cfg, seed);
  } else if (o.kind == "citation") {
    g = synth::citation_surrogate({}, seed);
  } else {
    throw ParameterError("unknown dataset kind '" + o.kind + "' (expected toy|citation)");
  }
  std::ostringstream edges, feats, labels;
  feats.precision(17);
  for (const auto& e : g.edges()) edges << g.id(e.u) << ' ' << g.id(e.v) << '\n';
  for (NodeIndex i = 0; i < g.node_count(); ++i) {
    for (Eigen::Index j = 0; j < g.features().cols(); ++j) feats << (j ? "," : "") << g.features()(static_cast<Eigen::Index>(i), j);
    feats << '\n';
    labels << g.label(i) << '\n';
  }
  io::write_file_atomic(dir / "edges.txt", edges.str());
  io::write_file_atomic(dir / "features.csv", feats.str());
  io::write_file_atomic(dir / "labels.txt", labels.str());
  io::write_file_atomic(dir / "config.txt", "# generated dataset\nedges = edges.txt\nfeatures = features.csv\nlabels = labels.txt\n");
  std::cout << "wrote " << g.node_count() << " nodes to " << dir.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Community-mapped graph unlearning pipeline"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "Run configuration file (key = value)");
  app.add_option("--seed", o.seed, "Seed, overrides the config");
  app.add_option("--out", o.out, "Run directory, overrides the config");
  app.add_option("--backbone", o.backbone, "gcn | gat | sage")->check(CLI::IsMember({"gcn", "gat", "sage"}));
  app.add_option("--victims", o.victims, "Victim id file for unlearn, one id per line");
  app.add_flag("--strict", o.strict, "Recompute fused features for every removed node");

  std::string current = "cli";
  auto sub = [&](const char* name, const char* help) { return app.add_subcommand(name, help)->fallthrough(); };
  sub("ingest", "Load the dataset, split it, write graph artifacts");
  sub("partition", "Louvain plus significance refinement on the training graph");
  sub("map", "Build the mapped graph and its tables");
  sub("train", "Train the GNN on the mapped graph");
  sub("unlearn", "Remove victim nodes and retrain");
  auto* predict = sub("predict", "Predict original nodes through the mapped graph");
  predict->add_option("--nodes", o.nodes, "Node id file (default: test split)");
  predict->add_flag("--after", o.after, "Use the unlearned state");
  sub("eval", "Compute the evaluation report row");
  sub("report", "Render report.md from eval.csv and the manifest");
  auto* gen = sub("generate", "Write a synthetic dataset (edges.txt, features.csv, labels.txt)");
  gen->add_option("--kind", o.kind, "toy | citation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    const auto* s = app.get_subcommands().front();
    current = s->get_name();
    if (current == "generate") {
      cmd_generate(o);
      return 0;
    }
    Context c = make_context(o);
    if (current == "ingest") cmd_ingest(c);
    else if (current == "partition") cmd_partition(c);
    else if (current == "map") cmd_map(c);
    else if (current == "train") cmd_train(c);
    else if (current == "unlearn") cmd_unlearn(c, o);
    else if (current == "predict") cmd_predict(c, o);
    else if (current == "eval") cmd_eval(c);
    else if (current == "report") cmd_report(c);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: stage=" << current << " message=" << msg << '\n';
    return 1;
  }
  return 0;
}
