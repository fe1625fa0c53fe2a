// mtldoc command line: data preparation, training, evaluation and experiments.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mtldoc/corpus.hpp"
#include "mtldoc/harness.hpp"
#include "mtldoc/learners.hpp"
#include "mtldoc/metrics.hpp"
#include "mtldoc/model_io.hpp"
#include "mtldoc/relatedness.hpp"
#include "mtldoc/synth.hpp"

using namespace mtldoc;

namespace {

struct DataArgs {
  std::string path;
  std::string manifest;
  std::string part = "train";
};

void add_data_options(CLI::App* cmd, DataArgs& a, const std::string& prefix, bool required = true) {
  auto* opt = cmd->add_option("--" + prefix, a.path, prefix == "data" ? std::string("sparse data file") : prefix + " data file");
  if (required) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--" + prefix + "-manifest", a.manifest, "manifest selecting rows of the " + prefix + " file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--" + prefix + "-part", a.part, "manifest part to use")->capture_default_str();
}

Dataset load(const DataArgs& a, Source source, bool l2) {
  ParseOptions po;
  po.l2_normalize = l2;
  Dataset full = parse_sparse_dataset(a.path, source, po);
  if (a.manifest.empty()) return full;
  return apply_manifest(full, read_manifest(std::filesystem::path(a.manifest)), a.part);
}

std::pair<Dataset, Dataset> aligned(Dataset a, Dataset b) {
  const FeatureId d = std::max(a.dimension(), b.dimension());
  return {a.with_dimension(d), b.with_dimension(d)};
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

std::string file_safe(std::string s) {
  for (char& c : s) {
    if (c == ':' || c == '(' || c == ')' || c == '/') c = '_';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-source document classification with task relatedness"};
  app.require_subcommand(1);
  bool l2 = false;
  app.add_flag("--l2-normalize", l2, "scale every document to unit L2 norm on load");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "parse a sparse file and report its shape");
  std::string ingest_in, ingest_out, ingest_source = "S1";
  ingest->add_option("input", ingest_in)->required()->check(CLI::ExistingFile);
  ingest->add_option("--source", ingest_source)->capture_default_str();
  ingest->add_option("--output", ingest_out, "rewrite the parsed dataset here");

  // split
  auto* split = app.add_subcommand("split", "stratified 3:1:1 train/val/test split");
  std::string split_in, split_out, split_source = "S1";
  std::uint64_t split_seed = 1;
  split->add_option("input", split_in)->required()->check(CLI::ExistingFile);
  split->add_option("--source", split_source)->capture_default_str();
  split->add_option("--seed", split_seed)->capture_default_str();
  split->add_option("--out", split_out, "manifest CSV")->required();

  // sample
  auto* sample = app.add_subcommand("sample", "draw a fixed number of training examples per class");
  DataArgs sample_data;
  std::string sample_out, sample_source = "S1";
  std::size_t sample_size = 25;
  std::uint64_t sample_seed = 1;
  add_data_options(sample, sample_data, "data");
  sample->add_option("--source", sample_source)->capture_default_str();
  sample->add_option("--size", sample_size)->capture_default_str();
  sample->add_option("--seed", sample_seed)->capture_default_str();
  sample->add_option("--out", sample_out, "manifest CSV with part 'sample'")->required();

  // knn
  auto* knn = app.add_subcommand("knn", "k nearest classes of the other source by centroid similarity");
  DataArgs knn_s1, knn_s2;
  int knn_k = 2;
  bool knn_norm = false;
  std::string knn_out;
  add_data_options(knn, knn_s1, "s1");
  add_data_options(knn, knn_s2, "s2");
  knn->add_option("-k", knn_k)->capture_default_str();
  knn->add_flag("--normalize-centroids", knn_norm);
  knn->add_option("--out", knn_out, "CSV output (stdout when absent)");

  // tune
  auto* tune = app.add_subcommand("tune", "grid search lambdas on validation micro-F1");
  DataArgs tune_s1, tune_s2, tune_v1, tune_v2;
  std::string tune_regime = "STL";
  int tune_k = 2;
  std::vector<double> g1{1e-4, 1e-3, 1e-2, 1e-1, 1, 10, 100}, g2 = g1, g3 = g1;
  bool untie = false;
  OptConfig tune_opt;
  add_data_options(tune, tune_s1, "s1");
  add_data_options(tune, tune_s2, "s2");
  add_data_options(tune, tune_v1, "val-s1");
  add_data_options(tune, tune_v2, "val-s2");
  tune->add_option("--regime", tune_regime)->capture_default_str();
  tune->add_option("-k", tune_k)->capture_default_str();
  tune->add_option("--lambda1-grid", g1)->expected(1, -1);
  tune->add_option("--lambda2-grid", g2)->expected(1, -1);
  tune->add_option("--lambda3-grid", g3)->expected(1, -1);
  tune->add_flag("--untie-lambda12", untie, "search lambda2 independently for MTL");
  tune->add_option("--max-iters", tune_opt.max_iters)->capture_default_str();
  tune->add_option("--tol", tune_opt.tol)->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "train one regime on both sources");
  DataArgs train_s1, train_s2;
  std::string train_regime_name = "STL", model_out, csv_out, trace_dir;
  int train_k = 2;
  OptConfig train_opt;
  bool train_norm = false;
  add_data_options(train, train_s1, "s1");
  add_data_options(train, train_s2, "s2");
  train->add_option("--regime", train_regime_name)->capture_default_str();
  train->add_option("-k", train_k)->capture_default_str();
  train->add_option("--lambda1", train_opt.lambda1)->capture_default_str();
  train->add_option("--lambda2", train_opt.lambda2)->capture_default_str();
  train->add_option("--lambda3", train_opt.lambda3)->capture_default_str();
  train->add_option("--step-size", train_opt.step_size)->capture_default_str();
  train->add_option("--max-iters", train_opt.max_iters)->capture_default_str();
  train->add_option("--tol", train_opt.tol)->capture_default_str();
  train->add_option("--seed", train_opt.seed)->capture_default_str();
  train->add_flag("--normalize-centroids", train_norm);
  train->add_option("--model", model_out, "model JSON")->required();
  train->add_option("--csv", csv_out, "also export non-zero weights as CSV");
  train->add_option("--trace-dir", trace_dir, "write iter,objective,step_size per fit");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a model on labelled data");
  DataArgs eval_data;
  std::string eval_model, eval_source = "S1", eval_out;
  evaluate_cmd->add_option("--model", eval_model)->required()->check(CLI::ExistingFile);
  add_data_options(evaluate_cmd, eval_data, "data");
  evaluate_cmd->add_option("--source", eval_source)->capture_default_str();
  evaluate_cmd->add_option("--out", eval_out, "report JSON (stdout when absent)");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run the full protocol from a JSON config");
  std::string exp_config, exp_out;
  experiment->add_option("config", exp_config)->required()->check(CLI::ExistingFile);
  experiment->add_option("--output-dir", exp_out, "overrides the config's output_dir");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic paired corpus");
  SynthConfig sc;
  std::string synth_dir;
  synth->add_option("--out-dir", synth_dir)->required();
  synth->add_option("--classes", sc.classes_per_source)->capture_default_str();
  synth->add_option("--examples", sc.examples_per_class)->capture_default_str();
  synth->add_option("--dim", sc.dim)->capture_default_str();
  synth->add_option("--overlap", sc.topic_overlap)->capture_default_str();
  synth->add_option("--seed", sc.seed)->capture_default_str();
  synth->add_option("--doc-length", sc.doc_length)->capture_default_str();
  synth->add_option("--signal", sc.signal)->capture_default_str();
  synth->add_option("--topic-words", sc.topic_words)->capture_default_str();
  synth->add_option("--group-size", sc.group_size)->capture_default_str();
  synth->add_option("--group-weight", sc.group_weight)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      ParseOptions po;
      po.l2_normalize = l2;
      const Dataset d = parse_sparse_dataset(ingest_in, parse_source(ingest_source), po);
      nlohmann::json j;
      j["examples"] = d.size();
      j["classes"] = d.class_index().size();
      j["dimension"] = d.dimension();
      nlohmann::json sizes = nlohmann::json::object();
      for (const auto& [c, rows] : d.class_index()) sizes[std::to_string(c)] = rows.size();
      j["class_sizes"] = sizes;
      std::cout << j.dump(2) << '\n';
      if (!ingest_out.empty()) {
        auto out = open_out(ingest_out);
        write_sparse_dataset(out, d);
      }
    } else if (*split) {
      const Dataset d = parse_sparse_dataset(split_in, parse_source(split_source));
      const SplitParts p = split_dataset(d, split_seed);
      write_manifest(std::filesystem::path(split_out),
                     make_manifest({{"train", &p.train}, {"val", &p.val}, {"test", &p.test}}));
      std::clog << "train " << p.train.size() << ", val " << p.val.size() << ", test " << p.test.size() << '\n';
    } else if (*sample) {
      const Dataset d = load(sample_data, parse_source(sample_source), l2);
      const SampleResult r = sample_distribution(d, sample_size, sample_seed);
      for (ClassId c : r.dropped) std::clog << "dropped class " << c << '\n';
      write_manifest(std::filesystem::path(sample_out), make_manifest({{"sample", &r.sample}}));
    } else if (*knn) {
      auto [a, b] = aligned(load(knn_s1, Source::S1, l2), load(knn_s2, Source::S2, l2));
      const auto c1 = compute_centroids(a);
      const auto c2 = compute_centroids(b);
      const NeighborMap m12 = knn_related(c1, c2, knn_k, knn_norm);
      const NeighborMap m21 = knn_related(c2, c1, knn_k, knn_norm);
      std::ofstream file;
      std::ostream* out = &std::cout;
      if (!knn_out.empty()) {
        file = open_out(knn_out);
        out = &file;
      }
      write_neighbor_csv(*out, m12, true);
      write_neighbor_csv(*out, m21, false);
    } else if (*tune) {
      auto [a, b] = aligned(load(tune_s1, Source::S1, l2), load(tune_s2, Source::S2, l2));
      const FeatureId d = a.dimension();
      const Dataset v1 = load(tune_v1, Source::S1, l2);
      const Dataset v2 = load(tune_v2, Source::S2, l2);
      const Regime regime = parse_regime(tune_regime);
      const TuneResult r = tune_hyperparams(regime, tune_k, a, b, v1.with_dimension(std::max(d, v1.dimension())),
                                            v2.with_dimension(std::max(d, v2.dimension())),
                                            Grids{g1, g2, g3, !untie}, tune_opt);
      nlohmann::json j;
      j["regime"] = to_string(regime);
      j["k"] = tune_k;
      j["lambda1"] = r.best.lambda1;
      j["lambda2"] = r.best.lambda2;
      j["lambda3"] = r.best.lambda3;
      j["validation_micro_f1"] = r.best.score;
      nlohmann::json all = nlohmann::json::array();
      for (const GridPoint& p : r.evaluated) all.push_back({p.lambda1, p.lambda2, p.lambda3, p.score});
      j["evaluated"] = all;
      std::cout << j.dump(2) << '\n';
    } else if (*train) {
      auto [a, b] = aligned(load(train_s1, Source::S1, l2), load(train_s2, Source::S2, l2));
      RegimeOptions opts;
      opts.normalize_centroids = train_norm;
      opts.keep_traces = !trace_dir.empty();
      const TrainedModel m = train_regime(parse_regime(train_regime_name), train_k, a, b, train_opt, opts);
      save_model(std::filesystem::path(model_out), m);
      if (!csv_out.empty()) {
        auto out = open_out(csv_out);
        export_model_csv(out, m.theta);
      }
      if (!trace_dir.empty()) {
        std::filesystem::create_directories(trace_dir);
        for (const auto& [name, trace] : m.traces) {
          auto out = open_out((std::filesystem::path(trace_dir) / (file_safe(name) + ".csv")).string());
          write_trace_csv(out, trace);
        }
      }
      std::clog << "trained " << m.theta.size() << " columns, " << m.seconds_per_class() << " s per class\n";
    } else if (*evaluate_cmd) {
      const TrainedModel m = load_model(std::filesystem::path(eval_model));
      const Source source = parse_source(eval_source);
      Dataset d = load(eval_data, source, l2);
      if (d.dimension() > m.dimension) throw Error("data has features beyond the model dimension");
      d = d.with_dimension(m.dimension);
      const ModelMatrix theta = m.theta.restricted_to(source);
      std::set<ClassId> classes;
      for (const TaskId& id : theta.ids()) classes.insert(id.class_id);
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (classes.count(d[i].class_id)) rows.push_back(i);
      }
      if (rows.size() != d.size()) {
        std::clog << "skipped " << d.size() - rows.size() << " examples of classes the model does not know\n";
        d = d.subset(rows);
      }
      std::vector<ClassId> truth;
      for (const Example& e : d.examples()) truth.push_back(e.class_id);
      const EvalReport r = evaluate(predict(theta, source, d), truth, classes);
      const std::string text = to_json(r).dump(2);
      if (eval_out.empty()) {
        std::cout << text << '\n';
      } else {
        open_out(eval_out) << text << '\n';
      }
    } else if (*experiment) {
      ExperimentConfig cfg = load_experiment_config(exp_config);
      if (!exp_out.empty()) cfg.output_dir = exp_out;
      const ResultsTable t = run_experiment(cfg);
      write_outputs(cfg.output_dir, t);
      std::clog << "wrote " << (cfg.output_dir / "results.csv").string() << '\n';
      if (!t.failures.empty()) {
        std::clog << t.failures.size() << " cell run(s) failed\n";
        return 1;
      }
    } else if (*synth) {
      const SyntheticCorpus c = generate_synthetic_dual_corpus(sc);
      std::filesystem::create_directories(synth_dir);
      const std::filesystem::path dir(synth_dir);
      auto o1 = open_out((dir / "s1.txt").string());
      write_sparse_dataset(o1, c.s1);
      auto o2 = open_out((dir / "s2.txt").string());
      write_sparse_dataset(o2, c.s2);
      auto op = open_out((dir / "pairing.csv").string());
      op << "s1_class,s2_class\n";
      for (const auto& [a, b] : c.pairing) op << a << ',' << b << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
