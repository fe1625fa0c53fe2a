#include "mtldoc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>

#include "mtldoc/random.hpp"

namespace mtldoc {

namespace {

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.runs < 1) throw Error("config: runs must be at least 1");
  if (cfg.distributions.empty()) throw Error("config: no distributions");
  for (std::size_t d : cfg.distributions) {
    if (d == 0) throw Error("config: distribution sizes must be positive");
  }
  if (cfg.k_values.empty()) throw Error("config: no k values");
  for (int k : cfg.k_values) {
    if (k < 1) throw Error("config: k values must be at least 1");
  }
  if (cfg.lambda1_grid.empty() || cfg.lambda2_grid.empty() || cfg.lambda3_grid.empty()) {
    throw Error("config: lambda grids must be nonempty");
  }
  for (const auto* g : {&cfg.lambda1_grid, &cfg.lambda2_grid, &cfg.lambda3_grid}) {
    for (double v : *g) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw Error("config: lambda values must be finite and >= 0");
    }
  }
  if (cfg.regimes.empty()) throw Error("config: no regimes");
}

std::string cell_name(Regime regime, int k) { return to_string(regime) + "/k=" + std::to_string(k); }

Dataset restrict_to_classes(const Dataset& data, const std::set<ClassId>& classes) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (classes.count(data[i].class_id)) rows.push_back(i);
  }
  return data.subset(rows);
}

std::set<ClassId> class_set(const Dataset& data) {
  const auto cs = data.classes();
  return {cs.begin(), cs.end()};
}

EvalReport evaluate_on(const TrainedModel& model, Source source, const Dataset& data) {
  const ModelMatrix m = model.theta.restricted_to(source);
  std::set<ClassId> classes;
  for (const TaskId& id : m.ids()) classes.insert(id.class_id);
  const std::vector<ClassId> pred = predict(m, source, data);
  std::vector<ClassId> truth;
  truth.reserve(data.size());
  for (const Example& e : data.examples()) truth.push_back(e.class_id);
  return evaluate(pred, truth, classes);
}

std::vector<double> report_values(const EvalReport& r) { return {r.micro_f1, r.map, r.mar, r.maf1, r.amcc}; }

struct CellKey {
  std::size_t regime_pos;
  int k;
  std::size_t dist_pos;
  auto operator<=>(const CellKey&) const = default;
};

struct CellRuns {
  std::vector<std::vector<double>> scores;  // per run, metric_names() order
  std::vector<double> seconds;
};

MetricStat summarize(const std::string& name, const std::vector<double>& xs) {
  MetricStat s;
  s.metric = name;
  const double n = static_cast<double>(xs.size());
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  s.stderr_ = s.std / std::sqrt(n);
  return s;
}

std::vector<int> ks_for(Regime regime, const std::vector<int>& k_values) {
  if (!uses_neighbors(regime)) return {0};
  std::vector<int> ks = k_values;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  std::string s1, s2, out;
  read_if(j, "s1", s1);
  read_if(j, "s2", s2);
  cfg.s1_path = resolve(base_dir, s1);
  cfg.s2_path = resolve(base_dir, s2);
  read_if(j, "distributions", cfg.distributions);
  read_if(j, "k_values", cfg.k_values);
  read_if(j, "lambda1_grid", cfg.lambda1_grid);
  read_if(j, "lambda2_grid", cfg.lambda2_grid);
  read_if(j, "lambda3_grid", cfg.lambda3_grid);
  read_if(j, "tie_lambda12", cfg.tie_lambda12);
  read_if(j, "runs", cfg.runs);
  read_if(j, "seed", cfg.seed);
  if (j.contains("regimes")) {
    cfg.regimes.clear();
    for (const auto& r : j.at("regimes")) cfg.regimes.push_back(parse_regime(r.get<std::string>()));
  }
  if (j.contains("output_dir")) cfg.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    read_if(o, "step_size", cfg.optimizer.step_size);
    read_if(o, "max_iters", cfg.optimizer.max_iters);
    read_if(o, "tol", cfg.optimizer.tol);
  }
  read_if(j, "l2_normalize", cfg.l2_normalize);
  read_if(j, "normalize_centroids", cfg.normalize_centroids);
  read_if(j, "verbose", cfg.verbose);
  validate(cfg);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["s1"] = cfg.s1_path.string();
  j["s2"] = cfg.s2_path.string();
  j["distributions"] = cfg.distributions;
  j["k_values"] = cfg.k_values;
  j["lambda1_grid"] = cfg.lambda1_grid;
  j["lambda2_grid"] = cfg.lambda2_grid;
  j["lambda3_grid"] = cfg.lambda3_grid;
  j["tie_lambda12"] = cfg.tie_lambda12;
  j["runs"] = cfg.runs;
  j["seed"] = cfg.seed;
  std::vector<std::string> regimes;
  for (Regime r : cfg.regimes) regimes.push_back(to_string(r));
  j["regimes"] = regimes;
  j["output_dir"] = cfg.output_dir.string();
  j["optimizer"] = {{"step_size", cfg.optimizer.step_size},
                    {"max_iters", cfg.optimizer.max_iters},
                    {"tol", cfg.optimizer.tol}};
  j["l2_normalize"] = cfg.l2_normalize;
  j["normalize_centroids"] = cfg.normalize_centroids;
  j["verbose"] = cfg.verbose;
  return j;
}

std::string distribution_label(std::size_t size) {
  if (size == 25) return "LD";
  if (size == 250) return "HD";
  return "N" + std::to_string(size);
}

std::string to_string(Partition p) {
  switch (p) {
    case Partition::Train: return "train";
    case Partition::Val: return "val";
    case Partition::Test: return "test";
  }
  return "?";
}

void AuditLog::record(int run, std::string distribution, std::string cell, Partition partition, std::string stage) {
  AuditEvent e;
  e.seq = events_.size();
  e.run = run;
  e.distribution = std::move(distribution);
  e.cell = std::move(cell);
  e.partition = partition;
  e.stage = std::move(stage);
  events_.push_back(std::move(e));
}

AuditedPartition::AuditedPartition(Dataset data, Partition partition, AuditLog* log, int run,
                                   std::string distribution)
    : data_(std::move(data)), partition_(partition), log_(log), run_(run), distribution_(std::move(distribution)) {}

const Dataset& AuditedPartition::read(std::string_view cell, std::string_view stage) const {
  if (log_) log_->record(run_, distribution_, std::string(cell), partition_, std::string(stage));
  return data_;
}

std::vector<GridPoint> grid_for(Regime regime, const Grids& grids) {
  if (grids.lambda1.empty()) throw Error("lambda1 grid is empty");
  std::vector<double> l1 = grids.lambda1;
  std::sort(l1.begin(), l1.end());
  l1.erase(std::unique(l1.begin(), l1.end()), l1.end());
  auto sorted = [](std::vector<double> g, const char* name) {
    if (g.empty()) throw Error(std::string(name) + " grid is empty");
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
  };

  std::vector<GridPoint> out;
  switch (regime) {
    case Regime::STL:
    case Regime::SSL:
      for (double a : l1) out.push_back({a, 0.0, 0.0, 0.0});
      break;
    case Regime::TL_NPA:
    case Regime::TL_INA: {
      const auto l2 = sorted(grids.lambda2, "lambda2");
      for (double b : l2)
        for (double a : l1) out.push_back({a, b, 0.0, 0.0});
      break;
    }
    case Regime::MTL_NPA:
    case Regime::MTL_INA: {
      const auto l3 = sorted(grids.lambda3, "lambda3");
      if (grids.tie_lambda12) {
        for (double c : l3)
          for (double a : l1) out.push_back({a, a, c, 0.0});
      } else {
        const auto l2 = sorted(grids.lambda2, "lambda2");
        for (double c : l3)
          for (double b : l2)
            for (double a : l1) out.push_back({a, b, c, 0.0});
      }
      break;
    }
  }
  return out;
}

double validation_score(const TrainedModel& model, const Dataset& val_s1, const Dataset& val_s2) {
  return 0.5 * (evaluate_on(model, Source::S1, val_s1).micro_f1 + evaluate_on(model, Source::S2, val_s2).micro_f1);
}

TuneResult tune_hyperparams(Regime regime, int k, const Dataset& train_s1, const Dataset& train_s2,
                            const Dataset& val_s1, const Dataset& val_s2, const Grids& grids,
                            const OptConfig& base, const RegimeOptions& options) {
  const std::vector<GridPoint> grid = grid_for(regime, grids);
  TuneResult result;
  bool have = false;
  std::string last_error;
  for (GridPoint p : grid) {
    OptConfig cfg = base;
    cfg.lambda1 = p.lambda1;
    cfg.lambda2 = p.lambda2;
    cfg.lambda3 = p.lambda3;
    TrainedModel model;
    try {
      model = train_regime(regime, k, train_s1, train_s2, cfg, options);
    } catch (const Error& e) {
      last_error = e.what();
      continue;
    }
    p.score = validation_score(model, val_s1, val_s2);
    result.evaluated.push_back(p);
    if (!have || p.score > result.best.score) {
      result.best = p;
      result.model = std::move(model);
      have = true;
    }
  }
  if (!have) throw Error("every grid point failed to train: " + last_error);
  return result;
}

const MetricStat& ResultRow::metric(std::string_view name) const {
  for (const MetricStat& m : metrics) {
    if (m.metric == name) return m;
  }
  throw Error("no metric " + std::string(name));
}

const ResultRow& ResultsTable::at(Regime regime, int k, const std::string& distribution) const {
  for (const ResultRow& r : rows) {
    if (r.regime == regime && r.k == k && r.distribution == distribution) return r;
  }
  throw Error("no result row for " + cell_name(regime, k) + " " + distribution);
}

const TimingRow& ResultsTable::timing(Regime regime, int k, const std::string& distribution) const {
  for (const TimingRow& r : timings) {
    if (r.regime == regime && r.k == k && r.distribution == distribution) return r;
  }
  throw Error("no timing row for " + cell_name(regime, k) + " " + distribution);
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = [] {
    const std::vector<std::string> base{"micro_f1", "map", "mar", "maf1", "amcc"};
    std::vector<std::string> out = base;
    for (const char* prefix : {"S1.", "S2."})
      for (const auto& b : base) out.push_back(prefix + b);
    return out;
  }();
  return names;
}

ResultsTable run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  ParseOptions po;
  po.l2_normalize = cfg.l2_normalize;
  Dataset s1 = parse_sparse_dataset(cfg.s1_path, Source::S1, po);
  Dataset s2 = parse_sparse_dataset(cfg.s2_path, Source::S2, po);
  return run_experiment(cfg, s1, s2);
}

ResultsTable run_experiment(const ExperimentConfig& cfg, const Dataset& s1_in, const Dataset& s2_in) {
  validate(cfg);
  if (s1_in.source() != Source::S1 || s2_in.source() != Source::S2) {
    throw Error("experiment needs an S1 and an S2 dataset");
  }
  const FeatureId dim = std::max(s1_in.dimension(), s2_in.dimension());
  const Dataset s1 = s1_in.with_dimension(dim);
  const Dataset s2 = s2_in.with_dimension(dim);

  ResultsTable table;
  std::map<CellKey, CellRuns> cells;
  std::map<CellKey, int> failed_runs;
  const Grids grids{cfg.lambda1_grid, cfg.lambda2_grid, cfg.lambda3_grid, cfg.tie_lambda12};
  const RegimeOptions options{cfg.normalize_centroids};
  auto log = [&](const std::string& msg) {
    if (cfg.verbose) std::clog << "[experiment] " << msg << '\n';
  };
  auto fail_cell = [&](std::size_t rp, int k, std::size_t dp, int run, const std::string& why) {
    const Regime regime = cfg.regimes[rp];
    const std::string dist = distribution_label(cfg.distributions[dp]);
    table.failures.push_back({regime, k, dist, run, why});
    failed_runs[{rp, k, dp}]++;
    std::clog << "[experiment] cell " << cell_name(regime, k) << ' ' << dist << " run " << run
              << " failed: " << why << '\n';
  };

  for (int run = 1; run <= cfg.runs; ++run) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(run);
    SplitParts p1, p2;
    try {
      p1 = split_dataset(s1, mix_seed(seed, 1));
      p2 = split_dataset(s2, mix_seed(seed, 2));
    } catch (const Error& e) {
      for (std::size_t rp = 0; rp < cfg.regimes.size(); ++rp)
        for (int k : ks_for(cfg.regimes[rp], cfg.k_values))
          for (std::size_t dp = 0; dp < cfg.distributions.size(); ++dp)
            fail_cell(rp, k, dp, run, std::string("split: ") + e.what());
      continue;
    }

    for (std::size_t dp = 0; dp < cfg.distributions.size(); ++dp) {
      const std::size_t size = cfg.distributions[dp];
      const std::string dist = distribution_label(size);
      const AuditedPartition train1(p1.train, Partition::Train, &table.audit, run, dist);
      const AuditedPartition train2(p2.train, Partition::Train, &table.audit, run, dist);
      Dataset sample1, sample2;
      std::set<ClassId> keep1, keep2;
      std::string sample_error;
      try {
        SampleResult r1 = sample_distribution(train1.read("", "sample"), size, mix_seed(seed, 10 + size));
        SampleResult r2 = sample_distribution(train2.read("", "sample"), size, mix_seed(seed, 20 + size));
        if (!r1.dropped.empty() || !r2.dropped.empty()) {
          log(dist + " run " + std::to_string(run) + ": dropped " + std::to_string(r1.dropped.size()) +
              " S1 and " + std::to_string(r2.dropped.size()) + " S2 classes below " + std::to_string(size) +
              " training examples");
        }
        sample1 = std::move(r1.sample);
        sample2 = std::move(r2.sample);
        keep1 = class_set(sample1);
        keep2 = class_set(sample2);
        if (keep1.size() < 2 || keep2.size() < 2) throw Error("fewer than two classes retained");
      } catch (const Error& e) {
        sample_error = std::string("sample: ") + e.what();
      }
      if (!sample_error.empty()) {
        for (std::size_t rp = 0; rp < cfg.regimes.size(); ++rp)
          for (int k : ks_for(cfg.regimes[rp], cfg.k_values)) fail_cell(rp, k, dp, run, sample_error);
        continue;
      }

      const AuditedPartition val1(restrict_to_classes(p1.val, keep1), Partition::Val, &table.audit, run, dist);
      const AuditedPartition val2(restrict_to_classes(p2.val, keep2), Partition::Val, &table.audit, run, dist);
      const AuditedPartition test1(restrict_to_classes(p1.test, keep1), Partition::Test, &table.audit, run, dist);
      const AuditedPartition test2(restrict_to_classes(p2.test, keep2), Partition::Test, &table.audit, run, dist);

      for (std::size_t rp = 0; rp < cfg.regimes.size(); ++rp) {
        const Regime regime = cfg.regimes[rp];
        for (int k : ks_for(regime, cfg.k_values)) {
          const std::string cell = cell_name(regime, k);
          try {
            table.audit.record(run, dist, cell, Partition::Train, "relate+fit");
            TuneResult tuned = tune_hyperparams(regime, k, sample1, sample2, val1.read(cell, "tune"),
                                                val2.read(cell, "tune"), grids, cfg.optimizer, options);
            // Training is deterministic, so the model tuning kept for the best
            // grid point is the retrained model.
            const TrainedModel& model = tuned.model;
            const EvalReport e1 = evaluate_on(model, Source::S1, test1.read(cell, "evaluate"));
            const EvalReport e2 = evaluate_on(model, Source::S2, test2.read(cell, "evaluate"));
            std::vector<double> scores;
            const auto v1 = report_values(e1);
            const auto v2 = report_values(e2);
            for (std::size_t m = 0; m < v1.size(); ++m) scores.push_back(0.5 * (v1[m] + v2[m]));
            scores.insert(scores.end(), v1.begin(), v1.end());
            scores.insert(scores.end(), v2.begin(), v2.end());
            CellRuns& cr = cells[{rp, k, dp}];
            cr.scores.push_back(std::move(scores));
            cr.seconds.push_back(model.seconds_per_class());
            char buf[160];
            std::snprintf(buf, sizeof buf, "%s %s run %d: l1=%g l2=%g l3=%g val=%.4f test micro_f1=%.4f", cell.c_str(),
                          dist.c_str(), run, tuned.best.lambda1, tuned.best.lambda2, tuned.best.lambda3,
                          tuned.best.score, 0.5 * (e1.micro_f1 + e2.micro_f1));
            log(buf);
          } catch (const Error& e) {
            fail_cell(rp, k, dp, run, e.what());
          }
        }
      }
    }
  }

  for (std::size_t rp = 0; rp < cfg.regimes.size(); ++rp) {
    const Regime regime = cfg.regimes[rp];
    for (int k : ks_for(regime, cfg.k_values)) {
      for (std::size_t dp = 0; dp < cfg.distributions.size(); ++dp) {
        const auto it = cells.find({rp, k, dp});
        if (it == cells.end()) continue;
        const CellRuns& cr = it->second;
        ResultRow row;
        row.regime = regime;
        row.k = k;
        row.distribution = distribution_label(cfg.distributions[dp]);
        row.runs = static_cast<int>(cr.scores.size());
        const auto& names = metric_names();
        for (std::size_t m = 0; m < names.size(); ++m) {
          std::vector<double> xs;
          for (const auto& s : cr.scores) xs.push_back(s[m]);
          row.metrics.push_back(summarize(names[m], xs));
        }
        table.rows.push_back(std::move(row));
        table.timings.push_back({regime, k, distribution_label(cfg.distributions[dp]),
                                 std::accumulate(cr.seconds.begin(), cr.seconds.end(), 0.0) /
                                     static_cast<double>(cr.seconds.size())});
      }
    }
  }
  return table;
}

void write_results_csv(std::ostream& out, const ResultsTable& table) {
  out << "regime,k,distribution,metric,mean,std,stderr\n";
  char buf[256];
  for (const ResultRow& r : table.rows) {
    for (const MetricStat& m : r.metrics) {
      std::snprintf(buf, sizeof buf, "%s,%d,%s,%s,%.6f,%.6f,%.6f\n", to_string(r.regime).c_str(), r.k,
                    r.distribution.c_str(), m.metric.c_str(), m.mean, m.std, m.stderr_);
      out << buf;
    }
  }
}

void write_timings_csv(std::ostream& out, const ResultsTable& table) {
  out << "regime,k,distribution,seconds_per_class\n";
  char buf[160];
  for (const TimingRow& t : table.timings) {
    std::snprintf(buf, sizeof buf, "%s,%d,%s,%.6g\n", to_string(t.regime).c_str(), t.k, t.distribution.c_str(),
                  t.seconds_per_class);
    out << buf;
  }
}

void write_outputs(const std::filesystem::path& dir, const ResultsTable& table) {
  std::filesystem::create_directories(dir);
  std::ofstream results(dir / "results.csv");
  std::ofstream timings(dir / "timings.csv");
  if (!results || !timings) throw Error("cannot write outputs under " + dir.string());
  write_results_csv(results, table);
  write_timings_csv(timings, table);
}

}  // namespace mtldoc
