#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mtldoc/learners.hpp"
#include "mtldoc/metrics.hpp"

namespace mtldoc {

struct ExperimentConfig {
  std::filesystem::path s1_path;
  std::filesystem::path s2_path;
  std::vector<std::size_t> distributions{25, 250};
  std::vector<int> k_values{2, 3, 4, 5, 6};
  std::vector<double> lambda1_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
  std::vector<double> lambda2_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
  std::vector<double> lambda3_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
  bool tie_lambda12 = true;  // MTL: lambda2 follows lambda1 instead of being searched
  int runs = 5;
  std::uint64_t seed = 1;
  std::vector<Regime> regimes{Regime::STL,    Regime::SSL,     Regime::TL_NPA,
                              Regime::TL_INA, Regime::MTL_NPA, Regime::MTL_INA};
  std::filesystem::path output_dir = "results";
  OptConfig optimizer;
  bool l2_normalize = false;
  bool normalize_centroids = false;
  bool verbose = true;
};

/// Reads a JSON config; absent keys keep their defaults. Relative data paths
/// resolve against the config file's directory.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const ExperimentConfig& cfg);

/// "LD" for 25, "HD" for 250, "N<size>" otherwise.
std::string distribution_label(std::size_t size);

enum class Partition { Train, Val, Test };
std::string to_string(Partition p);

struct AuditEvent {
  std::uint64_t seq = 0;
  int run = 0;
  std::string distribution;
  std::string cell;  // "<regime>/k=<k>", empty for per-run stages
  Partition partition = Partition::Train;
  std::string stage;
};

// Ordered record of every read of a split partition during an experiment.
class AuditLog {
 public:
  void record(int run, std::string distribution, std::string cell, Partition partition, std::string stage);
  const std::vector<AuditEvent>& events() const { return events_; }

 private:
  std::vector<AuditEvent> events_;
};

// A split part that logs each read. The experiment driver only reaches
// partition data through read().
class AuditedPartition {
 public:
  AuditedPartition(Dataset data, Partition partition, AuditLog* log, int run, std::string distribution);

  const Dataset& read(std::string_view cell, std::string_view stage) const;
  Partition partition() const { return partition_; }

 private:
  Dataset data_;
  Partition partition_;
  AuditLog* log_;
  int run_;
  std::string distribution_;
};

struct GridPoint {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  double score = 0.0;  // validation micro-F1, averaged over both sources
};

struct TuneResult {
  GridPoint best;
  std::vector<GridPoint> evaluated;  // in search order
  TrainedModel model;                // trained on the training samples at `best`
};

struct Grids {
  std::vector<double> lambda1;
  std::vector<double> lambda2;
  std::vector<double> lambda3;
  bool tie_lambda12 = true;
};

/// Candidate (lambda1, lambda2, lambda3) triples for a regime, ordered by
/// lambda3, then lambda2, then lambda1, ascending. STL and SSL search lambda1
/// only; TL searches lambda1 x lambda2; MTL searches lambda1 (tied to lambda2
/// unless `tie_lambda12` is false) x lambda3.
std::vector<GridPoint> grid_for(Regime regime, const Grids& grids);

/// Validation micro-F1 of a trained model, averaged over S1 and S2.
double validation_score(const TrainedModel& model, const Dataset& val_s1, const Dataset& val_s2);

/// Exhaustive search maximizing validation micro-F1; the first grid point
/// (smallest lambdas) wins ties. Grid points that fail to train are skipped.
TuneResult tune_hyperparams(Regime regime, int k, const Dataset& train_s1, const Dataset& train_s2,
                            const Dataset& val_s1, const Dataset& val_s2, const Grids& grids,
                            const OptConfig& base, const RegimeOptions& options = {});

struct MetricStat {
  std::string metric;
  double mean = 0.0;
  double std = 0.0;      // sample standard deviation over runs (0 for one run)
  double stderr_ = 0.0;  // std / sqrt(runs)
};

// One (regime, k, distribution) cell aggregated over its successful runs.
struct ResultRow {
  Regime regime = Regime::STL;
  int k = 0;
  std::string distribution;
  int runs = 0;
  std::vector<MetricStat> metrics;  // in metric_names() order

  const MetricStat& metric(std::string_view name) const;
};

struct TimingRow {
  Regime regime = Regime::STL;
  int k = 0;
  std::string distribution;
  double seconds_per_class = 0.0;  // mean over runs of thread CPU seconds
};

struct CellFailure {
  Regime regime = Regime::STL;
  int k = 0;
  std::string distribution;
  int run = 0;
  std::string reason;
};

struct ResultsTable {
  std::vector<ResultRow> rows;
  std::vector<TimingRow> timings;
  std::vector<CellFailure> failures;
  AuditLog audit;

  /// Row lookup; throws if absent.
  const ResultRow& at(Regime regime, int k, const std::string& distribution) const;
  const TimingRow& timing(Regime regime, int k, const std::string& distribution) const;
};

/// Metric names, in output order. Unprefixed names are the mean of the two
/// sources; "S1." and "S2." prefixed names are per source.
const std::vector<std::string>& metric_names();

ResultsTable run_experiment(const ExperimentConfig& cfg);
ResultsTable run_experiment(const ExperimentConfig& cfg, const Dataset& s1, const Dataset& s2);

void write_results_csv(std::ostream& out, const ResultsTable& table);
void write_timings_csv(std::ostream& out, const ResultsTable& table);
/// Writes results.csv and timings.csv into `dir`, creating it if needed.
void write_outputs(const std::filesystem::path& dir, const ResultsTable& table);

}  // namespace mtldoc
