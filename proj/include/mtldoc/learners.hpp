#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtldoc/optim.hpp"
#include "mtldoc/relatedness.hpp"

namespace mtldoc {

enum class Regime { STL, SSL, TL_NPA, TL_INA, MTL_NPA, MTL_INA };

std::string to_string(Regime r);
Regime parse_regime(std::string_view text);
/// False only for STL, the one regime that ignores task relatedness.
bool uses_neighbors(Regime r);

struct FitResult {
  ModelVector theta;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<TracePoint> trace;
};

/// Single-column fit of
///   sum_i log(1 + exp(-y_i <theta, x_i>)) + ridge |theta|^2
///     + coupling * sum_l |theta - targets[:, l]|^2.
/// `targets` holds frozen vectors (zero columns for plain STL) and is only read.
FitResult fit_binary(std::shared_ptr<const DesignMatrix> design, const Eigen::VectorXd& labels,
                     double ridge, const Eigen::MatrixXd& targets, double coupling,
                     const OptConfig& cfg);

/// fit_binary without targets for every column of `labels` at once. Columns
/// are independent problems sharing one design matrix; each gets the same
/// iterates it would get alone.
std::vector<FitResult> fit_binary_columns(std::shared_ptr<const DesignMatrix> design, const Eigen::MatrixXd& labels,
                                          double ridge, const OptConfig& cfg);

/// Ridge-regularized logistic regression on one task (ridge = cfg.lambda1).
FitResult train_stl(const Dataset& data, const BinaryTask& task, const OptConfig& cfg);

struct AugmentedTask {
  Dataset data;
  BinaryTask task;
};

/// The task's own dataset plus every example of its neighbor classes in
/// `other`, appended as extra positives (each example at most once).
AugmentedTask make_ssl_task(const Dataset& own, const BinaryTask& task, const NeighborMap& neighbors,
                            const Dataset& other);

/// STL on the SSL-augmented task.
FitResult train_ssl(const Dataset& own, const BinaryTask& task, const NeighborMap& neighbors,
                    const Dataset& other, const OptConfig& cfg);

struct TransferResult {
  FitResult target;
  Eigen::MatrixXd sources;  // frozen source vectors the target was coupled to
};

/// Learns the pooled source model by STL on `pooled` (a task over `other`),
/// then fits the target with ridge lambda1 and coupling lambda2 to it.
TransferResult train_tl_npa(const Dataset& own, const BinaryTask& task, const Dataset& other,
                            const BinaryTask& pooled, const OptConfig& cfg);

/// Learns each neighbor task by STL, then fits the target with ridge lambda1
/// and coupling lambda2 to every neighbor vector.
TransferResult train_tl_ina(const Dataset& own, const BinaryTask& task, const Dataset& other,
                            std::span<const BinaryTask> neighbor_tasks, const OptConfig& cfg);

/// Pooled task of every class in `map`: positives are the examples of its
/// neighbor classes in `other`, negatives the rest of `other`.
std::vector<BinaryTask> build_pooled_tasks(const Dataset& other, const NeighborMap& map);

struct JointResult {
  ModelMatrix theta;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<TracePoint> trace;
};

/// Joint fit of original columns of both sources and their pooled columns:
/// each source's columns carry their own loss and ridge (lambda1 for columns
/// trained on S1 data, lambda2 for S2), and lambda3 couples every original
/// column to its pooled counterpart. `pooled_for_s1` are tasks over `s2`
/// with ids {S2, c, pooled} for each S1 class c, and symmetrically.
JointResult train_mtl_npa(const Dataset& s1, const Dataset& s2, std::span<const BinaryTask> tasks_s1,
                          std::span<const BinaryTask> tasks_s2, std::span<const BinaryTask> pooled_for_s1,
                          std::span<const BinaryTask> pooled_for_s2, const OptConfig& cfg);

/// Joint fit of all original columns where every column is coupled (lambda3)
/// to the current columns of its k neighbors in the other source.
JointResult train_mtl_ina(const Dataset& s1, const Dataset& s2, std::span<const BinaryTask> tasks_s1,
                          std::span<const BinaryTask> tasks_s2, const NeighborMap& s1_to_s2,
                          const NeighborMap& s2_to_s1, const OptConfig& cfg);

/// argmax_c <theta_c, [x;1]> over the original columns of `source`; ties go
/// to the lower class id.
ClassId predict(const ModelMatrix& model, Source source, const SparseVector& x);
std::vector<ClassId> predict(const ModelMatrix& model, Source source, const Dataset& data);

struct TrainedModel {
  Regime regime = Regime::STL;
  int k = 0;
  FeatureId dimension = 0;  // feature count d; columns have d + 1 entries
  OptConfig config;
  ModelMatrix theta;
  std::vector<NeighborMap> neighbor_maps;
  std::map<TaskId, double> per_task_train_seconds;
  // Optimizer traces keyed by task id ("joint" for MTL); filled only when
  // RegimeOptions::keep_traces is set, never serialized.
  std::map<std::string, std::vector<TracePoint>> traces;

  double seconds_per_class() const;
};

struct RegimeOptions {
  bool normalize_centroids = false;
  bool keep_traces = false;
};

/// Trains `regime` for every class of both training samples. Samples must
/// share one dimension. Relatedness is computed from the samples' centroids.
TrainedModel train_regime(Regime regime, int k, const Dataset& s1, const Dataset& s2,
                          const OptConfig& cfg, const RegimeOptions& options = {});

}  // namespace mtldoc
