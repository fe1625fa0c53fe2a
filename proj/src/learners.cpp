#include "mtldoc/learners.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "mtldoc/timing.hpp"

namespace mtldoc {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::STL: return "STL";
    case Regime::SSL: return "SSL";
    case Regime::TL_NPA: return "TL-NPA";
    case Regime::TL_INA: return "TL-INA";
    case Regime::MTL_NPA: return "MTL-NPA";
    case Regime::MTL_INA: return "MTL-INA";
  }
  return "?";
}

Regime parse_regime(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) {
    return c == '_' ? '-' : static_cast<char>(std::toupper(c));
  });
  for (Regime r : {Regime::STL, Regime::SSL, Regime::TL_NPA, Regime::TL_INA, Regime::MTL_NPA, Regime::MTL_INA}) {
    if (to_string(r) == t) return r;
  }
  throw Error("unknown regime '" + std::string(text) + "'");
}

bool uses_neighbors(Regime r) { return r != Regime::STL; }

namespace {

FitResult from_descent(DescentResult&& d) {
  FitResult out;
  out.theta = d.theta.col(0);
  out.objective = d.objective;
  out.iterations = d.iterations;
  out.converged = d.converged;
  out.trace = std::move(d.trace);
  return out;
}

void require_two_sided(const BinaryTask& task) {
  if (task.positives.empty() || task.negatives.empty()) {
    throw Error("task " + to_string(task.id) + " needs at least one positive and one negative");
  }
}

std::vector<BinaryTask> sorted_tasks(std::span<const BinaryTask> tasks) {
  std::vector<BinaryTask> out(tasks.begin(), tasks.end());
  std::sort(out.begin(), out.end(), [](const BinaryTask& a, const BinaryTask& b) { return a.id < b.id; });
  return out;
}

Eigen::MatrixXd label_matrix(std::span<const BinaryTask> tasks, std::size_t rows) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(tasks.size()));
  for (std::size_t j = 0; j < tasks.size(); ++j) {
    require_two_sided(tasks[j]);
    y.col(static_cast<Eigen::Index>(j)) = task_labels(tasks[j], rows);
  }
  return y;
}

void require_aligned(const Dataset& s1, const Dataset& s2) {
  if (s1.source() != Source::S1 || s2.source() != Source::S2) {
    throw Error("joint training expects an S1 and an S2 dataset");
  }
  if (s1.dimension() != s2.dimension()) throw Error("S1 and S2 samples have different dimensions");
}

void require_source(std::span<const BinaryTask> tasks, Source source, bool pooled, const char* what) {
  for (const BinaryTask& t : tasks) {
    if (t.id.source != source || t.id.pooled != pooled) {
      throw Error(std::string(what) + ": unexpected task " + to_string(t.id));
    }
  }
}

JointResult finish_joint(std::vector<TaskId> ids, DescentResult&& d) {
  JointResult out;
  out.theta = ModelMatrix(std::move(ids), std::move(d.theta));
  out.objective = d.objective;
  out.iterations = d.iterations;
  out.converged = d.converged;
  out.trace = std::move(d.trace);
  return out;
}

}  // namespace

FitResult fit_binary(std::shared_ptr<const DesignMatrix> design, const Eigen::VectorXd& labels, double ridge,
                     const Eigen::MatrixXd& targets, double coupling, const OptConfig& cfg) {
  const Eigen::Index dim = design->cols();
  CompositeObjective objective(dim, 1);
  objective.add_block({std::move(design), labels, 0});
  objective.set_ridge(0, ridge);
  if (targets.cols() > 0 && targets.rows() != dim) throw Error("frozen target dimension mismatch");
  for (Eigen::Index l = 0; l < targets.cols(); ++l) {
    const Eigen::Index idx = objective.add_frozen(targets.col(l));
    objective.add_coupling({0, FrozenTarget{idx}, coupling});
  }
  return from_descent(gradient_descent(objective, Eigen::MatrixXd::Zero(dim, 1), cfg));
}

std::vector<FitResult> fit_binary_columns(std::shared_ptr<const DesignMatrix> design, const Eigen::MatrixXd& labels,
                                          double ridge, const OptConfig& cfg) {
  const Eigen::Index dim = design->cols(), m = labels.cols();
  CompositeObjective objective(dim, m);
  objective.add_block({std::move(design), labels, 0});
  for (Eigen::Index j = 0; j < m; ++j) objective.set_ridge(j, ridge);
  auto eval = [&](const Eigen::MatrixXd& theta, std::span<const Eigen::Index> cols, Eigen::VectorXd& values,
                  Eigen::MatrixXd* grad) { objective.column_terms(theta, cols, values, grad); };
  std::vector<FitResult> out;
  for (DescentResult& d : gradient_descent_columns(eval, Eigen::MatrixXd::Zero(dim, m), cfg)) {
    out.push_back(from_descent(std::move(d)));
  }
  return out;
}

FitResult train_stl(const Dataset& data, const BinaryTask& task, const OptConfig& cfg) {
  require_two_sided(task);
  auto design = std::make_shared<const DesignMatrix>(design_matrix(data, data.dimension()));
  const Eigen::Index dim = design->cols();
  return fit_binary(std::move(design), task_labels(task, data.size()), cfg.lambda1, Eigen::MatrixXd(dim, 0),
                    0.0, cfg);
}

AugmentedTask make_ssl_task(const Dataset& own, const BinaryTask& task, const NeighborMap& neighbors,
                            const Dataset& other) {
  if (neighbors.source != task.id.source || other.source() == own.source()) {
    throw Error("SSL neighbors must come from the other source");
  }
  std::vector<std::size_t> extra;
  for (const Neighbor& nb : neighbors.at(task.id.class_id)) {
    const auto it = other.class_index().find(nb.class_id);
    if (it == other.class_index().end()) {
      throw Error("neighbor class " + std::to_string(nb.class_id) + " missing from " + to_string(other.source()));
    }
    extra.insert(extra.end(), it->second.begin(), it->second.end());
  }
  std::sort(extra.begin(), extra.end());
  extra.erase(std::unique(extra.begin(), extra.end()), extra.end());

  std::vector<Example> examples(own.examples().begin(), own.examples().end());
  for (std::size_t r : extra) {
    // Imported examples are relabelled so the augmented dataset stays one-vs-rest.
    examples.push_back({other[r].features, task.id.class_id});
  }
  AugmentedTask out{Dataset(own.source(), std::move(examples), std::max(own.dimension(), other.dimension())),
                    task};
  for (std::size_t i = 0; i < extra.size(); ++i) out.task.positives.push_back(own.size() + i);
  return out;
}

FitResult train_ssl(const Dataset& own, const BinaryTask& task, const NeighborMap& neighbors,
                    const Dataset& other, const OptConfig& cfg) {
  const AugmentedTask aug = make_ssl_task(own, task, neighbors, other);
  return train_stl(aug.data, aug.task, cfg);
}

TransferResult train_tl_npa(const Dataset& own, const BinaryTask& task, const Dataset& other,
                            const BinaryTask& pooled, const OptConfig& cfg) {
  require_two_sided(task);
  if (pooled.positives.empty() || pooled.negatives.empty()) throw Error("degenerate pooled task");
  if (own.dimension() != other.dimension()) throw Error("source and target dimensions differ");
  TransferResult out;
  out.sources = train_stl(other, pooled, cfg).theta;
  auto design = std::make_shared<const DesignMatrix>(design_matrix(own, own.dimension()));
  out.target = fit_binary(std::move(design), task_labels(task, own.size()), cfg.lambda1, out.sources,
                          cfg.lambda2, cfg);
  return out;
}

TransferResult train_tl_ina(const Dataset& own, const BinaryTask& task, const Dataset& other,
                            std::span<const BinaryTask> neighbor_tasks, const OptConfig& cfg) {
  require_two_sided(task);
  if (neighbor_tasks.empty()) throw Error("TL-INA needs at least one neighbor task");
  if (own.dimension() != other.dimension()) throw Error("source and target dimensions differ");
  TransferResult out;
  out.sources.resize(own.dimension() + 1, static_cast<Eigen::Index>(neighbor_tasks.size()));
  for (std::size_t l = 0; l < neighbor_tasks.size(); ++l) {
    out.sources.col(static_cast<Eigen::Index>(l)) = train_stl(other, neighbor_tasks[l], cfg).theta;
  }
  auto design = std::make_shared<const DesignMatrix>(design_matrix(own, own.dimension()));
  out.target = fit_binary(std::move(design), task_labels(task, own.size()), cfg.lambda1, out.sources,
                          cfg.lambda2, cfg);
  return out;
}

std::vector<BinaryTask> build_pooled_tasks(const Dataset& other, const NeighborMap& map) {
  if (other.source() == map.source) throw Error("pooled tasks are built over the other source");
  std::vector<BinaryTask> out;
  for (const auto& [c, list] : map.entries) {
    std::vector<ClassId> classes;
    for (const Neighbor& nb : list) {
      if (other.class_size(nb.class_id) == 0) {
        throw Error("neighbor class " + std::to_string(nb.class_id) + " missing from " + to_string(other.source()));
      }
      classes.push_back(nb.class_id);
    }
    out.push_back(pooled_task(other, classes, TaskId{other.source(), c, true}));
  }
  return out;
}

JointResult train_mtl_npa(const Dataset& s1, const Dataset& s2, std::span<const BinaryTask> tasks_s1,
                          std::span<const BinaryTask> tasks_s2, std::span<const BinaryTask> pooled_for_s1,
                          std::span<const BinaryTask> pooled_for_s2, const OptConfig& cfg) {
  require_aligned(s1, s2);
  require_source(tasks_s1, Source::S1, false, "S1 tasks");
  require_source(tasks_s2, Source::S2, false, "S2 tasks");
  require_source(pooled_for_s1, Source::S2, true, "pooled tasks for S1");
  require_source(pooled_for_s2, Source::S1, true, "pooled tasks for S2");

  const auto orig1 = sorted_tasks(tasks_s1);
  const auto orig2 = sorted_tasks(tasks_s2);
  const auto pool1 = sorted_tasks(pooled_for_s1);
  const auto pool2 = sorted_tasks(pooled_for_s2);
  auto require_counterparts = [](const std::vector<BinaryTask>& orig, const std::vector<BinaryTask>& pool) {
    if (orig.size() != pool.size()) throw Error("missing pooled counterpart");
    for (std::size_t i = 0; i < orig.size(); ++i) {
      if (orig[i].id.class_id != pool[i].id.class_id) {
        throw Error("missing pooled counterpart for " + to_string(orig[i].id));
      }
    }
  };
  require_counterparts(orig1, pool1);
  require_counterparts(orig2, pool2);

  // Columns: [S1 originals | pooled for S2] share S1 rows,
  //          [pooled for S1 | S2 originals] share S2 rows.
  const auto t1 = static_cast<Eigen::Index>(orig1.size());
  const auto t2 = static_cast<Eigen::Index>(orig2.size());
  const Eigen::Index dim = s1.dimension() + 1;
  const Eigen::Index cols = 2 * (t1 + t2);

  std::vector<BinaryTask> s1_side = orig1;
  s1_side.insert(s1_side.end(), pool2.begin(), pool2.end());
  std::vector<BinaryTask> s2_side = pool1;
  s2_side.insert(s2_side.end(), orig2.begin(), orig2.end());

  CompositeObjective objective(dim, cols);
  objective.add_block({std::make_shared<const DesignMatrix>(design_matrix(s1, s1.dimension())),
                       label_matrix(s1_side, s1.size()), 0});
  objective.add_block({std::make_shared<const DesignMatrix>(design_matrix(s2, s2.dimension())),
                       label_matrix(s2_side, s2.size()), t1 + t2});
  for (Eigen::Index j = 0; j < t1 + t2; ++j) objective.set_ridge(j, cfg.lambda1);
  for (Eigen::Index j = t1 + t2; j < cols; ++j) objective.set_ridge(j, cfg.lambda2);
  for (Eigen::Index t = 0; t < t1; ++t) objective.add_coupling({t, FreeTarget{t1 + t2 + t}, cfg.lambda3});
  for (Eigen::Index t = 0; t < t2; ++t) objective.add_coupling({t1 + t2 + t1 + t, FreeTarget{t1 + t}, cfg.lambda3});

  std::vector<TaskId> ids;
  for (const auto& t : s1_side) ids.push_back(t.id);
  for (const auto& t : s2_side) ids.push_back(t.id);
  return finish_joint(std::move(ids), gradient_descent(objective, Eigen::MatrixXd::Zero(dim, cols), cfg));
}

JointResult train_mtl_ina(const Dataset& s1, const Dataset& s2, std::span<const BinaryTask> tasks_s1,
                          std::span<const BinaryTask> tasks_s2, const NeighborMap& s1_to_s2,
                          const NeighborMap& s2_to_s1, const OptConfig& cfg) {
  require_aligned(s1, s2);
  require_source(tasks_s1, Source::S1, false, "S1 tasks");
  require_source(tasks_s2, Source::S2, false, "S2 tasks");
  if (s1_to_s2.source != Source::S1 || s2_to_s1.source != Source::S2) {
    throw Error("MTL-INA needs neighbor maps S1->S2 and S2->S1");
  }
  const auto orig1 = sorted_tasks(tasks_s1);
  const auto orig2 = sorted_tasks(tasks_s2);
  const auto t1 = static_cast<Eigen::Index>(orig1.size());
  const auto t2 = static_cast<Eigen::Index>(orig2.size());
  const Eigen::Index dim = s1.dimension() + 1;

  std::map<ClassId, Eigen::Index> col1, col2;
  for (Eigen::Index t = 0; t < t1; ++t) col1[orig1[t].id.class_id] = t;
  for (Eigen::Index t = 0; t < t2; ++t) col2[orig2[t].id.class_id] = t1 + t;

  CompositeObjective objective(dim, t1 + t2);
  objective.add_block({std::make_shared<const DesignMatrix>(design_matrix(s1, s1.dimension())),
                       label_matrix(orig1, s1.size()), 0});
  objective.add_block({std::make_shared<const DesignMatrix>(design_matrix(s2, s2.dimension())),
                       label_matrix(orig2, s2.size()), t1});
  for (Eigen::Index j = 0; j < t1; ++j) objective.set_ridge(j, cfg.lambda1);
  for (Eigen::Index j = t1; j < t1 + t2; ++j) objective.set_ridge(j, cfg.lambda2);

  auto couple = [&](const std::vector<BinaryTask>& tasks, const std::map<ClassId, Eigen::Index>& own,
                    const std::map<ClassId, Eigen::Index>& other, const NeighborMap& map) {
    for (const BinaryTask& t : tasks) {
      for (const Neighbor& nb : map.at(t.id.class_id)) {
        const auto it = other.find(nb.class_id);
        if (it == other.end()) {
          throw Error("neighbor " + std::to_string(nb.class_id) + " of " + to_string(t.id) +
                      " is not a task of the other source");
        }
        objective.add_coupling({own.at(t.id.class_id), FreeTarget{it->second}, cfg.lambda3});
      }
    }
  };
  couple(orig1, col1, col2, s1_to_s2);
  couple(orig2, col2, col1, s2_to_s1);

  std::vector<TaskId> ids;
  for (const auto& t : orig1) ids.push_back(t.id);
  for (const auto& t : orig2) ids.push_back(t.id);
  return finish_joint(std::move(ids), gradient_descent(objective, Eigen::MatrixXd::Zero(dim, t1 + t2), cfg));
}

ClassId predict(const ModelMatrix& model, Source source, const SparseVector& x) {
  const ModelMatrix m = model.restricted_to(source);
  if (m.size() == 0) throw Error("model has no columns for " + to_string(source));
  Eigen::Index best = 0;
  double best_score = 0.0;
  for (Eigen::Index j = 0; j < m.size(); ++j) {
    const auto w = m.weights().col(j);
    if (x.extent() > w.size() - 1) throw Error("feature vector exceeds model dimension");
    const double s = x.dot(w) + w(w.size() - 1);
    if (j == 0 || s > best_score) {
      best = j;
      best_score = s;
    }
  }
  return m.ids()[static_cast<std::size_t>(best)].class_id;
}

std::vector<ClassId> predict(const ModelMatrix& model, Source source, const Dataset& data) {
  const ModelMatrix m = model.restricted_to(source);
  if (m.size() == 0) throw Error("model has no columns for " + to_string(source));
  if (data.dimension() > m.dimension() - 1) throw Error("dataset exceeds model dimension");
  const DesignMatrix x = design_matrix(data, static_cast<FeatureId>(m.dimension() - 1));
  const Eigen::MatrixXd scores = x * m.weights();
  std::vector<ClassId> out(data.size());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = m.ids()[static_cast<std::size_t>(best)].class_id;
  }
  return out;
}

double TrainedModel::seconds_per_class() const {
  if (per_task_train_seconds.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [id, s] : per_task_train_seconds) total += s;
  return total / static_cast<double>(per_task_train_seconds.size());
}

namespace {

ModelMatrix stack_columns(const std::vector<std::pair<TaskId, ModelVector>>& cols, Eigen::Index dim) {
  std::vector<TaskId> ids;
  Eigen::MatrixXd w(dim, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    ids.push_back(cols[j].first);
    w.col(static_cast<Eigen::Index>(j)) = cols[j].second;
  }
  return ModelMatrix(std::move(ids), std::move(w));
}

}  // namespace

TrainedModel train_regime(Regime regime, int k, const Dataset& s1, const Dataset& s2, const OptConfig& cfg,
                          const RegimeOptions& options) {
  require_aligned(s1, s2);
  TrainedModel model;
  model.regime = regime;
  model.k = uses_neighbors(regime) ? k : 0;
  model.dimension = s1.dimension();
  model.config = cfg;
  const Eigen::Index dim = s1.dimension() + 1;

  const std::vector<BinaryTask> tasks1 = build_tasks(s1);
  const std::vector<BinaryTask> tasks2 = build_tasks(s2);

  NeighborMap map12, map21;
  if (uses_neighbors(regime)) {
    const auto c1 = compute_centroids(s1);
    const auto c2 = compute_centroids(s2);
    map12 = knn_related(c1, c2, k, options.normalize_centroids);
    map21 = knn_related(c2, c1, k, options.normalize_centroids);
    model.neighbor_maps = {map12, map21};
  }

  const Dataset* data[2] = {&s1, &s2};
  const std::vector<BinaryTask>* tasks[2] = {&tasks1, &tasks2};
  const NeighborMap* maps[2] = {&map12, &map21};

  std::vector<std::pair<TaskId, ModelVector>> columns;
  switch (regime) {
    case Regime::STL: {
      // Tasks of one source share the design matrix and are solved side by
      // side; each is charged an equal share of the time.
      for (int s = 0; s < 2; ++s) {
        auto shared = std::make_shared<const DesignMatrix>(design_matrix(*data[s], data[s]->dimension()));
        const std::vector<BinaryTask>& ts = *tasks[s];
        const Eigen::MatrixXd labels = label_matrix(ts, data[s]->size());
        CpuStopwatch clock;
        std::vector<FitResult> fits = fit_binary_columns(shared, labels, cfg.lambda1, cfg);
        const double per_task = clock.elapsed() / static_cast<double>(ts.size());
        for (std::size_t i = 0; i < ts.size(); ++i) {
          model.per_task_train_seconds[ts[i].id] = per_task;
          if (options.keep_traces) model.traces[to_string(ts[i].id)] = fits[i].trace;
          columns.emplace_back(ts[i].id, std::move(fits[i].theta));
        }
      }
      break;
    }
    case Regime::SSL: {
      for (int s = 0; s < 2; ++s) {
        for (const BinaryTask& t : *tasks[s]) {
          CpuStopwatch clock;
          FitResult fit = train_ssl(*data[s], t, *maps[s], *data[1 - s], cfg);
          model.per_task_train_seconds[t.id] = clock.elapsed();
          if (options.keep_traces) model.traces[to_string(t.id)] = fit.trace;
          columns.emplace_back(t.id, std::move(fit.theta));
        }
      }
      break;
    }
    case Regime::TL_NPA: {
      for (int s = 0; s < 2; ++s) {
        const auto pooled = build_pooled_tasks(*data[1 - s], *maps[s]);
        for (std::size_t i = 0; i < tasks[s]->size(); ++i) {
          CpuStopwatch clock;
          TransferResult r = train_tl_npa(*data[s], (*tasks[s])[i], *data[1 - s], pooled[i], cfg);
          model.per_task_train_seconds[(*tasks[s])[i].id] = clock.elapsed();
          if (options.keep_traces) model.traces[to_string((*tasks[s])[i].id)] = r.target.trace;
          columns.emplace_back((*tasks[s])[i].id, std::move(r.target.theta));
        }
      }
      break;
    }
    case Regime::TL_INA: {
      // Neighbor models are plain STL fits; each is learned once and its
      // cost is charged to every target that transfers from it.
      std::map<TaskId, std::pair<ModelVector, double>> stl;
      for (int s = 0; s < 2; ++s) {
        auto shared = std::make_shared<const DesignMatrix>(design_matrix(*data[s], data[s]->dimension()));
        const std::vector<BinaryTask>& ts = *tasks[s];
        CpuStopwatch clock;
        std::vector<FitResult> fits = fit_binary_columns(shared, label_matrix(ts, data[s]->size()), cfg.lambda1, cfg);
        const double per_task = clock.elapsed() / static_cast<double>(ts.size());
        for (std::size_t i = 0; i < ts.size(); ++i) stl[ts[i].id] = {std::move(fits[i].theta), per_task};
      }
      for (int s = 0; s < 2; ++s) {
        auto shared = std::make_shared<const DesignMatrix>(design_matrix(*data[s], data[s]->dimension()));
        const Source other_source = data[1 - s]->source();
        for (const BinaryTask& t : *tasks[s]) {
          const auto& list = maps[s]->at(t.id.class_id);
          Eigen::MatrixXd sources(dim, static_cast<Eigen::Index>(list.size()));
          double seconds = 0.0;
          for (std::size_t l = 0; l < list.size(); ++l) {
            const auto& [theta, secs] = stl.at(TaskId{other_source, list[l].class_id, false});
            sources.col(static_cast<Eigen::Index>(l)) = theta;
            seconds += secs;
          }
          CpuStopwatch clock;
          FitResult fit = fit_binary(shared, task_labels(t, data[s]->size()), cfg.lambda1, sources, cfg.lambda2, cfg);
          model.per_task_train_seconds[t.id] = seconds + clock.elapsed();
          if (options.keep_traces) model.traces[to_string(t.id)] = fit.trace;
          columns.emplace_back(t.id, std::move(fit.theta));
        }
      }
      break;
    }
    case Regime::MTL_NPA:
    case Regime::MTL_INA: {
      CpuStopwatch clock;
      JointResult joint;
      if (regime == Regime::MTL_NPA) {
        const auto pool1 = build_pooled_tasks(s2, map12);
        const auto pool2 = build_pooled_tasks(s1, map21);
        joint = train_mtl_npa(s1, s2, tasks1, tasks2, pool1, pool2, cfg);
      } else {
        joint = train_mtl_ina(s1, s2, tasks1, tasks2, map12, map21, cfg);
      }
      const double per_class = clock.elapsed() / static_cast<double>(tasks1.size() + tasks2.size());
      for (const auto* ts : {&tasks1, &tasks2}) {
        for (const BinaryTask& t : *ts) model.per_task_train_seconds[t.id] = per_class;
      }
      if (options.keep_traces) model.traces["joint"] = joint.trace;
      model.theta = std::move(joint.theta);
      return model;
    }
  }
  model.theta = stack_columns(columns, dim);
  return model;
}

}  // namespace mtldoc
