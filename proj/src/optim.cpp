#include "mtldoc/optim.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <string>

namespace mtldoc {

ModelMatrix::ModelMatrix(std::vector<TaskId> ids, Eigen::MatrixXd weights)
    : ids_(std::move(ids)), weights_(std::move(weights)) {
  if (static_cast<Eigen::Index>(ids_.size()) != weights_.cols()) {
    throw Error("model matrix: column count does not match id count");
  }
  if (!weights_.allFinite()) throw Error("model matrix: non-finite weights");
  std::vector<TaskId> sorted = ids_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error("model matrix: duplicate task id");
  }
}

bool ModelMatrix::contains(const TaskId& id) const {
  return std::find(ids_.begin(), ids_.end(), id) != ids_.end();
}

Eigen::Index ModelMatrix::index_of(const TaskId& id) const {
  const auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) throw Error("model has no column " + to_string(id));
  return it - ids_.begin();
}

ModelMatrix ModelMatrix::restricted_to(Source source) const {
  std::vector<std::pair<TaskId, Eigen::Index>> picked;
  for (std::size_t j = 0; j < ids_.size(); ++j) {
    if (ids_[j].source == source && !ids_[j].pooled) picked.emplace_back(ids_[j], j);
  }
  std::sort(picked.begin(), picked.end());
  std::vector<TaskId> ids;
  Eigen::MatrixXd w(weights_.rows(), static_cast<Eigen::Index>(picked.size()));
  for (std::size_t j = 0; j < picked.size(); ++j) {
    ids.push_back(picked[j].first);
    w.col(static_cast<Eigen::Index>(j)) = weights_.col(picked[j].second);
  }
  return ModelMatrix(std::move(ids), std::move(w));
}

ModelMatrix ModelMatrix::joined(const ModelMatrix& other) const {
  if (size() == 0) return other;
  if (other.size() == 0) return *this;
  if (dimension() != other.dimension()) throw Error("model matrix: dimension mismatch in join");
  std::vector<TaskId> ids = ids_;
  ids.insert(ids.end(), other.ids_.begin(), other.ids_.end());
  Eigen::MatrixXd w(dimension(), size() + other.size());
  w << weights_, other.weights_;
  return ModelMatrix(std::move(ids), std::move(w));
}

DesignMatrix design_matrix(const Dataset& data, FeatureId dimension, std::span<const std::size_t> rows) {
  if (dimension < data.dimension()) throw Error("design matrix narrower than the dataset");
  const std::size_t n = rows.empty() ? data.size() : rows.size();
  DesignMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dimension) + 1);
  Eigen::VectorXi nnz(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = rows.empty() ? i : rows[i];
    nnz(static_cast<Eigen::Index>(i)) = static_cast<int>(data[r].features.nnz()) + 1;
  }
  x.reserve(nnz);
  for (std::size_t i = 0; i < n; ++i) {
    const SparseVector& f = data[rows.empty() ? i : rows[i]].features;
    const auto ids = f.indices();
    const auto vals = f.values();
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < ids.size(); ++j) x.insert(row, ids[j]) = vals[j];
    x.insert(row, dimension) = 1.0;
  }
  x.makeCompressed();
  return x;
}

Eigen::VectorXd task_labels(const BinaryTask& task, std::size_t rows) {
  if (task.n() != rows) throw Error("task " + to_string(task.id) + " does not cover its dataset");
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows));
  y.setConstant(0.0);
  for (std::size_t i : task.positives) y(static_cast<Eigen::Index>(i)) = 1.0;
  for (std::size_t i : task.negatives) {
    if (y(static_cast<Eigen::Index>(i)) != 0.0) throw Error("task has overlapping positives and negatives");
    y(static_cast<Eigen::Index>(i)) = -1.0;
  }
  return y;
}

CompositeObjective::CompositeObjective(Eigen::Index dimension, Eigen::Index columns)
    : dimension_(dimension), columns_(columns), ridge_(Eigen::VectorXd::Zero(columns)), frozen_(dimension, 0) {}

void CompositeObjective::add_block(LossBlock block) {
  if (!block.design) throw Error("loss block without design matrix");
  if (block.design->cols() != dimension_) throw Error("loss block dimension mismatch");
  if (block.labels.rows() != block.design->rows()) throw Error("loss block label rows mismatch");
  if (block.first_column < 0 || block.first_column + block.labels.cols() > columns_) {
    throw Error("loss block columns out of range");
  }
  blocks_.push_back(std::move(block));
}

void CompositeObjective::set_ridge(Eigen::Index column, double lambda) {
  if (column < 0 || column >= columns_) throw Error("ridge column out of range");
  if (lambda < 0.0) throw Error("ridge weight must be non-negative");
  ridge_(column) = lambda;
}

Eigen::Index CompositeObjective::add_frozen(const ModelVector& target) {
  if (target.size() != dimension_) throw Error("frozen target dimension mismatch");
  frozen_.conservativeResize(Eigen::NoChange, frozen_.cols() + 1);
  frozen_.col(frozen_.cols() - 1) = target;
  return frozen_.cols() - 1;
}

void CompositeObjective::add_coupling(Coupling coupling) {
  if (coupling.column < 0 || coupling.column >= columns_) {
    throw Error("dangling coupling: column " + std::to_string(coupling.column));
  }
  if (coupling.weight < 0.0) throw Error("coupling weight must be non-negative");
  if (const auto* free = std::get_if<FreeTarget>(&coupling.target)) {
    if (free->column < 0 || free->column >= columns_ || free->column == coupling.column) {
      throw Error("dangling coupling target column " + std::to_string(free->column));
    }
  } else {
    const auto idx = std::get<FrozenTarget>(coupling.target).index;
    if (idx < 0 || idx >= frozen_.cols()) {
      throw Error("dangling coupling: no frozen target " + std::to_string(idx));
    }
  }
  couplings_.push_back(coupling);
}

void CompositeObjective::check_shape(const Eigen::MatrixXd& theta) const {
  if (theta.rows() != dimension_ || theta.cols() != columns_) {
    throw Error("objective evaluated on a " + std::to_string(theta.rows()) + "x" +
                std::to_string(theta.cols()) + " matrix, expected " + std::to_string(dimension_) + "x" +
                std::to_string(columns_));
  }
}

namespace {

template <int Layout>
double block_loss(const LossBlock& b, const Eigen::MatrixXd& theta, Eigen::MatrixXd* grad) {
  using Dense = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Layout>;
  const Eigen::Index m = b.labels.cols();
  const Dense block = theta.middleCols(b.first_column, m);
  Dense scores = *b.design * block;
  double f = 0.0;
  // scores is overwritten in place with d loss / d score when a gradient is wanted.
  auto visit = [&](Eigen::Index i, Eigen::Index j) {
    const double y = b.labels(i, j);
    const double z = -y * scores(i, j);
    const double e = std::exp(-std::abs(z));
    f += std::max(z, 0.0) + std::log1p(e);
    if (grad) scores(i, j) = -y * (z >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e));
  };
  if constexpr (Layout == Eigen::RowMajor) {
    for (Eigen::Index i = 0; i < scores.rows(); ++i)
      for (Eigen::Index j = 0; j < m; ++j) visit(i, j);
  } else {
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < scores.rows(); ++i) visit(i, j);
  }
  if (grad) {
    const Dense g = b.design->transpose() * scores;
    grad->middleCols(b.first_column, m) += g;
  }
  return f;
}

// block_loss restricted to some of the block's columns: pos[i] is the
// column of `theta` holding block column cols[i]; losses go to values(pos[i]).
template <int Layout>
void block_column_loss(const LossBlock& b, const Eigen::MatrixXd& theta, const std::vector<Eigen::Index>& pos,
                       const std::vector<Eigen::Index>& cols, Eigen::VectorXd& values, Eigen::MatrixXd* grad) {
  using Dense = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Layout>;
  const auto q = static_cast<Eigen::Index>(pos.size());
  Dense block(theta.rows(), q);
  for (Eigen::Index i = 0; i < q; ++i) block.col(i) = theta.col(pos[i]);
  Dense scores = *b.design * block;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(q);
  auto visit = [&](Eigen::Index r, Eigen::Index i) {
    const double y = b.labels(r, cols[i] - b.first_column);
    const double z = -y * scores(r, i);
    const double e = std::exp(-std::abs(z));
    f(i) += std::max(z, 0.0) + std::log1p(e);
    if (grad) scores(r, i) = -y * (z >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e));
  };
  if constexpr (Layout == Eigen::RowMajor) {
    for (Eigen::Index r = 0; r < scores.rows(); ++r)
      for (Eigen::Index i = 0; i < q; ++i) visit(r, i);
  } else {
    for (Eigen::Index i = 0; i < q; ++i)
      for (Eigen::Index r = 0; r < scores.rows(); ++r) visit(r, i);
  }
  for (Eigen::Index i = 0; i < q; ++i) values(pos[i]) += f(i);
  if (grad) {
    const Dense g = b.design->transpose() * scores;
    for (Eigen::Index i = 0; i < q; ++i) grad->col(pos[i]) += g.col(i);
  }
}

}  // namespace

bool CompositeObjective::separable() const {
  return std::none_of(couplings_.begin(), couplings_.end(),
                      [](const Coupling& c) { return std::holds_alternative<FreeTarget>(c.target); });
}

void CompositeObjective::column_terms(const Eigen::MatrixXd& theta, std::span<const Eigen::Index> cols,
                                      Eigen::VectorXd& values, Eigen::MatrixXd* grad) const {
  if (!separable()) throw Error("column terms need a separable objective");
  const auto q = static_cast<Eigen::Index>(cols.size());
  if (theta.rows() != dimension_ || theta.cols() != q) throw Error("column terms: theta shape mismatch");
  for (Eigen::Index c : cols) {
    if (c < 0 || c >= columns_) throw Error("column terms: column out of range");
  }
  values.setZero(q);
  if (grad) grad->setZero(dimension_, q);

  for (const LossBlock& b : blocks_) {
    std::vector<Eigen::Index> pos, in_block;
    for (Eigen::Index i = 0; i < q; ++i) {
      if (cols[i] >= b.first_column && cols[i] < b.first_column + b.labels.cols()) {
        pos.push_back(i);
        in_block.push_back(cols[i]);
      }
    }
    if (pos.empty()) continue;
    if (pos.size() >= 8) {
      block_column_loss<Eigen::RowMajor>(b, theta, pos, in_block, values, grad);
    } else {
      block_column_loss<Eigen::ColMajor>(b, theta, pos, in_block, values, grad);
    }
  }

  Eigen::VectorXd diff(dimension_);
  for (Eigen::Index i = 0; i < q; ++i) {
    const Eigen::Index t = cols[i];
    if (ridge_(t) != 0.0) {
      values(i) += ridge_(t) * theta.col(i).squaredNorm();
      if (grad) grad->col(i) += 2.0 * ridge_(t) * theta.col(i);
    }
    for (const Coupling& c : couplings_) {
      if (c.column != t) continue;
      diff = theta.col(i) - frozen_.col(std::get<FrozenTarget>(c.target).index);
      values(i) += c.weight * diff.squaredNorm();
      if (grad) grad->col(i) += 2.0 * c.weight * diff;
    }
  }
}

double CompositeObjective::value(const Eigen::MatrixXd& theta) const { return (*this)(theta, nullptr); }

double CompositeObjective::operator()(const Eigen::MatrixXd& theta, Eigen::MatrixXd* grad) const {
  check_shape(theta);
  if (grad) grad->setZero(dimension_, columns_);

  double f = 0.0;
  for (const LossBlock& b : blocks_) {
    // Wide blocks stream faster through the sparse products in row-major form.
    if (b.labels.cols() >= 8) {
      f += block_loss<Eigen::RowMajor>(b, theta, grad);
    } else {
      f += block_loss<Eigen::ColMajor>(b, theta, grad);
    }
  }

  for (Eigen::Index t = 0; t < columns_; ++t) {
    if (ridge_(t) == 0.0) continue;
    f += ridge_(t) * theta.col(t).squaredNorm();
    if (grad) grad->col(t) += 2.0 * ridge_(t) * theta.col(t);
  }

  Eigen::VectorXd diff(dimension_);
  for (const Coupling& c : couplings_) {
    if (const auto* free = std::get_if<FreeTarget>(&c.target)) {
      diff = theta.col(c.column) - theta.col(free->column);
      if (grad) grad->col(free->column) -= 2.0 * c.weight * diff;
    } else {
      diff = theta.col(c.column) - frozen_.col(std::get<FrozenTarget>(c.target).index);
    }
    f += c.weight * diff.squaredNorm();
    if (grad) grad->col(c.column) += 2.0 * c.weight * diff;
  }
  return f;
}

void write_trace_csv(std::ostream& out, std::span<const TracePoint> trace) {
  out << "iter,objective,step_size\n";
  char buf[96];
  for (const TracePoint& p : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", p.iter, p.objective, p.step_size);
    out << buf;
  }
}

}  // namespace mtldoc
