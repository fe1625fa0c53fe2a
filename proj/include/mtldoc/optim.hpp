#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "mtldoc/corpus.hpp"

namespace mtldoc {

/// Bias-augmented weights: entries [0, d) match feature ids, entry d is the bias.
using ModelVector = Eigen::VectorXd;

/// Examples as rows, features as columns, with a trailing all-ones bias column.
using DesignMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Task weight vectors stacked as columns, each labelled by its TaskId.
class ModelMatrix {
 public:
  ModelMatrix() = default;
  ModelMatrix(std::vector<TaskId> ids, Eigen::MatrixXd weights);

  std::span<const TaskId> ids() const { return ids_; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  Eigen::Index dimension() const { return weights_.rows(); }
  Eigen::Index size() const { return weights_.cols(); }

  bool contains(const TaskId& id) const;
  Eigen::Index index_of(const TaskId& id) const;
  auto column(const TaskId& id) const { return weights_.col(index_of(id)); }

  /// Original (non-pooled) columns of one source, ordered by class id.
  ModelMatrix restricted_to(Source source) const;
  /// Column-wise concatenation; ids must not collide.
  ModelMatrix joined(const ModelMatrix& other) const;

 private:
  std::vector<TaskId> ids_;
  Eigen::MatrixXd weights_;
};

struct OptConfig {
  double step_size = 1.0;  // first trial step of the line search
  int max_iters = 1000;
  double tol = 1e-6;       // relative objective decrease that ends descent
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  std::uint64_t seed = 0;
};

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

/// 1 / (1 + exp(-z)) without overflow.
inline double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace detail {
template <typename Derived, typename Scalar>
Scalar augmented_margin(const Eigen::MatrixBase<Derived>& theta, const BasicSparseVector<Scalar>& x) {
  if (x.extent() > theta.size() - 1) throw Error("feature vector exceeds model dimension");
  if (!theta.allFinite()) throw Error("non-finite model weights");
  return x.dot(theta) + theta(theta.size() - 1);
}
}  // namespace detail

/// log(1 + exp(-y <theta, [x;1]>)).
template <typename Derived, typename Scalar>
Scalar logistic_loss(const Eigen::MatrixBase<Derived>& theta, const BasicSparseVector<Scalar>& x,
                     Scalar y) {
  return softplus(-y * detail::augmented_margin(theta, x));
}

/// -y * sigma(-y <theta,[x;1]>) * [x;1], as a dense vector shaped like theta.
template <typename Derived, typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logistic_gradient(const Eigen::MatrixBase<Derived>& theta,
                                                           const BasicSparseVector<Scalar>& x,
                                                           Scalar y) {
  const Scalar coef = -y * logistic(-y * detail::augmented_margin(theta, x));
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> g = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(theta.size());
  const auto ids = x.indices();
  const auto vals = x.values();
  for (std::size_t i = 0; i < ids.size(); ++i) g(ids[i]) = coef * vals[i];
  g(theta.size() - 1) = coef;
  return g;
}

/// Rows of `data` listed in `rows` (all rows when empty), bias column appended.
/// The matrix has `dimension + 1` columns.
DesignMatrix design_matrix(const Dataset& data, FeatureId dimension,
                           std::span<const std::size_t> rows = {});

/// ±1 label vector of `task` over the rows of its dataset.
Eigen::VectorXd task_labels(const BinaryTask& task, std::size_t rows);

// Loss term over a contiguous run of model columns that share one design
// matrix: columns [first_column, first_column + labels.cols()) with labels
// in {-1, +1}, one row per design row.
struct LossBlock {
  std::shared_ptr<const DesignMatrix> design;
  Eigen::MatrixXd labels;
  Eigen::Index first_column = 0;
};

struct FreeTarget {
  Eigen::Index column;
};
struct FrozenTarget {
  Eigen::Index index;  // column of CompositeObjective::frozen
};

// weight * ||theta[:, column] - target||^2
struct Coupling {
  Eigen::Index column = 0;
  std::variant<FreeTarget, FrozenTarget> target;
  double weight = 0.0;
};

/// sum_blocks sum_i log(1 + exp(-y_i <theta_t, x_i>))
///   + sum_t ridge_t ||theta_t||^2
///   + sum_couplings weight ||theta_t - target||^2.
/// Every training regime in the library is an instance of this objective.
class CompositeObjective {
 public:
  CompositeObjective(Eigen::Index dimension, Eigen::Index columns);

  void add_block(LossBlock block);
  void set_ridge(Eigen::Index column, double lambda);
  /// Frozen targets are copied; returns their index for FrozenTarget.
  Eigen::Index add_frozen(const ModelVector& target);
  void add_coupling(Coupling coupling);

  Eigen::Index dimension() const { return dimension_; }
  Eigen::Index columns() const { return columns_; }
  const Eigen::MatrixXd& frozen() const { return frozen_; }

  double value(const Eigen::MatrixXd& theta) const;
  /// Objective value; writes the gradient when `grad` is non-null.
  double operator()(const Eigen::MatrixXd& theta, Eigen::MatrixXd* grad) const;

  /// True when no coupling links two columns, so the objective is a sum of
  /// per-column terms.
  bool separable() const;
  /// Per-column terms of a separable objective for the listed columns only.
  /// `theta` holds those columns in order; values(i) and grad->col(i) belong
  /// to cols[i].
  void column_terms(const Eigen::MatrixXd& theta, std::span<const Eigen::Index> cols, Eigen::VectorXd& values,
                    Eigen::MatrixXd* grad) const;

 private:
  void check_shape(const Eigen::MatrixXd& theta) const;

  Eigen::Index dimension_;
  Eigen::Index columns_;
  std::vector<LossBlock> blocks_;
  Eigen::VectorXd ridge_;
  std::vector<Coupling> couplings_;
  Eigen::MatrixXd frozen_;
};

struct TracePoint {
  int iter = 0;
  double objective = 0.0;
  double step_size = 0.0;
};

struct DescentResult {
  Eigen::MatrixXd theta;
  double objective = 0.0;
  std::vector<TracePoint> trace;
  int iterations = 0;
  bool converged = false;
};

void write_trace_csv(std::ostream& out, std::span<const TracePoint> trace);

/// Full-batch gradient descent with Armijo backtracking. Each iteration
/// first tries the previous accepted step, doubled (capped at cfg.step_size)
/// when that step was accepted without halving, and halves it
/// until f(theta - a g) <= f(theta) - 1e-4 a |g|^2. Stops when the relative
/// decrease falls below cfg.tol, when the gradient vanishes, when the
/// predicted decrease drops below floating-point resolution of f, or after
/// cfg.max_iters iterations. `objective(theta, grad*)` returns f and fills
/// the gradient when grad is non-null.
template <typename Objective>
DescentResult gradient_descent(const Objective& objective, Eigen::MatrixXd init, const OptConfig& cfg) {
  if (!(cfg.step_size > 0.0)) throw Error("step size must be positive");
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxHalvings = 50;
  const double eps = std::numeric_limits<double>::epsilon();

  DescentResult r;
  r.theta = std::move(init);
  Eigen::MatrixXd grad(r.theta.rows(), r.theta.cols());
  Eigen::MatrixXd trial(r.theta.rows(), r.theta.cols());
  Eigen::MatrixXd trial_grad(r.theta.rows(), r.theta.cols());
  double f = objective(r.theta, &grad);
  if (!std::isfinite(f)) throw Error("objective is not finite at the initial point");
  r.trace.push_back({0, f, 0.0});

  double step = cfg.step_size;
  bool grow = false;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const double g2 = grad.squaredNorm();
    if (g2 == 0.0) {
      r.converged = true;
      break;
    }
    double a = std::min(cfg.step_size, grow ? 2.0 * step : step);
    double f_new = 0.0;
    bool accepted = false;
    bool unresolvable = false;
    int h = 0;
    for (; h <= kMaxHalvings; ++h, a *= 0.5) {
      if (kArmijo * a * g2 < 4.0 * eps * std::abs(f)) {
        unresolvable = true;
        break;
      }
      trial = r.theta - a * grad;
      f_new = objective(trial, &trial_grad);
      if (std::isfinite(f_new) && f_new <= f - kArmijo * a * g2) {
        accepted = true;
        break;
      }
    }
    if (unresolvable) {
      r.converged = true;
      break;
    }
    if (!accepted) throw Error("line search failed after 50 consecutive halvings");

    step = a;
    grow = h == 0;
    r.theta.swap(trial);
    grad.swap(trial_grad);
    const double f_prev = f;
    f = f_new;
    r.iterations = it;
    r.trace.push_back({it, f, a});
    if ((f_prev - f) <= cfg.tol * std::max(std::abs(f_prev), eps)) {
      r.converged = true;
      break;
    }
  }
  r.objective = f;
  return r;
}

/// gradient_descent run independently on every column of a separable
/// problem: each column has its own step, line search and stopping test, so
/// column j follows the same iterates as a single-column run on f_j. Columns
/// still in play are evaluated together, which shares the sparse products.
/// `objective(theta, cols, values, grad*)` evaluates the listed columns.
template <typename ColumnObjective>
std::vector<DescentResult> gradient_descent_columns(const ColumnObjective& objective, Eigen::MatrixXd init,
                                                    const OptConfig& cfg) {
  if (!(cfg.step_size > 0.0)) throw Error("step size must be positive");
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxHalvings = 50;
  const double eps = std::numeric_limits<double>::epsilon();
  const Eigen::Index d = init.rows(), m = init.cols();

  std::vector<DescentResult> out(static_cast<std::size_t>(m));
  Eigen::MatrixXd theta = std::move(init);
  Eigen::MatrixXd grad(d, m), trial(d, m), trial_grad(d, m);
  Eigen::VectorXd f(m), f_new(m), step = Eigen::VectorXd::Constant(m, cfg.step_size), a(m), g2(m);
  std::vector<Eigen::Index> active(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) active[static_cast<std::size_t>(j)] = j;
  objective(theta, active, f, &grad);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!std::isfinite(f(j))) throw Error("objective is not finite at the initial point");
    out[static_cast<std::size_t>(j)].trace.push_back({0, f(j), 0.0});
  }
  std::vector<char> grow(static_cast<std::size_t>(m), 0);
  std::vector<int> halvings(static_cast<std::size_t>(m), 0);

  Eigen::MatrixXd sub, sub_grad;
  Eigen::VectorXd sub_f;
  for (int it = 1; it <= cfg.max_iters && !active.empty(); ++it) {
    std::vector<Eigen::Index> pending, accepted;
    for (Eigen::Index j : active) {
      g2(j) = grad.col(j).squaredNorm();
      if (g2(j) == 0.0) {
        out[static_cast<std::size_t>(j)].converged = true;
        continue;
      }
      a(j) = std::min(cfg.step_size, grow[static_cast<std::size_t>(j)] ? 2.0 * step(j) : step(j));
      halvings[static_cast<std::size_t>(j)] = 0;
      pending.push_back(j);
    }
    while (!pending.empty()) {
      std::vector<Eigen::Index> eval;
      for (Eigen::Index j : pending) {
        if (kArmijo * a(j) * g2(j) < 4.0 * eps * std::abs(f(j))) {
          out[static_cast<std::size_t>(j)].converged = true;
        } else if (halvings[static_cast<std::size_t>(j)] > kMaxHalvings) {
          throw Error("line search failed after 50 consecutive halvings");
        } else {
          eval.push_back(j);
        }
      }
      pending.clear();
      if (eval.empty()) break;
      const auto q = static_cast<Eigen::Index>(eval.size());
      sub.resize(d, q);
      for (Eigen::Index i = 0; i < q; ++i) sub.col(i) = theta.col(eval[i]) - a(eval[i]) * grad.col(eval[i]);
      objective(sub, eval, sub_f, &sub_grad);
      for (Eigen::Index i = 0; i < q; ++i) {
        const Eigen::Index j = eval[static_cast<std::size_t>(i)];
        if (std::isfinite(sub_f(i)) && sub_f(i) <= f(j) - kArmijo * a(j) * g2(j)) {
          trial.col(j) = sub.col(i);
          trial_grad.col(j) = sub_grad.col(i);
          f_new(j) = sub_f(i);
          accepted.push_back(j);
        } else {
          a(j) *= 0.5;
          ++halvings[static_cast<std::size_t>(j)];
          pending.push_back(j);
        }
      }
    }
    active.clear();
    std::sort(accepted.begin(), accepted.end());
    for (Eigen::Index j : accepted) {
      DescentResult& r = out[static_cast<std::size_t>(j)];
      step(j) = a(j);
      grow[static_cast<std::size_t>(j)] = halvings[static_cast<std::size_t>(j)] == 0;
      theta.col(j) = trial.col(j);
      grad.col(j) = trial_grad.col(j);
      const double f_prev = f(j);
      f(j) = f_new(j);
      r.iterations = it;
      r.trace.push_back({it, f(j), a(j)});
      if ((f_prev - f(j)) <= cfg.tol * std::max(std::abs(f_prev), eps)) {
        r.converged = true;
      } else {
        active.push_back(j);
      }
    }
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    out[static_cast<std::size_t>(j)].theta = theta.col(j);
    out[static_cast<std::size_t>(j)].objective = f(j);
  }
  return out;
}

}  // namespace mtldoc
