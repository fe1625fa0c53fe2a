#include <sstream>

#include "doctest.h"
#include "mtldoc/optim.hpp"
#include "oracles.hpp"
#include "toy.hpp"

using namespace mtldoc;

namespace {

constexpr double kLogTwo = 0.6931471805599453094;
constexpr double kLossAtMarginOne = 0.3132616875182228340;  // log(1 + e^-1), 40-digit reference

Eigen::VectorXd random_theta(Rng& rng, Eigen::Index n, double scale) {
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) t(i) = scale * (2.0 * uniform01(rng) - 1.0);
  return t;
}

SparseVector random_x(Rng& rng, FeatureId dim) {
  std::vector<std::pair<FeatureId, double>> e;
  for (FeatureId f = 0; f < dim; ++f) {
    if (uniform01(rng) < 0.5) e.emplace_back(f, 2.0 * uniform01(rng) - 0.5);
  }
  return SparseVector::from_entries(std::move(e));
}

oracle::Dense augmented(const SparseVector& x, Eigen::Index n) {
  oracle::Dense d(static_cast<std::size_t>(n), 0.0);
  for (std::size_t j = 0; j < x.nnz(); ++j) d[static_cast<std::size_t>(x.indices()[j])] = x.values()[j];
  d.back() = 1.0;
  return d;
}

oracle::Dense col(const Eigen::MatrixXd& m, Eigen::Index c) {
  return oracle::Dense(m.col(c).data(), m.col(c).data() + m.rows());
}

// Two tasks over a 3-example design, coupled once; random weights.
struct SmallProblem {
  Dataset data = toy::dataset(Source::S1, {{0, toy::sv({{0, 1.5}, {2, 0.5}})},
                                           {1, toy::sv({{1, 2.0}})},
                                           {0, toy::sv({{0, 0.25}, {1, 1.0}, {2, 3.0}})}});
  std::shared_ptr<const DesignMatrix> design = std::make_shared<const DesignMatrix>(design_matrix(data, 3));
  Eigen::MatrixXd labels{{1, -1}, {-1, 1}, {1, -1}};
  CompositeObjective objective{4, 2};

  SmallProblem(double r0, double r1, double w) {
    objective.add_block({design, labels, 0});
    objective.set_ridge(0, r0);
    objective.set_ridge(1, r1);
    objective.add_coupling({0, FreeTarget{1}, w});
  }

  std::vector<std::vector<oracle::Row>> rows() const {
    std::vector<std::vector<oracle::Row>> out(2);
    for (int t = 0; t < 2; ++t)
      for (std::size_t i = 0; i < 3; ++i)
        out[static_cast<std::size_t>(t)].push_back({augmented(data[i].features, 4), labels(static_cast<Eigen::Index>(i), t)});
    return out;
  }
};

}  // namespace

TEST_CASE("logistic loss: named values") {
  const SparseVector x = toy::sv({{0, 1.0}, {3, -2.0}});
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(5);
  CHECK(logistic_loss(theta, x, 1.0) == doctest::Approx(kLogTwo).epsilon(1e-15));
  CHECK(logistic_loss(theta, x, -1.0) == doctest::Approx(kLogTwo).epsilon(1e-15));

  theta(4) = 1.0;  // margin 1 through the bias alone
  CHECK(std::abs(logistic_loss(theta, SparseVector{}, 1.0) - kLossAtMarginOne) < 1e-15);

  theta(4) = 1e6;
  const double saturated = logistic_loss(theta, SparseVector{}, 1.0);
  CHECK(std::isfinite(saturated));
  CHECK(saturated < 1e-12);
  CHECK(logistic_loss(theta, SparseVector{}, -1.0) == doctest::Approx(1e6));
}

TEST_CASE("logistic loss: rejects bad inputs") {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(logistic_loss(theta, toy::sv({{5, 1.0}}), 1.0), Error);
  theta(0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(logistic_loss(theta, toy::sv({{0, 1.0}}), 1.0), Error);
}

TEST_CASE("logistic gradient: zero weights and saturation") {
  const SparseVector x = toy::sv({{1, 2.0}, {2, -1.0}});
  const Eigen::VectorXd theta = Eigen::VectorXd::Zero(4);
  for (double y : {1.0, -1.0}) {
    const Eigen::VectorXd g = logistic_gradient(theta, x, y);
    const Eigen::Vector4d want = -0.5 * y * Eigen::Vector4d(0.0, 2.0, -1.0, 1.0);
    CHECK((g - want).cwiseAbs().maxCoeff() == 0.0);
  }
  Eigen::VectorXd far = Eigen::VectorXd::Zero(4);
  far(3) = 1e6;
  CHECK(logistic_gradient(far, x, 1.0).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("logistic gradient: central differences on random instances") {
  Rng rng(2024);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const SparseVector x = random_x(rng, 6);
    const Eigen::VectorXd theta = random_theta(rng, 7, 1.0);
    const double y = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    const Eigen::VectorXd g = logistic_gradient(theta, x, y);
    Eigen::VectorXd fd(7);
    for (Eigen::Index j = 0; j < 7; ++j) {
      Eigen::VectorXd p = theta, m = theta;
      p(j) += h;
      m(j) -= h;
      fd(j) = (logistic_loss(p, x, y) - logistic_loss(m, x, y)) / (2 * h);
    }
    CHECK((g - fd).norm() / std::max(fd.norm(), 1e-12) < 1e-5);
  }
}

TEST_CASE("composite objective: single task without couplings") {
  SmallProblem p(0.3, 0.0, 0.0);
  CompositeObjective one(4, 1);
  one.add_block({p.design, p.labels.col(0), 0});
  one.set_ridge(0, 0.3);
  const Eigen::Vector4d theta(0.2, -0.4, 0.1, 0.05);
  double want = 0.3 * theta.squaredNorm();
  for (std::size_t i = 0; i < 3; ++i) want += logistic_loss(theta, p.data[i].features, p.labels(static_cast<Eigen::Index>(i), 0));
  CHECK(std::abs(one.value(theta) - want) < 1e-14);
}

TEST_CASE("composite objective: zero coupling at the target") {
  SmallProblem p(0.0, 0.0, 5.0);
  Eigen::MatrixXd theta(4, 2);
  theta.col(0) << 0.1, 0.2, 0.3, 0.4;
  theta.col(1) = theta.col(0);
  SmallProblem q(0.0, 0.0, 0.0);
  CHECK(p.objective.value(theta) == q.objective.value(theta));
}

TEST_CASE("composite objective: term-by-term summation oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const double r0 = uniform01(rng), r1 = uniform01(rng), w = 2 * uniform01(rng);
    SmallProblem p(r0, r1, w);
    Eigen::MatrixXd theta(4, 2);
    theta.col(0) = random_theta(rng, 4, 2.0);
    theta.col(1) = random_theta(rng, 4, 2.0);
    const long double want = oracle::objective({col(theta, 0), col(theta, 1)}, p.rows(), {r0, r1}, {{0, 1, w}});
    CHECK(std::abs(p.objective.value(theta) - static_cast<double>(want)) < 1e-12);
  }
}

TEST_CASE("composite objective: frozen targets enter the oracle") {
  SmallProblem p(0.1, 0.2, 0.0);
  Eigen::Vector4d target(1.0, -1.0, 0.5, 0.0);
  const Eigen::Index f = p.objective.add_frozen(target);
  p.objective.add_coupling({1, FrozenTarget{f}, 0.7});
  Eigen::MatrixXd theta(4, 2);
  theta << 0.1, -0.2, 0.3, 0.0, -0.5, 0.2, 0.05, 0.4;
  const long double want = oracle::objective({col(theta, 0), col(theta, 1)}, p.rows(), {0.1, 0.2},
                                             {{0, 1, 0.0}, {1, -1, 0.7}}, {oracle::Dense(target.data(), target.data() + 4)});
  CHECK(std::abs(p.objective.value(theta) - static_cast<double>(want)) < 1e-12);
}

TEST_CASE("composite objective: analytic gradient matches central differences") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    SmallProblem p(uniform01(rng), uniform01(rng), uniform01(rng));
    const Eigen::Index f = p.objective.add_frozen(random_theta(rng, 4, 1.0));
    p.objective.add_coupling({1, FrozenTarget{f}, uniform01(rng)});
    Eigen::MatrixXd theta(4, 2);
    theta.col(0) = random_theta(rng, 4, 1.5);
    theta.col(1) = random_theta(rng, 4, 1.5);
    Eigen::MatrixXd g;
    p.objective(theta, &g);
    Eigen::MatrixXd fd(4, 2);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::MatrixXd a = theta, b = theta;
      a.data()[i] += 1e-5;
      b.data()[i] -= 1e-5;
      fd.data()[i] = (p.objective.value(a) - p.objective.value(b)) / 2e-5;
    }
    CHECK((g - fd).norm() / fd.norm() < 1e-6);
  }
}

TEST_CASE("composite objective: convexity probe") {
  Rng rng(13);
  SmallProblem p(0.05, 0.0, 0.3);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd a(4, 2), b(4, 2);
    for (int c = 0; c < 2; ++c) {
      a.col(c) = random_theta(rng, 4, 3.0);
      b.col(c) = random_theta(rng, 4, 3.0);
    }
    CHECK(p.objective.value(0.5 * (a + b)) <= 0.5 * (p.objective.value(a) + p.objective.value(b)) + 1e-12);
  }
}

TEST_CASE("composite objective: swapping free coupling ends keeps the penalty") {
  CompositeObjective a(3, 2), b(3, 2);
  a.add_coupling({0, FreeTarget{1}, 1.5});
  b.add_coupling({1, FreeTarget{0}, 1.5});
  Eigen::MatrixXd theta(3, 2);
  theta << 1, 2, -3, 0.5, 0.25, 4;
  CHECK(a.value(theta) == b.value(theta));
}

TEST_CASE("composite objective: dangling references and bad shapes") {
  CompositeObjective o(3, 2);
  CHECK_THROWS_AS(o.add_coupling({2, FreeTarget{0}, 1.0}), Error);
  CHECK_THROWS_AS(o.add_coupling({0, FreeTarget{5}, 1.0}), Error);
  CHECK_THROWS_AS(o.add_coupling({0, FrozenTarget{0}, 1.0}), Error);
  CHECK_THROWS_AS(o.add_coupling({0, FreeTarget{1}, -1.0}), Error);
  CHECK_THROWS_AS(o.value(Eigen::MatrixXd::Zero(3, 3)), Error);
}

TEST_CASE("gradient descent: 1-D quadratic") {
  auto quad = [](const Eigen::MatrixXd& t, Eigen::MatrixXd* g) {
    if (g) *g = 2.0 * (t.array() - 3.0).matrix();
    return (t.array() - 3.0).square().sum();
  };
  OptConfig cfg;
  cfg.tol = 1e-12;
  const DescentResult r = gradient_descent(quad, Eigen::MatrixXd::Zero(1, 1), cfg);
  CHECK(r.theta(0, 0) == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(r.converged);
}

TEST_CASE("gradient descent: start at the optimum") {
  auto quad = [](const Eigen::MatrixXd& t, Eigen::MatrixXd* g) {
    if (g) *g = 2.0 * (t.array() - 3.0).matrix();
    return (t.array() - 3.0).square().sum();
  };
  const DescentResult r = gradient_descent(quad, Eigen::MatrixXd::Constant(1, 1, 3.0), OptConfig{});
  CHECK(r.iterations <= 1);
  CHECK(r.trace.size() <= 2);
}

TEST_CASE("gradient descent: errors") {
  auto bad = [](const Eigen::MatrixXd&, Eigen::MatrixXd* g) {
    if (g) g->setZero(1, 1);
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(gradient_descent(bad, Eigen::MatrixXd::Zero(1, 1), OptConfig{}), Error);
  // A gradient that points uphill can never satisfy the Armijo condition.
  // f is zero at the start so the resolution guard cannot end the search early.
  auto uphill = [](const Eigen::MatrixXd& t, Eigen::MatrixXd* g) {
    if (g) *g = -2.0 * t;
    return t.squaredNorm() - 1.0;
  };
  CHECK_THROWS_AS(gradient_descent(uphill, Eigen::MatrixXd::Constant(1, 1, 1.0), OptConfig{}), Error);
  OptConfig zero_step;
  zero_step.step_size = 0.0;
  auto quad = [](const Eigen::MatrixXd& t, Eigen::MatrixXd* g) {
    if (g) *g = 2.0 * t;
    return t.squaredNorm();
  };
  CHECK_THROWS_AS(gradient_descent(quad, Eigen::MatrixXd::Ones(1, 1), zero_step), Error);
}

TEST_CASE("gradient descent: monotone trace on logistic problems") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset d = toy::blobs(Source::S1, {0, 1, 2}, 12, 9, 3, seed);
    auto design = std::make_shared<const DesignMatrix>(design_matrix(d, d.dimension()));
    CompositeObjective o(d.dimension() + 1, 3);
    const auto tasks = build_tasks(d);
    Eigen::MatrixXd y(static_cast<Eigen::Index>(d.size()), 3);
    for (int t = 0; t < 3; ++t) y.col(t) = task_labels(tasks[static_cast<std::size_t>(t)], d.size());
    o.add_block({design, y, 0});
    for (int t = 0; t < 3; ++t) o.set_ridge(t, 0.01 * (seed + 1));
    o.add_coupling({0, FreeTarget{2}, 0.5});
    const DescentResult r = gradient_descent(o, Eigen::MatrixXd::Zero(d.dimension() + 1, 3), OptConfig{});
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].objective <= r.trace[i - 1].objective);
    CHECK(r.objective == r.trace.back().objective);
  }
}

TEST_CASE("column terms: per-column pieces of a separable objective") {
  Rng rng(4);
  const Dataset d = toy::blobs(Source::S1, {0, 1, 2, 3}, 6, 12, 4, 8);
  auto design = std::make_shared<const DesignMatrix>(design_matrix(d, d.dimension()));
  const auto tasks = build_tasks(d);
  const Eigen::Index n = d.dimension() + 1;
  Eigen::MatrixXd y(static_cast<Eigen::Index>(d.size()), 4);
  for (int t = 0; t < 4; ++t) y.col(t) = task_labels(tasks[static_cast<std::size_t>(t)], d.size());
  CompositeObjective o(n, 5);
  o.add_block({design, y.leftCols(2), 0});
  o.add_block({design, y.rightCols(2), 2});
  for (int t = 0; t < 5; ++t) o.set_ridge(t, 0.1 * t);
  o.add_coupling({1, FrozenTarget{o.add_frozen(random_theta(rng, n, 1.0))}, 0.7});
  REQUIRE(o.separable());
  Eigen::MatrixXd theta(n, 5);
  for (int t = 0; t < 5; ++t) theta.col(t) = random_theta(rng, n, 0.5);
  Eigen::MatrixXd full_grad;
  const double total = o(theta, &full_grad);

  const std::vector<Eigen::Index> cols{3, 0, 4, 1, 2};
  Eigen::MatrixXd sub(n, 5);
  for (int i = 0; i < 5; ++i) sub.col(i) = theta.col(cols[static_cast<std::size_t>(i)]);
  Eigen::VectorXd values;
  Eigen::MatrixXd grad;
  o.column_terms(sub, cols, values, &grad);
  CHECK(std::abs(values.sum() - total) < 1e-12 * std::abs(total));
  for (int i = 0; i < 5; ++i) {
    CHECK((grad.col(i) - full_grad.col(cols[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() < 1e-12);
  }
  // One column alone: with the others at zero the full objective adds their
  // loss at zero, n log 2 for each of the three other loss columns.
  const std::vector<Eigen::Index> one{1};
  o.column_terms(sub.col(3), one, values, nullptr);
  Eigen::MatrixXd only = Eigen::MatrixXd::Zero(n, 5);
  only.col(1) = theta.col(1);
  const double others_at_zero = 3.0 * static_cast<double>(d.size()) * kLogTwo;
  CHECK(std::abs(values(0) - (o.value(only) - others_at_zero)) < 1e-10);

  CompositeObjective coupled(n, 2);
  coupled.add_block({design, y.leftCols(2), 0});
  coupled.add_coupling({0, FreeTarget{1}, 1.0});
  CHECK_FALSE(coupled.separable());
  CHECK_THROWS_AS(coupled.column_terms(sub.leftCols(1), one, values, nullptr), Error);
}

TEST_CASE("column-wise descent follows each column's own run") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset d = toy::blobs(Source::S1, {0, 1, 2, 3, 4, 5, 6, 7, 8}, 8, 18, 9, seed, 0.5);
    auto design = std::make_shared<const DesignMatrix>(design_matrix(d, d.dimension()));
    const auto tasks = build_tasks(d);
    const Eigen::Index n = d.dimension() + 1, m = static_cast<Eigen::Index>(tasks.size());
    Eigen::MatrixXd y(static_cast<Eigen::Index>(d.size()), m);
    for (Eigen::Index t = 0; t < m; ++t) y.col(t) = task_labels(tasks[static_cast<std::size_t>(t)], d.size());
    const double ridge = 0.01 * static_cast<double>(seed + 1);
    CompositeObjective all(n, m);
    all.add_block({design, y, 0});
    for (Eigen::Index t = 0; t < m; ++t) all.set_ridge(t, ridge);
    auto eval = [&](const Eigen::MatrixXd& th, std::span<const Eigen::Index> cols, Eigen::VectorXd& v,
                    Eigen::MatrixXd* g) { all.column_terms(th, cols, v, g); };
    OptConfig cfg;
    cfg.max_iters = 300 + 100 * static_cast<int>(seed);  // some columns hit the cap
    const std::vector<DescentResult> batch = gradient_descent_columns(eval, Eigen::MatrixXd::Zero(n, m), cfg);
    REQUIRE(batch.size() == static_cast<std::size_t>(m));
    for (Eigen::Index t = 0; t < m; ++t) {
      CompositeObjective one(n, 1);
      one.add_block({design, y.col(t), 0});
      one.set_ridge(0, ridge);
      const DescentResult solo = gradient_descent(one, Eigen::MatrixXd::Zero(n, 1), cfg);
      const DescentResult& b = batch[static_cast<std::size_t>(t)];
      CHECK(b.iterations == solo.iterations);
      CHECK(b.converged == solo.converged);
      REQUIRE(b.trace.size() == solo.trace.size());
      for (std::size_t i = 0; i < b.trace.size(); ++i) {
        CHECK(b.trace[i].step_size == solo.trace[i].step_size);
        CHECK(std::abs(b.trace[i].objective - solo.trace[i].objective) <= 1e-12 * std::abs(solo.trace[i].objective));
      }
      CHECK((b.theta - solo.theta).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("gradient descent: agrees with a long fixed-step run") {
  // Separable two-class toy set.
  const Dataset d = toy::dataset(Source::S1, {{0, toy::sv({{0, 1.0}})},
                                              {0, toy::sv({{0, 2.0}, {1, 0.5}})},
                                              {0, toy::sv({{0, 1.5}})},
                                              {1, toy::sv({{1, 1.0}})},
                                              {1, toy::sv({{1, 2.0}, {0, 0.5}})},
                                              {1, toy::sv({{1, 1.5}})}});
  auto design = std::make_shared<const DesignMatrix>(design_matrix(d, 2));
  CompositeObjective o(3, 1);
  o.add_block({design, task_labels(build_tasks(d)[0], d.size()), 0});
  o.set_ridge(0, 0.1);
  OptConfig cfg;
  cfg.tol = 1e-14;
  cfg.max_iters = 100000;
  const DescentResult r = gradient_descent(o, Eigen::MatrixXd::Zero(3, 1), cfg);

  // Independent reference: plain descent with a small fixed step on the
  // oracle's dense rows.
  std::vector<oracle::Row> rows;
  for (std::size_t i = 0; i < d.size(); ++i) rows.push_back({augmented(d[i].features, 3), d[i].class_id == 0 ? 1.0 : -1.0});
  oracle::Dense th(3, 0.0);
  for (int it = 0; it < 100000; ++it) {
    oracle::Dense g(3, 0.0);
    for (const auto& row : rows) {
      const double m = oracle::dot(th, row.x);
      const double s = -row.y / (1.0 + std::exp(row.y * m));
      for (int j = 0; j < 3; ++j) g[static_cast<std::size_t>(j)] += s * row.x[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < 3; ++j) th[static_cast<std::size_t>(j)] -= 1e-2 * (g[static_cast<std::size_t>(j)] + 0.2 * th[static_cast<std::size_t>(j)]);
  }
  const double ref = static_cast<double>(oracle::objective({th}, {rows}, {0.1}, {}));
  CHECK(std::abs(r.objective - ref) < 1e-4);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(r.theta(j, 0) - th[static_cast<std::size_t>(j)]) < 1e-3);
}

TEST_CASE("trace CSV layout") {
  std::ostringstream out;
  const std::vector<TracePoint> t{{0, 2.5, 0.0}, {1, 1.25, 0.5}};
  write_trace_csv(out, t);
  CHECK(out.str() == "iter,objective,step_size\n0,2.5,0\n1,1.25,0.5\n");
}

TEST_CASE("model matrix: ids and restriction") {
  Eigen::MatrixXd w(2, 3);
  w << 1, 2, 3, 4, 5, 6;
  const ModelMatrix m({{Source::S1, 5, false}, {Source::S2, 1, false}, {Source::S1, 2, false}}, w);
  const ModelMatrix s1 = m.restricted_to(Source::S1);
  REQUIRE(s1.size() == 2);
  CHECK(s1.ids()[0].class_id == 2);
  CHECK(s1.weights()(0, 0) == 3);
  CHECK(m.column({Source::S2, 1, false})(1) == 5);
  CHECK_THROWS_AS(ModelMatrix({{Source::S1, 5, false}, {Source::S1, 5, false}}, Eigen::MatrixXd::Zero(2, 2)), Error);
  CHECK_THROWS_AS(m.index_of({Source::S2, 9, false}), Error);
}
