#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ddrdro/errors.hpp"
#include "ddrdro/transport.hpp"
#include "oracles.hpp"

using namespace ddrdro;

namespace {

LabeledSample pt(std::initializer_list<double> v, int y = 1) {
  LabeledSample s;
  s.x.resize(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) s.x[i++] = x;
  s.y = y;
  return s;
}

ExtendedCost abs_cost(const LabeledSample& u, const LabeledSample& v) {
  return ExtendedCost::finite(std::abs(u.x[0] - v.x[0]));
}

DiscreteDistribution random_distribution(Rng& rng, std::size_t n, Eigen::Index d, bool mixed_labels, bool uniform) {
  DiscreteDistribution p;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledSample s;
    s.x.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) s.x[j] = oracle::normal(rng);
    s.y = mixed_labels && (i % 2) ? -1 : 1;
    p.support.push_back(s);
  }
  p.mass.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) p.mass[static_cast<Eigen::Index>(i)] = uniform ? 1.0 : 0.1 + rng.uniform();
  p.mass /= p.mass.sum();
  return p;
}

void check_marginals(const TransportPlan& plan, const Vector& a, const Vector& b) {
  CHECK((plan.plan.rowwise().sum() - a).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((plan.plan.colwise().sum().transpose() - b).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(plan.plan.minCoeff() >= 0.0);
}

// Dense cost table and mask for the LP oracle.
std::pair<Matrix, std::vector<std::vector<bool>>> dense_costs(const DiscreteDistribution& p,
                                                               const DiscreteDistribution& q, const CostFunction& c) {
  const auto m = static_cast<Eigen::Index>(p.support.size()), n = static_cast<Eigen::Index>(q.support.size());
  Matrix cost = Matrix::Zero(m, n);
  std::vector<std::vector<bool>> ok(static_cast<std::size_t>(m), std::vector<bool>(static_cast<std::size_t>(n)));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto v = c(p.support[static_cast<std::size_t>(i)], q.support[static_cast<std::size_t>(j)]);
      ok[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = v.is_finite();
      if (v.is_finite()) cost(i, j) = v.value();
    }
  return {cost, ok};
}

}  // namespace

TEST_CASE("distribution validation") {
  DiscreteDistribution p;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p = DiscreteDistribution::uniform({pt({0}), pt({1})});
  CHECK_NOTHROW(p.validate());
  p.mass[0] = 0.7;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  auto dup = DiscreteDistribution::uniform({pt({0}), pt({0})});
  CHECK_THROWS_AS(dup.validate(), InvalidArgument);
  auto labels = DiscreteDistribution::uniform({pt({0}, 1), pt({0}, -1)});
  CHECK_NOTHROW(labels.validate());
}

TEST_CASE("ot examples") {
  Rng rng(1);
  const auto p = random_distribution(rng, 7, 2, true, false);
  const auto cost = mahalanobis_cost(MetricMatrix::identity(2));
  const auto self = ot_discrepancy(p, p, cost);
  CHECK(self.value == 0.0);
  CHECK((Matrix(p.mass.asDiagonal()) - self.plan).norm() < 1e-12);

  const auto u = DiscreteDistribution::uniform({pt({0, 0})});
  const auto v = DiscreteDistribution::uniform({pt({1, 2})});
  CHECK(ot_discrepancy(u, v, cost).value == doctest::Approx(5.0));

  const auto a = DiscreteDistribution::uniform({pt({0}), pt({1}), pt({2})});
  const auto b = DiscreteDistribution::uniform({pt({0.5}), pt({1.5}), pt({2.5})});
  // Sorted pairing moves each third of the mass by 0.5; with unit masses the total is 1.5.
  CHECK(ot_discrepancy(a, b, abs_cost).value == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(ot_discrepancy(a, b, mahalanobis_cost(MetricMatrix::identity(1), CostPower::linear)).value ==
        doctest::Approx(0.5).epsilon(1e-12));
  const auto unit = solve_transport(Vector::Ones(3), Vector::Ones(3), CostMatrix::from_function(a.support, b.support, abs_cost));
  CHECK(unit.value == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("ot infeasible across labels") {
  const auto p = DiscreteDistribution::uniform({pt({0}, 1), pt({1}, 1)});
  const auto q = DiscreteDistribution::uniform({pt({0}, -1), pt({1}, -1)});
  CHECK_THROWS_AS(ot_discrepancy(p, q, mahalanobis_cost(MetricMatrix::identity(1))), InfeasibleError);
  // Label masses that differ also force an infinite cell.
  DiscreteDistribution r = DiscreteDistribution::uniform({pt({0}, 1), pt({1}, -1)});
  r.mass << 0.8, 0.2;
  const auto s = DiscreteDistribution::uniform({pt({0}, 1), pt({1}, -1)});
  CHECK_THROWS_AS(ot_discrepancy(r, s, mahalanobis_cost(MetricMatrix::identity(1))), InfeasibleError);
}

TEST_CASE("ot matches the dense LP") {
  Rng rng(2);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = 1 + rng.index(12), n = 1 + rng.index(12);
    const bool mixed = trial % 3 == 0;
    auto p = random_distribution(rng, m, 2, mixed, trial % 2 == 0);
    auto q = random_distribution(rng, n, 2, mixed, trial % 4 == 0);
    if (mixed) {
      // Match per-label totals so a finite coupling exists.
      for (auto* dist : {&p, &q}) {
        double pos = 0.0, neg = 0.0;
        for (std::size_t i = 0; i < dist->support.size(); ++i)
          (dist->support[i].y == 1 ? pos : neg) += dist->mass[static_cast<Eigen::Index>(i)];
        for (std::size_t i = 0; i < dist->support.size(); ++i) {
          const bool plus = dist->support[i].y == 1;
          if (neg == 0.0 || pos == 0.0) continue;
          dist->mass[static_cast<Eigen::Index>(i)] *= 0.5 / (plus ? pos : neg);
        }
      }
      bool pn = false, qn = false;
      for (const auto& s : p.support) pn |= s.y == -1;
      for (const auto& s : q.support) qn |= s.y == -1;
      if (pn != qn) continue;
    }
    const auto metric = MetricMatrix::from_matrix(oracle::random_psd(rng, 2) + 0.1 * Matrix::Identity(2, 2));
    const auto cost = mahalanobis_cost(metric);
    const auto [dense, ok] = dense_costs(p, q, cost);
    const auto lp = oracle::transport_lp(p.mass, q.mass, dense, ok);
    REQUIRE(lp.has_value());
    const auto plan = ot_discrepancy(p, q, cost);
    CHECK(plan.value == doctest::Approx(*lp).epsilon(1e-8).scale(1.0));
    check_marginals(plan, p.mass, q.mass);
    const auto back = ot_discrepancy(q, p, cost);
    CHECK(back.value == doctest::Approx(plan.value).epsilon(1e-8).scale(1.0));
    CHECK(plan.value >= 0.0);
  }
}

TEST_CASE("ot matches sorted coupling in 1-d") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.index(50), n = 1 + rng.index(50);
    const auto p = random_distribution(rng, m, 1, false, trial % 2 == 0);
    const auto q = random_distribution(rng, n, 1, false, trial % 3 == 0);
    std::vector<std::pair<double, double>> a, b;
    for (std::size_t i = 0; i < m; ++i) a.emplace_back(p.support[i].x[0], p.mass[static_cast<Eigen::Index>(i)]);
    for (std::size_t j = 0; j < n; ++j) b.emplace_back(q.support[j].x[0], q.mass[static_cast<Eigen::Index>(j)]);
    const auto plan = ot_discrepancy(p, q, abs_cost);
    CHECK(std::abs(plan.value - oracle::sorted_coupling_1d(a, b)) <= 1e-8);
    check_marginals(plan, p.mass, q.mass);
  }
}

TEST_CASE("ot handles heavy degeneracy") {
  // Equal masses on a grid: every basis is degenerate.
  std::vector<LabeledSample> s, t;
  for (int i = 0; i < 30; ++i) {
    s.push_back(pt({static_cast<double>(i)}));
    t.push_back(pt({static_cast<double>((i * 7) % 30)}));
  }
  auto p = DiscreteDistribution::uniform(s);
  auto q = DiscreteDistribution::uniform(t);
  const auto plan = ot_discrepancy(p, q, abs_cost);
  CHECK(plan.value == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  check_marginals(plan, p.mass, q.mass);
}

TEST_CASE("ot size cap") {
  CostMatrix big(101, 100);
  CHECK_THROWS_AS(solve_transport(Vector::Constant(101, 1.0 / 101), Vector::Constant(100, 0.01), big), InvalidArgument);
  CostMatrix c(2, 2);
  CHECK_THROWS_AS(solve_transport(Vector::Constant(2, 0.5), Vector::Constant(2, 0.6), c), InvalidArgument);
}

TEST_CASE("plan csv") {
  TransportPlan p;
  p.plan = Matrix::Zero(2, 2);
  p.plan(0, 1) = 0.5;
  p.plan(1, 0) = 0.5;
  std::ostringstream os;
  write_plan_csv(os, p);
  CHECK(os.str() == "row,col,mass\n0,1,0.5\n1,0,0.5\n");
}

namespace {

struct WorstCaseFixture {
  WorstCaseProblem prob;
  Matrix dense;  // (candidate, base) cost, +inf when forbidden
};

WorstCaseFixture random_worst_case(Rng& rng, std::size_t n, std::size_t steps, bool mixed) {
  WorstCaseFixture f;
  f.prob.base = random_distribution(rng, n, 1, mixed, rng.uniform() < 0.5);
  f.prob.candidates = axis_grid_candidates(f.prob.base, 1.0 + rng.uniform(), steps);
  const double beta = oracle::normal(rng) * 2.0;
  for (const auto& c : f.prob.candidates) f.prob.loss_at.push_back(std::log1p(std::exp(-c.y * beta * c.x[0])));
  f.prob.cost = mahalanobis_cost(MetricMatrix::from_matrix(Matrix::Constant(1, 1, 0.5 + rng.uniform())));
  f.dense.resize(static_cast<Eigen::Index>(f.prob.candidates.size()), static_cast<Eigen::Index>(n));
  for (std::size_t u = 0; u < f.prob.candidates.size(); ++u)
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = f.prob.cost(f.prob.candidates[u], f.prob.base.support[i]);
      f.dense(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(i)) =
          c.is_finite() ? c.value() : std::numeric_limits<double>::infinity();
    }
  return f;
}

}  // namespace

TEST_CASE("worst case matches the dense LP") {
  Rng rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    auto f = random_worst_case(rng, 1 + rng.index(4), 3 + rng.index(4), trial % 2 == 0);
    f.prob.delta = rng.uniform() * (trial % 5 == 0 ? 3.0 : 0.5);
    const auto res = worst_case_expectation(f.prob);
    const auto lp = oracle::worst_case_lp(f.prob.base.mass, f.prob.loss_at, f.dense, f.prob.delta);
    REQUIRE(lp.has_value());
    CHECK(res.value == doctest::Approx(*lp).epsilon(1e-9).scale(1.0));
    // The returned coupling is feasible and attains the value.
    CHECK((res.coupling.colwise().sum().transpose() - f.prob.base.mass).cwiseAbs().maxCoeff() <= 1e-12);
    double cost = 0.0, value = 0.0;
    for (Eigen::Index u = 0; u < res.coupling.rows(); ++u)
      for (Eigen::Index i = 0; i < res.coupling.cols(); ++i)
        if (res.coupling(u, i) > 0.0) {
          REQUIRE(std::isfinite(f.dense(u, i)));
          cost += res.coupling(u, i) * f.dense(u, i);
          value += res.coupling(u, i) * f.prob.loss_at[static_cast<std::size_t>(u)];
        }
    CHECK(cost <= f.prob.delta + 1e-9);
    CHECK(value == doctest::Approx(res.value).epsilon(1e-12).scale(1.0));
    CHECK(res.worst.mass.sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("worst case examples") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = random_worst_case(rng, 1 + rng.index(6), 5, true);
    f.prob.delta = 0.0;
    double mean = 0.0;
    for (std::size_t i = 0; i < f.prob.base.support.size(); ++i) {
      // Base point i is the first candidate of its block.
      const std::size_t block = f.prob.candidates.size() / f.prob.base.support.size();
      mean += f.prob.base.mass[static_cast<Eigen::Index>(i)] * f.prob.loss_at[i * block];
    }
    CHECK(worst_case_expectation(f.prob).value == doctest::Approx(mean).epsilon(1e-12));

    // Budget covering every finite cell: all mass reaches the best reachable candidate.
    double max_cost = 0.0;
    for (Eigen::Index u = 0; u < f.dense.rows(); ++u)
      for (Eigen::Index i = 0; i < f.dense.cols(); ++i)
        if (std::isfinite(f.dense(u, i))) max_cost = std::max(max_cost, f.dense(u, i));
    f.prob.delta = max_cost;
    double expect = 0.0;
    for (Eigen::Index i = 0; i < f.dense.cols(); ++i) {
      double best = -1.0;
      for (Eigen::Index u = 0; u < f.dense.rows(); ++u)
        if (std::isfinite(f.dense(u, i))) best = std::max(best, f.prob.loss_at[static_cast<std::size_t>(u)]);
      expect += f.prob.base.mass[i] * best;
    }
    CHECK(worst_case_expectation(f.prob).value == doctest::Approx(expect).epsilon(1e-12));
  }
  // Single label: the global argmax is reachable from every base point.
  auto f = random_worst_case(rng, 4, 7, false);
  double max_cost = 0.0;
  for (Eigen::Index u = 0; u < f.dense.rows(); ++u) max_cost = std::max(max_cost, f.dense.row(u).maxCoeff());
  f.prob.delta = max_cost;
  CHECK(worst_case_expectation(f.prob).value ==
        doctest::Approx(*std::max_element(f.prob.loss_at.begin(), f.prob.loss_at.end())));
}

TEST_CASE("worst case is nondecreasing and concave in delta") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto f = random_worst_case(rng, 5, 9, trial % 2 == 0);
    std::vector<double> v;
    for (int s = 0; s <= 10; ++s) {
      f.prob.delta = 0.1 * s;
      v.push_back(worst_case_expectation(f.prob).value);
    }
    for (std::size_t s = 1; s < v.size(); ++s) CHECK(v[s] >= v[s - 1] - 1e-12);
    for (std::size_t s = 1; s + 1 < v.size(); ++s) CHECK(v[s] >= 0.5 * (v[s - 1] + v[s + 1]) - 1e-12);
  }
}

TEST_CASE("worst case input validation") {
  WorstCaseProblem p;
  p.base = DiscreteDistribution::uniform({pt({0})});
  p.candidates = {pt({1})};
  p.loss_at = {1.0};
  p.cost = mahalanobis_cost(MetricMatrix::identity(1));
  p.delta = -1.0;
  CHECK_THROWS_AS(worst_case_expectation(p), InvalidArgument);
  p.delta = 0.5;
  // The base support is missing from the candidates and the budget is too small.
  CHECK_THROWS_AS(worst_case_expectation(p), InfeasibleError);
  p.loss_at = {};
  CHECK_THROWS_AS(worst_case_expectation(p), InvalidArgument);
}

TEST_CASE("axis grids") {
  const auto b1 = DiscreteDistribution::uniform({pt({0}), pt({5})});
  const auto g1 = axis_grid_candidates(b1, 1.0, 5);
  CHECK(g1.size() == 2 * 5);  // offsets -1, -.5, 0, .5, 1 (0 is the base point)
  const auto g1e = axis_grid_candidates(b1, 1.0, 4);
  CHECK(g1e.size() == 2 * 5);
  const auto b2 = DiscreteDistribution::uniform({pt({0, 0}, -1)});
  const auto g2 = axis_grid_candidates(b2, 2.0, 3);
  CHECK(g2.size() == 9);
  for (const auto& c : g2) CHECK(c.y == -1);
  const auto b3 = DiscreteDistribution::uniform({pt({0, 0, 0})});
  CHECK_THROWS_AS(axis_grid_candidates(b3, 1.0, 3), InvalidArgument);
}
