#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "ddrdro/errors.hpp"
#include "ddrdro/metric_learn.hpp"
#include "oracles.hpp"

using namespace ddrdro;

namespace {

LabeledDataset line(std::vector<double> xs) {
  Matrix x(static_cast<Eigen::Index>(xs.size()), 1);
  std::vector<int> y(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = xs[i];
    y[i] = i % 2 ? -1 : 1;
  }
  return LabeledDataset(x, y);
}

MetricMatrix scalar(double v) { return MetricMatrix::from_matrix(Matrix::Constant(1, 1, v)); }

double grid_min(const std::function<double(double)>& f) {
  double best = f(0.0);
  for (int s = 1; s <= 5000; ++s) best = std::min(best, f(0.001 * s));
  return best;
}

// Top-b sum of hinges at scalar metric v: the robust relative objective.
double robust_relative_value(const LabeledDataset& d, const TripletSet& r, double v, double alpha) {
  return inner_max_weights_relative(scalar(v), r, d, RobustLevel(alpha)).value;
}

}  // namespace

TEST_CASE("relative loss examples") {
  const auto d = line({0, 0, std::sqrt(5.0)});
  const auto id = MetricMatrix::identity(1);
  CHECK(relative_loss(id, TripletSet{}, d) == 0.0);
  CHECK(relative_loss(id, TripletSet{{{0, 1, 2}}}, d) == 0.0);
  const auto d2 = line({0, std::sqrt(2.0), 1});
  CHECK(relative_loss(id, TripletSet{{{0, 1, 2}}}, d2) == doctest::Approx(2.0));
}

TEST_CASE("relative subgradient examples") {
  const auto d = line({0, 1, 2});
  const auto far = line({0, 10, 0.5});
  CHECK(relative_subgradient(MetricMatrix::identity(1), TripletSet{{{0, 1, 2}}}, d).matrix().isZero());
  // Delta_ij = 1, Delta_ik = 2 is active below L = 1/3.
  const auto g = relative_subgradient(scalar(0.2), TripletSet{{{0, 1, 2}}}, d);
  CHECK(g.matrix()(0, 0) == doctest::Approx(-3.0));
  CHECK(relative_subgradient(MetricMatrix::identity(1), TripletSet{{{0, 1, 2}}}, far).matrix()(0, 0) ==
        doctest::Approx(100.0 - 0.25));
}

TEST_CASE("relative subgradient matches finite differences") {
  Rng rng(12);
  int checked = 0;
  while (checked < 20) {
    const auto d = oracle::random_dataset(rng, 10, 3);
    const auto r = build_triplets(d, 2);
    const Matrix base = oracle::random_psd(rng, 3) * 0.3 + Matrix::Identity(3, 3) * 0.5;
    const auto lam = MetricMatrix::from_matrix(base);
    bool smooth = true;
    for (const auto& t : r.triplets) {
      const Vector xi = d.x(t.i);
      const double v = mahalanobis_sq(lam, xi, d.x(t.j)) - mahalanobis_sq(lam, xi, d.x(t.k)) + 1.0;
      if (std::abs(v) < 1e-3) smooth = false;
    }
    if (!smooth) continue;
    const Matrix g = relative_subgradient(lam, r, d).matrix();
    const double h = 1e-6;
    Matrix fd(3, 3);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        Matrix e = Matrix::Zero(3, 3);
        e(a, b) += 0.5;
        e(b, a) += 0.5;
        const double up = relative_loss(MetricMatrix::from_matrix(base + h * e), r, d);
        const double dn = relative_loss(MetricMatrix::from_matrix(base - h * e), r, d);
        fd(a, b) = (up - dn) / (2 * h);
      }
    CHECK((fd - g).norm() <= 1e-5 * std::max(1.0, g.norm()));
    ++checked;
  }
}

TEST_CASE("relative loss is convex in the metric") {
  Rng rng(13);
  const auto d = oracle::random_dataset(rng, 12, 3);
  const auto r = build_triplets(d, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = oracle::random_psd(rng, 3), b = oracle::random_psd(rng, 3);
    for (double th : {0.25, 0.5, 0.75}) {
      const double mix = relative_loss(MetricMatrix::from_matrix(th * a + (1 - th) * b), r, d);
      const double chord = th * relative_loss(MetricMatrix::from_matrix(a), r, d) +
                           (1 - th) * relative_loss(MetricMatrix::from_matrix(b), r, d);
      CHECK(mix <= chord + 1e-9);
    }
  }
}

TEST_CASE("inner maximization weights") {
  const std::vector<double> h{3, 2, 1, 0};
  const auto half = inner_max_weights_relative(h, RobustLevel(0.5));
  CHECK(half.value == 5.0);
  CHECK(half.value == oracle::best_binary_max(h, 2));
  const auto full = inner_max_weights_relative(h, RobustLevel(1.0));
  CHECK(full.value == 6.0);
  for (double q : full.q) CHECK(q == 1.0);
  const std::vector<double> zero(5, 0.0);
  CHECK(inner_max_weights_relative(zero, RobustLevel(0.4)).value == 0.0);
  // Non-integer budget: one fractional weight.
  const auto frac = inner_max_weights_relative(h, RobustLevel(0.625));
  CHECK(frac.value == doctest::Approx(3 + 2 + 0.5 * 1));

  const std::vector<double> m{4, 3, 2, 1}, n{9, 4, 1};
  const auto w = inner_max_weights_absolute(m, n, RobustLevel(0.5));
  CHECK(w.value_m == 7.0);
  CHECK(w.value_n == 5.0);
  const auto w1 = inner_max_weights_absolute(m, n, RobustLevel(1.0));
  for (double e : w1.eta) CHECK(e == 1.0);
  for (double x : w1.xi) CHECK(x == 1.0);

  Rng rng(14);
  const auto d = oracle::random_dataset(rng, 10, 2);
  const auto r = build_triplets(d, 2);
  const auto lam = MetricMatrix::from_matrix(oracle::random_psd(rng, 2));
  CHECK(inner_max_weights_relative(lam, r, d, RobustLevel(1.0)).value == doctest::Approx(relative_loss(lam, r, d)));
}

TEST_CASE("relative learner on a zero-loss set returns the identity") {
  const auto d = line({0, 0.1, 5, 6});
  RelativeConfig cfg;
  const auto out = learn_relative(d, TripletSet{{{0, 1, 2}, {1, 0, 3}}}, cfg);
  CHECK(out.converged);
  CHECK(out.iterations == cfg.window);
  CHECK((out.lambda.matrix() - Matrix::Identity(1, 1)).norm() == 0.0);
}

TEST_CASE("relative learner on a 1-d two-triplet toy") {
  // Hinges 1 - 2L and 1 + 0.5L: minimum 1.25 at L = 0.5.
  const auto d = line({0, 1, std::sqrt(3.0), std::sqrt(2.0), std::sqrt(1.5)});
  const TripletSet r{{{0, 1, 2}, {0, 3, 4}}};
  RelativeConfig cfg;
  const auto out = learn_relative(d, r, cfg);
  const double oracle_min = grid_min([&](double v) { return relative_loss(scalar(v), r, d); });
  CHECK(oracle_min == doctest::Approx(1.25));
  CHECK(relative_loss(out.lambda, r, d) <= 1.05 * oracle_min);
  for (double t : out.trace) {
    CHECK(std::isfinite(t));
    CHECK(t >= 0.0);
  }
}

TEST_CASE("robust relative learner on a toy with an outlier") {
  // Three hinges 1 - 2L and one outlier hinge 1 + 3L; alpha keeps three.
  const auto d = line({0, 1, std::sqrt(3.0), 2, 1});
  const TripletSet r{{{0, 1, 2}, {0, 1, 2}, {0, 1, 2}, {0, 3, 4}}};
  RelativeConfig cfg;
  cfg.seed = 99;
  const auto out = learn_relative_robust(d, r, RobustLevel(0.75), cfg);
  const double oracle_min = grid_min([&](double v) { return robust_relative_value(d, r, v, 0.75); });
  CHECK(oracle_min == doctest::Approx(2.5));
  CHECK(robust_relative_value(d, r, out.lambda.matrix()(0, 0), 0.75) <= 1.05 * oracle_min);
  CHECK(out.lambda.min_eigenvalue() >= -kPsdTolerance);
  CHECK(out.initial_active.size() == 3);
}

TEST_CASE("absolute learner 1-d closed form") {
  const auto d = line({0, 1, 3, 7, 7.5});
  const PairSet m{PairKind::must_link, {{0, 1}, {3, 4}}};
  const PairSet n{PairKind::cannot_link, {{1, 2}, {2, 3}}};
  const double a = 1 + 0.25, b = 4 + 16;
  const auto out = learn_absolute(d, m, n, AbsoluteConfig{});
  CHECK(out.converged);
  CHECK(std::abs(out.lambda.matrix()(0, 0) - 1.0 / b) <= 1e-4 / b);
  CHECK(out.final_objective == doctest::Approx(a / b).epsilon(1e-4));
  const double resid = b * out.lambda.matrix()(0, 0) - 1.0;
  CHECK(resid >= -1e-6);
  CHECK(resid <= 1e-3);
  AbsoluteConfig alt;
  alt.inner = AbsoluteInner::alternating;
  const auto slow = learn_absolute(d, m, n, alt);
  CHECK(std::abs(slow.lambda.matrix()(0, 0) - 1.0 / b) <= 1e-4 / b);
}

TEST_CASE("absolute learner matches a direction sweep in 2-d") {
  Rng rng(8);
  const auto d = oracle::random_dataset(rng, 16, 2);
  const auto ps = build_pair_sets(d, 3);
  Matrix cm = Matrix::Zero(2, 2), cn = Matrix::Zero(2, 2);
  for (const auto& [i, j] : ps.must_link.pairs) {
    const Vector v = d.x(i) - d.x(j);
    cm += v * v.transpose();
  }
  for (const auto& [i, j] : ps.cannot_link.pairs) {
    const Vector v = d.x(i) - d.x(j);
    cn += v * v.transpose();
  }
  // Over the PSD slice <C_N, L> = 1 the optimum is a ray, so sweep directions.
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 200000; ++s) {
    const double th = M_PI * s / 200000.0;
    Vector v(2);
    v << std::cos(th), std::sin(th);
    best = std::min(best, v.dot(cm * v) / v.dot(cn * v));
  }
  const auto out = learn_absolute(d, ps.must_link, ps.cannot_link, AbsoluteConfig{});
  CHECK(out.final_objective == doctest::Approx(best).epsilon(1e-6));
  CHECK(out.final_objective <= best + 1e-12);
  CHECK((cn.array() * out.lambda.matrix().array()).sum() == doctest::Approx(1.0).epsilon(1e-12));

  AbsoluteConfig ac;
  ac.inner = AbsoluteInner::alternating;
  ac.max_iters = 100;
  const auto alt = learn_absolute(d, ps.must_link, ps.cannot_link, ac);
  CHECK(alt.final_objective >= out.final_objective - 1e-12);
  CHECK((cn.array() * alt.lambda.matrix().array()).sum() >= 1.0 - 1e-9);
  for (std::size_t t = 1; t < alt.trace.size(); ++t) CHECK(alt.trace[t] <= alt.trace[t - 1] + 1e-9);
}

TEST_CASE("absolute learner beats random feasible metrics") {
  Rng rng(13);
  const auto d = oracle::random_dataset(rng, 20, 4);
  const auto ps = build_pair_sets(d, 3);
  const auto out = learn_absolute(d, ps.must_link, ps.cannot_link, AbsoluteConfig{});
  const auto sum_sq = [&](const MetricMatrix& l, const PairSet& p) {
    double s = 0.0;
    for (const auto& [i, j] : p.pairs) s += mahalanobis_sq(l, d.x(i), d.x(j));
    return s;
  };
  CHECK(sum_sq(out.lambda, ps.cannot_link) == doctest::Approx(1.0).epsilon(1e-10));
  const double opt = sum_sq(out.lambda, ps.must_link);
  for (int t = 0; t < 500; ++t) {
    const Matrix a = oracle::random_psd(rng, 4);
    const auto l = MetricMatrix::from_matrix(a / sum_sq(MetricMatrix::from_matrix(a), ps.cannot_link));
    CHECK(sum_sq(l, ps.must_link) >= opt - 1e-10);
  }
}

TEST_CASE("absolute learner with coincident must-link pairs") {
  Matrix x(4, 2);
  x << 0, 0, 0, 0, 1, 0, 0, 2;
  LabeledDataset d(x, {1, 1, -1, -1});
  const PairSet m{PairKind::must_link, {{0, 1}}};
  const PairSet n{PairKind::cannot_link, {{0, 2}, {1, 3}}};
  const auto out = learn_absolute(d, m, n, AbsoluteConfig{});
  // I already satisfies <C_N, I> = 5 >= 1, so the projection keeps it.
  CHECK((out.lambda.matrix() - Matrix::Identity(2, 2)).norm() < 1e-12);
  CHECK(out.final_objective == 0.0);
}

TEST_CASE("absolute learner infeasible cannot-link set") {
  const auto d = line({0, 0, 1});
  const PairSet m{PairKind::must_link, {{0, 2}}};
  const PairSet n{PairKind::cannot_link, {{0, 1}}};
  CHECK_THROWS_AS(learn_absolute(d, m, n, AbsoluteConfig{}), InfeasibleError);
}

TEST_CASE("robust absolute learner keeps the near-duplicate pair") {
  const auto d = line({0, 0.01, 5, 7, 10, 13});
  const PairSet m{PairKind::must_link, {{0, 2}, {1, 2}}};
  const PairSet n{PairKind::cannot_link, {{0, 1}, {2, 3}, {3, 4}}};
  AbsoluteConfig cfg;
  cfg.seed = 5;
  const auto out = learn_absolute_robust(d, m, n, RobustLevel(0.5), cfg);
  const double b = 1e-4 + 4.0;
  CHECK(std::abs(out.lambda.matrix()(0, 0) - 1.0 / b) <= 1e-4 / b);
  CHECK(out.lambda.min_eigenvalue() >= -kPsdTolerance);
}

TEST_CASE("alpha = 1 robust learners reproduce the plain learners") {
  Rng rng(21);
  const auto d = oracle::random_dataset(rng, 12, 3);
  const auto r = build_triplets(d, 2);
  const auto ps = build_pair_sets(d, 3);
  RelativeConfig rc;
  rc.record_iterates = true;
  rc.max_iters = 200;
  rc.seed = 4;
  const auto a = learn_relative(d, r, rc);
  const auto b = learn_relative_robust(d, r, RobustLevel(1.0), rc);
  REQUIRE(a.iterates.size() == b.iterates.size());
  for (std::size_t t = 0; t < a.iterates.size(); ++t) CHECK((a.iterates[t] - b.iterates[t]).norm() <= 1e-12);
  AbsoluteConfig ac;
  ac.record_iterates = true;
  ac.max_iters = 60;
  ac.seed = 4;
  const auto c = learn_absolute(d, ps.must_link, ps.cannot_link, ac);
  const auto e = learn_absolute_robust(d, ps.must_link, ps.cannot_link, RobustLevel(1.0), ac);
  REQUIRE(c.iterates.size() == e.iterates.size());
  for (std::size_t t = 0; t < c.iterates.size(); ++t) CHECK((c.iterates[t] - e.iterates[t]).norm() <= 1e-12);
}

TEST_CASE("learners are deterministic per seed and validate configs") {
  Rng rng(22);
  const auto d = oracle::random_dataset(rng, 12, 2);
  const auto r = build_triplets(d, 2);
  RelativeConfig rc;
  rc.seed = 17;
  rc.max_iters = 100;
  const auto a = learn_relative_robust(d, r, RobustLevel(0.5), rc);
  const auto b = learn_relative_robust(d, r, RobustLevel(0.5), rc);
  CHECK(a.lambda.matrix() == b.lambda.matrix());
  CHECK(a.initial_active == b.initial_active);
  rc.step_size = 0.0;
  CHECK_THROWS_AS(learn_relative(d, r, rc), InvalidArgument);
  CHECK_THROWS_AS(learn_relative(d, TripletSet{}, RelativeConfig{}), InvalidArgument);
  std::ostringstream os;
  write_metric_sidecar(os, a);
  CHECK(os.str().find("learner = relative_robust") != std::string::npos);
}
