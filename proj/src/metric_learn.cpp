#include "ddrdro/metric_learn.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "ddrdro/errors.hpp"
#include "ddrdro/rng.hpp"

namespace ddrdro {

namespace {

// Frobenius distance between the newest iterate and the mean of the last
// `window` iterates (newest included); +inf until the window is full.
class MovingAverageStop {
 public:
  explicit MovingAverageStop(std::size_t window) : window_(window) {
    if (window == 0) throw InvalidArgument("window must be positive");
  }

  double push(const Matrix& m) {
    history_.push_back(m);
    if (history_.size() > window_) history_.pop_front();
    if (history_.size() < window_) return std::numeric_limits<double>::infinity();
    Matrix mean = Matrix::Zero(m.rows(), m.cols());
    for (const auto& h : history_) mean += h;
    mean /= static_cast<double>(history_.size());
    return (m - mean).norm();
  }

 private:
  std::size_t window_;
  std::deque<Matrix> history_;
};

// Triplets rewritten over their distinct difference vectors so that all
// distances come from one product per iteration.
struct TripletIndex {
  Matrix diffs;                                        // one row per distinct pair
  std::vector<std::pair<std::size_t, std::size_t>> t;  // (pair of (i,j), pair of (i,k)) per triplet
};

TripletIndex index_triplets(const LabeledDataset& data, const TripletSet& r) {
  std::map<IndexPair, std::size_t> ids;
  std::vector<IndexPair> pairs;
  auto id_of = [&](std::size_t a, std::size_t b) {
    const IndexPair key{std::min(a, b), std::max(a, b)};
    auto [it, inserted] = ids.emplace(key, pairs.size());
    if (inserted) pairs.push_back(key);
    return it->second;
  };
  TripletIndex ix;
  for (const auto& tr : r.triplets) {
    if (tr.i >= data.size() || tr.j >= data.size() || tr.k >= data.size())
      throw InvalidArgument("triplet index out of range");
    ix.t.emplace_back(id_of(tr.i, tr.j), id_of(tr.i, tr.k));
  }
  const Matrix& f = data.features();
  ix.diffs.resize(static_cast<Eigen::Index>(pairs.size()), f.cols());
  for (std::size_t p = 0; p < pairs.size(); ++p)
    ix.diffs.row(static_cast<Eigen::Index>(p)) =
        f.row(static_cast<Eigen::Index>(pairs[p].first)) - f.row(static_cast<Eigen::Index>(pairs[p].second));
  return ix;
}

Vector row_quadratic_forms(const Matrix& diffs, const Matrix& lambda) {
  return (diffs * lambda).cwiseProduct(diffs).rowwise().sum();
}

// Weighted Gram matrix sum_p w_p diff_p diff_p^T.
Matrix weighted_gram(const Matrix& diffs, const Vector& w) {
  return diffs.transpose() * (w.asDiagonal() * diffs);
}

Matrix pair_diffs(const LabeledDataset& data, const PairSet& s) {
  const Matrix& f = data.features();
  Matrix d(static_cast<Eigen::Index>(s.size()), f.cols());
  for (std::size_t p = 0; p < s.size(); ++p) {
    const auto [a, b] = s.pairs[p];
    if (a >= data.size() || b >= data.size()) throw InvalidArgument("pair index out of range");
    d.row(static_cast<Eigen::Index>(p)) = f.row(static_cast<Eigen::Index>(a)) - f.row(static_cast<Eigen::Index>(b));
  }
  return d;
}

std::vector<double> hinges_of(const TripletIndex& ix, const Vector& dist) {
  std::vector<double> h(ix.t.size());
  for (std::size_t t = 0; t < ix.t.size(); ++t) {
    const double v = dist[static_cast<Eigen::Index>(ix.t[t].first)] - dist[static_cast<Eigen::Index>(ix.t[t].second)] + 1.0;
    h[t] = v > 0.0 ? v : 0.0;
  }
  return h;
}

std::vector<std::size_t> sorted_sample(Rng& rng, std::size_t n, std::size_t k) {
  auto s = rng.sample(n, k);
  std::sort(s.begin(), s.end());
  return s;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

LearnedMetric run_relative(const LabeledDataset& data, const TripletSet& r, const RobustLevel* level,
                           const RelativeConfig& cfg) {
  if (r.empty()) throw InvalidArgument("relative constraint set is empty");
  if (!(cfg.step_size > 0.0) || cfg.refresh_every == 0 || !(cfg.tol > 0.0) || cfg.max_iters == 0 ||
      cfg.frobenius_reg < 0.0)
    throw InvalidArgument("invalid relative learner configuration");

  const TripletIndex ix = index_triplets(data, r);
  const auto d = static_cast<Eigen::Index>(data.dim());
  Matrix lambda = Matrix::Identity(d, d);

  LearnedMetric out;
  out.lambda = MetricMatrix::identity(data.dim());
  out.kind = level ? LearnerKind::relative_robust : LearnerKind::relative;
  out.alpha = level ? level->alpha() : 1.0;
  out.seed = cfg.seed;

  std::vector<std::size_t> active;
  if (level) {
    Rng rng(cfg.seed);
    active = sorted_sample(rng, r.size(), level->floor_budget(r.size()));
    out.initial_active = active;
  } else {
    active = all_indices(r.size());
  }

  Vector counts(static_cast<Eigen::Index>(ix.diffs.rows()));
  auto active_objective = [&](const Matrix& lam, bool with_gradient, Matrix* grad) {
    const Vector dist = row_quadratic_forms(ix.diffs, lam);
    counts.setZero();
    double obj = 0.0;
    for (std::size_t t : active) {
      const auto [a, b] = ix.t[t];
      const double h = dist[static_cast<Eigen::Index>(a)] - dist[static_cast<Eigen::Index>(b)] + 1.0;
      if (h > 0.0) {
        obj += h;
        counts[static_cast<Eigen::Index>(a)] += 1.0;
        counts[static_cast<Eigen::Index>(b)] -= 1.0;
      }
    }
    if (cfg.frobenius_reg > 0.0) obj += cfg.frobenius_reg * lam.squaredNorm();
    if (with_gradient) {
      *grad = weighted_gram(ix.diffs, counts);
      if (cfg.frobenius_reg > 0.0) *grad += 2.0 * cfg.frobenius_reg * lam;
    }
    return obj;
  };

  MovingAverageStop stop(cfg.window);
  Matrix grad;
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    out.trace.push_back(active_objective(lambda, true, &grad));
    const double step = cfg.schedule == StepSchedule::constant
                            ? cfg.step_size
                            : cfg.step_size / std::sqrt(static_cast<double>(it));
    lambda = project_psd(SymMatrix(lambda - step * grad)).matrix();
    if (cfg.record_iterates) out.iterates.push_back(lambda);
    out.iterations = it;
    const double err = stop.push(lambda);
    if (level && it % cfg.refresh_every == 0)
      active = top_relative_indices(hinges_of(ix, row_quadratic_forms(ix.diffs, lambda)), *level);
    if (err <= cfg.tol) {
      out.converged = true;
      break;
    }
  }
  out.final_objective = active_objective(lambda, false, nullptr);
  out.lambda = MetricMatrix::from_matrix(lambda);
  return out;
}

double inner(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

// Euclidean-projects onto <C_N, L> >= 1 and the PSD cone, rescaling if the
// clipped point still falls short.
void make_feasible(Matrix& lambda, const Matrix& cn) {
  const double cn_sq = cn.squaredNorm();
  if (!(cn_sq > 0.0))
    throw InfeasibleError("cannot-link pairs are all coincident: sum of N distances cannot reach 1");
  double r = inner(cn, lambda);
  if (r >= 1.0) return;
  lambda = project_psd(SymMatrix(lambda + ((1.0 - r) / cn_sq) * cn)).matrix();
  r = inner(cn, lambda);
  if (!(r > 0.0)) throw InfeasibleError("cannot satisfy the cannot-link constraint");
  if (r < 1.0) lambda /= r;
}

Matrix rank_one_on_boundary(const Vector& v, const Matrix& cn) {
  Matrix out = v * v.transpose();
  return out / inner(cn, out);
}

// Minimizes <C_M, L> subject to <C_N, L> >= 1 and L PSD. The objective is
// linear and the feasible set is a cone slice, so an extreme ray v v^T is
// optimal, with v maximizing v^T C_N v / v^T C_M v. Directions that C_M
// annihilates but C_N does not give objective zero.
void absolute_exact_solve(Matrix& lambda, const Matrix& cm, const Matrix& cn) {
  make_feasible(lambda, cn);
  if (inner(cm, lambda) <= 0.0) return;  // already optimal
  Eigen::SelfAdjointEigenSolver<Matrix> es(cm);
  const Vector& s = es.eigenvalues();
  const double thr = 1e-12 * std::max(s.cwiseAbs().maxCoeff(), 1e-300);
  std::vector<Eigen::Index> null_idx, range_idx;
  for (Eigen::Index i = 0; i < s.size(); ++i) (s[i] <= thr ? null_idx : range_idx).push_back(i);

  const double cn_scale = cn.norm();
  if (!null_idx.empty()) {
    Matrix u0(cm.rows(), static_cast<Eigen::Index>(null_idx.size()));
    for (std::size_t j = 0; j < null_idx.size(); ++j) u0.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(null_idx[j]);
    const Matrix restricted = u0.transpose() * cn * u0;
    Eigen::SelfAdjointEigenSolver<Matrix> rs(restricted);
    if (rs.eigenvalues().maxCoeff() > 1e-12 * cn_scale) {
      lambda = rank_one_on_boundary(u0 * rs.eigenvectors().col(rs.eigenvalues().size() - 1), cn);
      return;
    }
  }
  Matrix w(cm.rows(), static_cast<Eigen::Index>(range_idx.size()));
  for (std::size_t j = 0; j < range_idx.size(); ++j)
    w.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(range_idx[j]) / std::sqrt(s[range_idx[j]]);
  Eigen::SelfAdjointEigenSolver<Matrix> ws(w.transpose() * cn * w);
  const Eigen::Index top = ws.eigenvalues().size() - 1;
  if (!(ws.eigenvalues()[top] > 1e-12 * cn_scale * w.squaredNorm()))
    throw InfeasibleError("cannot-link distances vanish wherever must-link distances do");
  lambda = rank_one_on_boundary(w * ws.eigenvectors().col(top), cn);
}

// Gradient steps of Frobenius length inner_step along -C_M / ||C_M||, each
// followed by the half-space projection onto <C_N, L> >= 1 and PSD
// clipping. Clipping only adds a PSD matrix, so the half-space constraint
// survives it and one round of projections lands in the feasible set.
void absolute_alternating_solve(Matrix& lambda, const Matrix& cm, const Matrix& cn, const AbsoluteConfig& cfg) {
  const double cn_sq = cn.squaredNorm();
  if (!(cn_sq > 0.0))
    throw InfeasibleError("cannot-link pairs are all coincident: sum of N distances cannot reach 1");
  const double cm_norm = cm.norm();
  const double t = cm_norm > 0.0 ? cfg.inner_step / cm_norm : 0.0;
  const std::size_t steps = cm_norm > 0.0 ? cfg.inner_iters : 1;
  for (std::size_t s = 0; s < steps; ++s) {
    Matrix next = lambda - t * cm;
    const double r = inner(cn, next);
    if (r < 1.0) next += ((1.0 - r) / cn_sq) * cn;
    next = project_psd(SymMatrix(next)).matrix();
    if (!(inner(cn, next) >= 1.0 - 1e-9)) throw InfeasibleError("cannot satisfy the cannot-link constraint");
    lambda = std::move(next);
  }
}

void absolute_inner_solve(Matrix& lambda, const Matrix& cm, const Matrix& cn, const AbsoluteConfig& cfg) {
  if (cfg.inner == AbsoluteInner::exact)
    absolute_exact_solve(lambda, cm, cn);
  else
    absolute_alternating_solve(lambda, cm, cn, cfg);
}

LearnedMetric run_absolute(const LabeledDataset& data, const PairSet& m, const PairSet& n, const RobustLevel* level,
                           const AbsoluteConfig& cfg) {
  if (m.empty()) throw InvalidArgument("must-link set is empty");
  if (n.empty()) throw InvalidArgument("cannot-link set is empty");
  if (!(cfg.inner_step > 0.0) || cfg.inner_iters == 0 || cfg.refresh_every == 0 || !(cfg.tol > 0.0) ||
      cfg.max_iters == 0)
    throw InvalidArgument("invalid absolute learner configuration");

  const Matrix dm = pair_diffs(data, m);
  const Matrix dn = pair_diffs(data, n);
  const auto d = static_cast<Eigen::Index>(data.dim());
  Matrix lambda = Matrix::Identity(d, d);

  LearnedMetric out;
  out.lambda = MetricMatrix::identity(data.dim());
  out.kind = level ? LearnerKind::absolute_robust : LearnerKind::absolute;
  out.alpha = level ? level->alpha() : 1.0;
  out.seed = cfg.seed;

  Vector wm = Vector::Zero(dm.rows());
  Vector wn = Vector::Zero(dn.rows());
  auto set_weights = [](Vector& w, const std::vector<std::size_t>& idx) {
    w.setZero();
    for (std::size_t i : idx) w[static_cast<Eigen::Index>(i)] = 1.0;
  };
  if (level) {
    Rng rng(cfg.seed);
    out.initial_active = sorted_sample(rng, m.size(), level->floor_budget(m.size()));
    out.initial_active_n = sorted_sample(rng, n.size(), level->ceil_budget(n.size()));
    set_weights(wm, out.initial_active);
    set_weights(wn, out.initial_active_n);
  } else {
    wm.setOnes();
    wn.setOnes();
  }

  MovingAverageStop stop(cfg.window);
  Matrix cm = weighted_gram(dm, wm);
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    cm = weighted_gram(dm, wm);
    const Matrix cn = weighted_gram(dn, wn);
    absolute_inner_solve(lambda, cm, cn, cfg);
    out.trace.push_back((cm.array() * lambda.array()).sum());
    if (cfg.record_iterates) out.iterates.push_back(lambda);
    out.iterations = it;
    const double err = stop.push(lambda);
    if (level && it % cfg.refresh_every == 0) {
      const Vector mdist = row_quadratic_forms(dm, lambda);
      const Vector ndist = row_quadratic_forms(dn, lambda);
      const auto sel = select_pairs_absolute_indices(std::span<const double>(mdist.data(), mdist.size()),
                                                     std::span<const double>(ndist.data(), ndist.size()), *level);
      set_weights(wm, sel.must_link);
      set_weights(wn, sel.cannot_link);
      cm = weighted_gram(dm, wm);
    }
    if (err <= cfg.tol) {
      out.converged = true;
      break;
    }
  }
  out.final_objective = (cm.array() * lambda.array()).sum();
  out.lambda = MetricMatrix::from_matrix(lambda);
  return out;
}

}  // namespace

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::relative: return "relative";
    case LearnerKind::relative_robust: return "relative_robust";
    case LearnerKind::absolute: return "absolute";
    case LearnerKind::absolute_robust: return "absolute_robust";
  }
  return "unknown";
}

double relative_loss(const MetricMatrix& metric, const TripletSet& r, const LabeledDataset& data) {
  double total = 0.0;
  for (const auto& t : r.triplets) total += triplet_hinge(metric, data, t);
  return total;
}

SymMatrix relative_subgradient(const MetricMatrix& metric, const TripletSet& active, const LabeledDataset& data,
                               double frobenius_reg) {
  const auto d = static_cast<Eigen::Index>(data.dim());
  Matrix g = Matrix::Zero(d, d);
  for (const auto& t : active.triplets) {
    if (triplet_hinge(metric, data, t) <= 0.0) continue;
    const Vector a = data.x(t.i) - data.x(t.j);
    const Vector b = data.x(t.i) - data.x(t.k);
    g += a * a.transpose() - b * b.transpose();
  }
  if (frobenius_reg > 0.0) g += 2.0 * frobenius_reg * metric.matrix();
  return SymMatrix(g);
}

RelativeWeights inner_max_weights_relative(std::span<const double> hinges, const RobustLevel& level) {
  if (hinges.empty()) throw InvalidArgument("relative constraint set is empty");
  const double budget = level.alpha() * static_cast<double>(hinges.size());
  std::vector<std::size_t> order(hinges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return hinges[a] > hinges[b]; });
  RelativeWeights w;
  w.q.assign(hinges.size(), 0.0);
  double left = budget;
  for (std::size_t idx : order) {
    if (left <= 1e-12) break;
    const double q = std::min(1.0, left);
    w.q[idx] = q;
    left -= q;
  }
  std::vector<double> terms(hinges.size());
  for (std::size_t t = 0; t < hinges.size(); ++t) terms[t] = w.q[t] * hinges[t];
  w.value = exact_sum(terms);
  return w;
}

RelativeWeights inner_max_weights_relative(const MetricMatrix& metric, const TripletSet& r,
                                           const LabeledDataset& data, const RobustLevel& level) {
  std::vector<double> h;
  h.reserve(r.size());
  for (const auto& t : r.triplets) h.push_back(triplet_hinge(metric, data, t));
  return inner_max_weights_relative(h, level);
}

AbsoluteWeights inner_max_weights_absolute(std::span<const double> m_dist, std::span<const double> n_dist,
                                           const RobustLevel& level) {
  const auto sel = select_pairs_absolute_indices(m_dist, n_dist, level);
  AbsoluteWeights w;
  w.eta.assign(m_dist.size(), 0.0);
  w.xi.assign(n_dist.size(), 0.0);
  std::vector<double> terms;
  for (std::size_t i : sel.must_link) {
    w.eta[i] = 1.0;
    terms.push_back(m_dist[i]);
  }
  w.value_m = exact_sum(terms);
  terms.clear();
  for (std::size_t i : sel.cannot_link) {
    w.xi[i] = 1.0;
    terms.push_back(n_dist[i]);
  }
  w.value_n = exact_sum(terms);
  return w;
}

AbsoluteWeights inner_max_weights_absolute(const MetricMatrix& metric, const PairSet& m, const PairSet& n,
                                           const LabeledDataset& data, const RobustLevel& level) {
  std::vector<double> dm, dn;
  for (const auto& p : m.pairs) dm.push_back(pair_distance_sq(metric, data, p));
  for (const auto& p : n.pairs) dn.push_back(pair_distance_sq(metric, data, p));
  return inner_max_weights_absolute(dm, dn, level);
}

LearnedMetric learn_relative(const LabeledDataset& data, const TripletSet& r, const RelativeConfig& config) {
  return run_relative(data, r, nullptr, config);
}

LearnedMetric learn_relative_robust(const LabeledDataset& data, const TripletSet& r, const RobustLevel& level,
                                    const RelativeConfig& config) {
  return run_relative(data, r, &level, config);
}

LearnedMetric learn_absolute(const LabeledDataset& data, const PairSet& m, const PairSet& n,
                             const AbsoluteConfig& config) {
  return run_absolute(data, m, n, nullptr, config);
}

LearnedMetric learn_absolute_robust(const LabeledDataset& data, const PairSet& m, const PairSet& n,
                                    const RobustLevel& level, const AbsoluteConfig& config) {
  return run_absolute(data, m, n, &level, config);
}

void write_metric_sidecar(std::ostream& os, const LearnedMetric& learned) {
  os.precision(17);
  os << "learner = " << to_string(learned.kind) << '\n'
     << "alpha = " << learned.alpha << '\n'
     << "seed = " << learned.seed << '\n'
     << "iterations = " << learned.iterations << '\n'
     << "converged = " << (learned.converged ? "true" : "false") << '\n'
     << "final_objective = " << learned.final_objective << '\n';
}

}  // namespace ddrdro
