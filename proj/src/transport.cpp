#include "ddrdro/transport.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <stdexcept>
#include <ostream>

#include "ddrdro/errors.hpp"

namespace ddrdro {

namespace {

// Cell costs are compared lexicographically as (number of infinite cells,
// finite cost). Minimizing this drives flow off infinite cells first and
// never mixes an artificial magnitude into the finite costs.
struct LexCost {
  double inf = 0.0;
  double fin = 0.0;

  LexCost operator+(const LexCost& o) const { return {inf + o.inf, fin + o.fin}; }
  LexCost operator-(const LexCost& o) const { return {inf - o.inf, fin - o.fin}; }
};

class TransportSimplex {
 public:
  TransportSimplex(const Vector& supply, const Vector& demand, const CostMatrix& cost)
      : m_(cost.rows()), n_(cost.cols()), supply_(supply), demand_(demand), cost_(cost) {
    double scale = 1.0;
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (cost.finite(i, j)) scale = std::max(scale, std::abs(cost.value(i, j)));
    eps_ = 1e-12 * scale;
    flow_.assign(m_ * n_, 0.0);
    basic_.assign(m_ * n_, 0);
  }

  TransportPlan solve() {
    northwest_corner();
    std::size_t pivots = 0;
    std::size_t degenerate_run = 0;
    const std::size_t max_pivots = 50 * (m_ + n_) * (m_ + n_) + 1000;
    for (;;) {
      compute_potentials();
      const bool bland = degenerate_run > m_ + n_;
      const auto entering = price(bland);
      if (!entering) break;
      if (++pivots > max_pivots) throw std::runtime_error("transportation simplex exceeded its pivot limit");
      const double theta = pivot(entering->first, entering->second);
      degenerate_run = theta > 0.0 ? 0 : degenerate_run + 1;
    }
    TransportPlan out;
    out.pivots = pivots;
    out.plan = Matrix::Zero(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = 0; j < n_; ++j) {
        const double x = flow_[i * n_ + j];
        if (!cost_.finite(i, j)) {
          if (x > 1e-12) throw InfeasibleError("no coupling with finite cost exists");
          continue;
        }
        out.plan(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x;
        out.value += x * cost_.value(i, j);
      }
    return out;
  }

 private:
  LexCost cell_cost(std::size_t i, std::size_t j) const {
    if (!cost_.finite(i, j)) return {1.0, 0.0};
    return {0.0, cost_.value(i, j)};
  }

  void set_basic(std::size_t i, std::size_t j, double x) {
    basic_[i * n_ + j] = 1;
    flow_[i * n_ + j] = x;
  }

  // Staircase starting basis with exactly m + n - 1 cells (degenerate zeros kept).
  void northwest_corner() {
    std::vector<double> a(supply_.data(), supply_.data() + m_);
    std::vector<double> b(demand_.data(), demand_.data() + n_);
    std::size_t i = 0, j = 0;
    for (;;) {
      const double x = std::max(0.0, std::min(a[i], b[j]));
      set_basic(i, j, x);
      a[i] -= x;
      b[j] -= x;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (i == m_ - 1)
        ++j;
      else if (j == n_ - 1)
        ++i;
      else if (a[i] < b[j])
        ++i;
      else
        ++j;
    }
  }

  void build_adjacency() {
    adj_.assign(m_ + n_, {});
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (basic_[i * n_ + j]) {
          adj_[i].push_back(m_ + j);
          adj_[m_ + j].push_back(i);
        }
  }

  void compute_potentials() {
    build_adjacency();
    pot_.assign(m_ + n_, LexCost{});
    std::vector<char> seen(m_ + n_, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (std::size_t next : adj_[node]) {
        if (seen[next]) continue;
        seen[next] = 1;
        // u_i + v_j = c_ij on basic cells.
        if (node < m_)
          pot_[next] = cell_cost(node, next - m_) - pot_[node];
        else
          pot_[next] = cell_cost(next, node - m_) - pot_[node];
        stack.push_back(next);
      }
    }
  }

  bool negative(const LexCost& r) const { return r.inf < -0.5 || (std::abs(r.inf) < 0.5 && r.fin < -eps_); }

  bool lex_less(const LexCost& a, const LexCost& b) const {
    if (std::abs(a.inf - b.inf) >= 0.5) return a.inf < b.inf;
    return a.fin < b.fin;
  }

  std::optional<std::pair<std::size_t, std::size_t>> price(bool bland) const {
    std::optional<std::pair<std::size_t, std::size_t>> best;
    LexCost best_r;
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = 0; j < n_; ++j) {
        if (basic_[i * n_ + j]) continue;
        const LexCost r = cell_cost(i, j) - pot_[i] - pot_[m_ + j];
        if (!negative(r)) continue;
        if (bland) return std::make_pair(i, j);
        if (!best || lex_less(r, best_r)) {
          best = std::make_pair(i, j);
          best_r = r;
        }
      }
    return best;
  }

  // Path in the basis tree from column node of j to row node i; returns
  // the cells along it in order starting next to column j.
  std::vector<std::pair<std::size_t, std::size_t>> tree_path(std::size_t i, std::size_t j) const {
    const std::size_t start = m_ + j, goal = i;
    std::vector<std::size_t> parent(m_ + n_, std::numeric_limits<std::size_t>::max());
    std::vector<std::size_t> stack{start};
    parent[start] = start;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      if (node == goal) break;
      for (std::size_t next : adj_[node])
        if (parent[next] == std::numeric_limits<std::size_t>::max()) {
          parent[next] = node;
          stack.push_back(next);
        }
    }
    std::vector<std::size_t> nodes;
    for (std::size_t v = goal; v != start; v = parent[v]) nodes.push_back(v);
    nodes.push_back(start);
    std::reverse(nodes.begin(), nodes.end());
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
      const std::size_t a = nodes[k], b = nodes[k + 1];
      cells.push_back(a < m_ ? std::make_pair(a, b - m_) : std::make_pair(b, a - m_));
    }
    return cells;
  }

  double pivot(std::size_t ei, std::size_t ej) {
    const auto path = tree_path(ei, ej);
    // Cells alternate -, +, -, ... starting next to column ej.
    double theta = std::numeric_limits<double>::infinity();
    std::size_t leave = 0;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const double x = flow_[path[k].first * n_ + path[k].second];
      if (x < theta) {
        theta = x;
        leave = k;
      }
    }
    theta = std::max(theta, 0.0);
    for (std::size_t k = 0; k < path.size(); ++k) {
      double& x = flow_[path[k].first * n_ + path[k].second];
      x += (k % 2 == 0) ? -theta : theta;
      if (x < 0.0) x = 0.0;
    }
    const auto [li, lj] = path[leave];
    basic_[li * n_ + lj] = 0;
    flow_[li * n_ + lj] = 0.0;
    set_basic(ei, ej, theta);
    return theta;
  }

  std::size_t m_, n_;
  const Vector& supply_;
  const Vector& demand_;
  const CostMatrix& cost_;
  double eps_ = 1e-12;
  std::vector<double> flow_;
  std::vector<char> basic_;
  std::vector<std::vector<std::size_t>> adj_;
  std::vector<LexCost> pot_;
};

// Upper envelope of y = b - c * lambda over lambda > 0, as the sequence of
// active lines in order of increasing lambda (decreasing c).
struct Line {
  double c;
  double b;
  std::size_t id;
};

struct Envelope {
  std::vector<Line> lines;
  std::vector<double> breaks;  // breaks[t]: lines[t] -> lines[t + 1]
};

Envelope upper_envelope(std::vector<Line> lines) {
  // Slope -c ascending means c descending; equal c keeps the largest b.
  std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    if (a.c != b.c) return a.c > b.c;
    if (a.b != b.b) return a.b > b.b;
    return a.id < b.id;
  });
  std::vector<Line> hull;
  for (const Line& l : lines) {
    if (!hull.empty() && hull.back().c == l.c) continue;
    while (hull.size() >= 2) {
      const Line& l1 = hull[hull.size() - 2];
      const Line& l2 = hull.back();
      // Slopes k = -c; l2 is redundant when x(l1, l) <= x(l1, l2).
      const double lhs = (l1.b - l.b) * (l1.c - l2.c);
      const double rhs = (l1.b - l2.b) * (l1.c - l.c);
      if (lhs <= rhs)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(l);
  }
  Envelope env;
  for (std::size_t t = 0; t < hull.size(); ++t) {
    if (t + 1 < hull.size()) {
      const double x = (hull[t].b - hull[t + 1].b) / (hull[t].c - hull[t + 1].c);
      if (x <= 0.0) continue;  // hull[t] is never strictly best for lambda > 0
      env.lines.push_back(hull[t]);
      env.breaks.push_back(x);
    } else {
      env.lines.push_back(hull[t]);
    }
  }
  return env;
}

}  // namespace

void DiscreteDistribution::validate() const {
  if (support.empty()) throw InvalidArgument("distribution has empty support");
  if (static_cast<std::size_t>(mass.size()) != support.size())
    throw InvalidArgument("distribution mass and support sizes differ");
  double total = 0.0;
  for (Eigen::Index k = 0; k < mass.size(); ++k) {
    if (!(mass[k] >= 0.0)) throw InvalidArgument("distribution masses must be nonnegative");
    total += mass[k];
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("distribution masses must sum to 1");
  const std::size_t d = static_cast<std::size_t>(support.front().x.size());
  for (const auto& s : support)
    if (static_cast<std::size_t>(s.x.size()) != d) throw InvalidArgument("distribution support dimensions differ");
  std::vector<std::size_t> order(support.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  auto key_less = [&](std::size_t a, std::size_t b) {
    if (support[a].y != support[b].y) return support[a].y < support[b].y;
    return std::lexicographical_compare(support[a].x.data(), support[a].x.data() + d, support[b].x.data(),
                                        support[b].x.data() + d);
  };
  std::sort(order.begin(), order.end(), key_less);
  for (std::size_t k = 1; k < order.size(); ++k)
    if (!key_less(order[k - 1], order[k])) throw InvalidArgument("distribution support points must be distinct");
}

DiscreteDistribution DiscreteDistribution::uniform(std::vector<LabeledSample> support) {
  DiscreteDistribution out;
  const auto n = static_cast<Eigen::Index>(support.size());
  out.support = std::move(support);
  out.mass = Vector::Constant(n, n ? 1.0 / static_cast<double>(n) : 0.0);
  return out;
}

DiscreteDistribution DiscreteDistribution::empirical(const LabeledDataset& data) {
  std::vector<LabeledSample> s;
  s.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) s.push_back(data.sample(i));
  return uniform(std::move(s));
}

CostFunction mahalanobis_cost(const MetricMatrix& metric, CostPower power) {
  return [metric, power](const LabeledSample& u, const LabeledSample& v) {
    const ExtendedCost c = cost_c_lambda(metric, u, v);
    if (c.is_infinite() || power == CostPower::squared) return c;
    return ExtendedCost::finite(std::sqrt(c.value()));
  };
}

CostMatrix::CostMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0.0), finite_(rows * cols, 1) {}

void CostMatrix::set(std::size_t i, std::size_t j, ExtendedCost c) {
  if (c.is_infinite()) {
    finite_[i * cols_ + j] = 0;
    values_[i * cols_ + j] = 0.0;
  } else {
    if (!(c.value() >= 0.0) || !std::isfinite(c.value())) throw InvalidArgument("costs must be nonnegative");
    finite_[i * cols_ + j] = 1;
    values_[i * cols_ + j] = c.value();
  }
}

CostMatrix CostMatrix::from_function(const std::vector<LabeledSample>& from, const std::vector<LabeledSample>& to,
                                     const CostFunction& cost) {
  CostMatrix m(from.size(), to.size());
  for (std::size_t i = 0; i < from.size(); ++i)
    for (std::size_t j = 0; j < to.size(); ++j) m.set(i, j, cost(from[i], to[j]));
  return m;
}

TransportPlan solve_transport(const Vector& supply, const Vector& demand, const CostMatrix& cost) {
  if (static_cast<std::size_t>(supply.size()) != cost.rows() || static_cast<std::size_t>(demand.size()) != cost.cols())
    throw InvalidArgument("transport marginals do not match the cost table");
  if (cost.rows() == 0 || cost.cols() == 0) throw InvalidArgument("transport problem has an empty side");
  if (cost.rows() * cost.cols() > kMaxCouplingVariables)
    throw InvalidArgument("transport problem exceeds " + std::to_string(kMaxCouplingVariables) + " coupling variables");
  if ((supply.array() < 0.0).any() || (demand.array() < 0.0).any())
    throw InvalidArgument("transport marginals must be nonnegative");
  if (std::abs(supply.sum() - demand.sum()) > 1e-9) throw InvalidArgument("transport marginals must balance");
  return TransportSimplex(supply, demand, cost).solve();
}

TransportPlan ot_discrepancy(const DiscreteDistribution& p, const DiscreteDistribution& q, const CostFunction& cost) {
  p.validate();
  q.validate();
  return solve_transport(p.mass, q.mass, CostMatrix::from_function(p.support, q.support, cost));
}

WorstCaseResult worst_case_expectation(const WorstCaseProblem& prob) {
  prob.base.validate();
  if (!(prob.delta >= 0.0)) throw InvalidArgument("delta must be nonnegative");
  if (prob.candidates.size() != prob.loss_at.size()) throw InvalidArgument("one loss value per candidate required");
  if (prob.candidates.empty()) throw InvalidArgument("candidate set is empty");
  if (!prob.cost) throw InvalidArgument("cost function missing");

  const std::size_t n = prob.base.support.size();
  const std::size_t k = prob.candidates.size();
  std::vector<Envelope> env(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Line> lines;
    for (std::size_t u = 0; u < k; ++u) {
      const ExtendedCost c = prob.cost(prob.candidates[u], prob.base.support[i]);
      if (c.is_finite()) lines.push_back({c.value(), prob.loss_at[u], u});
    }
    if (lines.empty()) throw InfeasibleError("a base point has no candidate at finite cost");
    env[i] = upper_envelope(std::move(lines));
  }

  const auto mass = [&](std::size_t i) { return prob.base.mass[static_cast<Eigen::Index>(i)]; };

  // Transported cost of the argmax choice just above lambda = 0 and in the limit.
  double s_zero = 0.0, s_inf = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s_zero += mass(i) * env[i].lines.front().c;
    s_inf += mass(i) * env[i].lines.back().c;
  }
  const double slack = 1e-12 * (1.0 + prob.delta);
  if (s_inf > prob.delta + slack) throw InfeasibleError("candidates do not contain the base support");

  double lambda_star = 0.0;
  if (s_zero > prob.delta + slack) {
    // Walk breakpoints upward; S(lambda) only decreases. lambda* is the first
    // breakpoint after which S <= delta.
    std::vector<std::pair<double, std::size_t>> events;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < env[i].breaks.size(); ++t) events.emplace_back(env[i].breaks[t], i);
    std::sort(events.begin(), events.end());
    std::vector<std::size_t> pos(n, 0);
    double s = s_zero;
    for (const auto& [x, i] : events) {
      const auto& ls = env[i].lines;
      s -= mass(i) * (ls[pos[i]].c - ls[pos[i] + 1].c);
      ++pos[i];
      if (s <= prob.delta + slack) {
        lambda_star = x;
        break;
      }
    }
  }

  // For each base point: active lines immediately left and right of lambda*.
  std::vector<const Line*> left(n), right(n);
  double s_left = 0.0, s_right = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = env[i];
    std::size_t t = 0;
    while (t < e.breaks.size() && e.breaks[t] < lambda_star) ++t;
    left[i] = &e.lines[t];
    right[i] = (t < e.breaks.size() && e.breaks[t] == lambda_star) ? &e.lines[t + 1] : &e.lines[t];
    if (lambda_star == 0.0) left[i] = right[i];
    s_left += mass(i) * left[i]->c;
    s_right += mass(i) * right[i]->c;
  }
  double theta = 0.0;  // weight on the left (higher-cost) choice
  if (s_left > s_right) theta = std::clamp((prob.delta - s_right) / (s_left - s_right), 0.0, 1.0);

  WorstCaseResult out;
  out.multiplier = lambda_star;
  out.coupling = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double m = mass(i);
    out.coupling(static_cast<Eigen::Index>(right[i]->id), static_cast<Eigen::Index>(i)) += m * (1.0 - theta);
    out.coupling(static_cast<Eigen::Index>(left[i]->id), static_cast<Eigen::Index>(i)) += m * theta;
    out.value += m * ((1.0 - theta) * right[i]->b + theta * left[i]->b);
    out.transported += m * ((1.0 - theta) * right[i]->c + theta * left[i]->c);
  }
  const Vector cand_mass = out.coupling.rowwise().sum();
  for (std::size_t u = 0; u < k; ++u)
    if (cand_mass[static_cast<Eigen::Index>(u)] > 0.0) out.worst.support.push_back(prob.candidates[u]);
  out.worst.mass.resize(static_cast<Eigen::Index>(out.worst.support.size()));
  for (std::size_t u = 0, r = 0; u < k; ++u)
    if (cand_mass[static_cast<Eigen::Index>(u)] > 0.0) out.worst.mass[static_cast<Eigen::Index>(r++)] = cand_mass[static_cast<Eigen::Index>(u)];
  return out;
}

std::vector<LabeledSample> axis_grid_candidates(const DiscreteDistribution& base, double radius, std::size_t steps) {
  if (base.support.empty()) throw InvalidArgument("empty base distribution");
  const auto d = base.support.front().x.size();
  if (d < 1 || d > 2) throw InvalidArgument("candidate grids support dimension 1 or 2 only");
  if (steps < 2 || !(radius > 0.0)) throw InvalidArgument("grid needs at least 2 steps and a positive radius");
  std::vector<double> offsets(steps);
  for (std::size_t s = 0; s < steps; ++s)
    offsets[s] = -radius + 2.0 * radius * static_cast<double>(s) / static_cast<double>(steps - 1);
  std::vector<LabeledSample> out;
  for (const auto& b : base.support) {
    out.push_back(b);
    if (d == 1) {
      for (double o : offsets) {
        if (o == 0.0) continue;
        LabeledSample c = b;
        c.x[0] += o;
        out.push_back(std::move(c));
      }
    } else {
      for (double o0 : offsets)
        for (double o1 : offsets) {
          if (o0 == 0.0 && o1 == 0.0) continue;
          LabeledSample c = b;
          c.x[0] += o0;
          c.x[1] += o1;
          out.push_back(std::move(c));
        }
    }
  }
  return out;
}

void write_plan_csv(std::ostream& os, const TransportPlan& plan) {
  os << "row,col,mass\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < plan.plan.rows(); ++i)
    for (Eigen::Index j = 0; j < plan.plan.cols(); ++j)
      if (plan.plan(i, j) > 0.0) os << i << ',' << j << ',' << plan.plan(i, j) << '\n';
}

}  // namespace ddrdro
