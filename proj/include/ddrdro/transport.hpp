#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <vector>

#include "ddrdro/core.hpp"

namespace ddrdro {

/// Finitely supported probability measure over labeled points.
struct DiscreteDistribution {
  std::vector<LabeledSample> support;
  Vector mass;

  /// Throws InvalidArgument unless masses are >= 0 and sum to 1 within 1e-9
  /// and the support points are distinct.
  void validate() const;

  static DiscreteDistribution uniform(std::vector<LabeledSample> support);
  static DiscreteDistribution empirical(const LabeledDataset& data);
};

using CostFunction = std::function<ExtendedCost(const LabeledSample&, const LabeledSample&)>;

enum class CostPower {
  squared,  // d_M^2 on equal labels
  linear    // d_M on equal labels
};

/// Label-preserving Mahalanobis cost; `squared` is cost_c_lambda.
CostFunction mahalanobis_cost(const MetricMatrix& metric, CostPower power = CostPower::squared);

/// Dense cost table for a transportation problem; infinite cells are
/// excluded from the variable set.
class CostMatrix {
 public:
  CostMatrix(std::size_t rows, std::size_t cols);

  static CostMatrix from_function(const std::vector<LabeledSample>& from, const std::vector<LabeledSample>& to,
                                  const CostFunction& cost);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  void set(std::size_t i, std::size_t j, ExtendedCost c);
  bool finite(std::size_t i, std::size_t j) const { return finite_[i * cols_ + j] != 0; }
  double value(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

 private:
  std::size_t rows_, cols_;
  std::vector<double> values_;
  std::vector<char> finite_;
};

struct TransportPlan {
  Matrix plan;  // rows: source support, cols: target support
  double value = 0.0;
  std::size_t pivots = 0;
};

/// Upper bound on rows * cols accepted by the exact solver.
inline constexpr std::size_t kMaxCouplingVariables = 10000;

/// Exact transportation simplex: minimize sum c_ij pi_ij subject to row sums
/// `supply`, column sums `demand`, pi >= 0, pi_ij = 0 on infinite cells.
/// Throws InfeasibleError when every feasible coupling needs an infinite cell.
TransportPlan solve_transport(const Vector& supply, const Vector& demand, const CostMatrix& cost);

/// Optimal transport discrepancy D_c(P, Q) and an optimal coupling.
TransportPlan ot_discrepancy(const DiscreteDistribution& p, const DiscreteDistribution& q, const CostFunction& cost);

/// Worst-case expected loss over distributions supported on `candidates`
/// within transport budget `delta` of `base`.
struct WorstCaseProblem {
  DiscreteDistribution base;
  std::vector<LabeledSample> candidates;
  std::vector<double> loss_at;
  double delta = 0.0;
  CostFunction cost;
};

struct WorstCaseResult {
  double value = 0.0;
  DiscreteDistribution worst;
  /// Optimal multiplier of the budget constraint.
  double multiplier = 0.0;
  /// Expected transport cost of the optimal coupling (<= delta).
  double transported = 0.0;
  /// Optimal coupling: entry (u, i) is mass moved from base point i to candidate u.
  Matrix coupling;
};

/// Solves the coupling LP
///   max sum_{u,i} loss(u) pi(u,i)
///   s.t. sum_u pi(u,i) = mass_i, sum c(u,i) pi(u,i) <= delta, pi >= 0
/// exactly through its one-dimensional Lagrangian dual, which is a convex
/// piecewise-linear function of the budget multiplier.
WorstCaseResult worst_case_expectation(const WorstCaseProblem& problem);

/// Per base point, an axis-aligned grid with `steps` points per axis
/// spanning [x - radius, x + radius], plus the base point itself. Labels are
/// copied from the base point. Dimension must be 1 or 2.
std::vector<LabeledSample> axis_grid_candidates(const DiscreteDistribution& base, double radius, std::size_t steps);

void write_plan_csv(std::ostream& os, const TransportPlan& plan);

}  // namespace ddrdro
