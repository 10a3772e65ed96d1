#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ddrdro/constraints.hpp"
#include "ddrdro/core.hpp"

namespace ddrdro {

enum class StepSchedule {
  constant,     // step_size every iteration
  inverse_sqrt  // step_size / sqrt(t)
};

struct RelativeConfig {
  double step_size = 0.01;
  std::size_t refresh_every = 5;
  std::size_t window = 50;
  double tol = 1e-3;
  std::size_t max_iters = 5000;
  double frobenius_reg = 0.0;
  StepSchedule schedule = StepSchedule::constant;
  std::uint64_t seed = 0;
  bool record_iterates = false;
};

enum class AbsoluteInner {
  exact,       // rank-one optimum from the generalized eigenproblem of (C_N, C_M)
  alternating  // fixed steps along -C_M, then half-space and PSD projections
};

struct AbsoluteConfig {
  AbsoluteInner inner = AbsoluteInner::exact;
  /// Step length and steps per iteration of the alternating inner procedure.
  double inner_step = 0.1;
  std::size_t inner_iters = 200;
  std::size_t refresh_every = 5;
  std::size_t window = 50;
  double tol = 1e-3;
  std::size_t max_iters = 2000;
  std::uint64_t seed = 0;
  bool record_iterates = false;
};

enum class LearnerKind { relative, relative_robust, absolute, absolute_robust };

std::string to_string(LearnerKind kind);

struct LearnedMetric {
  MetricMatrix lambda = MetricMatrix::identity(1);
  LearnerKind kind = LearnerKind::relative;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  /// Objective over the active constraint set, one entry per iteration.
  std::vector<double> trace;
  std::size_t iterations = 0;
  bool converged = false;
  /// Objective of the returned matrix over the final active set.
  double final_objective = 0.0;
  /// Randomly drawn initial active subsets (indices into R, or M then N).
  std::vector<std::size_t> initial_active;
  std::vector<std::size_t> initial_active_n;
  /// Every iterate, when the config asks for it.
  std::vector<Matrix> iterates;
};

/// Sum over R of (d^2(x_i, x_j) - d^2(x_i, x_k) + 1)_+.
double relative_loss(const MetricMatrix& metric, const TripletSet& r, const LabeledDataset& data);

/// Subgradient of relative_loss over `active`: sum over triplets with a
/// positive hinge of (x_i - x_j)(x_i - x_j)^T - (x_i - x_k)(x_i - x_k)^T,
/// plus 2 * frobenius_reg * metric.
SymMatrix relative_subgradient(const MetricMatrix& metric, const TripletSet& active, const LabeledDataset& data,
                               double frobenius_reg = 0.0);

/// Optimal inner weights of the robust relative problem: q in [0, 1]^|R|
/// with sum q <= alpha |R| maximizing sum q_t hinge_t.
struct RelativeWeights {
  std::vector<double> q;
  double value = 0.0;
};

/// Optimal inner weights of the robust absolute problem: eta on M (largest
/// distances, budget floor(alpha |M|)), xi on N (smallest, budget ceil(alpha |N|)).
struct AbsoluteWeights {
  std::vector<double> eta;
  std::vector<double> xi;
  double value_m = 0.0;  // sum eta * d^2 over M
  double value_n = 0.0;  // sum xi * d^2 over N
};

RelativeWeights inner_max_weights_relative(const MetricMatrix& metric, const TripletSet& r,
                                           const LabeledDataset& data, const RobustLevel& level);
RelativeWeights inner_max_weights_relative(std::span<const double> hinges, const RobustLevel& level);

AbsoluteWeights inner_max_weights_absolute(const MetricMatrix& metric, const PairSet& m, const PairSet& n,
                                           const LabeledDataset& data, const RobustLevel& level);
AbsoluteWeights inner_max_weights_absolute(std::span<const double> m_dist, std::span<const double> n_dist,
                                           const RobustLevel& level);

/// Relative metric learning by PSD-projected subgradient descent from the identity.
LearnedMetric learn_relative(const LabeledDataset& data, const TripletSet& r, const RelativeConfig& config);

/// Robust relative metric learning: the subgradient runs over the active
/// set R_alpha, which starts as a uniform random alpha-fraction of R and is
/// reset to the top floor(alpha |R|) hinges every refresh_every iterations.
LearnedMetric learn_relative_robust(const LabeledDataset& data, const TripletSet& r, const RobustLevel& level,
                                    const RelativeConfig& config);

/// Absolute metric learning: minimize <C_M, L> subject to <C_N, L> >= 1 and
/// L PSD, via gradient steps with alternating projections onto the
/// half-space and the PSD cone.
LearnedMetric learn_absolute(const LabeledDataset& data, const PairSet& m, const PairSet& n,
                             const AbsoluteConfig& config);

/// Robust absolute metric learning: the inner solve runs on (M_alpha, N_alpha),
/// refreshed from all pair distances every refresh_every outer iterations.
LearnedMetric learn_absolute_robust(const LabeledDataset& data, const PairSet& m, const PairSet& n,
                                    const RobustLevel& level, const AbsoluteConfig& config);

/// Sidecar text written next to a saved metric: key = value lines.
void write_metric_sidecar(std::ostream& os, const LearnedMetric& learned);

}  // namespace ddrdro
