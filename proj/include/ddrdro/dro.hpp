#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>

#include "ddrdro/core.hpp"

namespace ddrdro {

enum class DroSolver {
  newton,     // damped Newton on the smoothed objective (default)
  subgradient // step 1/sqrt(t) with running average
};

struct TrainerConfig {
  double tol = 1e-8;
  std::size_t max_iters = 10000;
  double ridge_eps = 1e-8;
  double norm_smooth_eps = 1e-12;
  /// Unpenalized intercept; used by the baselines only.
  bool intercept = false;
  DroSolver solver = DroSolver::newton;
};

struct DroModel {
  Vector beta;
  double delta = 0.0;
  std::optional<MetricMatrix> lambda_ref;
  std::optional<double> intercept;
  /// Exact (unsmoothed) training objective at beta.
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;

  double margin(const Vector& x) const { return beta.dot(x) + intercept.value_or(0.0); }
};

/// log(1 + exp(-y beta^T x)), evaluated without overflow.
double logistic_loss(const Vector& beta, const Vector& x, int y);

/// sqrt(beta^T (L + ridge_eps I)^{-1} beta) through a Cholesky solve.
/// Throws InvalidArgument when the shifted matrix is not positive definite.
double dual_norm_lambda_inv(const Vector& beta, const MetricMatrix& lambda, double ridge_eps);

/// Mean logistic loss plus delta * ||beta||_{(L + ridge_eps I)^{-1}}.
double dro_objective(const LabeledDataset& data, const MetricMatrix& lambda, double delta, const Vector& beta,
                     double ridge_eps);

/// Minimizes mean logistic loss + delta ||beta||_{Lambda^{-1}}. No intercept.
DroModel train_dro(const LabeledDataset& data, const MetricMatrix& lambda, double delta, const TrainerConfig& config);

/// Unregularized logistic regression.
DroModel train_erm(const LabeledDataset& data, const TrainerConfig& config);

/// Mean logistic loss + penalty * ||beta||_1 by accelerated proximal gradient.
DroModel train_l1(const LabeledDataset& data, double penalty, const TrainerConfig& config);

struct Evaluation {
  double mean_log_loss = 0.0;
  double misclassification = 0.0;
  double accuracy() const { return 1.0 - misclassification; }
};

/// Labels are predicted as sign(margin) with sign(0) = +1.
Evaluation evaluate(const DroModel& model, const LabeledDataset& data);

/// 64-bit FNV-1a of the metric's text serialization, as 16 hex digits.
std::string metric_fingerprint(const MetricMatrix& metric);

// Model text format: `key value` lines (d, beta, delta, intercept, lambda_path, lambda_hash).
void write_model(std::ostream& os, const DroModel& model, const std::string& lambda_path = "");
DroModel read_model(std::istream& is);

}  // namespace ddrdro
