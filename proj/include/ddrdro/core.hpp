#pragma once

#include <compare>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ddrdro {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Eigenvalues in [-kPsdTolerance, 0) count as zero.
inline constexpr double kPsdTolerance = 1e-9;

struct LabeledSample {
  Vector x;
  int y = 1;
};

/// Feature matrix (one row per sample) with labels in {-1, +1}.
///
/// The dataset doubles as the empirical distribution P_n: every sample
/// carries mass 1/n.
class LabeledDataset {
 public:
  LabeledDataset(Matrix features, std::vector<int> labels);

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features_.cols()); }

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }

  Vector x(std::size_t i) const { return features_.row(static_cast<Eigen::Index>(i)).transpose(); }
  int y(std::size_t i) const { return labels_[i]; }
  LabeledSample sample(std::size_t i) const { return {x(i), y(i)}; }

  LabeledDataset subset(std::span<const std::size_t> indices) const;

 private:
  Matrix features_;
  std::vector<int> labels_;
};

/// Real symmetric matrix. Construction symmetrizes as (A + A^T) / 2, so
/// entries(i, j) == entries(j, i) holds bit-for-bit.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Matrix& a);

  static SymMatrix zero(std::size_t d);

  const Matrix& matrix() const { return m_; }
  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }

 private:
  Matrix m_;
};

/// Symmetric positive semidefinite matrix defining the Mahalanobis form
/// d^2(x, x') = (x - x')^T M (x - x').
class MetricMatrix {
 public:
  /// Throws DataError unless `m` is square, symmetric within 1e-9 and
  /// has minimum eigenvalue >= -1e-9.
  static MetricMatrix from_matrix(const Matrix& m);
  static MetricMatrix identity(std::size_t d);

  const Matrix& matrix() const { return m_; }
  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  double min_eigenvalue() const;

 private:
  friend MetricMatrix project_psd(const SymMatrix& s);
  explicit MetricMatrix(Matrix m) : m_(std::move(m)) {}
  Matrix m_;
};

/// Value in [0, +inf]. Infinity is a distinguished state, never a large float.
class ExtendedCost {
 public:
  static ExtendedCost finite(double v) { return ExtendedCost(v, false); }
  static ExtendedCost infinite() { return ExtendedCost(0.0, true); }

  bool is_finite() const { return !infinite_; }
  bool is_infinite() const { return infinite_; }
  /// Throws std::logic_error when infinite.
  double value() const;

  friend bool operator==(const ExtendedCost& a, const ExtendedCost& b);
  friend std::partial_ordering operator<=>(const ExtendedCost& a, const ExtendedCost& b);

 private:
  ExtendedCost(double v, bool inf) : v_(v), infinite_(inf) {}
  double v_;
  bool infinite_;
};

std::ostream& operator<<(std::ostream& os, const ExtendedCost& c);

/// Affine map that standardizes predictor columns: (x - mean) / scale.
class Standardizer {
 public:
  Standardizer(Vector means, Vector scales);

  const Vector& means() const { return means_; }
  const Vector& scales() const { return scales_; }

  LabeledDataset apply(const LabeledDataset& data) const;
  Vector apply(const Vector& x) const;

 private:
  Vector means_;
  Vector scales_;
};

struct StandardizeResult {
  LabeledDataset data;
  Standardizer standardizer;
};

/// Centers every column and divides by its population std. Columns whose
/// std is at or below 1e-12 are centered only (scale 1).
StandardizeResult standardize(const LabeledDataset& data);

double mahalanobis_sq(const MetricMatrix& metric, const Vector& x, const Vector& x2);

/// Correctly rounded sum of finite values (Shewchuk partials), so the result
/// does not depend on their order.
double exact_sum(std::span<const double> xs);

/// Label-preserving transport cost: d^2_M(x, x') when labels agree, +inf otherwise.
ExtendedCost cost_c_lambda(const MetricMatrix& metric, const LabeledSample& u, const LabeledSample& v);

/// Frobenius-nearest PSD matrix: clip negative eigenvalues to zero.
/// An input that is already PSD is returned unchanged.
MetricMatrix project_psd(const SymMatrix& s);

// Metric matrix text format: first line d, then d rows of d decimals.
void write_metric(std::ostream& os, const MetricMatrix& metric);
MetricMatrix read_metric(std::istream& is);
void save_metric(const std::string& path, const MetricMatrix& metric);
MetricMatrix load_metric(const std::string& path);

}  // namespace ddrdro
