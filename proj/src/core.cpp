#include "ddrdro/core.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ddrdro/errors.hpp"

namespace ddrdro {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

LabeledDataset::LabeledDataset(Matrix features, std::vector<int> labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
  if (labels_.empty() || features_.rows() == 0) throw DataError("dataset is empty");
  if (static_cast<std::size_t>(features_.rows()) != labels_.size())
    throw DataError("feature rows and label count differ");
  if (features_.cols() == 0) throw DataError("dataset has no predictor columns");
  if (!all_finite(features_)) throw DataError("dataset contains non-finite feature values");
  for (int y : labels_)
    if (y != -1 && y != 1) throw DataError("labels must be -1 or +1");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  Matrix f(static_cast<Eigen::Index>(indices.size()), features_.cols());
  std::vector<int> l;
  l.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) throw InvalidArgument("subset index out of range");
    f.row(static_cast<Eigen::Index>(r)) = features_.row(static_cast<Eigen::Index>(indices[r]));
    l.push_back(labels_[indices[r]]);
  }
  return LabeledDataset(std::move(f), std::move(l));
}

SymMatrix::SymMatrix(const Matrix& a) {
  if (a.rows() != a.cols()) throw InvalidArgument("symmetric matrix must be square");
  m_ = (a + a.transpose()) * 0.5;
}

SymMatrix SymMatrix::zero(std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  return SymMatrix(Matrix::Zero(n, n));
}

MetricMatrix MetricMatrix::from_matrix(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw DataError("metric matrix must be square and nonempty");
  if (!m.allFinite()) throw DataError("metric matrix has non-finite entries");
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9) throw DataError("metric matrix is not symmetric (max |m_ij - m_ji| > 1e-9)");
  Matrix sym = (m + m.transpose()) * 0.5;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw DataError("eigendecomposition of metric matrix failed");
  if (es.eigenvalues().minCoeff() < -kPsdTolerance) throw DataError("metric matrix is not positive semidefinite");
  return MetricMatrix(std::move(sym));
}

MetricMatrix MetricMatrix::identity(std::size_t d) {
  if (d == 0) throw InvalidArgument("dimension must be positive");
  const auto n = static_cast<Eigen::Index>(d);
  return MetricMatrix(Matrix::Identity(n, n));
}

double MetricMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double ExtendedCost::value() const {
  if (infinite_) throw std::logic_error("value() called on an infinite cost");
  return v_;
}

bool operator==(const ExtendedCost& a, const ExtendedCost& b) {
  if (a.infinite_ || b.infinite_) return a.infinite_ == b.infinite_;
  return a.v_ == b.v_;
}

std::partial_ordering operator<=>(const ExtendedCost& a, const ExtendedCost& b) {
  if (a.infinite_ && b.infinite_) return std::partial_ordering::equivalent;
  if (a.infinite_) return std::partial_ordering::greater;
  if (b.infinite_) return std::partial_ordering::less;
  return a.v_ <=> b.v_;
}

std::ostream& operator<<(std::ostream& os, const ExtendedCost& c) {
  if (c.is_infinite()) return os << "inf";
  return os << c.value();
}

Standardizer::Standardizer(Vector means, Vector scales) : means_(std::move(means)), scales_(std::move(scales)) {
  if (means_.size() != scales_.size()) throw InvalidArgument("standardizer means/scales size mismatch");
  for (Eigen::Index j = 0; j < scales_.size(); ++j)
    if (!(scales_[j] > 0.0)) throw InvalidArgument("standardizer scales must be positive");
}

Vector Standardizer::apply(const Vector& x) const {
  if (x.size() != means_.size()) throw InvalidArgument("dimension mismatch in standardizer");
  return ((x - means_).array() / scales_.array()).matrix();
}

LabeledDataset Standardizer::apply(const LabeledDataset& data) const {
  if (data.dim() != static_cast<std::size_t>(means_.size()))
    throw InvalidArgument("dimension mismatch in standardizer");
  Matrix f = data.features();
  for (Eigen::Index j = 0; j < f.cols(); ++j) f.col(j) = ((f.col(j).array() - means_[j]) / scales_[j]).matrix();
  return LabeledDataset(std::move(f), data.labels());
}

StandardizeResult standardize(const LabeledDataset& data) {
  const Matrix& f = data.features();
  const auto n = static_cast<double>(f.rows());
  Vector means = f.colwise().sum().transpose() / n;
  Vector scales(f.cols());
  for (Eigen::Index j = 0; j < f.cols(); ++j) {
    const double var = (f.col(j).array() - means[j]).square().sum() / n;
    const double sd = std::sqrt(var);
    scales[j] = sd > 1e-12 ? sd : 1.0;
  }
  Standardizer s(std::move(means), std::move(scales));
  LabeledDataset out = s.apply(data);
  return {std::move(out), std::move(s)};
}

double exact_sum(std::span<const double> xs) {
  // Nonoverlapping partials whose exact sum equals the running total.
  std::vector<double> partials;
  for (double x : xs) {
    std::size_t used = 0;
    for (std::size_t j = 0; j < partials.size(); ++j) {
      double y = partials[j];
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[used++] = lo;
      x = hi;
    }
    partials.resize(used);
    partials.push_back(x);
  }
  if (partials.empty()) return 0.0;
  std::size_t n = partials.size();
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    lo = y - (hi - x);
    if (lo != 0.0) break;
  }
  // Round half to even when the remainder sits exactly on a tie.
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

double mahalanobis_sq(const MetricMatrix& metric, const Vector& x, const Vector& x2) {
  if (x.size() != x2.size() || static_cast<std::size_t>(x.size()) != metric.dim())
    throw InvalidArgument("dimension mismatch in mahalanobis_sq");
  const Vector diff = x - x2;
  const double q = diff.dot(metric.matrix() * diff);
  return q > 0.0 ? q : 0.0;
}

ExtendedCost cost_c_lambda(const MetricMatrix& metric, const LabeledSample& u, const LabeledSample& v) {
  const double d2 = mahalanobis_sq(metric, u.x, v.x);
  if (u.y != v.y) return ExtendedCost::infinite();
  return ExtendedCost::finite(d2);
}

MetricMatrix project_psd(const SymMatrix& s) {
  const Matrix& m = s.matrix();
  if (!m.allFinite()) throw DataError("project_psd: non-finite input");
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) throw DataError("project_psd: eigendecomposition failed");
  const Vector& ev = es.eigenvalues();
  if (ev.minCoeff() >= 0.0) return MetricMatrix(m);
  const Vector clipped = ev.cwiseMax(0.0);
  const Matrix& v = es.eigenvectors();
  Matrix out = v * clipped.asDiagonal() * v.transpose();
  return MetricMatrix((out + out.transpose()) * 0.5);
}

void write_metric(std::ostream& os, const MetricMatrix& metric) {
  const Matrix& m = metric.matrix();
  os << m.rows() << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << m(i, j);
    }
    os << '\n';
  }
}

MetricMatrix read_metric(std::istream& is) {
  long long d = 0;
  if (!(is >> d) || d <= 0) throw DataError("metric file: first line must be a positive dimension");
  Matrix m(d, d);
  for (long long i = 0; i < d; ++i)
    for (long long j = 0; j < d; ++j)
      if (!(is >> m(i, j))) throw DataError("metric file: expected " + std::to_string(d * d) + " entries");
  std::string rest;
  if (is >> rest) throw DataError("metric file: trailing content after matrix");
  return MetricMatrix::from_matrix(m);
}

void save_metric(const std::string& path, const MetricMatrix& metric) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open for writing: " + path);
  write_metric(os, metric);
}

MetricMatrix load_metric(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open metric file: " + path);
  return read_metric(is);
}

}  // namespace ddrdro
