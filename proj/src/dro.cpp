#include "ddrdro/dro.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "ddrdro/errors.hpp"

namespace ddrdro {

namespace {

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void check_config(const TrainerConfig& c) {
  if (!(c.tol > 0.0) || c.max_iters == 0 || !(c.ridge_eps >= 0.0) || !(c.norm_smooth_eps >= 0.0))
    throw InvalidArgument("invalid trainer configuration");
}

Vector labels_of(const LabeledDataset& data) {
  Vector y(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) y[static_cast<Eigen::Index>(i)] = data.y(i);
  return y;
}

Matrix with_intercept(const Matrix& x) {
  Matrix out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()).setOnes();
  return out;
}

// mean softplus(-y * Xz) + delta * sqrt(||z_head||^2 + eps), where z_head is
// the first `penalized` coordinates.
struct SmoothProblem {
  Matrix x;
  Vector y;
  double delta = 0.0;
  Eigen::Index penalized = 0;
  double eps = 0.0;

  double n() const { return static_cast<double>(x.rows()); }

  double value(const Vector& z) const {
    const Vector m = x * z;
    double s = 0.0;
    for (Eigen::Index i = 0; i < m.size(); ++i) s += softplus(-y[i] * m[i]);
    double v = s / n();
    if (delta > 0.0) v += delta * std::sqrt(z.head(penalized).squaredNorm() + eps);
    return v;
  }

  void derivatives(const Vector& z, Vector& g, Matrix* h) const {
    const Vector m = x * z;
    Vector r(m.size()), w(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double s = sigmoid(-y[i] * m[i]);
      r[i] = -y[i] * s;
      w[i] = s * (1.0 - s);
    }
    g = x.transpose() * r / n();
    if (h) *h = x.transpose() * (w.asDiagonal() * x) / n();
    if (delta > 0.0) {
      const auto zp = z.head(penalized);
      const double s = std::sqrt(zp.squaredNorm() + eps);
      if (s > 0.0) {
        g.head(penalized) += delta * zp / s;
        if (h)
          h->topLeftCorner(penalized, penalized) +=
              (delta / s) * (Matrix::Identity(penalized, penalized) - zp * zp.transpose() / (s * s));
      }
    }
  }

  // Upper bound on the loss Hessian: lambda_max(X^T X) / (4n).
  double loss_lipschitz() const {
    const Eigen::SelfAdjointEigenSolver<Matrix> es(x.transpose() * x, Eigen::EigenvaluesOnly);
    return std::max(es.eigenvalues().maxCoeff() / (4.0 * n()), 1e-12);
  }
};

struct SolveResult {
  Vector z;
  std::size_t iterations = 0;
  bool converged = false;
};

SolveResult newton(const SmoothProblem& p, const TrainerConfig& cfg) {
  const Eigen::Index dim = p.x.cols();
  SolveResult out;
  out.z = Vector::Zero(dim);
  double f = p.value(out.z);
  Vector g;
  p.derivatives(out.z, g, nullptr);
  {
    // One loss-gradient step lifts the start off the smoothed kink at 0.
    const Vector z0 = -g / p.loss_lipschitz();
    const double f0 = p.value(z0);
    if (f0 < f) {
      out.z = z0;
      f = f0;
    }
  }
  Matrix h;
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    out.iterations = it;
    p.derivatives(out.z, g, &h);
    Eigen::LDLT<Matrix> ldlt(h);
    Vector d = ldlt.solve(-g);
    double slope = g.dot(d);
    if (ldlt.info() != Eigen::Success || !d.allFinite() || !(slope < 0.0)) {
      const double mu = 1e-10 * (1.0 + h.diagonal().cwiseAbs().maxCoeff());
      d = (h + mu * Matrix::Identity(dim, dim)).ldlt().solve(-g);
      slope = g.dot(d);
      if (!d.allFinite() || !(slope < 0.0)) {
        d = -g;
        slope = -g.squaredNorm();
      }
    }
    // Newton decrement estimates the suboptimality.
    if (-slope / 2.0 <= cfg.tol * (1.0 + std::abs(f))) {
      out.converged = true;
      break;
    }
    double t = 1.0, fn = f;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      fn = p.value(out.z + t * d);
      if (fn <= f + 1e-4 * t * slope) {
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) {
      // No representable decrease left along a descent direction.
      out.converged = -slope <= 1e3 * cfg.tol * (1.0 + std::abs(f));
      break;
    }
    out.z += t * d;
    f = fn;
  }
  return out;
}

SolveResult subgradient(const SmoothProblem& p, const TrainerConfig& cfg) {
  const Eigen::Index dim = p.x.cols();
  SolveResult out;
  Vector z = Vector::Zero(dim), avg = Vector::Zero(dim), g;
  Vector best = z;
  double best_f = p.value(z);
  double prev_avg_f = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    out.iterations = it;
    p.derivatives(z, g, nullptr);
    z -= g / std::sqrt(static_cast<double>(it));
    avg += (z - avg) / static_cast<double>(it);
    const double fz = p.value(z), fa = p.value(avg);
    if (fz < best_f) {
      best_f = fz;
      best = z;
    }
    if (fa < best_f) {
      best_f = fa;
      best = avg;
    }
    if (it > 1 && std::abs(prev_avg_f - fa) <= cfg.tol * (1.0 + std::abs(fa)) && fa <= best_f + cfg.tol * (1.0 + std::abs(best_f))) {
      out.converged = true;
      break;
    }
    prev_avg_f = fa;
  }
  out.z = best;
  return out;
}

SolveResult minimize(const SmoothProblem& p, const TrainerConfig& cfg) {
  return cfg.solver == DroSolver::newton ? newton(p, cfg) : subgradient(p, cfg);
}

Eigen::LLT<Matrix> shifted_cholesky(const MetricMatrix& lambda, double ridge_eps) {
  const auto d = static_cast<Eigen::Index>(lambda.dim());
  Eigen::LLT<Matrix> llt(lambda.matrix() + ridge_eps * Matrix::Identity(d, d));
  if (llt.info() != Eigen::Success) throw InvalidArgument("metric plus ridge is not positive definite");
  const auto diag = Matrix(llt.matrixL()).diagonal();
  if (!(diag.minCoeff() > 0.0)) throw InvalidArgument("metric plus ridge is not positive definite");
  return llt;
}

double mean_loss(const LabeledDataset& data, const Vector& beta, double intercept) {
  const Vector m = data.features() * beta;
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    s += softplus(-data.y(i) * (m[static_cast<Eigen::Index>(i)] + intercept));
  return s / static_cast<double>(data.size());
}

}  // namespace

double logistic_loss(const Vector& beta, const Vector& x, int y) {
  if (beta.size() != x.size()) throw InvalidArgument("dimension mismatch in logistic_loss");
  if (y != 1 && y != -1) throw InvalidArgument("labels must be -1 or +1");
  return softplus(-y * beta.dot(x));
}

double dual_norm_lambda_inv(const Vector& beta, const MetricMatrix& lambda, double ridge_eps) {
  if (static_cast<std::size_t>(beta.size()) != lambda.dim()) throw InvalidArgument("dimension mismatch in dual norm");
  if (!(ridge_eps >= 0.0)) throw InvalidArgument("ridge_eps must be nonnegative");
  if (beta.isZero(0.0)) return 0.0;
  const auto llt = shifted_cholesky(lambda, ridge_eps);
  // beta^T (L L^T)^{-1} beta = ||L^{-1} beta||^2
  const Vector w = llt.matrixL().solve(beta);
  return w.norm();
}

double dro_objective(const LabeledDataset& data, const MetricMatrix& lambda, double delta, const Vector& beta,
                     double ridge_eps) {
  const double loss = mean_loss(data, beta, 0.0);
  return delta > 0.0 ? loss + delta * dual_norm_lambda_inv(beta, lambda, ridge_eps) : loss;
}

DroModel train_dro(const LabeledDataset& data, const MetricMatrix& lambda, double delta, const TrainerConfig& cfg) {
  check_config(cfg);
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw InvalidArgument("delta must be a nonnegative number");
  if (lambda.dim() != data.dim()) throw InvalidArgument("metric dimension does not match the data");
  const auto llt = shifted_cholesky(lambda, cfg.ridge_eps);
  const Matrix l = llt.matrixL();

  SmoothProblem p;
  p.x = data.features() * l;
  p.y = labels_of(data);
  p.delta = delta;
  p.penalized = p.x.cols();
  p.eps = cfg.norm_smooth_eps;
  const auto res = minimize(p, cfg);

  DroModel model;
  model.beta = l * res.z;
  model.delta = delta;
  model.lambda_ref = lambda;
  model.iterations = res.iterations;
  model.converged = res.converged;
  model.objective = dro_objective(data, lambda, delta, model.beta, cfg.ridge_eps);
  return model;
}

DroModel train_erm(const LabeledDataset& data, const TrainerConfig& cfg) {
  check_config(cfg);
  SmoothProblem p;
  p.x = cfg.intercept ? with_intercept(data.features()) : data.features();
  p.y = labels_of(data);
  const auto res = minimize(p, cfg);
  DroModel model;
  const auto d = static_cast<Eigen::Index>(data.dim());
  model.beta = res.z.head(d);
  if (cfg.intercept) model.intercept = res.z[d];
  model.iterations = res.iterations;
  model.converged = res.converged;
  model.objective = mean_loss(data, model.beta, model.intercept.value_or(0.0));
  return model;
}

DroModel train_l1(const LabeledDataset& data, double penalty, const TrainerConfig& cfg) {
  check_config(cfg);
  if (!(penalty >= 0.0) || !std::isfinite(penalty)) throw InvalidArgument("penalty must be a nonnegative number");
  SmoothProblem p;
  p.x = cfg.intercept ? with_intercept(data.features()) : data.features();
  p.y = labels_of(data);
  const auto d = static_cast<Eigen::Index>(data.dim());
  const Eigen::Index dim = p.x.cols();
  const double lip = p.loss_lipschitz();
  const double step = 1.0 / lip;

  auto objective = [&](const Vector& z) { return p.value(z) + penalty * z.head(d).lpNorm<1>(); };
  auto prox = [&](Vector v) {
    const double thr = penalty * step;
    for (Eigen::Index j = 0; j < d; ++j) v[j] = std::copysign(std::max(std::abs(v[j]) - thr, 0.0), v[j]);
    return v;
  };

  Vector z = Vector::Zero(dim), z_prev = z, yv = z, g;
  double f = objective(z), tk = 1.0;
  DroModel model;
  int quiet = 0;
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    model.iterations = it;
    p.derivatives(yv, g, nullptr);
    Vector zn = prox(yv - step * g);
    double fn = objective(zn);
    if (fn > f) {
      // Restart momentum from the last iterate.
      p.derivatives(z, g, nullptr);
      zn = prox(z - step * g);
      fn = objective(zn);
      tk = 1.0;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    yv = zn + ((tk - 1.0) / tn) * (zn - z);
    tk = tn;
    z_prev = z;
    z = zn;
    const double change = f - fn;
    f = fn;
    quiet = change <= cfg.tol * (1.0 + std::abs(f)) ? quiet + 1 : 0;
    if (quiet >= 3 || (z - z_prev).norm() == 0.0) {
      model.converged = true;
      break;
    }
  }
  model.beta = z.head(d);
  if (cfg.intercept) model.intercept = z[d];
  model.objective = mean_loss(data, model.beta, model.intercept.value_or(0.0)) + penalty * model.beta.lpNorm<1>();
  return model;
}

Evaluation evaluate(const DroModel& model, const LabeledDataset& data) {
  if (static_cast<std::size_t>(model.beta.size()) != data.dim()) throw InvalidArgument("model and data dimensions differ");
  Evaluation e;
  const Vector m = data.features() * model.beta;
  const double b = model.intercept.value_or(0.0);
  double loss = 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double mi = m[static_cast<Eigen::Index>(i)] + b;
    loss += softplus(-data.y(i) * mi);
    const int pred = mi >= 0.0 ? 1 : -1;
    if (pred != data.y(i)) ++wrong;
  }
  e.mean_log_loss = loss / static_cast<double>(data.size());
  e.misclassification = static_cast<double>(wrong) / static_cast<double>(data.size());
  return e;
}

std::string metric_fingerprint(const MetricMatrix& metric) {
  std::ostringstream os;
  write_metric(os, metric);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_model(std::ostream& os, const DroModel& model, const std::string& lambda_path) {
  const auto old = os.precision(17);
  os << "d " << model.beta.size() << '\n' << "beta";
  for (Eigen::Index j = 0; j < model.beta.size(); ++j) os << ' ' << model.beta[j];
  os << '\n' << "delta " << model.delta << '\n';
  if (model.intercept)
    os << "intercept " << *model.intercept << '\n';
  else
    os << "intercept none\n";
  os << "lambda_path " << (lambda_path.empty() ? "-" : lambda_path) << '\n';
  os << "lambda_hash " << (model.lambda_ref ? metric_fingerprint(*model.lambda_ref) : "-") << '\n';
  os.precision(old);
}

DroModel read_model(std::istream& is) {
  DroModel m;
  std::string line;
  long long d = -1;
  bool have_beta = false, have_delta = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "d") {
      if (!(ls >> d) || d <= 0) throw DataError("model: bad dimension line");
    } else if (key == "beta") {
      if (d <= 0) throw DataError("model: beta before dimension");
      m.beta.resize(static_cast<Eigen::Index>(d));
      for (long long j = 0; j < d; ++j)
        if (!(ls >> m.beta[static_cast<Eigen::Index>(j)])) throw DataError("model: too few beta entries");
      have_beta = true;
    } else if (key == "delta") {
      if (!(ls >> m.delta) || !(m.delta >= 0.0)) throw DataError("model: bad delta");
      have_delta = true;
    } else if (key == "intercept") {
      std::string v;
      ls >> v;
      if (v != "none") {
        try {
          m.intercept = std::stod(v);
        } catch (const std::exception&) {
          throw DataError("model: bad intercept");
        }
      }
    } else if (key == "lambda_path" || key == "lambda_hash") {
      continue;
    } else {
      throw DataError("model: unknown key '" + key + "'");
    }
    std::string extra;
    if (ls >> extra) throw DataError("model: trailing content on line '" + key + "'");
  }
  if (!have_beta || !have_delta) throw DataError("model: missing beta or delta");
  if (!m.beta.allFinite()) throw DataError("model: beta must be finite");
  return m;
}

}  // namespace ddrdro
