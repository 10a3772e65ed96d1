#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <filesystem>
#include <optional>

#include "ddrdro/cli.hpp"
#include "ddrdro/constraints.hpp"
#include "ddrdro/core.hpp"
#include "ddrdro/dro.hpp"
#include "ddrdro/errors.hpp"
#include "ddrdro/metric_learn.hpp"
#include "ddrdro/pipeline.hpp"
#include "ddrdro/transport.hpp"

namespace py = pybind11;
using namespace ddrdro;

namespace {

// Eigen results are returned as copies: casting an lvalue would hand numpy a
// view into a C++ temporary.

LabeledDataset dataset(const Matrix& x, const std::vector<int>& y) { return LabeledDataset(x, y); }

MetricMatrix metric_or_identity(const std::optional<Matrix>& lambda, std::size_t d) {
  if (!lambda) return MetricMatrix::identity(d);
  auto m = MetricMatrix::from_matrix(*lambda);
  if (m.dim() != d) throw InvalidArgument("metric dimension does not match the data");
  return m;
}

DroSolver parse_solver(const std::string& s) {
  if (s == "newton") return DroSolver::newton;
  if (s == "subgradient") return DroSolver::subgradient;
  throw InvalidArgument("solver must be newton or subgradient");
}

py::dict model_dict(const DroModel& m) {
  py::dict d;
  d["beta"] = Vector(m.beta);
  d["intercept"] = m.intercept.value_or(0.0);
  d["delta"] = m.delta;
  d["objective"] = m.objective;
  d["iterations"] = m.iterations;
  d["converged"] = m.converged;
  return d;
}

py::dict learn_metric(const Matrix& x, const std::vector<int>& y, const std::string& mode, double alpha,
                      std::size_t k, std::uint64_t seed, const std::string& inner,
                      std::optional<std::size_t> max_iters) {
  const auto data = dataset(x, y);
  const RobustLevel level(alpha);
  LearnedMetric learned;
  if (mode == "relative") {
    RelativeConfig cfg;
    cfg.seed = seed;
    if (max_iters) cfg.max_iters = *max_iters;
    const auto r = build_triplets(data, k);
    learned = alpha == 1.0 ? learn_relative(data, r, cfg) : learn_relative_robust(data, r, level, cfg);
  } else if (mode == "absolute") {
    AbsoluteConfig cfg;
    cfg.seed = seed;
    if (max_iters) cfg.max_iters = *max_iters;
    if (inner == "alternating")
      cfg.inner = AbsoluteInner::alternating;
    else if (inner != "exact")
      throw InvalidArgument("inner must be exact or alternating");
    const auto ps = build_pair_sets(data, k);
    learned = alpha == 1.0 ? learn_absolute(data, ps.must_link, ps.cannot_link, cfg)
                           : learn_absolute_robust(data, ps.must_link, ps.cannot_link, level, cfg);
  } else {
    throw InvalidArgument("mode must be relative or absolute");
  }
  py::dict d;
  d["lambda"] = Matrix(learned.lambda.matrix());
  d["objective"] = learned.final_objective;
  d["iterations"] = learned.iterations;
  d["converged"] = learned.converged;
  d["trace"] = learned.trace;
  return d;
}

py::list rows_to_list(const std::vector<ResultRow>& rows) {
  py::list out;
  for (const auto& r : rows) {
    py::dict d;
    d["dataset"] = r.dataset;
    d["method"] = r.method.name();
    d["alpha"] = r.method.alpha_label();
    d["train_mean"] = r.train_mean;
    d["train_std"] = r.train_std;
    d["test_mean"] = r.test_mean;
    d["test_std"] = r.test_std;
    d["acc_mean"] = r.acc_mean;
    d["acc_std"] = r.acc_std;
    d["reps"] = r.reps;
    d["failures"] = r.failures;
    d["valid"] = r.valid;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_ddrdro, m) {
  m.doc() = "Metric learning and optimal-transport DRO logistic regression";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  m.def(
      "standardize",
      [](const Matrix& x, const std::vector<int>& y) {
        const auto s = standardize(dataset(x, y));
        return py::make_tuple(Matrix(s.data.features()), Vector(s.standardizer.means()), Vector(s.standardizer.scales()));
      },
      py::arg("x"), py::arg("y"), "Centre and scale columns; returns (x_std, means, scales).");

  m.def(
      "build_triplets",
      [](const Matrix& x, const std::vector<int>& y, std::size_t k) {
        std::vector<std::array<std::size_t, 3>> out;
        for (const auto& t : build_triplets(dataset(x, y), k).triplets) out.push_back({t.i, t.j, t.k});
        return out;
      },
      py::arg("x"), py::arg("y"), py::arg("k") = 5);

  m.def(
      "build_pair_sets",
      [](const Matrix& x, const std::vector<int>& y, std::size_t k) {
        const auto ps = build_pair_sets(dataset(x, y), k);
        return py::make_tuple(ps.must_link.pairs, ps.cannot_link.pairs);
      },
      py::arg("x"), py::arg("y"), py::arg("k") = 5, "Returns (must_link, cannot_link) index pairs.");

  m.def("learn_metric", &learn_metric, py::arg("x"), py::arg("y"), py::arg("mode") = "relative",
        py::arg("alpha") = 1.0, py::arg("k") = 5, py::arg("seed") = 0, py::arg("inner") = "exact",
        py::arg("max_iters") = py::none(), "Learn a Mahalanobis metric; alpha < 1 selects the robust learner.");

  m.def(
      "train_dro",
      [](const Matrix& x, const std::vector<int>& y, std::optional<Matrix> lambda, double delta, bool intercept,
         const std::string& solver) {
        const auto data = dataset(x, y);
        TrainerConfig cfg;
        cfg.intercept = intercept;
        cfg.solver = parse_solver(solver);
        return model_dict(train_dro(data, metric_or_identity(lambda, data.dim()), delta, cfg));
      },
      py::arg("x"), py::arg("y"), py::arg("lambda_") = py::none(), py::arg("delta") = 0.0,
      py::arg("intercept") = false, py::arg("solver") = "newton");

  m.def(
      "cross_validate_delta",
      [](const Matrix& x, const std::vector<int>& y, std::optional<Matrix> lambda, std::vector<double> grid,
         std::size_t folds, std::uint64_t seed) {
        const auto data = dataset(x, y);
        if (grid.empty()) grid = default_delta_grid();
        const auto cv = cross_validate_delta(data, metric_or_identity(lambda, data.dim()), grid, folds, seed);
        return py::make_tuple(cv.best, cv.mean_loss);
      },
      py::arg("x"), py::arg("y"), py::arg("lambda_") = py::none(), py::arg("grid") = std::vector<double>{},
      py::arg("folds") = 5, py::arg("seed") = 0, "Returns (best_delta, mean_validation_loss_per_grid_value).");

  m.def(
      "evaluate",
      [](const Vector& beta, const Matrix& x, const std::vector<int>& y, double intercept) {
        DroModel model;
        model.beta = beta;
        if (intercept != 0.0) model.intercept = intercept;
        const auto e = evaluate(model, dataset(x, y));
        return py::make_tuple(e.mean_log_loss, e.misclassification);
      },
      py::arg("beta"), py::arg("x"), py::arg("y"), py::arg("intercept") = 0.0,
      "Returns (mean_log_loss, misclassification).");

  m.def(
      "ot_discrepancy",
      [](const Matrix& p, const Vector& p_mass, const Matrix& q, const Vector& q_mass,
         std::optional<Matrix> lambda, const std::string& power) {
        if (p.cols() != q.cols()) throw DataError("point clouds have different dimensions");
        CostPower cp;
        if (power == "squared")
          cp = CostPower::squared;
        else if (power == "linear")
          cp = CostPower::linear;
        else
          throw InvalidArgument("power must be squared or linear");
        auto to_dist = [](const Matrix& pts, const Vector& mass) {
          DiscreteDistribution dist;
          for (Eigen::Index i = 0; i < pts.rows(); ++i) dist.support.push_back({pts.row(i).transpose(), 1});
          dist.mass = mass;
          return dist;
        };
        const auto metric = metric_or_identity(lambda, static_cast<std::size_t>(p.cols()));
        const auto plan = ot_discrepancy(to_dist(p, p_mass), to_dist(q, q_mass), mahalanobis_cost(metric, cp));
        return py::make_tuple(plan.value, Matrix(plan.plan));
      },
      py::arg("p"), py::arg("p_mass"), py::arg("q"), py::arg("q_mass"), py::arg("lambda_") = py::none(),
      py::arg("power") = "squared", "Returns (value, plan).");

  m.def(
      "run_experiment",
      [](const std::string& config_path, std::optional<std::size_t> reps, std::optional<std::size_t> threads) {
        const auto cfg = cli::RunConfig::load(config_path);
        auto spec = cfg.to_spec(std::filesystem::path(config_path).parent_path().string());
        if (reps) spec.reps = *reps;
        if (threads) spec.threads = *threads;
        ExperimentResult result;
        {
          py::gil_scoped_release release;
          result = run_experiment(spec);
        }
        return rows_to_list(result.rows);
      },
      py::arg("config"), py::arg("reps") = py::none(), py::arg("threads") = py::none(),
      "Run the benchmark described by a config file; returns one dict per method row.");
}
