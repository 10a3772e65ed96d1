#include "ddrdro/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "ddrdro/constraints.hpp"
#include "ddrdro/errors.hpp"
#include "ddrdro/io.hpp"
#include "ddrdro/transport.hpp"

namespace ddrdro::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

template <class T>
T parse_integer(const std::string& key, const std::string& text) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw InvalidArgument(key + ": expected a nonnegative integer, got '" + text + "'");
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
    throw InvalidArgument(key + ": expected a finite number, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw InvalidArgument(key + ": expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (item.empty()) throw InvalidArgument("empty item in list '" + text + "'");
    out.push_back(item);
  }
  if (out.empty()) throw InvalidArgument("empty list");
  return out;
}

std::string write_text_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream os(path);
  if (!os) throw InvalidArgument("cannot open '" + path + "' for writing");
  body(os);
  if (!os) throw DataError("failed writing '" + path + "'");
  return path;
}

}  // namespace

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kBadArguments;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kBadData;
  } catch (const InfeasibleError& e) {
    err << "infeasible: " << e.what() << '\n';
    return kInfeasible;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(parse_real("list", item));
  return out;
}

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys{
      "dataset",
      "path",
      "train_size",
      "test_size",
      "methods",
      "alphas",
      "reps",
      "base_seed",
      "knn_k",
      "delta_grid",
      "folds",
      "cv_alpha",
      "debug_alpha_one",
      "threads",
      "output",
      "relative.step_size",
      "relative.max_iters",
      "relative.tol",
      "relative.window",
      "relative.refresh_every",
      "relative.frobenius_reg",
      "absolute.inner",
      "absolute.inner_step",
      "absolute.inner_iters",
      "absolute.max_iters",
      "absolute.tol",
      "absolute.window",
      "absolute.refresh_every",
      "trainer.tol",
      "trainer.max_iters",
      "trainer.solver",
      "trainer.intercept",
  };
  return keys;
}

RunConfig RunConfig::parse(std::istream& is) {
  RunConfig cfg;
  std::string line;
  for (std::size_t no = 1; std::getline(is, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument("config line " + std::to_string(no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) throw InvalidArgument("config line " + std::to_string(no) + ": empty value for '" + key + "'");
    if (cfg.get(key)) throw InvalidArgument("config line " + std::to_string(no) + ": duplicate key '" + key + "'");
    try {
      cfg.set(key, value);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("config line " + std::to_string(no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open config '" + path + "'");
  return parse(is);
}

std::string RunConfig::emit() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

std::optional<std::string> RunConfig::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  return std::nullopt;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw InvalidArgument("unknown key '" + key + "'");
  if (value.empty() || value.find_first_of("#\n") != std::string::npos || trim(value) != value)
    throw InvalidArgument("invalid value for '" + key + "'");
  for (auto& [k, v] : entries_)
    if (k == key) {
      v = value;
      return;
    }
  entries_.emplace_back(key, value);
}

ExperimentSpec RunConfig::to_spec(const std::string& base_dir) const {
  for (const char* required : {"dataset", "path", "train_size", "test_size"})
    if (!get(required)) throw InvalidArgument(std::string("config is missing required key '") + required + "'");

  ExperimentSpec s;
  for (const auto& [k, v] : entries_) {
    if (k == "dataset") {
      s.dataset = v;
    } else if (k == "path") {
      std::filesystem::path p(v);
      s.path = (p.is_relative() && !base_dir.empty()) ? (std::filesystem::path(base_dir) / p).string() : v;
    } else if (k == "train_size") {
      s.train_size = parse_integer<std::size_t>(k, v);
    } else if (k == "test_size") {
      s.test_size = parse_integer<std::size_t>(k, v);
    } else if (k == "methods") {
      s.methods.clear();
      for (const auto& name : split_list(v)) s.methods.push_back(parse_method_kind(name));
    } else if (k == "alphas") {
      s.alphas = parse_real_list(v);
    } else if (k == "reps") {
      s.reps = parse_integer<std::size_t>(k, v);
    } else if (k == "base_seed") {
      s.base_seed = parse_integer<std::uint64_t>(k, v);
    } else if (k == "knn_k") {
      s.knn_k = parse_integer<std::size_t>(k, v);
    } else if (k == "delta_grid") {
      s.delta_grid = parse_real_list(v);
    } else if (k == "folds") {
      s.folds = parse_integer<std::size_t>(k, v);
    } else if (k == "cv_alpha") {
      s.cv_alpha = parse_bool(k, v);
    } else if (k == "debug_alpha_one") {
      s.debug_alpha_one = parse_bool(k, v);
    } else if (k == "threads") {
      s.threads = parse_integer<std::size_t>(k, v);
    } else if (k == "output") {
      // consumed by cmd_benchmark
    } else if (k == "relative.step_size") {
      s.relative.step_size = parse_real(k, v);
    } else if (k == "relative.max_iters") {
      s.relative.max_iters = parse_integer<std::size_t>(k, v);
    } else if (k == "relative.tol") {
      s.relative.tol = parse_real(k, v);
    } else if (k == "relative.window") {
      s.relative.window = parse_integer<std::size_t>(k, v);
    } else if (k == "relative.refresh_every") {
      s.relative.refresh_every = parse_integer<std::size_t>(k, v);
    } else if (k == "relative.frobenius_reg") {
      s.relative.frobenius_reg = parse_real(k, v);
    } else if (k == "absolute.inner") {
      if (v == "exact")
        s.absolute.inner = AbsoluteInner::exact;
      else if (v == "alternating")
        s.absolute.inner = AbsoluteInner::alternating;
      else
        throw InvalidArgument("absolute.inner: expected exact or alternating");
    } else if (k == "absolute.inner_step") {
      s.absolute.inner_step = parse_real(k, v);
    } else if (k == "absolute.inner_iters") {
      s.absolute.inner_iters = parse_integer<std::size_t>(k, v);
    } else if (k == "absolute.max_iters") {
      s.absolute.max_iters = parse_integer<std::size_t>(k, v);
    } else if (k == "absolute.tol") {
      s.absolute.tol = parse_real(k, v);
    } else if (k == "absolute.window") {
      s.absolute.window = parse_integer<std::size_t>(k, v);
    } else if (k == "absolute.refresh_every") {
      s.absolute.refresh_every = parse_integer<std::size_t>(k, v);
    } else if (k == "trainer.tol") {
      s.trainer.tol = parse_real(k, v);
    } else if (k == "trainer.max_iters") {
      s.trainer.max_iters = parse_integer<std::size_t>(k, v);
    } else if (k == "trainer.solver") {
      if (v == "newton")
        s.trainer.solver = DroSolver::newton;
      else if (v == "subgradient")
        s.trainer.solver = DroSolver::subgradient;
      else
        throw InvalidArgument("trainer.solver: expected newton or subgradient");
    } else if (k == "trainer.intercept") {
      s.trainer.intercept = parse_bool(k, v);
    }
  }
  if (s.reps == 0) throw InvalidArgument("reps must be at least 1");
  if (s.train_size == 0 || s.test_size == 0) throw InvalidArgument("train_size and test_size must be positive");
  expand_methods(s.methods, s.alphas, s.cv_alpha, s.debug_alpha_one);  // validates alphas
  for (double g : s.delta_grid)
    if (g < 0.0) throw InvalidArgument("delta_grid values must be nonnegative");
  return s;
}

int cmd_metric_learn(const MetricLearnOptions& opt, std::ostream& out) {
  if (opt.mode != "relative" && opt.mode != "absolute") throw InvalidArgument("--mode must be relative or absolute");
  if (opt.out.empty()) throw InvalidArgument("--out is required");
  const RobustLevel level(opt.alpha);
  const auto data = load_dataset_csv(opt.data).data;

  LearnedMetric learned;
  if (opt.mode == "relative") {
    RelativeConfig cfg;
    cfg.seed = opt.seed;
    if (opt.max_iters) cfg.max_iters = *opt.max_iters;
    const auto r = build_triplets(data, opt.k);
    learned = opt.alpha == 1.0 ? learn_relative(data, r, cfg) : learn_relative_robust(data, r, level, cfg);
  } else {
    AbsoluteConfig cfg;
    cfg.seed = opt.seed;
    if (opt.max_iters) cfg.max_iters = *opt.max_iters;
    if (opt.inner == "alternating")
      cfg.inner = AbsoluteInner::alternating;
    else if (opt.inner != "exact")
      throw InvalidArgument("--inner must be exact or alternating");
    const auto ps = build_pair_sets(data, opt.k);
    learned = opt.alpha == 1.0 ? learn_absolute(data, ps.must_link, ps.cannot_link, cfg)
                               : learn_absolute_robust(data, ps.must_link, ps.cannot_link, level, cfg);
  }
  save_metric(opt.out, learned.lambda);
  write_text_file(opt.out + ".meta", [&](std::ostream& os) { write_metric_sidecar(os, learned); });
  out << "objective " << fixed6(learned.final_objective) << '\n'
      << "iterations " << learned.iterations << '\n'
      << "converged " << (learned.converged ? "yes" : "no") << '\n';
  return learned.converged ? kOk : kNotConverged;
}

int cmd_train(const TrainOptions& opt, std::ostream& out) {
  if (opt.out.empty()) throw InvalidArgument("--out is required");
  TrainerConfig cfg;
  if (opt.solver == "subgradient")
    cfg.solver = DroSolver::subgradient;
  else if (opt.solver != "newton")
    throw InvalidArgument("--solver must be newton or subgradient");
  const auto data = load_dataset_csv(opt.data).data;
  const MetricMatrix lambda = opt.metric.empty() ? MetricMatrix::identity(data.dim()) : load_metric(opt.metric);
  if (lambda.dim() != data.dim()) throw DataError("metric dimension does not match the data");

  double delta = 0.0;
  if (opt.delta == "cv") {
    const auto grid = opt.grid.empty() ? default_delta_grid() : opt.grid;
    delta = cross_validate_delta(data, lambda, grid, opt.folds, opt.seed, cfg).best;
  } else {
    delta = parse_real("--delta", opt.delta);
    if (delta < 0.0) throw InvalidArgument("--delta must be nonnegative");
  }
  const DroModel model = train_dro(data, lambda, delta, cfg);
  write_text_file(opt.out, [&](std::ostream& os) { write_model(os, model, opt.metric); });
  out << "delta " << fixed6(delta) << '\n'
      << "train_loss " << fixed6(evaluate(model, data).mean_log_loss) << '\n'
      << "objective " << fixed6(model.objective) << '\n'
      << "converged " << (model.converged ? "yes" : "no") << '\n';
  return model.converged ? kOk : kNotConverged;
}

int cmd_benchmark(const BenchmarkOptions& opt, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = RunConfig::load(opt.config);
  ExperimentSpec spec = cfg.to_spec(std::filesystem::path(opt.config).parent_path().string());
  if (opt.reps) spec.reps = *opt.reps;
  if (opt.threads) spec.threads = *opt.threads;
  if (spec.reps == 0) throw InvalidArgument("reps must be at least 1");
  const auto result = run_experiment(spec);

  std::string target = opt.out;
  if (target.empty() && cfg.get("output")) {
    const std::filesystem::path p(*cfg.get("output"));
    target = p.is_relative() ? (std::filesystem::path(opt.config).parent_path() / p).string() : p.string();
  }
  if (target.empty())
    write_results_tsv(out, result.rows);
  else
    write_text_file(target, [&](std::ostream& os) { write_results_tsv(os, result.rows); });

  bool all_valid = true;
  for (std::size_t m = 0; m < result.rows.size(); ++m) {
    const auto& row = result.rows[m];
    const std::string label = row.method.name() + " (" + row.method.alpha_label() + ")";
    if (row.std_undefined) err << "note: " << label << ": fewer than 2 successful repetitions, std reported as 0\n";
    if (row.failures > 0) {
      err << "warning: " << label << ": " << row.failures << " of " << row.reps << " repetitions failed";
      for (const auto& o : result.outcomes[m])
        if (!o.ok) {
          err << " (first: " << o.error << ")";
          break;
        }
      err << '\n';
    }
    if (!row.valid) {
      all_valid = false;
      err << "warning: " << label << ": row is invalid, more than 5% of repetitions failed\n";
    }
  }
  return all_valid ? kOk : kNotConverged;
}

int cmd_ot(const OtOptions& opt, std::ostream& out) {
  CostPower power;
  if (opt.power == "squared")
    power = CostPower::squared;
  else if (opt.power == "linear")
    power = CostPower::linear;
  else
    throw InvalidArgument("--power must be squared or linear");
  const auto p = load_point_cloud_csv(opt.p);
  const auto q = load_point_cloud_csv(opt.q);
  if (p.points.cols() != q.points.cols()) throw DataError("point clouds have different dimensions");
  const auto d = static_cast<std::size_t>(p.points.cols());
  const MetricMatrix lambda = opt.metric.empty() ? MetricMatrix::identity(d) : load_metric(opt.metric);
  if (lambda.dim() != d) throw DataError("metric dimension does not match the point clouds");

  auto to_dist = [](const PointCloud& c) {
    DiscreteDistribution dist;
    for (Eigen::Index i = 0; i < c.points.rows(); ++i) dist.support.push_back({c.points.row(i).transpose(), 1});
    dist.mass = c.mass;
    return dist;
  };
  const auto plan = ot_discrepancy(to_dist(p), to_dist(q), mahalanobis_cost(lambda, power));
  out << "value " << fixed6(plan.value) << '\n';
  if (!opt.plan.empty()) write_text_file(opt.plan, [&](std::ostream& os) { write_plan_csv(os, plan); });
  return kOk;
}

}  // namespace ddrdro::cli
