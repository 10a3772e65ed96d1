#include "ddrdro/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <thread>

#include "ddrdro/constraints.hpp"
#include "ddrdro/errors.hpp"
#include "ddrdro/io.hpp"
#include "ddrdro/rng.hpp"

namespace ddrdro {

namespace {

constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kCvStream = 2;
constexpr std::uint64_t kLearnerStream = 3;

template <class Fit>
CvResult cross_validate(const LabeledDataset& train, const std::vector<double>& grid, std::size_t folds,
                        std::uint64_t seed, const Fit& fit) {
  if (grid.empty()) throw InvalidArgument("cross-validation grid is empty");
  if (folds < 2) throw InvalidArgument("cross-validation needs at least 2 folds");
  if (train.size() < folds) throw InvalidArgument("fewer training rows than folds");
  for (double g : grid)
    if (!(g >= 0.0) || !std::isfinite(g)) throw InvalidArgument("grid values must be finite and nonnegative");

  const auto fold = fold_assignment(train.size(), folds, seed);
  std::vector<LabeledDataset> fit_sets, val_sets;
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> in, out;
    for (std::size_t i = 0; i < train.size(); ++i) (fold[i] == f ? out : in).push_back(i);
    fit_sets.push_back(train.subset(in));
    val_sets.push_back(train.subset(out));
  }

  CvResult res;
  res.mean_loss.assign(grid.size(), 0.0);
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double total = 0.0;
    for (std::size_t f = 0; f < folds; ++f) total += evaluate(fit(fit_sets[f], grid[g]), val_sets[f]).mean_log_loss;
    res.mean_loss[g] = total / static_cast<double>(folds);
    if (g == 0 || res.mean_loss[g] < res.mean_loss[best] ||
        (res.mean_loss[g] == res.mean_loss[best] && grid[g] < grid[best]))
      best = g;
  }
  res.best = grid[best];
  return res;
}

std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

bool is_robust(MethodKind k) { return k == MethodKind::robust_absolute || k == MethodKind::robust_relative; }

bool is_absolute(MethodKind k) { return k == MethodKind::dro_absolute || k == MethodKind::robust_absolute; }

// Lazily built constraint sets for one repetition.
struct Constraints {
  const LabeledDataset& train;
  std::size_t k;
  std::optional<PairSets> pairs;
  std::optional<TripletSet> triplets;

  const PairSets& pair_sets() {
    if (!pairs) pairs = build_pair_sets(train, k);
    return *pairs;
  }
  const TripletSet& triplet_set() {
    if (!triplets) triplets = build_triplets(train, k);
    return *triplets;
  }
};

LearnedMetric learn_metric(MethodKind kind, std::optional<double> alpha, Constraints& cons, const ExperimentSpec& spec,
                           std::uint64_t seed) {
  if (is_absolute(kind)) {
    AbsoluteConfig cfg = spec.absolute;
    cfg.seed = seed;
    const auto& ps = cons.pair_sets();
    if (kind == MethodKind::dro_absolute) return learn_absolute(cons.train, ps.must_link, ps.cannot_link, cfg);
    return learn_absolute_robust(cons.train, ps.must_link, ps.cannot_link, RobustLevel(*alpha), cfg);
  }
  RelativeConfig cfg = spec.relative;
  cfg.seed = seed;
  if (kind == MethodKind::dro_relative) return learn_relative(cons.train, cons.triplet_set(), cfg);
  return learn_relative_robust(cons.train, cons.triplet_set(), RobustLevel(*alpha), cfg);
}

}  // namespace

Split split(const LabeledDataset& data, std::size_t train_size, std::size_t test_size, std::uint64_t seed) {
  if (train_size == 0 || test_size == 0) throw InvalidArgument("train and test sizes must be positive");
  if (train_size > data.size() || test_size > data.size() - train_size)
    throw InvalidArgument("train_size + test_size exceeds the number of rows");
  Rng rng(seed);
  auto idx = rng.sample(data.size(), train_size + test_size);
  Split s{data.subset(std::span<const std::size_t>(idx.data(), train_size)),
          data.subset(std::span<const std::size_t>(idx.data() + train_size, test_size)),
          std::vector<std::size_t>(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_size)),
          std::vector<std::size_t>(idx.begin() + static_cast<std::ptrdiff_t>(train_size), idx.end())};
  return s;
}

std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds == 0 || folds > n) throw InvalidArgument("need 1 <= folds <= n");
  Rng rng(seed);
  const auto perm = rng.permutation(n);
  std::vector<std::size_t> fold(n);
  for (std::size_t f = 0; f < folds; ++f)
    for (std::size_t p = f * n / folds; p < (f + 1) * n / folds; ++p) fold[perm[p]] = f;
  return fold;
}

CvResult cross_validate_delta(const LabeledDataset& train, const MetricMatrix& lambda, const std::vector<double>& grid,
                              std::size_t folds, std::uint64_t seed, const TrainerConfig& config) {
  return cross_validate(train, grid, folds, seed,
                        [&](const LabeledDataset& d, double delta) { return train_dro(d, lambda, delta, config); });
}

CvResult cross_validate_l1(const LabeledDataset& train, const std::vector<double>& grid, std::size_t folds,
                           std::uint64_t seed, const TrainerConfig& config) {
  return cross_validate(train, grid, folds, seed,
                        [&](const LabeledDataset& d, double penalty) { return train_l1(d, penalty, config); });
}

std::vector<double> default_delta_grid() {
  std::vector<double> g;
  for (int i = 0; i < 9; ++i) g.push_back(std::pow(10.0, -3.0 + 0.5 * i));
  return g;
}

std::string Method::name() const {
  switch (kind) {
    case MethodKind::lr: return "LR";
    case MethodKind::lrl1: return "LRL1";
    case MethodKind::dro_absolute: return "DD-DRO-abs";
    case MethodKind::robust_absolute: return "DD-R-DRO-abs";
    case MethodKind::dro_relative: return "DD-DRO-rel";
    case MethodKind::robust_relative: return "DD-R-DRO-rel";
  }
  return "unknown";
}

std::string Method::alpha_label() const {
  if (!is_robust(kind)) return "-";
  return alpha ? format_fixed(*alpha) : "cv";
}

std::vector<MethodKind> all_method_kinds() {
  return {MethodKind::lr,           MethodKind::lrl1,         MethodKind::dro_absolute,
          MethodKind::robust_absolute, MethodKind::dro_relative, MethodKind::robust_relative};
}

MethodKind parse_method_kind(const std::string& name) {
  for (MethodKind k : all_method_kinds())
    if (Method{k, {}}.name() == name) return k;
  throw InvalidArgument("unknown method '" + name + "'");
}

std::vector<Method> expand_methods(const std::vector<MethodKind>& kinds, const std::vector<double>& alphas,
                                   bool cv_alpha, bool debug_alpha_one) {
  if (kinds.empty()) throw InvalidArgument("method list is empty");
  if (alphas.empty()) throw InvalidArgument("alpha list is empty");
  for (double a : alphas)
    if (!(a > 0.0 && a <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
  auto wanted = [&](MethodKind k) { return std::find(kinds.begin(), kinds.end(), k) != kinds.end(); };
  std::vector<Method> out;
  for (MethodKind k : all_method_kinds()) {
    if (!wanted(k)) continue;
    if (!is_robust(k)) {
      out.push_back({k, {}});
      continue;
    }
    if (cv_alpha)
      out.push_back({k, {}});
    else
      for (double a : alphas) out.push_back({k, a});
    if (debug_alpha_one) out.push_back({k, 1.0});
  }
  return out;
}

std::vector<RepOutcome> run_repetition(const LabeledDataset& data, const ExperimentSpec& spec,
                                       const std::vector<Method>& methods, std::size_t rep) {
  const std::uint64_t rep_seed = derive_seed(spec.base_seed, rep);
  const std::uint64_t cv_seed = derive_seed(rep_seed, kCvStream);
  const std::uint64_t learn_seed = derive_seed(rep_seed, kLearnerStream);
  const Split sp = split(data, spec.train_size, spec.test_size, derive_seed(rep_seed, kSplitStream));
  const auto st = standardize(sp.train);
  const LabeledDataset& train = st.data;
  const LabeledDataset test = st.standardizer.apply(sp.test);
  Constraints cons{train, spec.knn_k, {}, {}};

  std::vector<RepOutcome> out(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const Method& method = methods[m];
    RepOutcome& o = out[m];
    try {
      DroModel model;
      switch (method.kind) {
        case MethodKind::lr:
          model = train_erm(train, spec.trainer);
          o.delta = std::numeric_limits<double>::quiet_NaN();
          break;
        case MethodKind::lrl1: {
          const auto cv = cross_validate_l1(train, spec.delta_grid, spec.folds, cv_seed, spec.trainer);
          model = train_l1(train, cv.best, spec.trainer);
          o.delta = cv.best;
          break;
        }
        default: {
          std::vector<std::optional<double>> candidates{method.alpha};
          if (is_robust(method.kind) && !method.alpha) candidates.assign(spec.alphas.begin(), spec.alphas.end());
          double best_loss = std::numeric_limits<double>::infinity();
          for (const auto& a : candidates) {
            const auto learned = learn_metric(method.kind, a, cons, spec, learn_seed);
            const auto cv = cross_validate_delta(train, learned.lambda, spec.delta_grid, spec.folds, cv_seed, spec.trainer);
            double loss = std::numeric_limits<double>::infinity();
            for (std::size_t g = 0; g < spec.delta_grid.size(); ++g)
              if (spec.delta_grid[g] == cv.best) loss = cv.mean_loss[g];
            if (loss < best_loss) {
              best_loss = loss;
              model = train_dro(train, learned.lambda, cv.best, spec.trainer);
              o.delta = cv.best;
              o.alpha = a;
            }
          }
          break;
        }
      }
      o.train_loss = evaluate(model, train).mean_log_loss;
      const auto ev = evaluate(model, test);
      o.test_loss = ev.mean_log_loss;
      o.accuracy = ev.accuracy();
      o.ok = std::isfinite(o.train_loss) && std::isfinite(o.test_loss);
      if (!o.ok) o.error = "non-finite loss";
    } catch (const std::exception& e) {
      o.ok = false;
      o.error = e.what();
    }
  }
  return out;
}

ResultRow aggregate(const std::string& dataset, const Method& method, const std::vector<RepOutcome>& outcomes,
                    std::uint64_t base_seed) {
  ResultRow row;
  row.dataset = dataset;
  row.method = method;
  row.reps = outcomes.size();
  row.base_seed = base_seed;
  std::vector<const RepOutcome*> ok;
  for (const auto& o : outcomes) (o.ok ? ok.push_back(&o) : void(++row.failures));
  const double k = static_cast<double>(ok.size());
  auto stats = [&](double RepOutcome::*field, double& mean, double& sd) {
    if (ok.empty()) {
      mean = sd = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    double s = 0.0;
    for (const auto* o : ok) s += o->*field;
    mean = s / k;
    double ss = 0.0;
    for (const auto* o : ok) ss += (o->*field - mean) * (o->*field - mean);
    sd = ok.size() > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
  };
  stats(&RepOutcome::train_loss, row.train_mean, row.train_std);
  stats(&RepOutcome::test_loss, row.test_mean, row.test_std);
  stats(&RepOutcome::accuracy, row.acc_mean, row.acc_std);
  row.std_undefined = ok.size() < 2;
  row.valid = row.reps > 0 && 20 * row.failures <= row.reps;
  return row;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const LabeledDataset& data) {
  if (spec.reps == 0) throw InvalidArgument("reps must be at least 1");
  if (spec.train_size + spec.test_size > data.size())
    throw InvalidArgument("train_size + test_size exceeds the number of rows");
  if (spec.knn_k == 0) throw InvalidArgument("knn_k must be positive");
  const auto methods = expand_methods(spec.methods, spec.alphas, spec.cv_alpha, spec.debug_alpha_one);

  std::vector<std::vector<RepOutcome>> by_rep(spec.reps);
  std::size_t threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, spec.reps);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r; (r = next.fetch_add(1)) < spec.reps;) by_rep[r] = run_repetition(data, spec, methods, r);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  ExperimentResult res;
  res.outcomes.assign(methods.size(), std::vector<RepOutcome>(spec.reps));
  for (std::size_t r = 0; r < spec.reps; ++r)
    for (std::size_t m = 0; m < methods.size(); ++m) res.outcomes[m][r] = std::move(by_rep[r][m]);
  for (std::size_t m = 0; m < methods.size(); ++m)
    res.rows.push_back(aggregate(spec.dataset, methods[m], res.outcomes[m], spec.base_seed));
  return res;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  return run_experiment(spec, load_dataset_csv(spec.path).data);
}

void write_results_tsv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << "dataset\tmethod\talpha\ttrain_mean\ttrain_std\ttest_mean\ttest_std\tacc_mean\tacc_std\treps\tfailures\tbase_seed\n";
  for (const auto& r : rows)
    os << r.dataset << '\t' << r.method.name() << '\t' << r.method.alpha_label() << '\t' << format_fixed(r.train_mean)
       << '\t' << format_fixed(r.train_std) << '\t' << format_fixed(r.test_mean) << '\t' << format_fixed(r.test_std)
       << '\t' << format_fixed(r.acc_mean) << '\t' << format_fixed(r.acc_std) << '\t' << r.reps << '\t' << r.failures
       << '\t' << r.base_seed << '\n';
}

}  // namespace ddrdro
