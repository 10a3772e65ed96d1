#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ddrdro/core.hpp"
#include "ddrdro/dro.hpp"
#include "ddrdro/metric_learn.hpp"

namespace ddrdro {

struct Split {
  LabeledDataset train;
  LabeledDataset test;
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> test_index;
};

/// Disjoint uniform random subsets of the given sizes.
Split split(const LabeledDataset& data, std::size_t train_size, std::size_t test_size, std::uint64_t seed);

/// Fold id per row: a random permutation cut into `folds` contiguous chunks
/// whose sizes differ by at most one.
std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, std::uint64_t seed);

struct CvResult {
  double best = 0.0;
  /// Mean validation log-loss per grid value, in grid order.
  std::vector<double> mean_loss;
};

/// Picks delta minimizing mean validation log-loss of train_dro; ties go to
/// the smaller delta.
CvResult cross_validate_delta(const LabeledDataset& train, const MetricMatrix& lambda, const std::vector<double>& grid,
                              std::size_t folds, std::uint64_t seed, const TrainerConfig& config = {});

/// Same mechanism for the L1 penalty of train_l1.
CvResult cross_validate_l1(const LabeledDataset& train, const std::vector<double>& grid, std::size_t folds,
                           std::uint64_t seed, const TrainerConfig& config = {});

/// 9 log-spaced values from 1e-3 to 1e1.
std::vector<double> default_delta_grid();

enum class MethodKind { lr, lrl1, dro_absolute, robust_absolute, dro_relative, robust_relative };

struct Method {
  MethodKind kind = MethodKind::lr;
  /// Robust level for the robust kinds; empty means cross-validated.
  std::optional<double> alpha;

  /// Table label, e.g. "DD-R-DRO-abs".
  std::string name() const;
  /// "0.900000", "cv" or "-".
  std::string alpha_label() const;
};

std::vector<MethodKind> all_method_kinds();

/// Parses a table label such as "DD-R-DRO-abs"; throws InvalidArgument.
MethodKind parse_method_kind(const std::string& name);

/// Rows in table order (LR, LRL1, DD-DRO-abs, DD-R-DRO-abs per alpha,
/// DD-DRO-rel, DD-R-DRO-rel per alpha), keeping only `kinds`. With
/// `cv_alpha` each robust family is one row whose alpha is cross-validated
/// over `alphas`; `debug_alpha_one` adds an alpha = 1 row per robust family.
std::vector<Method> expand_methods(const std::vector<MethodKind>& kinds, const std::vector<double>& alphas,
                                   bool cv_alpha, bool debug_alpha_one);

struct ExperimentSpec {
  std::string dataset;
  std::string path;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::vector<MethodKind> methods = all_method_kinds();
  std::vector<double> alphas{0.9, 0.5};
  std::size_t reps = 200;
  std::uint64_t base_seed = 0;
  std::size_t knn_k = 5;
  std::vector<double> delta_grid = default_delta_grid();
  std::size_t folds = 5;
  bool cv_alpha = false;
  bool debug_alpha_one = false;
  /// Worker threads; 0 picks the hardware concurrency.
  std::size_t threads = 0;
  RelativeConfig relative;
  AbsoluteConfig absolute;
  TrainerConfig trainer;
};

struct RepOutcome {
  bool ok = false;
  std::string error;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double accuracy = 0.0;
  /// Selected delta (or L1 penalty); NaN for LR.
  double delta = 0.0;
  std::optional<double> alpha;
};

struct ResultRow {
  std::string dataset;
  Method method;
  double train_mean = 0.0, train_std = 0.0;
  double test_mean = 0.0, test_std = 0.0;
  double acc_mean = 0.0, acc_std = 0.0;
  std::size_t reps = 0;
  std::size_t failures = 0;
  std::uint64_t base_seed = 0;
  /// At least 95% of repetitions succeeded.
  bool valid = false;
  /// Fewer than two successes: stds are reported as 0.
  bool std_undefined = false;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  /// outcomes[m][r]: method m (row order), repetition r.
  std::vector<std::vector<RepOutcome>> outcomes;
};

/// One repetition for every method: split, standardize on train, learn, CV, fit, evaluate.
std::vector<RepOutcome> run_repetition(const LabeledDataset& data, const ExperimentSpec& spec,
                                       const std::vector<Method>& methods, std::size_t rep);

ExperimentResult run_experiment(const ExperimentSpec& spec, const LabeledDataset& data);
/// Loads spec.path first.
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Mean and sample standard deviation (n - 1) of the successful outcomes.
ResultRow aggregate(const std::string& dataset, const Method& method, const std::vector<RepOutcome>& outcomes,
                    std::uint64_t base_seed);

void write_results_tsv(std::ostream& os, const std::vector<ResultRow>& rows);

}  // namespace ddrdro
