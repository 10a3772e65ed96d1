#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ddrdro/pipeline.hpp"

namespace ddrdro::cli {

enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kBadArguments = 2,
  kBadData = 3,
  kNotConverged = 4,
  kInfeasible = 5,
};

/// Runs `body` and maps library exceptions to exit codes, printing the
/// message to `err`.
int guarded(std::ostream& err, const std::function<int()>& body);

/// Line-based `key = value` configuration with `#` comments. Keys must be
/// known and appear once; entries keep their file order.
class RunConfig {
 public:
  static RunConfig parse(std::istream& is);
  static RunConfig load(const std::string& path);
  static const std::vector<std::string>& known_keys();

  std::string emit() const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  /// Relative `path` values resolve against `base_dir`.
  ExperimentSpec to_spec(const std::string& base_dir = "") const;

  bool operator==(const RunConfig&) const = default;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

struct MetricLearnOptions {
  std::string data;
  std::string out;
  std::string mode = "relative";
  double alpha = 1.0;
  std::size_t k = 5;
  std::uint64_t seed = 0;
  std::string inner = "exact";
  std::optional<std::size_t> max_iters;
};

/// Writes the metric and a `.meta` sidecar; 4 when the learner did not converge.
int cmd_metric_learn(const MetricLearnOptions& opt, std::ostream& out);

struct TrainOptions {
  std::string data;
  std::string metric;  // empty: identity
  std::string delta = "cv";
  std::vector<double> grid;  // empty: default grid
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  std::string out;
  std::string solver = "newton";
};

int cmd_train(const TrainOptions& opt, std::ostream& out);

struct BenchmarkOptions {
  std::string config;
  std::string out;  // overrides the config's `output`
  std::optional<std::size_t> reps;
  std::optional<std::size_t> threads;
};

/// 4 when a row has more than 5% failed repetitions.
int cmd_benchmark(const BenchmarkOptions& opt, std::ostream& out, std::ostream& err);

struct OtOptions {
  std::string p;
  std::string q;
  std::string metric;  // empty: identity
  std::string power = "squared";
  std::string plan;    // empty: no plan file
};

int cmd_ot(const OtOptions& opt, std::ostream& out);

std::vector<double> parse_real_list(const std::string& text);

}  // namespace ddrdro::cli
