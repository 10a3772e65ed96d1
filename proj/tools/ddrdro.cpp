#include <iostream>

#include "CLI11.hpp"
#include "ddrdro/cli.hpp"

using namespace ddrdro::cli;

int main(int argc, char** argv) {
  CLI::App app{"Metric learning and optimal-transport DRO logistic regression"};
  app.require_subcommand(1);

  MetricLearnOptions ml;
  auto* metric_learn = app.add_subcommand("metric-learn", "Learn a Mahalanobis metric from k-NN constraints");
  metric_learn->add_option("--data", ml.data, "Dataset CSV with a label column")->required();
  metric_learn->add_option("--out", ml.out, "Metric file to write (a .meta sidecar is added)")->required();
  metric_learn->add_option("--mode", ml.mode, "relative or absolute")->check(CLI::IsMember({"relative", "absolute"}));
  metric_learn->add_option("--alpha", ml.alpha, "Robust level in (0, 1]; 1 is the plain learner");
  metric_learn->add_option("--k", ml.k, "Neighbours per point for the constraint sets");
  metric_learn->add_option("--seed", ml.seed, "Seed for the initial active sets");
  metric_learn->add_option("--inner", ml.inner, "Absolute inner solver: exact or alternating");
  metric_learn->add_option("--max-iters", ml.max_iters, "Iteration cap");

  TrainOptions tr;
  std::string grid;
  auto* train = app.add_subcommand("train", "Fit DRO logistic regression under a metric");
  train->add_option("--data", tr.data, "Training CSV with a label column")->required();
  train->add_option("--metric", tr.metric, "Metric file (identity when omitted)");
  train->add_option("--delta", tr.delta, "Radius, or cv for 5-fold cross-validation");
  train->add_option("--grid", grid, "Comma-separated radii for --delta cv");
  train->add_option("--folds", tr.folds, "Cross-validation folds");
  train->add_option("--seed", tr.seed, "Seed for the fold assignment");
  train->add_option("--solver", tr.solver, "newton or subgradient");
  train->add_option("--out", tr.out, "Model file to write")->required();

  BenchmarkOptions bm;
  auto* benchmark = app.add_subcommand("benchmark", "Run the repeated split / CV / fit / evaluate protocol");
  benchmark->add_option("config", bm.config, "Run configuration file")->required();
  benchmark->add_option("--out", bm.out, "TSV output (overrides the config)");
  benchmark->add_option("--reps", bm.reps, "Override the repetition count");
  benchmark->add_option("--threads", bm.threads, "Worker threads (0: hardware concurrency)");

  OtOptions ot;
  auto* ot_cmd = app.add_subcommand("ot", "Optimal transport discrepancy between two point clouds");
  ot_cmd->add_option("--p", ot.p, "Source point cloud CSV")->required();
  ot_cmd->add_option("--q", ot.q, "Target point cloud CSV")->required();
  ot_cmd->add_option("--metric", ot.metric, "Metric file (identity when omitted)");
  ot_cmd->add_option("--power", ot.power, "Cost d^2 (squared) or d (linear)");
  ot_cmd->add_option("--plan", ot.plan, "Write the optimal plan as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadArguments;
  }

  return guarded(std::cerr, [&] {
    if (*metric_learn) return cmd_metric_learn(ml, std::cout);
    if (*train) {
      if (!grid.empty()) tr.grid = parse_real_list(grid);
      return cmd_train(tr, std::cout);
    }
    if (*benchmark) return cmd_benchmark(bm, std::cout, std::cerr);
    return cmd_ot(ot, std::cout);
  });
}
