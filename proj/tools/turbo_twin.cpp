#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "turbo_twin/cli.hpp"
#include "turbo_twin/error.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Turbo digital twin of a printing-imaging channel"};
  app.require_subcommand(1);

  std::string sim_config;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic dataset from a config file");
  simulate->add_option("config", sim_config, "Config file")->required()->check(CLI::ExistingFile);

  std::string train_config;
  std::string train_run_dir;
  bool resume = false;
  bool no_eval = false;
  auto* train = app.add_subcommand("train", "Train a model; writes a run directory");
  train->add_option("config", train_config, "Config file")->required()->check(CLI::ExistingFile);
  train->add_option("--run-dir", train_run_dir, "Run directory (default: run root / run id)");
  train->add_flag("--resume", resume, "Continue from the run's latest checkpoint");
  train->add_flag("--no-eval", no_eval, "Skip the test-split evaluation");

  std::string checkpoint;
  std::string dataset;
  std::string eval_out;
  std::string split = "test";
  std::optional<std::size_t> grid;
  bool embed = false;
  std::size_t crop = 0;
  auto* evaluate = app.add_subcommand("evaluate", "Compute metrics for a checkpoint on a dataset");
  evaluate->add_option("checkpoint", checkpoint, "Run directory or checkpoint file")->required();
  evaluate->add_option("dataset", dataset, "Dataset root holding manifest.csv")->required();
  evaluate->add_option("--out", eval_out, "Output directory (default: the run directory)");
  evaluate->add_option("--split", split, "Manifest split to use; empty for all entries");
  evaluate->add_option("--grid", grid, "Samples shown in the sample grid (0 disables it)");
  evaluate->add_option("--crop", crop, "Corner crop size (0 keeps full images)");
  evaluate->add_flag("--embed", embed, "Also write a 2-D embedding CSV");

  std::vector<std::string> run_dirs;
  std::string report_csv;
  auto* report = app.add_subcommand("report", "Compare the metrics of several runs");
  report->add_option("runs", run_dirs, "Run directories")->required();
  report->add_option("--csv", report_csv, "Also write the table as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      turbo::cmd_simulate(sim_config, std::cout);
    } else if (*train) {
      turbo::TrainCommandOptions opts;
      if (!train_run_dir.empty()) opts.run_dir = fs::path(train_run_dir);
      opts.resume = resume;
      opts.evaluate = !no_eval;
      turbo::cmd_train(train_config, opts, std::cout);
    } else if (*evaluate) {
      turbo::EvaluateCommandOptions opts;
      if (!eval_out.empty()) opts.out_dir = fs::path(eval_out);
      opts.grid = grid;
      opts.embed = embed;
      opts.split = split;
      opts.crop = crop;
      turbo::cmd_evaluate(checkpoint, dataset, opts, std::cout);
    } else if (*report) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      std::optional<fs::path> csv;
      if (!report_csv.empty()) csv = fs::path(report_csv);
      turbo::cmd_report(dirs, csv, std::cout);
    }
  } catch (const turbo::Error& e) {
    std::cerr << "error [" << turbo::to_string(e.code()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
