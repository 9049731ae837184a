#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "turbo_twin/config.hpp"
#include "turbo_twin/data.hpp"
#include "turbo_twin/eval.hpp"

namespace turbo {

// Everything a command needs, read from one flat JSON config file. Besides the
// TurboConfig keys:
//   data.root, data.crop
//   simulate.n, simulate.m, simulate.density, simulate.seed,
//   simulate.train_fraction, simulate.device
//   channel.blur_sigma, channel.dot_gain, channel.gamma, channel.noise_sigma, channel.seed
//   train.checkpoint_every, run.name
//   eval.grid, eval.embed, eval.extractor_seed
struct ExperimentConfig {
  TurboConfig turbo;
  SyntheticDatasetSpec simulate;
  std::filesystem::path data_root = "data";
  std::size_t crop = 0;
  int checkpoint_every = 0;
  std::string run_name;
  std::size_t grid_samples = 4;
  bool embed = false;
  std::uint64_t extractor_seed = 0x7e57;
  // Directory of the config file; relative data.root is taken from here. Not serialized.
  std::filesystem::path base_dir;

  std::filesystem::path resolved_data_root() const;
};

// Unknown keys and invalid values throw; messages name the offending key.
ExperimentConfig experiment_from_json(const nlohmann::json& flat);
nlohmann::json experiment_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment(const std::filesystem::path& path);

// 16 hex digits of FNV-1a over the canonical (sorted, compact) JSON dump.
std::string config_hash(const nlohmann::json& canonical);

// $TURBO_TWIN_RUN_ROOT, or ./runs.
std::filesystem::path run_root();
inline constexpr const char* kRunRootEnv = "TURBO_TWIN_RUN_ROOT";

struct RunRecord {
  std::string run_id;
  std::string config_hash;
  nlohmann::json config;
  std::string started;
  std::string finished;
  std::optional<MetricReport> report;
  std::map<std::string, std::string> artifacts;
};

nlohmann::json run_record_to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& j);
RunRecord read_run_record(const std::filesystem::path& run_dir);

inline constexpr const char* kRunRecordFile = "run_record.json";

DatasetManifest cmd_simulate(const std::filesystem::path& config, std::ostream& out);

struct TrainCommandOptions {
  std::optional<std::filesystem::path> run_dir;  // default: run_root()/<run id>
  bool resume = false;
  bool evaluate = true;  // evaluate on the test split afterwards
};

RunRecord cmd_train(const std::filesystem::path& config, const TrainCommandOptions& options, std::ostream& out);

struct EvaluateCommandOptions {
  std::optional<std::filesystem::path> out_dir;  // default: the run dir, or the checkpoint's directory
  std::optional<std::size_t> grid;               // samples in the grid; 0 skips it
  bool embed = false;
  std::string split = "test";                    // empty: every entry
  std::uint64_t extractor_seed = 0x7e57;
  std::size_t crop = 0;
};

// `checkpoint` is a run directory (its checkpoints/latest.ckpt) or a checkpoint file.
MetricReport cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                          const EvaluateCommandOptions& options, std::ostream& out);

ReportTable cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                       const std::optional<std::filesystem::path>& csv_out, std::ostream& out);

}  // namespace turbo
