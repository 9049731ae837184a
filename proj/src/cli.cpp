#include "turbo_twin/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <set>

#include "turbo_twin/error.hpp"
#include "turbo_twin/tensor_io.hpp"
#include "turbo_twin/trainer.hpp"

namespace turbo {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

fs::path ExperimentConfig::resolved_data_root() const {
  if (data_root.is_absolute() || base_dir.empty()) return data_root;
  return base_dir / data_root;
}

namespace {

template <typename T>
void read_key(const nlohmann::json& flat, const std::string& key, T& out, std::set<std::string>& consumed) {
  if (!flat.contains(key)) return;
  consumed.insert(key);
  try {
    out = flat.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, key + ": " + e.what());
  }
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw Error(ErrorCode::RangeError, key + ": " + what);
}

}  // namespace

ExperimentConfig experiment_from_json(const nlohmann::json& flat) {
  std::set<std::string> consumed;
  ExperimentConfig cfg;
  cfg.turbo = validate_config(config_from_json(flat, &consumed));

  std::string root = cfg.data_root.string();
  read_key(flat, "data.root", root, consumed);
  cfg.data_root = root;
  read_key(flat, "data.crop", cfg.crop, consumed);

  auto& sim = cfg.simulate;
  read_key(flat, "simulate.n", sim.n, consumed);
  read_key(flat, "simulate.m", sim.side, consumed);
  read_key(flat, "simulate.density", sim.density, consumed);
  read_key(flat, "simulate.seed", sim.seed, consumed);
  read_key(flat, "simulate.train_fraction", sim.train_fraction, consumed);
  read_key(flat, "simulate.device", sim.device, consumed);
  read_key(flat, "channel.blur_sigma", sim.channel.blur_sigma, consumed);
  read_key(flat, "channel.dot_gain", sim.channel.dot_gain, consumed);
  read_key(flat, "channel.gamma", sim.channel.gamma, consumed);
  read_key(flat, "channel.noise_sigma", sim.channel.noise_sigma, consumed);
  read_key(flat, "channel.seed", sim.channel.seed, consumed);

  read_key(flat, "train.checkpoint_every", cfg.checkpoint_every, consumed);
  read_key(flat, "run.name", cfg.run_name, consumed);
  read_key(flat, "eval.grid", cfg.grid_samples, consumed);
  read_key(flat, "eval.embed", cfg.embed, consumed);
  read_key(flat, "eval.extractor_seed", cfg.extractor_seed, consumed);

  for (const auto& [key, _] : flat.items()) {
    if (!consumed.contains(key) && key != "schema_version") {
      throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
    }
  }

  require(sim.n >= 1, "simulate.n", "must be >= 1");
  require(sim.side >= DigitalTemplate::kMinSide, "simulate.m", "must be >= 8");
  require(sim.density > 0.0 && sim.density < 1.0, "simulate.density", "must be in (0,1)");
  require(sim.train_fraction > 0.0 && sim.train_fraction < 1.0, "simulate.train_fraction", "must be in (0,1)");
  require(sim.channel.blur_sigma >= 0.0, "channel.blur_sigma", "must be >= 0");
  require(sim.channel.dot_gain >= -1.0 && sim.channel.dot_gain <= 1.0, "channel.dot_gain", "must be in [-1,1]");
  require(sim.channel.gamma > 0.0, "channel.gamma", "must be > 0");
  require(sim.channel.noise_sigma >= 0.0, "channel.noise_sigma", "must be >= 0");
  require(cfg.checkpoint_every >= 0, "train.checkpoint_every", "must be >= 0");
  for (char c : cfg.run_name) {
    require(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.', "run.name",
            "only letters, digits, '-', '_' and '.' are allowed");
  }
  return cfg;
}

nlohmann::json experiment_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j = config_to_json(cfg.turbo);
  j["data.root"] = cfg.data_root.generic_string();
  j["data.crop"] = cfg.crop;
  j["simulate.n"] = cfg.simulate.n;
  j["simulate.m"] = cfg.simulate.side;
  j["simulate.density"] = cfg.simulate.density;
  j["simulate.seed"] = cfg.simulate.seed;
  j["simulate.train_fraction"] = cfg.simulate.train_fraction;
  j["simulate.device"] = cfg.simulate.device;
  j["channel.blur_sigma"] = cfg.simulate.channel.blur_sigma;
  j["channel.dot_gain"] = cfg.simulate.channel.dot_gain;
  j["channel.gamma"] = cfg.simulate.channel.gamma;
  j["channel.noise_sigma"] = cfg.simulate.channel.noise_sigma;
  j["channel.seed"] = cfg.simulate.channel.seed;
  j["train.checkpoint_every"] = cfg.checkpoint_every;
  j["run.name"] = cfg.run_name;
  j["eval.grid"] = cfg.grid_samples;
  j["eval.embed"] = cfg.embed;
  j["eval.extractor_seed"] = cfg.extractor_seed;
  return j;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  nlohmann::json flat;
  try {
    flat = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  ExperimentConfig cfg = experiment_from_json(flat);
  cfg.base_dir = path.parent_path();
  return cfg;
}

std::string config_hash(const nlohmann::json& canonical) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(canonical.dump())));
  return buf;
}

fs::path run_root() {
  const char* env = std::getenv(kRunRootEnv);
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
}

// ---------------------------------------------------------------------------
// Run records

nlohmann::json run_record_to_json(const RunRecord& r) {
  nlohmann::json j{{"run_id", r.run_id},     {"config_hash", r.config_hash}, {"config", r.config},
                   {"started", r.started},   {"finished", r.finished},       {"artifacts", r.artifacts}};
  j["report"] = r.report ? report_to_json(*r.report) : nlohmann::json(nullptr);
  return j;
}

RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.config = j.at("config");
  r.started = j.value("started", "");
  r.finished = j.value("finished", "");
  if (j.contains("report") && !j.at("report").is_null()) r.report = report_from_json(j.at("report"));
  if (j.contains("artifacts")) r.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  return r;
}

RunRecord read_run_record(const fs::path& run_dir) {
  std::ifstream in(run_dir / kRunRecordFile);
  if (!in) throw Error(ErrorCode::MissingRunRecord, "no " + std::string(kRunRecordFile) + " in " + run_dir.string());
  try {
    return run_record_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MissingRunRecord, "unreadable run record in " + run_dir.string() + ": " + e.what());
  }
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

std::vector<Sample> sorted_by_id(std::vector<Sample> samples) {
  std::stable_sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.t.id() < b.t.id(); });
  return samples;
}

struct EvalArtifacts {
  MetricReport report;
  std::map<std::string, std::string> files;
};

EvalArtifacts evaluate_and_write(const Translator& encoder, const Translator& decoder, std::vector<Sample> samples,
                                 const fs::path& out_dir, const std::string& hash, std::size_t grid, bool embed,
                                 std::uint64_t extractor_seed) {
  if (samples.empty()) throw Error(ErrorCode::EmptyTestSet, "no test samples to evaluate");
  const int factor = encoder.spec().downsampling_factor();
  for (const auto& s : samples) {
    if (s.t.side() % static_cast<std::size_t>(factor) != 0) {
      throw Error(ErrorCode::ShapeMismatch, "sample side " + std::to_string(s.t.side()) +
                                                " is incompatible with the checkpoint (multiple of " +
                                                std::to_string(factor) + " needed)");
    }
  }
  samples = sorted_by_id(std::move(samples));
  EvalArtifacts a;
  a.report = evaluate_model(encoder, decoder, samples, random_conv_extractor(extractor_seed));
  write_text(out_dir / "report.json", report_to_json(a.report).dump(2) + "\n");
  write_text(out_dir / "report.csv", report_csv_header() + "\n" + report_csv_row(a.report, hash) + "\n");
  a.files["report_json"] = (out_dir / "report.json").string();
  a.files["report_csv"] = (out_dir / "report.csv").string();
  if (grid > 0) {
    std::vector<Sample> shown(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(std::min(grid, samples.size())));
    sample_grid({{"model", &encoder, &decoder}}, shown, out_dir / "grids" / "samples.png");
    a.files["grid"] = (out_dir / "grids" / "samples.png").string();
  }
  if (embed) {
    write_embedding_csv(out_dir / "embedding.csv", embed_model(encoder, decoder, samples));
    a.files["embedding"] = (out_dir / "embedding.csv").string();
  }
  return a;
}

void print_report(std::ostream& out, const MetricReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "n=%zu  FID(y->t~)=%.4f  Hamming=%.4f  FID(t->y~)=%.4f  MSE=%.6f  SSIM=%.4f\n", r.n_samples,
                r.fid_y_to_t, r.hamming, r.fid_t_to_y, r.mse, r.ssim);
  out << buf;
}

DatasetManifest split_or_all(const DatasetManifest& manifest, const std::string& split) {
  if (split.empty()) return manifest;
  return manifest.with_split(split);
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

DatasetManifest cmd_simulate(const fs::path& config, std::ostream& out) {
  const ExperimentConfig cfg = load_experiment(config);
  const fs::path root = cfg.resolved_data_root();
  DatasetManifest manifest = make_synthetic_dataset(cfg.simulate, root);
  const auto n_train = manifest.with_split("train").size();
  out << "wrote " << manifest.size() << " samples of " << cfg.simulate.side << "x" << cfg.simulate.side << " to "
      << root.string() << " (train " << n_train << ", test " << manifest.size() - n_train << ")\n";
  return manifest;
}

RunRecord cmd_train(const fs::path& config, const TrainCommandOptions& options, std::ostream& out) {
  const ExperimentConfig cfg = load_experiment(config);
  const nlohmann::json echo = experiment_to_json(cfg);

  RunRecord record;
  record.started = utc_now();
  record.config = echo;
  record.config_hash = config_hash(echo);
  record.run_id = (cfg.run_name.empty() ? std::string("run") : cfg.run_name) + "-" + record.config_hash.substr(0, 8);
  const fs::path run_dir = options.run_dir.value_or(run_root() / record.run_id);
  fs::create_directories(run_dir);
  write_text(run_dir / "config.echo", echo.dump(2) + "\n");
  record.artifacts["config_echo"] = (run_dir / "config.echo").string();

  const DatasetManifest manifest = read_manifest(cfg.resolved_data_root());
  DatasetManifest train_part = manifest.with_split("train");
  if (train_part.size() == 0) train_part = manifest;
  const auto samples = load_samples(train_part, cfg.crop);

  TrainOptions topts;
  topts.log_path = run_dir / "losses.csv";
  topts.checkpoint_dir = run_dir / "checkpoints";
  topts.checkpoint_every = cfg.checkpoint_every;
  topts.snapshot_dir = run_dir / "diagnostics";
  const auto total = static_cast<std::int64_t>(cfg.turbo.optimizer.total_steps);
  const std::int64_t report_every = std::max<std::int64_t>(1, total / 10);
  topts.on_step = [&out, total, report_every](const StepRecord& r) {
    if (r.step % report_every == 0 || r.step == total) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "step %lld/%lld  grand_total %.6f\n", static_cast<long long>(r.step),
                    static_cast<long long>(total), r.grand_total);
      out << buf << std::flush;
    }
  };

  std::optional<Trainer> trainer;
  if (options.resume) {
    trainer.emplace(Trainer::resume(samples, topts));
    if (!(trainer->state().cfg == cfg.turbo)) {
      throw Error(ErrorCode::ConfigError, "checkpoint in " + run_dir.string() + " was trained with another config");
    }
    out << "resuming " << record.run_id << " at step " << trainer->state().step << "\n";
  } else {
    trainer.emplace(cfg.turbo, samples, topts);
  }
  trainer->run(std::max<std::int64_t>(0, total - trainer->state().step));
  record.artifacts["losses"] = topts.log_path.string();
  record.artifacts["checkpoint"] = (topts.checkpoint_dir / kLatestCheckpoint).string();

  if (options.evaluate) {
    const DatasetManifest test_part = manifest.with_split("test");
    if (test_part.size() > 0) {
      auto test = load_samples(test_part, cfg.crop);
      if (test.size() >= 2) {
        const auto& state = trainer->state();
        auto a = evaluate_and_write(state.encoder, state.decoder, std::move(test), run_dir, record.config_hash,
                                    cfg.grid_samples, cfg.embed, cfg.extractor_seed);
        record.report = a.report;
        record.artifacts.insert(a.files.begin(), a.files.end());
        print_report(out, a.report);
      }
    }
  }

  record.finished = utc_now();
  write_text(run_dir / kRunRecordFile, run_record_to_json(record).dump(2) + "\n");
  out << "run " << record.run_id << " in " << run_dir.string() << "\n";
  return record;
}

MetricReport cmd_evaluate(const fs::path& checkpoint, const fs::path& dataset, const EvaluateCommandOptions& options,
                          std::ostream& out) {
  fs::path ckpt = checkpoint;
  fs::path home = checkpoint.parent_path();
  if (fs::is_directory(checkpoint)) {
    home = checkpoint;
    ckpt = fs::exists(checkpoint / "checkpoints" / kLatestCheckpoint) ? checkpoint / "checkpoints" / kLatestCheckpoint
                                                                      : checkpoint / kLatestCheckpoint;
  }
  if (!fs::exists(ckpt)) throw Error(ErrorCode::MissingCheckpoint, "no checkpoint at " + ckpt.string());
  const TrainState state = load_state(ckpt);

  std::string hash = config_hash(config_to_json(state.cfg));
  if (fs::exists(home / kRunRecordFile)) hash = read_run_record(home).config_hash;

  const DatasetManifest manifest = read_manifest(dataset);
  const auto samples = load_samples(split_or_all(manifest, options.split), options.crop);
  const fs::path out_dir = options.out_dir.value_or(home);
  auto a = evaluate_and_write(state.encoder, state.decoder, samples, out_dir, hash, options.grid.value_or(4),
                              options.embed, options.extractor_seed);
  print_report(out, a.report);
  return a.report;
}

ReportTable cmd_report(const std::vector<fs::path>& run_dirs, const std::optional<fs::path>& csv_out,
                       std::ostream& out) {
  if (run_dirs.empty()) throw Error(ErrorCode::MissingRunRecord, "no run directories given");
  std::vector<std::pair<std::string, MetricReport>> rows;
  for (const auto& dir : run_dirs) {
    const RunRecord r = read_run_record(dir);
    if (!r.report) throw Error(ErrorCode::MissingRunRecord, "run " + r.run_id + " has no metric report");
    rows.emplace_back(r.run_id, *r.report);
  }
  const ReportTable table = make_report_table(rows);
  out << table.to_text();
  if (csv_out) write_text(*csv_out, table.to_csv());
  return table;
}

}  // namespace turbo
